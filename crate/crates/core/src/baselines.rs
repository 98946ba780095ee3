//! Tabular softmax actor-critic, the reference learner for the gridworld.

use rand::Rng;

use crate::critic::{Critic, TdError};
use crate::envs::Environment;
use crate::error::Result;
use crate::network::{sample_index, softmax};
use crate::training::EpisodeStats;

/// Environments whose states can index a table.
pub trait DiscreteStates: Environment {
    fn state_count(&self) -> usize;
    fn state_index(&self, state: &Self::State) -> usize;
}

impl DiscreteStates for crate::envs::Gridworld {
    fn state_count(&self) -> usize {
        Self::state_count(self)
    }

    fn state_index(&self, state: &Self::State) -> usize {
        self.state_id(state)
    }
}

/// Action preferences `H(s, a)` with a softmax policy `π(·|s) = softmax(H(s,·)/τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularActor {
    preferences: Vec<f64>,
    actions: usize,
    pub learning_rate: f64,
    pub temperature: f64,
}

impl TabularActor {
    pub fn new(states: usize, actions: usize, learning_rate: f64, temperature: f64) -> Self {
        assert!(temperature > 0.0);
        TabularActor {
            preferences: vec![0.0; states * actions],
            actions,
            learning_rate,
            temperature,
        }
    }

    pub fn preferences(&self, state: usize) -> &[f64] {
        &self.preferences[state * self.actions..(state + 1) * self.actions]
    }

    pub fn preferences_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.preferences[state * self.actions..(state + 1) * self.actions]
    }

    pub fn policy(&self, state: usize) -> Vec<f64> {
        softmax(self.preferences(state), 1.0 / self.temperature)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_index(&self.policy(state), rng)
    }

    /// `H(s,·) += α δ (e_a − π(·|s)) / τ`, i.e. `α δ ∇_H ln π(a|s)`.
    pub fn update(&mut self, state: usize, action: usize, delta: TdError) {
        if !delta.0.is_finite() {
            return;
        }
        let pi = self.policy(state);
        let scale = self.learning_rate * delta.0 / self.temperature;
        for (a, (h, p)) in self.preferences_mut(state).iter_mut().zip(pi).enumerate() {
            let onehot = if a == action { 1.0 } else { 0.0 };
            *h += scale * (onehot - p);
        }
    }
}

/// One online episode of the tabular actor-critic.
pub fn run_tabular_episode<E, C, R>(
    actor: &mut TabularActor,
    critic: &mut C,
    env: &mut E,
    max_steps: usize,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: DiscreteStates,
    C: Critic<E::State>,
    R: Rng,
{
    let gamma = critic.discount();
    let mut state = env.reset(rng);
    let mut stats = EpisodeStats {
        total_return: 0.0,
        steps: 0,
        discounted_return: 0.0,
    };
    let mut discount = 1.0;
    for _ in 0..max_steps {
        let s = env.state_index(&state);
        let action = actor.act(s, rng);
        let t = env.step(action)?;
        let delta = critic.td_error(&state, t.reward, &t.next, t.terminal);
        actor.update(s, action, delta);
        critic.update(&state, delta);

        stats.total_return += t.reward;
        stats.discounted_return += discount * t.reward;
        stats.steps += 1;
        discount *= gamma;
        if t.done() {
            break;
        }
        state = t.next;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_preferences_are_uniform() {
        let actor = TabularActor::new(3, 4, 0.1, 1.0);
        assert_eq!(actor.policy(1), vec![0.25; 4]);
    }

    #[test]
    fn saturated_preference_dominates() {
        let mut actor = TabularActor::new(1, 4, 0.1, 1.0);
        actor.preferences_mut(0)[0] = 1000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| actor.act(0, &mut rng) == 0));
    }

    #[test]
    fn softmax_probability_by_hand() {
        let mut actor = TabularActor::new(1, 4, 0.1, 1.0);
        actor.preferences_mut(0)[0] = 1.0;
        let e = std::f64::consts::E;
        assert!((actor.policy(0)[0] - e / (e + 3.0)).abs() < 1e-15);
        assert!((actor.policy(0)[0] - 0.4754).abs() < 1e-4);
    }

    #[test]
    fn update_by_hand() {
        let mut actor = TabularActor::new(1, 4, 0.1, 1.0);
        actor.update(0, 0, TdError(1.0));
        let h = actor.preferences(0);
        assert!((h[0] - 0.075).abs() < 1e-15);
        for v in &h[1..] {
            assert!((v + 0.025).abs() < 1e-15);
        }
        let before = actor.clone();
        actor.update(0, 2, TdError(0.0));
        assert_eq!(actor, before);
    }

    #[test]
    fn update_is_scaled_log_softmax_gradient() {
        for temperature in [1.0, 0.5, 2.0] {
            let mut actor = TabularActor::new(1, 4, 0.3, temperature);
            actor
                .preferences_mut(0)
                .copy_from_slice(&[0.2, -0.7, 1.1, 0.4]);
            let base = actor.clone();
            let (action, delta) = (2, 1.7);
            actor.update(0, action, TdError(delta));
            let eps = 1e-6;
            for b in 0..4 {
                let logp = |shift: f64| {
                    let mut a = base.clone();
                    a.preferences_mut(0)[b] += shift;
                    a.policy(0)[action].ln()
                };
                let fd = (logp(eps) - logp(-eps)) / (2.0 * eps);
                let step = actor.preferences(0)[b] - base.preferences(0)[b];
                assert!((step - 0.3 * delta * fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn repeated_reinforcement_is_monotone() {
        let mut actor = TabularActor::new(1, 4, 0.2, 1.0);
        let mut last = actor.policy(0)[3];
        for _ in 0..100 {
            actor.update(0, 3, TdError(1.0));
            let p = actor.policy(0)[3];
            assert!(p > last);
            last = p;
        }
    }
}
