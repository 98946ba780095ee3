//! Actor-critic training of spiking-agent networks.
//!
//! Every agent ascends its own score function scaled by a TD error that the
//! critic broadcasts. With a population of networks the executed action is
//! drawn from the averaged member distributions, and each member is then
//! credited with `+δ` if its own proposal matches the executed action and
//! `-δ` otherwise.

use rand::Rng;

use crate::critic::{Critic, TdError};
use crate::envs::Environment;
use crate::error::{config_err, shape_err, Result};
use crate::glm::{GlmAgent, PolicyGradient};
use crate::network::{sample_index, ForwardTrace, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct ActorConfig {
    /// Actor step size `α`.
    pub learning_rate: f64,
    /// Readout softmax inverse temperature `β`.
    pub temperature: f64,
    pub population_size: usize,
    pub max_episode_steps: usize,
    pub episode_count: usize,
}

impl ActorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("actor learning rate must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(config_err!("readout temperature must be positive"));
        }
        if self.population_size == 0 {
            return Err(config_err!("population size must be at least 1"));
        }
        if self.max_episode_steps == 0 {
            return Err(config_err!("episodes need at least one step"));
        }
        Ok(())
    }
}

/// `θ ← θ + α δ_eff ∇ ln π`.
pub fn agent_update(
    agent: &mut GlmAgent,
    grad: &PolicyGradient,
    effective_td: f64,
    learning_rate: f64,
) -> Result<()> {
    agent.ascend(grad, learning_rate * effective_td)
}

/// The outcome of [`Ensemble::act`]: what every member sampled and what
/// the population executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub traces: Vec<ForwardTrace>,
    pub distributions: Vec<Vec<f64>>,
    /// Arithmetic mean of `distributions`.
    pub mean: Vec<f64>,
    pub proposals: Vec<usize>,
    pub executed: usize,
}

impl Decision {
    /// `+δ` for members whose proposal was executed, `-δ` for the rest.
    pub fn effective_td(&self, member: usize, delta: TdError) -> f64 {
        if self.proposals[member] == self.executed {
            delta.0
        } else {
            -delta.0
        }
    }
}

/// Everything needed to replay one MDP step's update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub tau: usize,
    pub decision: Decision,
    pub reward: f64,
    pub delta: TdError,
}

/// A population of networks with identical topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Network>,
}

impl Ensemble {
    pub fn new(members: Vec<Network>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| config_err!("ensemble needs at least one member"))?;
        let congruent = members.iter().all(|m| {
            m.input_channels() == first.input_channels()
                && m.input_len() == first.input_len()
                && m.layer_count() == first.layer_count()
                && (0..m.layer_count())
                    .all(|l| m.layer_spec(l) == first.layer_spec(l) && m.mask(l) == first.mask(l))
        });
        if !congruent {
            return Err(shape_err!("ensemble members differ in topology"));
        }
        Ok(Ensemble { members })
    }

    /// `size` members, each built by `make` from the shared random stream.
    pub fn build<R, F>(size: usize, rng: &mut R, mut make: F) -> Result<Self>
    where
        R: Rng + ?Sized,
        F: FnMut(&mut R) -> Result<Network>,
    {
        Ensemble::new((0..size).map(|_| make(rng)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Network] {
        &self.members
    }

    pub fn member_mut(&mut self, i: usize) -> &mut Network {
        &mut self.members[i]
    }

    /// Runs every member forward, samples each member's proposal from its
    /// own readout, then samples the executed action from the mean
    /// distribution. A single member's proposal is the executed action.
    pub fn act<R: Rng + ?Sized>(&self, encoded: &[f64], rng: &mut R) -> Result<Decision> {
        let mut traces = Vec::with_capacity(self.members.len());
        let mut distributions = Vec::with_capacity(self.members.len());
        for net in &self.members {
            let trace = net.forward(encoded, rng)?;
            distributions.push(net.action_distribution(&trace));
            traces.push(trace);
        }

        let actions = distributions[0].len();
        let n = distributions.len() as f64;
        let mean: Vec<f64> = (0..actions)
            .map(|a| distributions.iter().map(|d| d[a]).sum::<f64>() / n)
            .collect();

        let (proposals, executed) = if self.members.len() == 1 {
            let a = sample_index(&distributions[0], rng);
            (vec![a], a)
        } else {
            let proposals: Vec<usize> =
                distributions.iter().map(|d| sample_index(d, rng)).collect();
            (proposals, sample_index(&mean, rng))
        };

        Ok(Decision {
            traces,
            distributions,
            mean,
            proposals,
            executed,
        })
    }

    /// Every agent of member `m` ascends its score at `m`'s own trace with
    /// step `α · δ_eff(m)`.
    pub fn update(
        &mut self,
        decision: &Decision,
        delta: TdError,
        learning_rate: f64,
    ) -> Result<()> {
        if decision.traces.len() != self.members.len() {
            return Err(shape_err!(
                "decision has {} traces for {} members",
                decision.traces.len(),
                self.members.len()
            ));
        }
        for (m, net) in self.members.iter_mut().enumerate() {
            let step = learning_rate * decision.effective_td(m, delta);
            net.reinforce(&decision.traces[m], step)?;
        }
        Ok(())
    }
}

/// Per-episode statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    /// Undiscounted sum of rewards.
    pub total_return: f64,
    pub steps: usize,
    /// `Σ γ^τ r_τ`.
    pub discounted_return: f64,
}

/// One online actor-critic episode: act, step, compute δ, update the actors,
/// then the critic.
pub fn run_episode<E, C, R>(
    ensemble: &mut Ensemble,
    critic: &mut C,
    env: &mut E,
    config: &ActorConfig,
    rng: &mut R,
) -> Result<EpisodeStats>
where
    E: Environment,
    C: Critic<E::State>,
    R: Rng,
{
    run_episode_observed(ensemble, critic, env, config, rng, |_| {})
}

/// [`run_episode`] that hands every step's record to `observe` after the
/// updates have been applied.
pub fn run_episode_observed<E, C, R, F>(
    ensemble: &mut Ensemble,
    critic: &mut C,
    env: &mut E,
    config: &ActorConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<EpisodeStats>
where
    E: Environment,
    C: Critic<E::State>,
    R: Rng,
    F: FnMut(&StepRecord),
{
    let gamma = critic.discount();
    let mut state = env.reset(rng);
    let mut stats = EpisodeStats {
        total_return: 0.0,
        steps: 0,
        discounted_return: 0.0,
    };
    let mut discount = 1.0;

    for tau in 0..config.max_episode_steps {
        let encoded = env.encode(&state);
        let decision = ensemble.act(encoded.as_slice(), rng)?;
        let transition = env.step(decision.executed)?;
        let delta = critic.td_error(
            &state,
            transition.reward,
            &transition.next,
            transition.terminal,
        );
        ensemble.update(&decision, delta, config.learning_rate)?;
        critic.update(&state, delta);

        stats.total_return += transition.reward;
        stats.discounted_return += discount * transition.reward;
        stats.steps += 1;
        discount *= gamma;

        observe(&StepRecord {
            tau,
            decision,
            reward: transition.reward,
            delta,
        });

        if transition.done() {
            break;
        }
        state = transition.next;
    }
    Ok(stats)
}
