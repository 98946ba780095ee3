//! State-value critics that turn transitions into TD errors.

use crate::envs::{CartPoleState, GridworldState};

/// Reward prediction error `δ = r + γ V(s') − V(s)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TdError(pub f64);

impl TdError {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A TD(0) state-value estimator over states of type `S`.
pub trait Critic<S> {
    fn value(&self, state: &S) -> f64;

    fn discount(&self) -> f64;

    /// `V(s) ← V(s) + α_c δ`, or the linear-feature equivalent.
    fn update(&mut self, state: &S, delta: TdError);

    /// `r + γ V(s') − V(s)`; `V(s')` is never evaluated when `terminal`.
    fn td_error(&self, state: &S, reward: f64, next: &S, terminal: bool) -> TdError {
        let bootstrap = if terminal {
            0.0
        } else {
            self.discount() * self.value(next)
        };
        TdError(reward + bootstrap - self.value(state))
    }
}

/// One value per state id.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCritic {
    values: Vec<f64>,
    learning_rate: f64,
    discount: f64,
    terminal: Option<usize>,
}

impl TabularCritic {
    pub fn new(states: usize, learning_rate: f64, discount: f64) -> Self {
        TabularCritic {
            values: vec![0.0; states],
            learning_rate,
            discount,
            terminal: None,
        }
    }

    /// Pins `V(terminal)` at zero.
    pub fn with_terminal(mut self, terminal: usize) -> Self {
        self.terminal = Some(terminal);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_value(&mut self, state: usize, v: f64) {
        if Some(state) != self.terminal {
            self.values[state] = v;
        }
    }
}

impl Critic<usize> for TabularCritic {
    fn value(&self, state: &usize) -> f64 {
        self.values[*state]
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn update(&mut self, state: &usize, delta: TdError) {
        if Some(*state) == self.terminal || !delta.0.is_finite() {
            return;
        }
        self.values[*state] += self.learning_rate * delta.0;
    }
}

/// Gridworld states are keyed row-major on a grid of the given width.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCritic {
    pub table: TabularCritic,
    width: usize,
}

impl GridCritic {
    pub fn new(width: usize, learning_rate: f64, discount: f64) -> Self {
        let goal = width * width - 1;
        GridCritic {
            table: TabularCritic::new(width * width, learning_rate, discount).with_terminal(goal),
            width,
        }
    }

    fn id(&self, s: &GridworldState) -> usize {
        s.row * self.width + s.col
    }
}

impl Critic<GridworldState> for GridCritic {
    fn value(&self, state: &GridworldState) -> f64 {
        self.table.value(&self.id(state))
    }

    fn discount(&self) -> f64 {
        self.table.discount
    }

    fn update(&mut self, state: &GridworldState, delta: TdError) {
        let id = self.id(state);
        self.table.update(&id, delta);
    }
}

/// Layout of a set of overlapping uniform grids over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct TileCoding {
    tilings: usize,
    tiles: usize,
    bounds: Vec<(f64, f64)>,
}

impl TileCoding {
    pub fn new(tilings: usize, tiles: usize, bounds: Vec<(f64, f64)>) -> Self {
        assert!(tilings > 0 && tiles > 0 && !bounds.is_empty());
        assert!(bounds.iter().all(|(lo, hi)| lo < hi));
        TileCoding {
            tilings,
            tiles,
            bounds,
        }
    }

    pub fn tilings(&self) -> usize {
        self.tilings
    }

    /// Each tiling is shifted by a fraction of a tile, so it spans one
    /// extra tile per dimension.
    fn tiles_per_tiling(&self) -> usize {
        (self.tiles + 1).pow(self.bounds.len() as u32)
    }

    pub fn feature_count(&self) -> usize {
        self.tilings * self.tiles_per_tiling()
    }

    /// Indices of the active tiles, one per tiling. Coordinates outside the
    /// bounds are clamped onto them.
    pub fn active(&self, point: &[f64]) -> Vec<usize> {
        assert_eq!(point.len(), self.bounds.len());
        let scaled: Vec<f64> = point
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| {
                if v < lo || v > hi {
                    log::trace!("tile coding clamped {v} into [{lo}, {hi}]");
                }
                (v.clamp(lo, hi) - lo) / (hi - lo) * self.tiles as f64
            })
            .collect();
        let n = self.tilings;
        (0..n)
            .map(|t| {
                // Asymmetric displacement (1, 3, 5, ...) per dimension.
                let mut index = 0;
                let mut stride = 1;
                for (d, u) in scaled.iter().enumerate() {
                    let offset = ((t * (2 * d + 1)) % n) as f64 / n as f64;
                    let cell = ((u + offset).floor() as usize).min(self.tiles);
                    index += cell * stride;
                    stride *= self.tiles + 1;
                }
                t * self.tiles_per_tiling() + index
            })
            .collect()
    }
}

/// Linear value function over binary tile features.
#[derive(Debug, Clone, PartialEq)]
pub struct TileCodedCritic {
    coding: TileCoding,
    weights: Vec<f64>,
    learning_rate: f64,
    discount: f64,
}

impl TileCodedCritic {
    pub fn new(coding: TileCoding, learning_rate: f64, discount: f64) -> Self {
        TileCodedCritic {
            weights: vec![0.0; coding.feature_count()],
            coding,
            learning_rate,
            discount,
        }
    }

    /// 8 tilings of 8 tiles per dimension over the cart-pole bounds.
    pub fn cartpole(learning_rate: f64, discount: f64) -> Self {
        Self::new(
            TileCoding::new(8, 8, crate::envs::CartPole::BOUNDS.to_vec()),
            learning_rate,
            discount,
        )
    }

    pub fn coding(&self) -> &TileCoding {
        &self.coding
    }

    pub fn value_at(&self, point: &[f64]) -> f64 {
        self.coding
            .active(point)
            .iter()
            .map(|&i| self.weights[i])
            .sum()
    }

    pub fn update_at(&mut self, point: &[f64], delta: TdError) {
        if !delta.0.is_finite() {
            return;
        }
        let step = self.learning_rate * delta.0;
        for i in self.coding.active(point) {
            self.weights[i] += step;
        }
    }
}

impl Critic<CartPoleState> for TileCodedCritic {
    fn value(&self, state: &CartPoleState) -> f64 {
        self.value_at(&state.as_array())
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn update(&mut self, state: &CartPoleState, delta: TdError) {
        self.update_at(&state.as_array(), delta);
    }
}
