//! Benchmark MDPs and their stimulus encodings.
//!
//! Gridworld coordinates are zero-indexed: the goal in the bottom-right
//! corner of the 10×10 grid is `(9, 9)`. Row 0 is the top row, so `Up`
//! decreases the row.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// Per-channel stimulus handed to the first network layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    channels: usize,
    channel_len: usize,
    data: Vec<f64>,
}

impl EncodedState {
    pub fn new(channels: usize, channel_len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * channel_len);
        EncodedState {
            channels,
            channel_len,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_len(&self) -> usize {
        self.channel_len
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.channel_len..(c + 1) * self.channel_len]
    }

    /// Channel-major samples.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub next: S,
    pub reward: f64,
    /// The next state is absorbing; its value is zero.
    pub terminal: bool,
    /// The episode hit its step cap in a non-absorbing state.
    pub truncated: bool,
}

impl<S> Transition<S> {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// An episodic MDP with a discrete action set.
pub trait Environment {
    type State: Clone + fmt::Debug;

    fn action_count(&self) -> usize;

    /// `(channels, channel_len)` of [`encode`](Self::encode).
    fn encoding_shape(&self) -> (usize, usize);

    fn reset(&mut self, rng: &mut dyn RngCore) -> Self::State;

    fn state(&self) -> &Self::State;

    fn step(&mut self, action: usize) -> Result<Transition<Self::State>>;

    fn encode(&self, state: &Self::State) -> EncodedState;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridworldState {
    pub row: usize,
    pub col: usize,
}

impl GridworldState {
    pub fn new(row: usize, col: usize) -> Self {
        GridworldState { row, col }
    }
}

/// Bits per coordinate in the gridworld encoding.
pub const GRID_CODE_BITS: usize = 5;

/// Deterministic square gridworld; reaching the bottom-right corner pays
/// `goal_reward` and ends the episode. Moves into a wall leave the agent
/// in place.
#[derive(Debug, Clone)]
pub struct Gridworld {
    size: usize,
    goal_reward: f64,
    max_steps: usize,
    state: GridworldState,
    steps: usize,
}

impl Gridworld {
    pub const DEFAULT_SIZE: usize = 10;
    pub const DEFAULT_MAX_STEPS: usize = 1000;

    pub fn new(size: usize, max_steps: usize) -> Self {
        assert!(
            (2..=1 << GRID_CODE_BITS).contains(&size),
            "unsupported grid size {size}"
        );
        Gridworld {
            size,
            goal_reward: 10.0,
            max_steps,
            state: GridworldState::new(0, 0),
            steps: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn state_count(&self) -> usize {
        self.size * self.size
    }

    pub fn state_id(&self, s: &GridworldState) -> usize {
        s.row * self.size + s.col
    }

    pub fn goal(&self) -> GridworldState {
        GridworldState::new(self.size - 1, self.size - 1)
    }

    pub fn is_goal(&self, s: &GridworldState) -> bool {
        *s == self.goal()
    }

    /// Pure transition function: `(next, reward, terminal)`.
    pub fn transition(
        &self,
        s: GridworldState,
        action: GridAction,
    ) -> Result<(GridworldState, f64, bool)> {
        if self.is_goal(&s) {
            return Err(Error::Usage(format!(
                "cannot step from terminal state {s:?}"
            )));
        }
        if s.row >= self.size || s.col >= self.size {
            return Err(Error::Usage(format!("state {s:?} is off the grid")));
        }
        let last = self.size - 1;
        let next = match action {
            GridAction::Up => GridworldState::new(s.row.saturating_sub(1), s.col),
            GridAction::Down => GridworldState::new((s.row + 1).min(last), s.col),
            GridAction::Left => GridworldState::new(s.row, s.col.saturating_sub(1)),
            GridAction::Right => GridworldState::new(s.row, (s.col + 1).min(last)),
        };
        let terminal = self.is_goal(&next);
        Ok((
            next,
            if terminal { self.goal_reward } else { 0.0 },
            terminal,
        ))
    }

    pub fn set_state(&mut self, s: GridworldState) {
        self.state = s;
        self.steps = 0;
    }
}

/// Row and column as little-endian binary trains, plus an all-ones channel.
pub fn encode_gridworld(s: &GridworldState) -> EncodedState {
    let bits = |v: usize| (0..GRID_CODE_BITS).map(move |i| ((v >> i) & 1) as f64);
    let data = bits(s.row)
        .chain(bits(s.col))
        .chain(std::iter::repeat_n(1.0, GRID_CODE_BITS))
        .collect();
    EncodedState::new(3, GRID_CODE_BITS, data)
}

impl Environment for Gridworld {
    type State = GridworldState;

    fn action_count(&self) -> usize {
        4
    }

    fn encoding_shape(&self) -> (usize, usize) {
        (3, GRID_CODE_BITS)
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> GridworldState {
        self.set_state(GridworldState::new(0, 0));
        self.state
    }

    fn state(&self) -> &GridworldState {
        &self.state
    }

    fn step(&mut self, action: usize) -> Result<Transition<GridworldState>> {
        let a = GridAction::from_index(action)
            .ok_or_else(|| Error::Usage(format!("gridworld has no action {action}")))?;
        let (next, reward, terminal) = self.transition(self.state, a)?;
        self.state = next;
        self.steps += 1;
        Ok(Transition {
            next,
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        })
    }

    fn encode(&self, state: &GridworldState) -> EncodedState {
        encode_gridworld(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        CartPoleState {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn failed(&self) -> bool {
        self.x.abs() > CartPole::X_LIMIT || self.theta.abs() > CartPole::THETA_LIMIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CartAction {
    Left,
    Right,
}

impl CartAction {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(CartAction::Left),
            1 => Some(CartAction::Right),
            _ => None,
        }
    }
}

/// Classic cart-pole with explicit Euler integration.
#[derive(Debug, Clone)]
pub struct CartPole {
    max_steps: usize,
    state: CartPoleState,
    steps: usize,
}

impl CartPole {
    pub const GRAVITY: f64 = 9.8;
    pub const CART_MASS: f64 = 1.0;
    pub const POLE_MASS: f64 = 0.1;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE: f64 = 10.0;
    pub const DT: f64 = 0.02;
    pub const X_LIMIT: f64 = 2.4;
    pub const THETA_LIMIT: f64 = 12.0 * PI / 180.0;
    pub const HORIZON: usize = 200;

    /// Normalization bounds shared by the encoder and the tile-coded critic.
    pub const BOUNDS: [(f64, f64); 4] = [(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.5, 3.5)];

    pub fn new(max_steps: usize) -> Self {
        CartPole {
            max_steps,
            state: CartPoleState::default(),
            steps: 0,
        }
    }

    pub fn set_state(&mut self, s: CartPoleState) {
        self.state = s;
        self.steps = 0;
    }

    /// One Euler step of the equations of motion under `action`.
    pub fn dynamics(s: &CartPoleState, action: CartAction) -> CartPoleState {
        let force = match action {
            CartAction::Left => -Self::FORCE,
            CartAction::Right => Self::FORCE,
        };
        let total_mass = Self::CART_MASS + Self::POLE_MASS;
        let pole_mass_length = Self::POLE_MASS * Self::HALF_LENGTH;
        let (sin, cos) = s.theta.sin_cos();

        let temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

        CartPoleState {
            x: s.x + Self::DT * s.x_dot,
            x_dot: s.x_dot + Self::DT * x_acc,
            theta: s.theta + Self::DT * s.theta_dot,
            theta_dot: s.theta_dot + Self::DT * theta_acc,
        }
    }
}

/// Each variable mapped affinely from [`CartPole::BOUNDS`] onto `[-1, 1]`,
/// clamped, one length-1 channel per variable.
pub fn encode_cartpole(s: &CartPoleState) -> EncodedState {
    let data = s
        .as_array()
        .iter()
        .zip(CartPole::BOUNDS)
        .map(|(&v, (lo, hi))| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
        .collect();
    EncodedState::new(4, 1, data)
}

impl Environment for CartPole {
    type State = CartPoleState;

    fn action_count(&self) -> usize {
        2
    }

    fn encoding_shape(&self) -> (usize, usize) {
        (4, 1)
    }

    /// Every variable uniform on `[-0.05, 0.05]`.
    fn reset(&mut self, rng: &mut dyn RngCore) -> CartPoleState {
        let mut draw = || rng.gen_range(-0.05..=0.05);
        let s = CartPoleState::new(draw(), draw(), draw(), draw());
        self.set_state(s);
        s
    }

    fn state(&self) -> &CartPoleState {
        &self.state
    }

    fn step(&mut self, action: usize) -> Result<Transition<CartPoleState>> {
        if self.state.failed() {
            return Err(Error::Usage("cannot step a failed cart-pole".into()));
        }
        let a = CartAction::from_index(action)
            .ok_or_else(|| Error::Usage(format!("cart-pole has no action {action}")))?;
        let next = Self::dynamics(&self.state, a);
        self.state = next;
        self.steps += 1;
        let failed = next.failed();
        Ok(Transition {
            next,
            reward: if failed { 0.0 } else { 1.0 },
            terminal: failed,
            truncated: !failed && self.steps >= self.max_steps,
        })
    }

    fn encode(&self, state: &CartPoleState) -> EncodedState {
        encode_cartpole(state)
    }
}
