//! A single GLM spiking agent.
//!
//! Within one MDP step the agent emits a spike train of `train_length` bins.
//! The spike probability in bin `t` is
//!
//! ```text
//! λ(t) = σ( Σ_c k_c ⋆ x_c (t) + Σ_d h_d y(t-d) + Σ_i Σ_d l_{i,d} y_i(t-d) + μ )
//! ```
//!
//! where `k_c ⋆ x_c` is the valid (unpadded, stride one) cross-correlation of
//! the stimulus kernel for channel `c` with that channel's input, `y` is the
//! agent's own train and `y_i` are the trains of laterally coupled agents.
//! Post-spike and coupling terms only look at earlier bins of the current
//! train.
//!
//! All parameters live in one flat vector laid out as
//! `[stimulus (channel-major) | post-spike | coupling (lateral-major) | bias]`
//! so that a [`PolicyGradient`] can share the layout and an update is a
//! single scaled addition.

use std::fmt;
use std::ops::Range;

use rand::Rng;

use crate::error::{shape_err, Result};

/// Pre-activations are clamped to this magnitude before the sigmoid.
pub const DRIVE_CLAMP: f64 = 500.0;

/// Largest `f64` strictly below one; keeps `λ` inside the open unit interval.
const MAX_INTENSITY: f64 = 1.0 - f64::EPSILON / 2.0;

/// Magnitude that non-finite parameters are clamped to after an update.
pub const PARAM_LIMIT: f64 = 1e6;

/// Logistic function on a clamped pre-activation. Never returns exactly 0 or 1.
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-DRIVE_CLAMP, DRIVE_CLAMP);
    let v = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    v.min(MAX_INTENSITY)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `(ln σ(z), ln(1 - σ(z)))` for a clamped pre-activation.
fn log_sigmoids(z: f64) -> (f64, f64) {
    let z = z.clamp(-DRIVE_CLAMP, DRIVE_CLAMP);
    (-softplus(-z), -softplus(z))
}

/// Binary train emitted by one agent during one MDP step.
///
/// Bits are stored as `0.0`/`1.0` so they can be fed straight into
/// downstream filters.
#[derive(Clone, PartialEq)]
pub struct SpikeTrain(Vec<f64>);

impl SpikeTrain {
    pub fn new(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() {
            return Err(shape_err!("spike train must have at least one bin"));
        }
        bits.iter()
            .map(|&b| match b {
                0 => Ok(0.0),
                1 => Ok(1.0),
                other => Err(shape_err!("spike bit must be 0 or 1, got {other}")),
            })
            .collect::<Result<Vec<_>>>()
            .map(SpikeTrain)
    }

    pub fn silent(len: usize) -> Self {
        SpikeTrain(vec![0.0; len])
    }

    /// The train whose bit `t` is bit `t` of `pattern`.
    pub fn from_pattern(pattern: u64, len: usize) -> Self {
        SpikeTrain((0..len).map(|t| ((pattern >> t) & 1) as f64).collect())
    }

    /// Every train of length `len`, in pattern order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = SpikeTrain> {
        assert!(len < 64, "cannot enumerate trains of length {len}");
        (0..1u64 << len).map(move |p| SpikeTrain::from_pattern(p, len))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<f64>) -> Self {
        debug_assert!(bits.iter().all(|&b| b == 0.0 || b == 1.0));
        SpikeTrain(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn spikes(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().map(|&b| b != 0.0)
    }

    pub fn spike_count(&self) -> usize {
        self.spikes().filter(|&s| s).count()
    }
}

impl fmt::Debug for SpikeTrain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpikeTrain[")?;
        for s in self.spikes() {
            f.write_str(if s { "1" } else { "0" })?;
        }
        f.write_str("]")
    }
}

/// Dimensions of one agent's filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentShape {
    /// Number of stimulus channels.
    pub channels: usize,
    /// Stimulus kernel width.
    pub stimulus_width: usize,
    /// Post-spike filter width; 0 disables it.
    pub post_spike_width: usize,
    /// Number of laterally coupled agents.
    pub lateral_count: usize,
    /// Coupling filter width; 0 disables coupling.
    pub coupling_width: usize,
    /// Output bins per MDP step.
    pub train_length: usize,
}

impl AgentShape {
    /// A feed-forward agent with only stimulus filters and a bias.
    pub fn feed_forward(channels: usize, stimulus_width: usize, train_length: usize) -> Self {
        AgentShape {
            channels,
            stimulus_width,
            post_spike_width: 0,
            lateral_count: 0,
            coupling_width: 0,
            train_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_length == 0 {
            return Err(shape_err!("train length must be at least 1"));
        }
        if self.channels > 0 && self.stimulus_width == 0 {
            return Err(shape_err!("stimulus kernel width must be at least 1"));
        }
        Ok(())
    }

    /// Stimulus samples per channel required for a valid convolution.
    pub fn stimulus_len(&self) -> usize {
        self.stimulus_width + self.train_length - 1
    }

    fn coupled_agents(&self) -> usize {
        if self.coupling_width == 0 {
            0
        } else {
            self.lateral_count
        }
    }

    fn stimulus_range(&self) -> Range<usize> {
        0..self.channels * self.stimulus_width
    }

    fn post_spike_range(&self) -> Range<usize> {
        let start = self.stimulus_range().end;
        start..start + self.post_spike_width
    }

    fn coupling_range(&self) -> Range<usize> {
        let start = self.post_spike_range().end;
        start..start + self.coupled_agents() * self.coupling_width
    }

    fn bias_index(&self) -> usize {
        self.coupling_range().end
    }

    pub fn param_count(&self) -> usize {
        self.bias_index() + 1
    }
}

/// Read-only view of what an agent observes during one MDP step, apart
/// from its own spike history.
#[derive(Debug, Clone, Copy)]
pub struct AgentInput<'a> {
    /// Channel-major stimulus, `channels × channel_len`.
    pub stimulus: &'a [f64],
    pub channel_len: usize,
    /// Lateral-major trains of coupled agents, `lateral_count × train_length`.
    pub lateral: &'a [f64],
}

impl<'a> AgentInput<'a> {
    /// Stimulus-only input with channels of equal length.
    pub fn stimulus(stimulus: &'a [f64], channel_len: usize) -> Self {
        AgentInput {
            stimulus,
            channel_len,
            lateral: &[],
        }
    }

    pub fn with_lateral(mut self, lateral: &'a [f64]) -> Self {
        self.lateral = lateral;
        self
    }

    fn check(&self, shape: &AgentShape) -> Result<()> {
        if self.channel_len * shape.channels != self.stimulus.len() {
            return Err(shape_err!(
                "stimulus has {} samples, expected {} channels of {}",
                self.stimulus.len(),
                shape.channels,
                self.channel_len
            ));
        }
        if shape.channels > 0 && self.channel_len < shape.stimulus_len() {
            return Err(shape_err!(
                "stimulus channels of length {} are too short for kernel {} and train length {}",
                self.channel_len,
                shape.stimulus_width,
                shape.train_length
            ));
        }
        let lateral = shape.coupled_agents() * shape.train_length;
        if shape.coupled_agents() > 0 && self.lateral.len() != lateral {
            return Err(shape_err!(
                "lateral input has {} bins, expected {}",
                self.lateral.len(),
                lateral
            ));
        }
        Ok(())
    }
}

/// `∂ log π / ∂ θ` laid out like the agent's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    shape: AgentShape,
    values: Vec<f64>,
}

/// One GLM spiking agent: its filters, bias and train length.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmAgent {
    shape: AgentShape,
    params: Vec<f64>,
}

macro_rules! param_accessors {
    ($ty:ty, $field:ident) => {
        impl $ty {
            pub fn shape(&self) -> &AgentShape {
                &self.shape
            }

            /// All parameters in the flat layout described at module level.
            pub fn as_slice(&self) -> &[f64] {
                &self.$field
            }

            pub fn stimulus_filter(&self, channel: usize) -> &[f64] {
                let w = self.shape.stimulus_width;
                &self.$field[channel * w..(channel + 1) * w]
            }

            pub fn post_spike_filter(&self) -> &[f64] {
                &self.$field[self.shape.post_spike_range()]
            }

            pub fn coupling_filter(&self, lateral: usize) -> &[f64] {
                let w = self.shape.coupling_width;
                let start = self.shape.coupling_range().start + lateral * w;
                &self.$field[start..start + w]
            }

            pub fn bias(&self) -> f64 {
                self.$field[self.shape.bias_index()]
            }
        }
    };
}

param_accessors!(GlmAgent, params);
param_accessors!(PolicyGradient, values);

impl PolicyGradient {
    pub fn zeros(shape: AgentShape) -> Self {
        PolicyGradient {
            values: vec![0.0; shape.param_count()],
            shape,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    pub fn add_scaled(&mut self, other: &PolicyGradient, factor: f64) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl GlmAgent {
    /// An agent with every weight and the bias at zero.
    pub fn zeroed(shape: AgentShape) -> Result<Self> {
        shape.validate()?;
        Ok(GlmAgent {
            params: vec![0.0; shape.param_count()],
            shape,
        })
    }

    /// Weights uniform on `[-0.5, 0.5]`, bias zero.
    pub fn random<R: Rng + ?Sized>(shape: AgentShape, rng: &mut R) -> Result<Self> {
        let mut agent = GlmAgent::zeroed(shape)?;
        let bias = shape.bias_index();
        for p in &mut agent.params[..bias] {
            *p = rng.gen_range(-0.5..=0.5);
        }
        Ok(agent)
    }

    pub fn train_length(&self) -> usize {
        self.shape.train_length
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn stimulus_filter_mut(&mut self, channel: usize) -> &mut [f64] {
        let w = self.shape.stimulus_width;
        &mut self.params[channel * w..(channel + 1) * w]
    }

    pub fn post_spike_filter_mut(&mut self) -> &mut [f64] {
        let r = self.shape.post_spike_range();
        &mut self.params[r]
    }

    pub fn coupling_filter_mut(&mut self, lateral: usize) -> &mut [f64] {
        let w = self.shape.coupling_width;
        let start = self.shape.coupling_range().start + lateral * w;
        &mut self.params[start..start + w]
    }

    pub fn set_bias(&mut self, bias: f64) {
        let i = self.shape.bias_index();
        self.params[i] = bias;
    }

    fn check_train(&self, train: &SpikeTrain) -> Result<()> {
        if train.len() != self.shape.train_length {
            return Err(shape_err!(
                "train has {} bins, agent emits {}",
                train.len(),
                self.shape.train_length
            ));
        }
        Ok(())
    }

    /// Pre-activation at bin `t`. `own` must hold at least `t` bins; the
    /// input must already be shape-checked.
    pub(crate) fn drive(&self, input: &AgentInput<'_>, own: &[f64], t: usize) -> f64 {
        let s = &self.shape;
        let p = &self.params;
        let mut z = p[s.bias_index()];

        let w = s.stimulus_width;
        for c in 0..s.channels {
            let kernel = &p[c * w..(c + 1) * w];
            let x = &input.stimulus[c * input.channel_len + t..][..w];
            z += kernel.iter().zip(x).map(|(k, x)| k * x).sum::<f64>();
        }

        let post = &p[s.post_spike_range()];
        for (d, h) in post.iter().enumerate().take(t) {
            z += h * own[t - 1 - d];
        }

        if s.coupled_agents() > 0 {
            let wl = s.coupling_width;
            let coupling = &p[s.coupling_range()];
            let k = s.train_length;
            for i in 0..s.coupled_agents() {
                let filter = &coupling[i * wl..(i + 1) * wl];
                let other = &input.lateral[i * k..(i + 1) * k];
                for (d, l) in filter.iter().enumerate().take(t) {
                    z += l * other[t - 1 - d];
                }
            }
        }
        z
    }

    /// Spike probability `λ(t)` given the first `t` bins of the agent's own
    /// train in `history` (further bins are ignored).
    pub fn conditional_intensity(
        &self,
        input: &AgentInput<'_>,
        history: &[f64],
        t: usize,
    ) -> Result<f64> {
        input.check(&self.shape)?;
        if t >= self.shape.train_length {
            return Err(shape_err!(
                "bin {t} outside train of length {}",
                self.shape.train_length
            ));
        }
        if self.shape.post_spike_width > 0 && history.len() < t {
            return Err(shape_err!("history has {} bins, need {t}", history.len()));
        }
        Ok(sigmoid(self.drive(input, history, t)))
    }

    /// Samples a train bin by bin, so the post-spike filter sees the bins
    /// already emitted. Draws exactly `train_length` uniforms from `rng`.
    pub fn sample_spike_train<R: Rng + ?Sized>(
        &self,
        input: &AgentInput<'_>,
        rng: &mut R,
    ) -> Result<SpikeTrain> {
        input.check(&self.shape)?;
        let mut bits = vec![0.0; self.shape.train_length];
        for t in 0..bits.len() {
            let lambda = sigmoid(self.drive(input, &bits, t));
            if rng.gen::<f64>() < lambda {
                bits[t] = 1.0;
            }
        }
        Ok(SpikeTrain(bits))
    }

    /// `ln π(train | input)`, the sum of per-bin Bernoulli log-likelihoods.
    pub fn log_policy_prob(&self, input: &AgentInput<'_>, train: &SpikeTrain) -> Result<f64> {
        input.check(&self.shape)?;
        self.check_train(train)?;
        let bits = train.as_slice();
        Ok((0..bits.len())
            .map(|t| {
                let (log_on, log_off) = log_sigmoids(self.drive(input, bits, t));
                if bits[t] != 0.0 {
                    log_on
                } else {
                    log_off
                }
            })
            .sum())
    }

    /// Exact gradient of [`log_policy_prob`](Self::log_policy_prob) with
    /// respect to every parameter.
    pub fn log_policy_grad(
        &self,
        input: &AgentInput<'_>,
        train: &SpikeTrain,
    ) -> Result<PolicyGradient> {
        input.check(&self.shape)?;
        self.check_train(train)?;
        let bits = train.as_slice();
        let lambdas: Vec<f64> = (0..bits.len())
            .map(|t| sigmoid(self.drive(input, bits, t)))
            .collect();
        let mut grad = PolicyGradient::zeros(self.shape);
        accumulate_score(&self.shape, input, bits, &lambdas, 1.0, &mut grad.values);
        Ok(grad)
    }

    /// `θ ← θ + step · grad`. Non-finite results are clamped to
    /// ±[`PARAM_LIMIT`] and reported.
    pub fn ascend(&mut self, grad: &PolicyGradient, step: f64) -> Result<()> {
        if grad.shape != self.shape {
            return Err(shape_err!("gradient shape does not match agent"));
        }
        for (p, g) in self.params.iter_mut().zip(&grad.values) {
            *p += step * g;
        }
        self.sanitize();
        Ok(())
    }

    /// Adds `scale · ∇ ln π` for a train whose per-bin intensities are
    /// already known, without materializing the gradient.
    pub(crate) fn ascend_recorded(
        &mut self,
        input: &AgentInput<'_>,
        bits: &[f64],
        lambdas: &[f64],
        scale: f64,
    ) {
        accumulate_score(&self.shape, input, bits, lambdas, scale, &mut self.params);
        self.sanitize();
    }

    fn sanitize(&mut self) {
        let mut clamped = 0usize;
        for p in &mut self.params {
            if !p.is_finite() {
                *p = if p.is_nan() {
                    0.0
                } else {
                    p.signum() * PARAM_LIMIT
                };
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} non-finite agent parameters");
        }
    }
}

/// `out += scale · Σ_t (y_t − λ_t) · ∂z_t/∂θ`.
fn accumulate_score(
    shape: &AgentShape,
    input: &AgentInput<'_>,
    bits: &[f64],
    lambdas: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let w = shape.stimulus_width;
    let post = shape.post_spike_range();
    let coupling = shape.coupling_range();
    let bias = shape.bias_index();
    let k = shape.train_length;

    for t in 0..k {
        let e = scale * (bits[t] - lambdas[t]);
        if e == 0.0 {
            continue;
        }
        for c in 0..shape.channels {
            let x = &input.stimulus[c * input.channel_len + t..][..w];
            for (g, x) in out[c * w..(c + 1) * w].iter_mut().zip(x) {
                *g += e * x;
            }
        }
        for (d, g) in out[post.clone()].iter_mut().enumerate().take(t) {
            *g += e * bits[t - 1 - d];
        }
        if shape.coupled_agents() > 0 {
            let wl = shape.coupling_width;
            let grads = &mut out[coupling.clone()];
            for i in 0..shape.coupled_agents() {
                let other = &input.lateral[i * k..(i + 1) * k];
                for (d, g) in grads[i * wl..(i + 1) * wl].iter_mut().enumerate().take(t) {
                    *g += e * other[t - 1 - d];
                }
            }
        }
        out[bias] += e;
    }
}
