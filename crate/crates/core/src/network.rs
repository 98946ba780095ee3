//! Layered networks of GLM agents with block-sparse connectivity and a
//! softmax action readout.
//!
//! The encoded MDP state is the input "layer": `channels` sequences of
//! `channel_len` samples. Each subsequent layer's agents see, as stimulus
//! channels, the spike trains of the upstream agents their mask column
//! admits. The last layer has one agent per action; its intensities are
//! turned into an action distribution with a softmax.

use std::ops::Range;

use rand::Rng;

use crate::error::{config_err, shape_err, Result};
use crate::glm::{sigmoid, AgentInput, AgentShape, GlmAgent, PolicyGradient, SpikeTrain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub agent_count: usize,
    pub train_length: usize,
    pub stimulus_width: usize,
    /// 0 disables the post-spike filter.
    pub post_spike_width: usize,
    /// 0 disables coupling; otherwise every agent couples to all others in
    /// its layer.
    pub coupling_width: usize,
}

impl LayerSpec {
    /// Feed-forward layer whose kernel exactly spans `channel_len` inputs
    /// down to `train_length` bins.
    pub fn valid(agent_count: usize, train_length: usize, channel_len: usize) -> Self {
        LayerSpec {
            agent_count,
            train_length,
            stimulus_width: channel_len + 1 - train_length,
            post_spike_width: 0,
            coupling_width: 0,
        }
    }
}

/// What the softmax readout of the output layer is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// Output agents' intensities `λ`.
    #[default]
    Intensity,
    /// Output agents' sampled spikes, as the fraction of bins that fired.
    Spikes,
}

/// `connected[i][j]` is true iff upstream unit `i` feeds downstream agent `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMask {
    upstream: usize,
    downstream: usize,
    connected: Vec<bool>,
}

impl ConnectivityMask {
    pub fn full(upstream: usize, downstream: usize) -> Self {
        ConnectivityMask {
            upstream,
            downstream,
            connected: vec![true; upstream * downstream],
        }
    }

    /// Block-diagonal mask: both layers are split into `modules` contiguous
    /// groups (the last group absorbs any remainder) and group `g` upstream
    /// feeds only group `g` downstream.
    pub fn modular(upstream: usize, downstream: usize, modules: usize) -> Result<Self> {
        if modules == 0 || modules > upstream.min(downstream) {
            return Err(config_err!(
                "cannot split {upstream}→{downstream} agents into {modules} modules"
            ));
        }
        let group = |i: usize, n: usize| (i / (n / modules)).min(modules - 1);
        let mut connected = vec![false; upstream * downstream];
        for i in 0..upstream {
            for j in 0..downstream {
                connected[i * downstream + j] = group(i, upstream) == group(j, downstream);
            }
        }
        Ok(ConnectivityMask {
            upstream,
            downstream,
            connected,
        })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let upstream = rows.len();
        let downstream = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != downstream) {
            return Err(shape_err!("mask rows have unequal lengths"));
        }
        let mask = ConnectivityMask {
            upstream,
            downstream,
            connected: rows.concat(),
        };
        mask.validate()?;
        Ok(mask)
    }

    fn validate(&self) -> Result<()> {
        for j in 0..self.downstream {
            if self.fan_in(j).is_empty() {
                return Err(config_err!(
                    "downstream agent {j} has no upstream connection"
                ));
            }
        }
        Ok(())
    }

    pub fn upstream(&self) -> usize {
        self.upstream
    }

    pub fn downstream(&self) -> usize {
        self.downstream
    }

    pub fn connects(&self, upstream: usize, downstream: usize) -> bool {
        self.connected[upstream * self.downstream + downstream]
    }

    pub fn is_full(&self) -> bool {
        self.connected.iter().all(|&c| c)
    }

    /// Upstream units feeding downstream agent `j`, ascending.
    pub fn fan_in(&self, j: usize) -> Vec<usize> {
        (0..self.upstream)
            .filter(|&i| self.connects(i, j))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FanIn {
    Contiguous(Range<usize>),
    Scattered(Vec<usize>),
}

impl FanIn {
    fn new(indices: Vec<usize>) -> Self {
        let contiguous = indices.windows(2).all(|w| w[1] == w[0] + 1);
        match (contiguous, indices.first(), indices.last()) {
            (true, Some(&a), Some(&b)) => FanIn::Contiguous(a..b + 1),
            _ => FanIn::Scattered(indices),
        }
    }

    fn len(&self) -> usize {
        match self {
            FanIn::Contiguous(r) => r.len(),
            FanIn::Scattered(v) => v.len(),
        }
    }

    /// The admitted upstream channels, borrowed when they are contiguous.
    fn gather<'a>(&self, upstream: &'a [f64], len: usize, buf: &'a mut Vec<f64>) -> &'a [f64] {
        match self {
            FanIn::Contiguous(r) => &upstream[r.start * len..r.end * len],
            FanIn::Scattered(ix) => {
                buf.clear();
                for &i in ix {
                    buf.extend_from_slice(&upstream[i * len..(i + 1) * len]);
                }
                buf
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    agents: Vec<GlmAgent>,
    fan_in: Vec<FanIn>,
}

impl Layer {
    fn coupled(&self) -> bool {
        self.spec.coupling_width > 0 && self.spec.agent_count > 1
    }
}

/// Everything sampled during one forward pass; enough to recompute every
/// agent's input and score function afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    input: Vec<f64>,
    /// Per layer, agent-major spike bits.
    spikes: Vec<Vec<f64>>,
    /// Per layer, agent-major `λ(t)` matching `spikes`.
    intensities: Vec<Vec<f64>>,
    output_intensities: Vec<f64>,
    output_activity: Vec<f64>,
}

impl ForwardTrace {
    pub fn layer_count(&self) -> usize {
        self.spikes.len()
    }

    pub fn encoded_input(&self) -> &[f64] {
        &self.input
    }

    pub fn layer_spikes(&self, layer: usize) -> &[f64] {
        &self.spikes[layer]
    }

    pub fn layer_intensities(&self, layer: usize) -> &[f64] {
        &self.intensities[layer]
    }

    /// One intensity per output agent: the mean of its per-bin `λ`, which
    /// is just `λ` for single-spike outputs.
    pub fn output_intensities(&self) -> &[f64] {
        &self.output_intensities
    }

    /// Fraction of bins in which each output agent spiked.
    pub fn output_activity(&self) -> &[f64] {
        &self.output_activity
    }

    pub fn readout_values(&self, readout: Readout) -> &[f64] {
        match readout {
            Readout::Intensity => &self.output_intensities,
            Readout::Spikes => &self.output_activity,
        }
    }
}

/// Input an agent saw during a recorded forward pass, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub stimulus: Vec<f64>,
    pub channel_len: usize,
    pub lateral: Vec<f64>,
    pub train: SpikeTrain,
}

impl AgentSnapshot {
    pub fn input(&self) -> AgentInput<'_> {
        AgentInput::stimulus(&self.stimulus, self.channel_len).with_lateral(&self.lateral)
    }
}

/// Numerically stable `softmax(β·v)`.
pub fn softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let max = values
        .iter()
        .map(|v| beta * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (beta * v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Samples an index from a probability vector with one uniform draw.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below one; fall back to the last
    // index with nonzero mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// A feed-forward stack of GLM agent layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_channels: usize,
    input_len: usize,
    layers: Vec<Layer>,
    masks: Vec<ConnectivityMask>,
    temperature: f64,
    readout: Readout,
}

impl Network {
    /// Builds a network with randomly initialized agents. `masks[ℓ]` connects
    /// the units below layer `ℓ` (the encoded input for `ℓ = 0`) to layer `ℓ`.
    pub fn new<R: Rng + ?Sized>(
        input_channels: usize,
        input_len: usize,
        layers: &[LayerSpec],
        masks: Vec<ConnectivityMask>,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(config_err!("network needs at least one layer"));
        }
        if masks.len() != layers.len() {
            return Err(config_err!(
                "{} layers need {} masks, got {}",
                layers.len(),
                layers.len(),
                masks.len()
            ));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(config_err!(
                "readout temperature must be positive, got {temperature}"
            ));
        }

        let mut upstream = input_channels;
        let mut channel_len = input_len;
        let mut built = Vec::with_capacity(layers.len());
        for (l, (spec, mask)) in layers.iter().zip(&masks).enumerate() {
            if mask.upstream() != upstream || mask.downstream() != spec.agent_count {
                return Err(shape_err!(
                    "mask {l} is {}×{}, layer needs {upstream}×{}",
                    mask.upstream(),
                    mask.downstream(),
                    spec.agent_count
                ));
            }
            mask.validate()?;
            if spec.stimulus_width == 0
                || spec.train_length == 0
                || spec.stimulus_width + spec.train_length - 1 != channel_len
            {
                return Err(shape_err!(
                    "layer {l}: kernel {} and train length {} do not fit inputs of length {channel_len}",
                    spec.stimulus_width,
                    spec.train_length
                ));
            }
            let fan_in: Vec<FanIn> = (0..spec.agent_count)
                .map(|j| FanIn::new(mask.fan_in(j)))
                .collect();
            let agents = fan_in
                .iter()
                .map(|fan| {
                    let shape = AgentShape {
                        channels: fan.len(),
                        stimulus_width: spec.stimulus_width,
                        post_spike_width: spec.post_spike_width,
                        lateral_count: spec.agent_count - 1,
                        coupling_width: spec.coupling_width,
                        train_length: spec.train_length,
                    };
                    GlmAgent::random(shape, rng)
                })
                .collect::<Result<Vec<_>>>()?;
            built.push(Layer {
                spec: *spec,
                agents,
                fan_in,
            });
            upstream = spec.agent_count;
            channel_len = spec.train_length;
        }

        Ok(Network {
            input_channels,
            input_len,
            layers: built,
            masks,
            temperature,
            readout: Readout::default(),
        })
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_spec(&self, layer: usize) -> &LayerSpec {
        &self.layers[layer].spec
    }

    pub fn mask(&self, layer: usize) -> &ConnectivityMask {
        &self.masks[layer]
    }

    pub fn action_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.agent_count)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn agent(&self, layer: usize, index: usize) -> &GlmAgent {
        &self.layers[layer].agents[index]
    }

    pub fn agent_mut(&mut self, layer: usize, index: usize) -> &mut GlmAgent {
        &mut self.layers[layer].agents[index]
    }

    pub fn agents(&self) -> impl Iterator<Item = &GlmAgent> {
        self.layers.iter().flat_map(|l| l.agents.iter())
    }

    fn channel_len(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_len
        } else {
            self.layers[layer - 1].spec.train_length
        }
    }

    fn check_input(&self, encoded: &[f64]) -> Result<()> {
        if encoded.len() != self.input_channels * self.input_len {
            return Err(shape_err!(
                "encoded state has {} samples, network expects {} channels of {}",
                encoded.len(),
                self.input_channels,
                self.input_len
            ));
        }
        Ok(())
    }

    /// Samples every layer in order on a channel-major encoded state.
    pub fn forward<R: Rng + ?Sized>(&self, encoded: &[f64], rng: &mut R) -> Result<ForwardTrace> {
        self.check_input(encoded)?;
        let mut spikes: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut intensities = Vec::with_capacity(self.layers.len());
        let mut buf = Vec::new();

        for (l, layer) in self.layers.iter().enumerate() {
            let upstream: &[f64] = if l == 0 { encoded } else { &spikes[l - 1] };
            let len = self.channel_len(l);
            let k = layer.spec.train_length;
            let n = layer.spec.agent_count;
            let mut out = vec![0.0; n * k];
            let mut lam = vec![0.0; n * k];

            if layer.coupled() {
                // Bin-synchronous so that lateral filters see earlier bins of
                // every agent in the layer.
                let stimuli: Vec<Vec<f64>> = layer
                    .fan_in
                    .iter()
                    .map(|fan| fan.gather(upstream, len, &mut buf).to_vec())
                    .collect();
                let mut lateral = Vec::with_capacity((n - 1) * k);
                for t in 0..k {
                    let snapshot = out.clone();
                    for (j, agent) in layer.agents.iter().enumerate() {
                        gather_lateral(&snapshot, j, k, &mut lateral);
                        let input = AgentInput::stimulus(&stimuli[j], len).with_lateral(&lateral);
                        let own = &snapshot[j * k..(j + 1) * k];
                        let p = sigmoid(agent.drive(&input, own, t));
                        lam[j * k + t] = p;
                        if rng.gen::<f64>() < p {
                            out[j * k + t] = 1.0;
                        }
                    }
                }
            } else {
                for (j, (agent, fan)) in layer.agents.iter().zip(&layer.fan_in).enumerate() {
                    let input = AgentInput::stimulus(fan.gather(upstream, len, &mut buf), len);
                    let own = &mut out[j * k..(j + 1) * k];
                    for t in 0..k {
                        let p = sigmoid(agent.drive(&input, own, t));
                        lam[j * k + t] = p;
                        if rng.gen::<f64>() < p {
                            own[t] = 1.0;
                        }
                    }
                }
            }
            spikes.push(out);
            intensities.push(lam);
        }

        let last = self.layers.last().expect("non-empty");
        let k = last.spec.train_length;
        let mean_bins = |v: &Vec<f64>| -> Vec<f64> {
            v.chunks(k)
                .map(|c| c.iter().sum::<f64>() / k as f64)
                .collect()
        };
        let output_intensities = mean_bins(intensities.last().expect("non-empty"));
        let output_activity = mean_bins(spikes.last().expect("non-empty"));

        Ok(ForwardTrace {
            input: encoded.to_vec(),
            spikes,
            intensities,
            output_intensities,
            output_activity,
        })
    }

    /// `softmax(β·v)` over the output agents' readout values.
    pub fn action_distribution(&self, trace: &ForwardTrace) -> Vec<f64> {
        softmax(trace.readout_values(self.readout), self.temperature)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let congruent = trace.spikes.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(&trace.spikes)
                .all(|(l, s)| s.len() == l.spec.agent_count * l.spec.train_length);
        if !congruent || self.check_input(&trace.input).is_err() {
            return Err(shape_err!("trace does not match network topology"));
        }
        Ok(())
    }

    /// Reconstructs what agent `index` of `layer` saw during `trace`.
    pub fn agent_snapshot(
        &self,
        trace: &ForwardTrace,
        layer: usize,
        index: usize,
    ) -> Result<AgentSnapshot> {
        self.check_trace(trace)?;
        let l = &self.layers[layer];
        let len = self.channel_len(layer);
        let k = l.spec.train_length;
        let upstream: &[f64] = if layer == 0 {
            &trace.input
        } else {
            &trace.spikes[layer - 1]
        };
        let mut buf = Vec::new();
        let stimulus = l.fan_in[index].gather(upstream, len, &mut buf).to_vec();
        let mut lateral = Vec::new();
        if l.coupled() {
            gather_lateral(&trace.spikes[layer], index, k, &mut lateral);
        }
        let train = SpikeTrain::from_bits_unchecked(
            trace.spikes[layer][index * k..(index + 1) * k].to_vec(),
        );
        Ok(AgentSnapshot {
            stimulus,
            channel_len: len,
            lateral,
            train,
        })
    }

    /// `∇ ln π` of every agent at its recorded train, layer by layer.
    pub fn score_functions(&self, trace: &ForwardTrace) -> Result<Vec<Vec<PolicyGradient>>> {
        (0..self.layers.len())
            .map(|l| {
                (0..self.layers[l].agents.len())
                    .map(|j| {
                        let snap = self.agent_snapshot(trace, l, j)?;
                        self.layers[l].agents[j].log_policy_grad(&snap.input(), &snap.train)
                    })
                    .collect()
            })
            .collect()
    }

    /// Applies `θ ← θ + step · ∇ ln π(recorded train)` to every agent, using
    /// the intensities recorded in the trace.
    pub fn reinforce(&mut self, trace: &ForwardTrace, step: f64) -> Result<()> {
        self.check_trace(trace)?;
        if step == 0.0 {
            return Ok(());
        }
        let mut buf = Vec::new();
        let mut lateral = Vec::new();
        for l in 0..self.layers.len() {
            let len = self.channel_len(l);
            let upstream: &[f64] = if l == 0 {
                &trace.input
            } else {
                &trace.spikes[l - 1]
            };
            let layer = &mut self.layers[l];
            let coupled = layer.coupled();
            let k = layer.spec.train_length;
            let spikes = &trace.spikes[l];
            let lambdas = &trace.intensities[l];
            for (j, (agent, fan)) in layer.agents.iter_mut().zip(&layer.fan_in).enumerate() {
                if coupled {
                    gather_lateral(spikes, j, k, &mut lateral);
                }
                let input = AgentInput::stimulus(fan.gather(upstream, len, &mut buf), len)
                    .with_lateral(&lateral);
                agent.ascend_recorded(
                    &input,
                    &spikes[j * k..(j + 1) * k],
                    &lambdas[j * k..(j + 1) * k],
                    step,
                );
            }
        }
        Ok(())
    }
}

/// `softmax(β·λ)` over a trace's output intensities.
pub fn action_distribution(trace: &ForwardTrace, beta: f64) -> Vec<f64> {
    softmax(trace.output_intensities(), beta)
}

fn gather_lateral(layer_spikes: &[f64], skip: usize, k: usize, out: &mut Vec<f64>) {
    out.clear();
    for (i, train) in layer_spikes.chunks(k).enumerate() {
        if i != skip {
            out.extend_from_slice(train);
        }
    }
}
