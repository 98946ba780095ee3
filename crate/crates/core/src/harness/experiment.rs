use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{run_tabular_episode, TabularActor};
use crate::critic::{GridCritic, TileCodedCritic, TileCoding};
use crate::envs::{CartPole, Environment, Gridworld};
use crate::error::{config_err, Error, Result};
use crate::network::{ConnectivityMask, LayerSpec, Network};
use crate::training::{run_episode, ActorConfig, Ensemble, EpisodeStats};

use super::config::{ExperimentConfig, Learner, MaskMode, Task};

pub const RAW_HEADER: &str = "trial,episode,return,steps,discounted_return";
pub const AGGREGATE_HEADER: &str = "episode,mean_return,se_return,mean_steps,se_steps";

/// Per-episode statistics of every trial, trial-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub trials: usize,
    pub episodes: usize,
    rows: Vec<EpisodeStats>,
}

impl LearningCurve {
    pub fn from_trials(trials: Vec<Vec<EpisodeStats>>) -> Result<Self> {
        let episodes = trials.first().map_or(0, Vec::len);
        if trials.iter().any(|t| t.len() != episodes) {
            return Err(Error::Shape("trials have differing episode counts".into()));
        }
        Ok(LearningCurve {
            trials: trials.len(),
            episodes,
            rows: trials.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, trial: usize, episode: usize) -> &EpisodeStats {
        &self.rows[trial * self.episodes + episode]
    }

    pub fn trial(&self, trial: usize) -> &[EpisodeStats] {
        &self.rows[trial * self.episodes..(trial + 1) * self.episodes]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{RAW_HEADER}")?;
        for trial in 0..self.trials {
            for (episode, s) in self.trial(trial).iter().enumerate() {
                writeln!(
                    w,
                    "{trial},{episode},{},{},{}",
                    s.total_return, s.steps, s.discounted_return
                )?;
            }
        }
        Ok(())
    }

    pub fn aggregate(&self) -> Aggregate {
        let rows = (0..self.episodes)
            .map(|e| {
                let returns: Vec<f64> = (0..self.trials)
                    .map(|t| self.get(t, e).total_return)
                    .collect();
                let steps: Vec<f64> = (0..self.trials)
                    .map(|t| self.get(t, e).steps as f64)
                    .collect();
                let (mean_return, se_return) = mean_and_se(&returns);
                let (mean_steps, se_steps) = mean_and_se(&steps);
                AggregateRow {
                    episode: e,
                    mean_return,
                    se_return,
                    mean_steps,
                    se_steps,
                }
            })
            .collect();
        Aggregate { rows }
    }
}

/// Sample mean and standard error `s / √n` (with `s` the `n − 1`
/// standard deviation; zero for a single sample).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean_return: f64,
    pub se_return: f64,
    pub mean_steps: f64,
    pub se_steps: f64,
}

/// Across-trial mean and standard error per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
}

impl Aggregate {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{AGGREGATE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.episode, r.mean_return, r.se_return, r.mean_steps, r.se_steps
            )?;
        }
        Ok(())
    }

    /// Index of the first episode whose mean return reaches `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().position(|r| r.mean_return >= threshold)
    }

    /// Mean of the per-episode mean step counts over the last `window` episodes.
    pub fn final_mean_steps(&self, window: usize) -> f64 {
        let tail = &self.rows[self.rows.len().saturating_sub(window)..];
        tail.iter().map(|r| r.mean_steps).sum::<f64>() / tail.len() as f64
    }
}

/// `runs/foo.csv` → `runs/foo.aggregate.csv`.
pub fn aggregate_path(raw: &Path) -> PathBuf {
    let stem = raw
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    raw.with_file_name(format!("{stem}.aggregate.csv"))
}

fn hidden_mask(config: &ExperimentConfig, actions: usize) -> Result<ConnectivityMask> {
    match config.mask {
        MaskMode::Full => Ok(ConnectivityMask::full(config.hidden_agents, actions)),
        MaskMode::Modular => {
            ConnectivityMask::modular(config.hidden_agents, actions, config.modules)
        }
    }
}

/// One member network for `config` on an environment with the given
/// encoding shape and action count.
pub fn build_network<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    encoding: (usize, usize),
    actions: usize,
    rng: &mut R,
) -> Result<Network> {
    let (channels, len) = encoding;
    if config.hidden_train_length > len {
        return Err(config_err!(
            "hidden train length {} exceeds input length {len}",
            config.hidden_train_length
        ));
    }
    let hidden = LayerSpec {
        post_spike_width: config.post_spike_width,
        coupling_width: config.coupling_width,
        ..LayerSpec::valid(config.hidden_agents, config.hidden_train_length, len)
    };
    let output = LayerSpec::valid(actions, 1, config.hidden_train_length);
    let masks = vec![
        ConnectivityMask::full(channels, config.hidden_agents),
        hidden_mask(config, actions)?,
    ];
    Ok(Network::new(
        channels,
        len,
        &[hidden, output],
        masks,
        config.temperature,
        rng,
    )?
    .with_readout(config.readout))
}

fn actor_config(config: &ExperimentConfig) -> ActorConfig {
    ActorConfig {
        learning_rate: config.actor_lr,
        temperature: config.temperature,
        population_size: config.population_size,
        max_episode_steps: config.max_steps,
        episode_count: config.episodes,
    }
}

fn spiking_trial<E, C>(
    config: &ExperimentConfig,
    mut env: E,
    mut critic: C,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeStats>>
where
    E: Environment,
    C: crate::critic::Critic<E::State>,
{
    let actor = actor_config(config);
    actor.validate()?;
    let encoding = env.encoding_shape();
    let actions = env.action_count();
    let mut ensemble = Ensemble::build(config.population_size, rng, |r| {
        build_network(config, encoding, actions, r)
    })?;
    (0..config.episodes)
        .map(|_| run_episode(&mut ensemble, &mut critic, &mut env, &actor, rng))
        .collect()
}

/// Runs trial `trial` of `config` with seed `config.seed + trial`.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<EpisodeStats>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(trial as u64));
    let stats = match (config.task, config.learner) {
        (Task::Gridworld, Learner::Spiking) => spiking_trial(
            config,
            Gridworld::new(Gridworld::DEFAULT_SIZE, config.max_steps),
            GridCritic::new(Gridworld::DEFAULT_SIZE, config.critic_lr, config.discount),
            &mut rng,
        )?,
        (Task::Cartpole, Learner::Spiking) => {
            let coding = TileCoding::new(config.tilings, config.tiles, CartPole::BOUNDS.to_vec());
            spiking_trial(
                config,
                CartPole::new(config.max_steps),
                TileCodedCritic::new(coding, config.critic_lr, config.discount),
                &mut rng,
            )?
        }
        (Task::Gridworld, Learner::Tabular) => {
            let mut env = Gridworld::new(Gridworld::DEFAULT_SIZE, config.max_steps);
            let mut critic = GridCritic::new(env.size(), config.critic_lr, config.discount);
            let mut actor = TabularActor::new(
                env.state_count(),
                env.action_count(),
                config.actor_lr,
                config.tabular_temperature,
            );
            (0..config.episodes)
                .map(|_| {
                    run_tabular_episode(
                        &mut actor,
                        &mut critic,
                        &mut env,
                        config.max_steps,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?
        }
        (Task::Cartpole, Learner::Tabular) => {
            return Err(config_err!(
                "the tabular learner needs a discrete-state task"
            ))
        }
    };
    log::info!(
        "trial {trial}: final return {}",
        stats.last().map_or(0.0, |s| s.total_return)
    );
    Ok(stats)
}

/// Runs every trial (in parallel, bounded by `config.workers`) and returns
/// the curve in trial order.
pub fn run_trials(config: &ExperimentConfig) -> Result<LearningCurve> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| config_err!("cannot start worker pool: {e}"))?;
    let trials = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect::<Result<Vec<_>>>()
    })?;
    LearningCurve::from_trials(trials)
}

/// Runs `config` and, if it names an output path, writes the raw and
/// aggregate CSVs. The output files are created before any trial runs so an
/// unwritable path fails fast.
pub fn run_experiment(config: &ExperimentConfig) -> Result<LearningCurve> {
    config.validate()?;
    let files = match &config.out {
        Some(raw) => {
            if let Some(dir) = raw.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let agg = aggregate_path(raw);
            Some((File::create(raw)?, File::create(agg)?))
        }
        None => None,
    };
    let curve = run_trials(config)?;
    if let Some((raw, agg)) = files {
        let mut raw = BufWriter::new(raw);
        curve.write_csv(&mut raw)?;
        raw.flush()?;
        let mut agg = BufWriter::new(agg);
        curve.aggregate().write_csv(&mut agg)?;
        agg.flush()?;
    }
    Ok(curve)
}
