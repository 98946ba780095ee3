use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
pub use crate::network::Readout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Gridworld,
    Cartpole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    /// Population of GLM spiking-agent networks.
    Spiking,
    /// Tabular softmax actor-critic.
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Modular,
    Full,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(config_err!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($ty).to_lowercase(),
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(Task { Gridworld => "gridworld", Cartpole => "cartpole" });
keyword_enum!(Learner { Spiking => "spiking", Tabular => "tabular" });
keyword_enum!(MaskMode { Modular => "modular", Full => "full" });
keyword_enum!(Readout { Intensity => "intensity", Spikes => "spikes" });

/// Everything that determines one experiment.
///
/// Serializes to flat `key = value` lines; see [`ExperimentConfig::to_kv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub learner: Learner,
    pub hidden_agents: usize,
    pub hidden_train_length: usize,
    pub post_spike_width: usize,
    pub coupling_width: usize,
    /// Connectivity between the hidden and output layers.
    pub mask: MaskMode,
    pub modules: usize,
    pub population_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    /// Inverse temperature of the spiking readout softmax.
    pub temperature: f64,
    pub readout: Readout,
    /// Softmax temperature of the tabular actor.
    pub tabular_temperature: f64,
    pub tilings: usize,
    pub tiles: usize,
    pub episodes: usize,
    pub trials: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    /// Raw per-episode CSV; the aggregate goes next to it.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Gridworld,
            learner: Learner::Spiking,
            hidden_agents: 5,
            hidden_train_length: 3,
            post_spike_width: 0,
            coupling_width: 0,
            mask: MaskMode::Full,
            modules: 1,
            population_size: 10,
            actor_lr: 0.1,
            critic_lr: 0.1,
            discount: 0.99,
            temperature: 5.0,
            readout: Readout::Spikes,
            tabular_temperature: 1.0,
            tilings: 8,
            tiles: 8,
            episodes: 1000,
            trials: 20,
            max_steps: 1000,
            seed: 0,
            workers: 0,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err!("invalid value `{value}` for `{key}`"))
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 23] = [
        "task",
        "learner",
        "hidden_agents",
        "hidden_train_length",
        "post_spike_width",
        "coupling_width",
        "mask",
        "modules",
        "population_size",
        "actor_lr",
        "critic_lr",
        "discount",
        "temperature",
        "readout",
        "tabular_temperature",
        "tilings",
        "tiles",
        "episodes",
        "trials",
        "max_steps",
        "seed",
        "workers",
        "out",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "task" => self.task = value.parse()?,
            "learner" => self.learner = value.parse()?,
            "hidden_agents" => self.hidden_agents = parse(key, value)?,
            "hidden_train_length" => self.hidden_train_length = parse(key, value)?,
            "post_spike_width" => self.post_spike_width = parse(key, value)?,
            "coupling_width" => self.coupling_width = parse(key, value)?,
            "mask" => self.mask = value.parse()?,
            "modules" => self.modules = parse(key, value)?,
            "population_size" => self.population_size = parse(key, value)?,
            "actor_lr" => self.actor_lr = parse(key, value)?,
            "critic_lr" => self.critic_lr = parse(key, value)?,
            "discount" => self.discount = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "readout" => self.readout = value.parse()?,
            "tabular_temperature" => self.tabular_temperature = parse(key, value)?,
            "tilings" => self.tilings = parse(key, value)?,
            "tiles" => self.tiles = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            other => return Err(config_err!("unknown config key `{other}`")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "task" => self.task.to_string(),
            "learner" => self.learner.to_string(),
            "hidden_agents" => self.hidden_agents.to_string(),
            "hidden_train_length" => self.hidden_train_length.to_string(),
            "post_spike_width" => self.post_spike_width.to_string(),
            "coupling_width" => self.coupling_width.to_string(),
            "mask" => self.mask.to_string(),
            "modules" => self.modules.to_string(),
            "population_size" => self.population_size.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "discount" => self.discount.to_string(),
            "temperature" => self.temperature.to_string(),
            "readout" => self.readout.to_string(),
            "tabular_temperature" => self.tabular_temperature.to_string(),
            "tilings" => self.tilings.to_string(),
            "tiles" => self.tiles.to_string(),
            "episodes" => self.episodes.to_string(),
            "trials" => self.trials.to_string(),
            "max_steps" => self.max_steps.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "out" => self
                .out
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            _ => return None,
        })
    }

    /// Flat `key = value` text, one line per field, in [`KEYS`](Self::KEYS) order.
    pub fn to_kv(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`", n + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| config_err!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_kv(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("temperature", self.temperature),
            ("tabular_temperature", self.tabular_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err!("`{name}` must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(config_err!(
                "`discount` must lie in [0, 1], got {}",
                self.discount
            ));
        }
        let counts = [
            ("trials", self.trials),
            ("episodes", self.episodes),
            ("max_steps", self.max_steps),
            ("population_size", self.population_size),
            ("hidden_agents", self.hidden_agents),
            ("hidden_train_length", self.hidden_train_length),
            ("modules", self.modules),
            ("tilings", self.tilings),
            ("tiles", self.tiles),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(config_err!("`{name}` must be at least 1"));
            }
        }
        if self.task == Task::Cartpole && self.learner == Learner::Tabular {
            return Err(config_err!(
                "the tabular learner needs a discrete-state task"
            ));
        }
        if self.task == Task::Cartpole && self.hidden_train_length != 1 {
            return Err(config_err!("cart-pole networks use single-spike agents"));
        }
        if self.task == Task::Gridworld && self.hidden_train_length > crate::envs::GRID_CODE_BITS {
            return Err(config_err!(
                "hidden train length cannot exceed the {}-bin input code",
                crate::envs::GRID_CODE_BITS
            ));
        }
        Ok(())
    }
}
