//! Named experiment configurations.
//!
//! Architectures follow the benchmark descriptions: the gridworld network
//! is 3 input channels × 5 bins → 5 hidden agents × 3 bins → 4 single-spike
//! output agents; the cart-pole network is 4 real inputs → 200 hidden →
//! 2 output single-spike agents. Learning rates and critic settings are our
//! own tuned defaults. Both read actions out from output spikes rather than
//! intensities, which is what lets the output layer learn.

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Learner, MaskMode, Readout, Task};

pub const PRESET_NAMES: [&str; 5] = [
    "grid-spiking",
    "grid-tabular",
    "cart-modular",
    "cart-full",
    "cart-pop-N",
];

fn gridworld() -> ExperimentConfig {
    ExperimentConfig {
        task: Task::Gridworld,
        learner: Learner::Spiking,
        hidden_agents: 5,
        hidden_train_length: 3,
        mask: MaskMode::Full,
        modules: 1,
        population_size: 10,
        actor_lr: 0.1,
        critic_lr: 0.1,
        discount: 0.99,
        temperature: 5.0,
        readout: Readout::Spikes,
        episodes: 5000,
        max_steps: 1000,
        ..ExperimentConfig::default()
    }
}

fn cartpole(mask: MaskMode, population_size: usize) -> ExperimentConfig {
    ExperimentConfig {
        task: Task::Cartpole,
        learner: Learner::Spiking,
        hidden_agents: 200,
        hidden_train_length: 1,
        mask,
        modules: 2,
        population_size,
        actor_lr: 0.008,
        // Per tiling, so the effective step on V is 8 × 0.05.
        critic_lr: 0.05,
        discount: 0.99,
        temperature: 5.0,
        readout: Readout::Spikes,
        episodes: 1500,
        max_steps: 200,
        ..ExperimentConfig::default()
    }
}

/// Looks up a preset; `cart-pop-N` accepts any positive population size.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let config = match name {
        "grid-spiking" => gridworld(),
        "grid-tabular" => ExperimentConfig {
            learner: Learner::Tabular,
            population_size: 1,
            actor_lr: 0.5,
            critic_lr: 0.5,
            ..gridworld()
        },
        "cart-modular" => cartpole(MaskMode::Modular, 10),
        "cart-full" => cartpole(MaskMode::Full, 10),
        other => match other.strip_prefix("cart-pop-").map(str::parse::<usize>) {
            Some(Ok(n)) if n > 0 => cartpole(MaskMode::Modular, n),
            _ => {
                return Err(Error::Usage(format!(
                    "unknown preset `{other}`; available presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        },
    };
    Ok(config)
}
