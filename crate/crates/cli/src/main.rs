use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use spiking_ac::harness::{aggregate_path, preset, run_experiment, ExperimentConfig, PRESET_NAMES};
use spiking_ac::Error;

#[derive(Parser)]
#[command(
    name = "spiking-ac",
    version,
    about = "Spiking-agent actor-critic experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write raw and aggregate CSVs.
    Run(ConfigArgs),
    /// List the built-in presets.
    ListPresets,
    /// Print the resolved configuration as key = value lines.
    PrintConfig(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from a named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Apply a key = value config file (after the preset, before flags).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Raw CSV path; the aggregate is written to <stem>.aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trials (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    hidden_agents: Option<usize>,
    #[arg(long)]
    hidden_train_length: Option<usize>,
    #[arg(long)]
    post_spike_width: Option<usize>,
    #[arg(long)]
    coupling_width: Option<usize>,
    /// modular or full.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    modules: Option<usize>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    /// Readout inverse temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// intensity or spikes.
    #[arg(long)]
    readout: Option<String>,
    #[arg(long)]
    tabular_temperature: Option<f64>,
    #[arg(long)]
    tilings: Option<usize>,
    #[arg(long)]
    tiles: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn push<T: ToString>(
            out: &mut Vec<(&'static str, String)>,
            key: &'static str,
            v: &Option<T>,
        ) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut o = Vec::new();
        push(&mut o, "task", &self.task);
        push(&mut o, "learner", &self.learner);
        push(&mut o, "hidden_agents", &self.hidden_agents);
        push(&mut o, "hidden_train_length", &self.hidden_train_length);
        push(&mut o, "post_spike_width", &self.post_spike_width);
        push(&mut o, "coupling_width", &self.coupling_width);
        push(&mut o, "mask", &self.mask);
        push(&mut o, "modules", &self.modules);
        push(&mut o, "population_size", &self.population_size);
        push(&mut o, "actor_lr", &self.actor_lr);
        push(&mut o, "critic_lr", &self.critic_lr);
        push(&mut o, "discount", &self.discount);
        push(&mut o, "temperature", &self.temperature);
        push(&mut o, "readout", &self.readout);
        push(&mut o, "tabular_temperature", &self.tabular_temperature);
        push(&mut o, "tilings", &self.tilings);
        push(&mut o, "tiles", &self.tiles);
        push(&mut o, "episodes", &self.episodes);
        push(&mut o, "trials", &self.trials);
        push(&mut o, "max_steps", &self.max_steps);
        push(&mut o, "seed", &self.seed);
        push(&mut o, "workers", &self.workers);
        push(
            &mut o,
            "out",
            &self.out.as_ref().map(|p| p.display().to_string()),
        );
        o
    }

    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match (&self.preset, &self.config) {
            (Some(name), _) => preset(name)?,
            (None, Some(_)) => ExperimentConfig::default(),
            (None, None) => {
                return Err(Error::Usage(format!(
                    "pass --preset <name> or --config <file>; presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_kv(&text)?;
        }
        for (key, value) in self.overrides() {
            config.set(key, &value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListPresets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        Command::PrintConfig(args) => print!("{}", args.resolve()?.to_kv()),
        Command::Run(args) => {
            let mut config = args.resolve()?;
            if config.out.is_none() {
                let name = args.preset.as_deref().unwrap_or("experiment");
                config.out = Some(PathBuf::from(format!("runs/{name}.csv")));
            }
            let started = Instant::now();
            let curve = run_experiment(&config)?;
            let agg = curve.aggregate();
            let raw = config.out.as_ref().expect("set above");
            eprintln!(
                "{} trials x {} episodes in {:.1}s; final mean return {:.2}, final mean steps {:.1}",
                curve.trials,
                curve.episodes,
                started.elapsed().as_secs_f64(),
                agg.rows.last().map_or(0.0, |r| r.mean_return),
                agg.rows.last().map_or(0.0, |r| r.mean_steps),
            );
            println!("{}", raw.display());
            println!("{}", aggregate_path(raw).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
