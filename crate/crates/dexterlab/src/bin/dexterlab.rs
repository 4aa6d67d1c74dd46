use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dexterlab::checkpoint::load_checkpoint;
use dexterlab::config::ExperimentConfig;
use dexterlab::curriculum::RewardMode;
use dexterlab::logging::{append_results_csv, ResultsRow, RunLock};
use dexterlab::mask::ActionMask;
use dexterlab::rollout::evaluate;
use dexterlab::trainer::Trainer;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dexterlab", about = "Muscle-driven pointing: training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a TOML config (or resume from a checkpoint).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue a previous run from its checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on uniformly placed flat targets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Target radius in millimetres.
        #[arg(long, default_value_t = 6.0)]
        radius_mm: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append the metrics to this results CSV.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Run a grid of training configurations and collect a results CSV.
    Ablate {
        /// Base config; each grid entry overrides fields on top of it.
        #[arg(long)]
        config: PathBuf,
        /// TOML file with an `[[runs]]` table per variant.
        #[arg(long)]
        grid: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, resume } => train(config, resume),
        Command::Eval {
            checkpoint,
            episodes,
            radius_mm,
            seed,
            results,
        } => eval_cmd(checkpoint, episodes, radius_mm, seed, results),
        Command::Ablate { config, grid } => ablate(config, grid),
    }
}

fn train(config_path: PathBuf, resume: Option<PathBuf>) -> Result<()> {
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(&ckpt)
            .with_context(|| format!("resuming from {}", ckpt.display()))?,
        None => {
            let config = ExperimentConfig::load(&config_path)?;
            Trainer::new(config)?
        }
    };
    std::fs::create_dir_all(&trainer.config.output_dir)?;
    let _lock = RunLock::acquire(&trainer.config.output_dir).with_context(|| {
        format!(
            "another run is active in {} (stale .lock file?)",
            trainer.config.output_dir.display()
        )
    })?;
    std::fs::write(
        trainer.config.output_dir.join("config.toml"),
        trainer.config.to_toml(),
    )?;
    let final_ckpt = trainer.run()?;
    println!("final checkpoint: {}", final_ckpt.display());
    Ok(())
}

fn eval_cmd(
    checkpoint: PathBuf,
    episodes: usize,
    radius_mm: f64,
    seed: u64,
    results: Option<PathBuf>,
) -> Result<()> {
    let loaded = load_checkpoint(&checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let config = &loaded.meta.config;
    let mask = if config.mask_enabled {
        ActionMask::default()
    } else {
        ActionMask::all_enabled()
    };
    let metrics = evaluate(
        &loaded.params,
        &mask,
        &config.arm,
        &config.rollout,
        radius_mm / 1000.0,
        config.sampler.n_cells,
        episodes,
        seed,
    )?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    if let Some(path) = results {
        let row = ResultsRow {
            network_size: config.ppo.hidden,
            max_timesteps: config.total_timesteps,
            action_masking: config.mask_enabled,
            curriculum_learning: config.curriculum_enabled,
            dynamic_reward: config.curriculum.reward_mode == RewardMode::Dynamic,
            early_reward: config.curriculum.reward_mode == RewardMode::Early,
            button_radius_mm: radius_mm,
            metrics: Some(metrics),
        };
        append_results_csv(&path, &row)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    runs: Vec<GridRun>,
}

/// One grid variant: a name plus overrides on the base config.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRun {
    name: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    total_timesteps: Option<u64>,
    #[serde(default)]
    mask_enabled: Option<bool>,
    #[serde(default)]
    curriculum_enabled: Option<bool>,
    #[serde(default)]
    hidden: Option<usize>,
    #[serde(default)]
    reward_mode: Option<RewardMode>,
    /// Evaluation radii in millimetres (one results row each).
    #[serde(default = "default_radii")]
    eval_radii_mm: Vec<f64>,
    #[serde(default = "default_eval_episodes")]
    eval_episodes: usize,
}

fn default_radii() -> Vec<f64> {
    vec![6.0]
}

fn default_eval_episodes() -> usize {
    200
}

fn ablate(config_path: PathBuf, grid_path: PathBuf) -> Result<()> {
    let base = ExperimentConfig::load(&config_path)?;
    let grid_text = std::fs::read_to_string(&grid_path)
        .with_context(|| format!("reading {}", grid_path.display()))?;
    let grid: GridFile = toml::from_str(&grid_text)?;
    if grid.runs.is_empty() {
        bail!("grid file has no [[runs]] entries");
    }
    let results_path = base.output_dir.join("results.csv");
    std::fs::create_dir_all(&base.output_dir)?;
    let mut failures = 0usize;

    for (i, run) in grid.runs.iter().enumerate() {
        let mut config = base.clone();
        config.output_dir = base.output_dir.join(&run.name);
        // derive a distinct seed per variant unless pinned
        config.seed = run.seed.unwrap_or(base.seed.wrapping_add(1000 * (i as u64 + 1)));
        if let Some(t) = run.total_timesteps {
            config.total_timesteps = t;
        }
        if let Some(m) = run.mask_enabled {
            config.mask_enabled = m;
        }
        if let Some(c) = run.curriculum_enabled {
            config.curriculum_enabled = c;
        }
        if let Some(h) = run.hidden {
            config.ppo.hidden = h;
        }
        if let Some(mode) = run.reward_mode {
            config.curriculum.reward_mode = mode;
        }

        eprintln!("[ablate] run {} ({}/{})", run.name, i + 1, grid.runs.len());
        let outcome = run_variant(&config, run);
        match outcome {
            Ok(rows) => {
                for row in rows {
                    append_results_csv(&results_path, &row)?;
                }
            }
            Err(err) => {
                eprintln!("[ablate] run {} failed: {err:#}", run.name);
                failures += 1;
                for &radius_mm in &run.eval_radii_mm {
                    append_results_csv(
                        &results_path,
                        &ResultsRow {
                            network_size: config.ppo.hidden,
                            max_timesteps: config.total_timesteps,
                            action_masking: config.mask_enabled,
                            curriculum_learning: config.curriculum_enabled,
                            dynamic_reward: config.curriculum.reward_mode == RewardMode::Dynamic,
                            early_reward: config.curriculum.reward_mode == RewardMode::Early,
                            button_radius_mm: radius_mm,
                            metrics: None,
                        },
                    )?;
                }
            }
        }
    }
    println!("results: {}", results_path.display());
    if failures > 0 {
        eprintln!("[ablate] {failures} run(s) failed");
    }
    Ok(())
}

fn run_variant(config: &ExperimentConfig, run: &GridRun) -> Result<Vec<ResultsRow>> {
    std::fs::create_dir_all(&config.output_dir)?;
    let _lock = RunLock::acquire(&config.output_dir)?;
    let mut trainer = Trainer::new(config.clone())?;
    std::fs::write(config.output_dir.join("config.toml"), config.to_toml())?;
    trainer.run()?;
    let mask = if config.mask_enabled {
        ActionMask::default()
    } else {
        ActionMask::all_enabled()
    };
    let mut rows = Vec::new();
    for &radius_mm in &run.eval_radii_mm {
        let metrics = evaluate(
            &trainer.params,
            &mask,
            &config.arm,
            &config.rollout,
            radius_mm / 1000.0,
            config.sampler.n_cells,
            run.eval_episodes,
            config.seed,
        )?;
        rows.push(ResultsRow {
            network_size: config.ppo.hidden,
            max_timesteps: config.total_timesteps,
            action_masking: config.mask_enabled,
            curriculum_learning: config.curriculum_enabled,
            dynamic_reward: config.curriculum.reward_mode == RewardMode::Dynamic,
            early_reward: config.curriculum.reward_mode == RewardMode::Early,
            button_radius_mm: radius_mm,
            metrics: Some(metrics),
        });
    }
    Ok(rows)
}
