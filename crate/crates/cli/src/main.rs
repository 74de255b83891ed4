//! `das`: experiment runner for DAS capacity and port-placement studies.

mod config;
mod experiments;
mod output;
mod recipes;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use config::ExperimentConfig;
use experiments::{run_point, PointOutput};

const RESULT_HEADER: &[&str] = &[
    "experiment", "seed", "point", "alpha", "gamma", "radius", "n_ports", "csi", "target_rate", "restart", "port",
    "metric", "value", "std_error", "units",
];
const TRAJECTORY_HEADER: &[&str] = &["point", "restart", "iteration", "port", "x", "y", "power"];

#[derive(Parser)]
#[command(name = "das", version, about = "Distributed antenna system capacity and placement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace the seed of the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file, a manifest from an earlier run, or a recipe.
    Run { config: String },
    /// Check a configuration without running it.
    Validate { config: String },
    /// List the built-in recipes.
    ListRecipes,
    /// Print the configuration of a built-in recipe.
    ShowRecipe { name: String },
}

/// Loads a TOML config, the `config` member of a JSON manifest, or a
/// built-in recipe, in that order.
fn load(source: &str) -> Result<ExperimentConfig> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let cfg = manifest.get("config").ok_or_else(|| anyhow!("{}: manifest has no `config`", path.display()))?;
            return serde_json::from_value(cfg.clone()).with_context(|| format!("parsing {}", path.display()));
        }
        return ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()));
    }
    match recipes::find(source) {
        Some(r) => ExperimentConfig::from_toml(r.toml).with_context(|| format!("parsing recipe {source}")),
        None => bail!("`{source}` is neither a config file nor a recipe (see `das list-recipes`)"),
    }
}

fn run(cli: &Cli, source: &str) -> Result<()> {
    let mut cfg = load(source)?;
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    cfg.validate().context("invalid configuration")?;
    let points = cfg.sweep_points();
    log::info!("{} sweep point(s)", points.len());
    let start = Instant::now();
    let outputs: Vec<PointOutput> = points
        .par_iter()
        .map(|p| run_point(&cfg, p).with_context(|| p.describe()))
        .collect::<Result<_>>()?;
    let wall = start.elapsed().as_secs_f64();

    let rows: Vec<_> = outputs.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let traj: Vec<_> = outputs.iter().flat_map(|o| o.trajectory.iter().cloned()).collect();
    let dir = &cli.output_dir;
    let mut files = vec![(dir.join(&cfg.output.results), output::to_csv(&rows, RESULT_HEADER)?)];
    let has_trajectory = !traj.is_empty();
    if has_trajectory {
        files.push((dir.join(&cfg.output.trajectory), output::to_csv(&traj, TRAJECTORY_HEADER)?));
    }
    let manifest = serde_json::json!({
        "tool": "das",
        "version": env!("CARGO_PKG_VERSION"),
        "source": source,
        "config": cfg,
        "sweep_points": points.len(),
        "result_rows": rows.len(),
        "outputs": {
            "results": cfg.output.results,
            "trajectory": if has_trajectory { Some(&cfg.output.trajectory) } else { None },
        },
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    files.push((dir.join(&cfg.output.manifest), bytes));
    output::write_all(&files)?;
    for (p, _) in &files {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Validate { config } => load(config).and_then(|mut cfg| {
            if let Some(seed) = cli.seed_override {
                cfg.seed = seed;
            }
            cfg.validate().context("invalid configuration")?;
            println!("ok: {} sweep point(s)", cfg.sweep_points().len());
            Ok(())
        }),
        Command::ListRecipes => {
            for r in recipes::RECIPES {
                println!("{:<24} {}", r.name, r.summary);
            }
            Ok(())
        }
        Command::ShowRecipe { name } => match recipes::find(name) {
            Some(r) => {
                print!("{}", r.toml);
                Ok(())
            }
            None => Err(anyhow!("unknown recipe `{name}`")),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
