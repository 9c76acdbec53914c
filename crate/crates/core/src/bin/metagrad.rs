//! Command-line front end: sweeps, figure tables and certificate runs.
//!
//! Exit codes: 0 on success, 1 when a gating certificate fails, 2 for usage,
//! configuration or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metagrad::bench::{
    emit_figure_data, run_reduce, run_sweep, run_verify, ExperimentConfig, SweepSummary, VerifyBundle,
};
use metagrad::Error;

#[derive(Parser, Debug)]
#[command(
    name = "metagrad",
    version,
    about = "Meta-gradient optimisation experiments and certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; the built-in convex-quadratic config otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured seed lists.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for sweeps (0: one per core).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Use the complete hyperparameter grids instead of the trimmed ones.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the hyperparameter sweep; writes trajectories/ and summary.json.
    Sweep,
    /// Rebuild the figure tables from OUT/summary.json without rerunning.
    FigureData,
    /// Run every certificate; writes verify.json.
    Verify,
    /// Run the Heavy Ball and Nesterov reduction certificates; writes reduce.json.
    Reduce,
}

fn load(cli: &Cli) -> metagrad::Result<ExperimentConfig> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::convex_quadratic(),
    };
    let cfg = match cli.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_bundle(bundle: &VerifyBundle, out: &Path, file: &str) -> metagrad::Result<bool> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(file), bundle.to_json()?)?;
    print!("{}", bundle.table());
    println!(
        "{}",
        if bundle.passed {
            "all certificates passed"
        } else {
            "certificate failure"
        }
    );
    Ok(bundle.passed)
}

fn run(cli: &Cli) -> metagrad::Result<bool> {
    match cli.command {
        Command::Sweep => {
            let cfg = load(cli)?;
            std::fs::create_dir_all(&cli.out)?;
            let summary = run_sweep(&cfg, cli.full, cli.workers, Some(&cli.out))?;
            println!("{} runs, sweep {}", summary.records.len(), summary.sweep_hash);
            for b in &summary.best {
                println!(
                    "{:<16} seed {:<3} cumulative loss {:.6e}  final gap {}",
                    b.algorithm,
                    b.seed,
                    b.cumulative_loss,
                    b.final_gap.map_or("-".into(), |g| format!("{g:.3e}"))
                );
            }
            Ok(true)
        }
        Command::FigureData => {
            let path = cli.out.join("summary.json");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}; run `sweep` first", path.display())))?;
            let summary = SweepSummary::from_json(&text)?;
            for p in emit_figure_data(&summary, &cli.out, &cli.out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Verify => write_bundle(&run_verify(&load(cli)?)?, &cli.out, "verify.json"),
        Command::Reduce => write_bundle(&run_reduce(&load(cli)?)?, &cli.out, "reduce.json"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
