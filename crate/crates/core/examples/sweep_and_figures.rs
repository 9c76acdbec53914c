//! A small sweep written to a temporary directory, then the figure tables.

use metagrad::bench::{emit_figure_data, run_sweep, ExperimentConfig};

fn main() -> metagrad::Result<()> {
    let mut cfg = ExperimentConfig::convex_quadratic();
    cfg.seeds = vec![0, 1];
    let out = std::env::temp_dir().join("metagrad-sweep-example");
    std::fs::create_dir_all(&out)?;
    let summary = run_sweep(&cfg, false, 0, Some(&out))?;
    println!("{} runs in {}", summary.records.len(), out.display());
    for b in &summary.best {
        println!(
            "{:>14} seed {}: {:.4} at {:?}",
            b.algorithm, b.seed, b.cumulative_loss, b.hyper
        );
    }
    for path in emit_figure_data(&summary, &out, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
