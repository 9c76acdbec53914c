//! The certificate bundle behind `metagrad verify`, on a reduced config.

use metagrad::bench::{run_verify, ExperimentConfig};

fn main() -> metagrad::Result<()> {
    let mut cfg = ExperimentConfig::convex_quadratic();
    cfg.verify.dims = vec![2];
    cfg.verify.seeds = vec![0, 1];
    let bundle = run_verify(&cfg)?;
    print!("{}", bundle.table());
    println!("passed: {}", bundle.passed);
    Ok(())
}
