//! Optimistic meta-learning with gradient hints and the accelerated schedule
//! against plain meta-learning: O(1/T²) against O(1/T).

use metagrad::analysis::reduction::NESTEROV_GRID;
use metagrad::analysis::{certify_nesterov_reduction, fit_rate, sample_curve};
use metagrad::drivers::{run_convex, ConvexOptions, WeightSchedule};
use metagrad::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::UpdateRule;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(10, 1)?;
    let x0 = p.default_start();
    let ts: Vec<f64> = NESTEROV_GRID.iter().map(|&t| t as f64).collect();

    let (cert, fast) = certify_nesterov_reduction(&p, 1.0, &NESTEROV_GRID, &x0, &x0)?;
    let meta = MetaLearnerState::with_center(
        ConstraintSet::unconstrained(10),
        BetaSchedule::constant(1.0 / p.smoothness()),
        x0.clone(),
    )?;
    let slow = run_convex(
        &p,
        &UpdateRule::direct(10),
        WeightSchedule::ConstantOne,
        meta,
        400,
        &x0,
        &x0,
        &ConvexOptions::default(),
    )?;

    println!("recursion residual {:.2e}", cert.max_residual);
    for (name, traj) in [("plain", &slow), ("optimistic", &fast)] {
        let fit = fit_rate(&ts, &sample_curve(&traj.gaps(), &NESTEROV_GRID)?)?;
        println!(
            "{name:>10}: gap at T=400 {:.3e}, fitted exponent {:.2}",
            traj.final_gap(),
            fit.exponent
        );
    }
    Ok(())
}
