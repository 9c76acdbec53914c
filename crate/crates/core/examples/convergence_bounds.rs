//! The O(1/T) and O(1/T²) guarantees checked on concrete runs.

use metagrad::analysis::{calibrate_lambda_tilde, check_bound_mg, check_bound_omg, Constant};
use metagrad::drivers::{run_convex, run_optimistic, ConvexOptions, WeightSchedule};
use metagrad::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use metagrad::optimism_bmg::HintPolicy;
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::UpdateRule;
use metagrad::Vector;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(2, 0)?;
    let (n, l) = (2, p.smoothness());
    let x0 = p.default_start();
    // Large enough that the distance from x0 to the minimiser fits the diameter.
    let set = ConstraintSet::ball(Vector::zeros(n), x0.norm().max(x0.norm_squared() / 2.0));
    let rule = UpdateRule::direct(n);
    let opts = ConvexOptions::default();

    let meta = MetaLearnerState::with_center(set.clone(), BetaSchedule::constant(1.0 / l), x0.clone())?;
    let traj = run_convex(&p, &rule, WeightSchedule::ConstantOne, meta, 100, &x0, &x0, &opts)?;
    let r = check_bound_mg(&traj, &rule, Constant::configured(1.0), l, &set);
    println!("plain:      {:?}, gap {:.3e} ≤ {:.3e}", r.status, r.gap, r.bound);

    let cal = calibrate_lambda_tilde(
        |lt| {
            let meta = MetaLearnerState::with_center(set.clone(), BetaSchedule::accelerated(lt, l), x0.clone())?;
            run_optimistic(
                &p,
                &rule,
                WeightSchedule::Linear,
                meta,
                &mut HintPolicy::PrevMetaGrad,
                100,
                &x0,
                &x0,
                &opts,
            )
        },
        1.0,
        10,
    )?;
    let r = check_bound_omg(&cal.trajectory, &rule, Constant::estimated(cal.lambda_tilde), l, &set)?;
    println!(
        "optimistic: {:?}, gap {:.3e} ≤ {:.3e} with λ̃ = {:.3}",
        r.status, r.gap, r.bound, cal.lambda_tilde
    );
    Ok(())
}
