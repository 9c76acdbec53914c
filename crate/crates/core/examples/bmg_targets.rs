//! Bootstrapped meta-gradients: targets built from tangents reproduce the
//! optimistic recursion with the hints those tangents induce.

use metagrad::drivers::WeightSchedule;
use metagrad::meta_learner::BetaSchedule;
use metagrad::optimism_bmg::{isomorphism_check, DistanceGenerator};
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::UpdateRule;
use metagrad::Vector;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(5, 3)?;
    let l = p.smoothness();
    let rule = UpdateRule::elementwise_lr(5).with_scale(-1.0);
    let x0 = Vector::from_element(5, 0.5);
    let w1 = Vector::from_element(5, 0.25 / l);
    let schedule = BetaSchedule::constant(0.01 / (l * l));
    for (name, dgf) in [
        ("½‖·‖²", DistanceGenerator::HalfSquaredEuclidean),
        ("f", DistanceGenerator::from_problem(&p)?),
    ] {
        let r = isomorphism_check(&p, &rule, &dgf, WeightSchedule::Linear, schedule, 7, 0.05, 50, &x0, &w1)?;
        println!(
            "μ = {name}: w gap {:.1e}, x gap {:.1e}, hint round trip {:.1e}",
            r.max_w_gap, r.max_x_gap, r.round_trip_error
        );
    }
    Ok(())
}
