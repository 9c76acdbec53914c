//! Practical meta-learning of a per-coordinate learning rate against tuned
//! Heavy Ball on a 2-dim quadratic.

use metagrad::analysis::heavy_ball;
use metagrad::drivers::{run_practical, PracticalOptions};
use metagrad::meta_learner::BetaSchedule;
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::UpdateRule;
use metagrad::Vector;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(2, 0)?;
    let x0 = p.default_start();

    let mut best_hb = f64::INFINITY;
    for step in [0.1, 0.3, 0.7] {
        for m in [0.0, 0.1, 0.5, 0.9] {
            if let Ok(t) = heavy_ball(&p, step, m, 100, &x0) {
                best_hb = best_hb.min(t.cumulative_loss());
            }
        }
    }

    // x_t = x_{t−1} − 0.1·w ⊙ ∇f(x_{t−1}), w adapted by meta-gradients.
    let rule = UpdateRule::elementwise_lr(2);
    let opts = PracticalOptions {
        nonneg_w: true,
        ..Default::default()
    };
    let rule = rule.with_scale(-0.1);
    let w1 = Vector::from_element(2, 1.0);
    let traj = run_practical(&p, &rule, BetaSchedule::constant(0.1), 100, &x0, &w1, opts)?;
    println!("best Heavy Ball cumulative loss: {best_hb:.4}");
    println!("meta-learned rates cumulative loss: {:.4}", traj.cumulative_loss());
    println!("learned w: {:?}", traj.w_final.as_slice());
    Ok(())
}
