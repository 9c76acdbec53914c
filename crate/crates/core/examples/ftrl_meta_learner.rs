//! The meta-learner on its own: FTRL and optimistic FTRL against a fixed
//! sequence of linear losses, with a regret ledger.

use metagrad::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState, RegretLedger};
use metagrad::Vector;

fn main() -> metagrad::Result<()> {
    let losses: Vec<Vector> = (0..50)
        .map(|t| Vector::from_vec(vec![1.0 + (t as f64 * 0.3).sin(), -0.5]))
        .collect();
    let comparator = Vector::from_vec(vec![-1.0, 1.0]);
    for optimistic in [false, true] {
        let set = ConstraintSet::ball(Vector::zeros(2), 1.5);
        let mut learner = MetaLearnerState::new(set, BetaSchedule::constant(0.1))?;
        let mut ledger = RegretLedger::new(&comparator);
        let mut w = learner.initial_point();
        for (t, g) in losses.iter().enumerate() {
            ledger.update(g, &w, 1.0);
            w = if optimistic {
                // Predict the next loss by the current one.
                learner.aoftrl_step(g, g, 1.0, 1.0)?
            } else {
                learner.ftrl_step(g, 1.0)?
            };
            if t == losses.len() - 1 {
                println!("optimistic = {optimistic}: final w {:?}", w.as_slice());
            }
        }
        println!(
            "  regret against {:?} after {} steps: {:.4}",
            comparator.as_slice(),
            ledger.steps,
            ledger.value
        );
    }
    Ok(())
}
