//! Update rules, their Jacobian-transpose products and the constant λ.

use metagrad::meta_learner::ConstraintSet;
use metagrad::problems::QuadraticProblem;
use metagrad::update_rules::{estimate_lambda, finite_difference_jtvp, RuleKind, UpdateRule};
use metagrad::Vector;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(3, 1)?;
    let x = Vector::from_vec(vec![1.0, -2.0, 0.5]);
    let w = Vector::from_element(3, 0.8);
    let v = Vector::from_vec(vec![0.3, 0.1, -0.4]);
    for kind in [
        RuleKind::Direct,
        RuleKind::ElementwiseLr,
        RuleKind::AdagradStyle,
        RuleKind::PlainGradient,
    ] {
        let rule = UpdateRule::new(kind, 3);
        let exact = rule.jtvp(&p, &x, &w, &v)?;
        let fd = finite_difference_jtvp(&rule, &p, &x, &w, &v, 1e-5)?;
        println!(
            "{kind:?}: φ = {:?}, |jtvp − fd| = {:.1e}, affine in w: {}",
            rule.apply(&p, &x, &w)?.as_slice(),
            (exact - fd).amax(),
            rule.affine_in_w()
        );
    }
    let region = ConstraintSet::ball(Vector::zeros(3), 2.0);
    let lambda = estimate_lambda(&UpdateRule::elementwise_lr(3), &p, 500, &region, 4.0, 0)?;
    println!("λ estimate for the element-wise rule on this problem: {lambda:.3}");
    Ok(())
}
