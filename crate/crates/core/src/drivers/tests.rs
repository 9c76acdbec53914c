use super::*;
use crate::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use crate::optimism_bmg::{GradientStepTarget, HintPolicy, IdentityTarget};
use crate::problems::QuadraticProblem;
use crate::Matrix;

fn diag14() -> QuadraticProblem {
    QuadraticProblem::with_rotation(&Matrix::identity(2, 2)).unwrap()
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn unconstrained(m: usize, beta: BetaSchedule, center: &Vector) -> MetaLearnerState {
    MetaLearnerState::with_center(ConstraintSet::unconstrained(m), beta, center.clone()).unwrap()
}

#[test]
fn weight_schedules() {
    let l = WeightSchedule::Linear;
    assert_eq!((l.alpha(4), l.prefix(4), l.rho(4)), (4.0, 10.0, 0.4));
    assert_eq!(l.rho(1), 1.0);
    let c = WeightSchedule::ConstantOne;
    assert_eq!((c.alpha(7), c.prefix(7), c.rho(1)), (1.0, 7.0, 1.0));
    for t in 1..50 {
        for w in [l, c] {
            assert!((w.rho(t) - w.alpha(t) / w.prefix(t)).abs() < 1e-15);
            assert!((w.prefix(t) - w.prefix(t - 1) - w.alpha(t)).abs() < 1e-12);
        }
    }
}

#[test]
fn plain_gradient_rule_is_gradient_descent_on_the_average() {
    let p = diag14();
    let eta = 1.0 / p.smoothness();
    let rule = UpdateRule::plain_gradient(2, eta).residual();
    let x0 = v(&[4.0, 4.0]);
    let w1 = Vector::zeros(2);
    let traj = run_convex(
        &p,
        &rule,
        WeightSchedule::ConstantOne,
        unconstrained(2, BetaSchedule::constant(0.1), &w1),
        60,
        &x0,
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    // Reference: x_t = x̄_{t−1} − η∇f(x̄_{t−1}), x̄_t = ((t−1)x̄_{t−1} + x_t)/t.
    let mut xbar = x0.clone();
    for t in 1..=60 {
        let x = &xbar - p.grad(&xbar).unwrap() * eta;
        xbar = (&xbar * (t as f64 - 1.0) + &x) / t as f64;
        let r = traj.record(t);
        assert!((&r.x - &x).amax() < 1e-12, "t={t}");
        assert!((&r.xbar - &xbar).amax() < 1e-12, "t={t}");
    }
    for t in 5..60 {
        assert!(traj.record(t + 1).f_xbar <= traj.record(t).f_xbar);
    }
}

#[test]
fn first_step_of_direct_rule() {
    let p = diag14();
    let w1 = v(&[1.5, -0.5]);
    let traj = run_convex(
        &p,
        &UpdateRule::direct(2),
        WeightSchedule::Linear,
        unconstrained(2, BetaSchedule::constant(0.1), &w1),
        1,
        &v(&[4.0, 4.0]),
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.record(1).x, w1);
    assert_eq!(traj.record(1).xbar, w1);
}

#[test]
fn direct_rule_follows_three_term_recursion() {
    let p = diag14();
    let beta = 1.0 / (2.0 * p.smoothness());
    let x0 = v(&[4.0, 4.0]);
    let w1 = v(&[3.0, -2.0]);
    let traj = run_convex(
        &p,
        &UpdateRule::direct(2),
        WeightSchedule::Linear,
        unconstrained(2, BetaSchedule::constant(beta), &w1),
        12,
        &x0,
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    for t in 2..=12 {
        let tf = t as f64;
        let rho_tilde = (tf - 2.0) / (tf + 1.0);
        let beta_tilde = 2.0 * (tf - 1.0) * beta / (tf + 1.0);
        let pred =
            traj.xbar(t - 1) + (traj.xbar(t - 1) - traj.xbar(t - 2)) * rho_tilde - traj.grad_at(t - 1) * beta_tilde;
        assert!((traj.xbar(t) - pred).norm() < 1e-12, "t={t}");
    }
    assert_eq!((3.0 - 2.0) / (3.0 + 1.0), 0.25);
}

#[test]
fn averaging_identity_and_online_to_batch_direction() {
    let p = QuadraticProblem::generate(5, 3).unwrap();
    for weights in [WeightSchedule::ConstantOne, WeightSchedule::Linear] {
        let w1 = Vector::from_element(5, 0.01);
        let traj = run_optimistic(
            &p,
            &UpdateRule::elementwise_lr(5),
            weights,
            unconstrained(5, BetaSchedule::constant(1e-7), &w1),
            &mut HintPolicy::PrevMetaGrad,
            40,
            &p.default_start(),
            &w1,
            &ConvexOptions::default(),
        )
        .unwrap();
        let mut num = Vector::zeros(5);
        for t in 1..=traj.len() {
            let r = traj.record(t);
            num += &r.x * r.alpha;
            let avg = &num / weights.prefix(t);
            assert!((&r.xbar - avg).amax() <= 1e-12 * r.xbar.amax().max(1.0), "t={t}");
            let prev = traj.xbar(t - 1);
            assert!((&r.xbar - (prev * (1.0 - r.rho) + &r.x * r.rho)).amax() <= 1e-12 * r.xbar.amax().max(1.0));
            assert!(r.regret_x / weights.prefix(t) >= traj.gap(t) - 1e-9);
        }
    }
}

#[test]
fn zero_hints_reproduce_the_convex_driver() {
    let p = QuadraticProblem::generate(4, 9).unwrap();
    let w1 = Vector::from_element(4, 0.5);
    let meta = || {
        MetaLearnerState::with_center(
            ConstraintSet::ball(Vector::zeros(4), 3.0),
            BetaSchedule::accelerated(1.0, p.smoothness()),
            w1.clone(),
        )
        .unwrap()
    };
    let opts = ConvexOptions::default();
    let rule = UpdateRule::direct(4);
    let a = run_convex(
        &p,
        &rule,
        WeightSchedule::Linear,
        meta(),
        50,
        &p.default_start(),
        &w1,
        &opts,
    )
    .unwrap();
    let b = run_optimistic(
        &p,
        &rule,
        WeightSchedule::Linear,
        meta(),
        &mut HintPolicy::Zero,
        50,
        &p.default_start(),
        &w1,
        &opts,
    )
    .unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.x, rb.x);
        assert_eq!(ra.xbar, rb.xbar);
        assert_eq!(ra.w, rb.w);
        assert_eq!(ra.regret_w, rb.regret_w);
    }
    assert_eq!(a.w_final, b.w_final);
}

#[test]
fn optimism_helps_the_elementwise_rule() {
    // Same seed, same initial w; the optimistic run uses the accelerated schedule.
    let p = QuadraticProblem::generate(2, 1).unwrap();
    let l = p.smoothness();
    let rule = UpdateRule::elementwise_lr(2);
    let w1 = Vector::from_element(2, 0.5 / l);
    let x0 = p.default_start();
    let plain = run_convex(
        &p,
        &rule,
        WeightSchedule::ConstantOne,
        unconstrained(2, BetaSchedule::constant(1.0 / (l * l * l)), &w1),
        200,
        &x0,
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    let opt = run_optimistic(
        &p,
        &rule,
        WeightSchedule::Linear,
        unconstrained(2, BetaSchedule::accelerated(l * l, l), &w1),
        &mut HintPolicy::PrevMetaGrad,
        200,
        &x0,
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    assert!(
        opt.final_gap() < plain.final_gap(),
        "{} vs {}",
        opt.final_gap(),
        plain.final_gap()
    );
}

#[test]
fn chain_rule_flag_scales_meta_gradients() {
    let p = diag14();
    let w1 = v(&[1.0, 1.0]);
    let mk = |chain| {
        run_convex(
            &p,
            &UpdateRule::direct(2),
            WeightSchedule::Linear,
            unconstrained(2, BetaSchedule::constant(0.01), &w1),
            1,
            &v(&[4.0, 4.0]),
            &w1,
            &ConvexOptions {
                chain_rule_rho: chain,
                comparator: None,
            },
        )
        .unwrap()
    };
    let (a, b) = (mk(false), mk(true));
    assert_eq!(a.record(1).meta_grad, b.record(1).meta_grad); // ρ₁ = 1
    let (a, b) = (
        run_convex(
            &p,
            &UpdateRule::direct(2),
            WeightSchedule::Linear,
            unconstrained(2, BetaSchedule::constant(0.01), &w1),
            3,
            &v(&[4.0, 4.0]),
            &w1,
            &ConvexOptions::default(),
        )
        .unwrap(),
        run_convex(
            &p,
            &UpdateRule::direct(2),
            WeightSchedule::Linear,
            unconstrained(2, BetaSchedule::constant(0.01), &w1),
            3,
            &v(&[4.0, 4.0]),
            &w1,
            &ConvexOptions {
                chain_rule_rho: true,
                comparator: None,
            },
        )
        .unwrap(),
    );
    assert_eq!(a.record(2).x, b.record(2).x);
    assert!((&b.record(2).meta_grad - &a.record(2).meta_grad * (2.0 / 3.0)).amax() < 1e-15);
}

#[test]
fn divergence_is_reported_with_its_step() {
    let p = diag14();
    let w1 = v(&[1.0, 1.0]);
    let err = run_convex(
        &p,
        &UpdateRule::direct(2),
        WeightSchedule::ConstantOne,
        unconstrained(2, BetaSchedule::constant(100.0), &w1),
        500,
        &v(&[4.0, 4.0]),
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn rejects_mismatched_setup() {
    let p = diag14();
    let w1 = v(&[1.0, 1.0]);
    let meta = unconstrained(2, BetaSchedule::constant(0.1), &w1);
    let bad = run_convex(
        &p,
        &UpdateRule::direct(3),
        WeightSchedule::Linear,
        meta.clone(),
        5,
        &v(&[1.0, 1.0]),
        &w1,
        &ConvexOptions::default(),
    );
    assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    let bad = run_convex(
        &p,
        &UpdateRule::direct(2),
        WeightSchedule::Linear,
        meta,
        0,
        &v(&[1.0, 1.0]),
        &w1,
        &ConvexOptions::default(),
    );
    assert!(bad.is_err());
}

#[test]
fn practical_dead_fixed_point_at_zero() {
    let p = diag14();
    let x0 = v(&[4.0, 4.0]);
    let traj = run_practical(
        &p,
        &UpdateRule::elementwise_lr(2),
        BetaSchedule::constant(0.01),
        10,
        &x0,
        &Vector::zeros(2),
        PracticalOptions {
            nonneg_w: true,
            ..Default::default()
        },
    )
    .unwrap();
    let g0 = p.grad(&x0).unwrap();
    assert_eq!(traj.record(1).meta_grad, g0.component_mul(&g0));
    for r in &traj.records {
        assert_eq!(r.x, x0);
        assert_eq!(r.w, Vector::zeros(2));
    }
    assert_eq!(traj.w_final, Vector::zeros(2));
}

#[test]
fn practical_plain_gradient_is_gradient_descent() {
    let p = diag14();
    let mut x = v(&[4.0, 4.0]);
    let traj = run_practical(
        &p,
        &UpdateRule::plain_gradient(2, 0.1),
        BetaSchedule::constant(0.5),
        50,
        &x,
        &v(&[7.0, 7.0]),
        PracticalOptions::default(),
    )
    .unwrap();
    for r in &traj.records {
        x = &x - p.grad(&x).unwrap() * 0.1;
        assert!((&r.x - &x).amax() < 1e-12);
        assert_eq!(r.w, v(&[7.0, 7.0]));
    }
}

#[test]
fn practical_updates_match_the_elementwise_closed_forms() {
    let p = QuadraticProblem::generate(3, 4).unwrap();
    let x0 = Vector::from_element(3, 1e-3);
    let w1 = Vector::from_element(3, 0.01);
    let beta = 1e-4;
    let rule = UpdateRule::elementwise_lr(3).with_scale(-1.0);
    for (optimistic, form) in [
        (false, OptimisticForm::AsPrinted),
        (true, OptimisticForm::AsPrinted),
        (true, OptimisticForm::BetaScaled),
    ] {
        let traj = run_practical(
            &p,
            &rule,
            BetaSchedule::constant(beta),
            5,
            &x0,
            &w1,
            PracticalOptions {
                optimistic,
                nonneg_w: false,
                form,
            },
        )
        .unwrap();
        let mut x_prev = x0.clone();
        for r in &traj.records {
            let gp = p.grad(&x_prev).unwrap();
            let x = &x_prev - r.w.component_mul(&gp);
            assert!((&r.x - &x).amax() < 1e-12);
            let g = p.grad(&x).unwrap();
            // φ = −w ⊙ ∇f, so every Jacobian product carries a minus sign.
            let expect = if !optimistic {
                &r.w + gp.component_mul(&g) * beta
            } else {
                let bmg = -g.component_mul(&(&g + &gp));
                let corr = -gp.component_mul(&gp);
                match form {
                    OptimisticForm::AsPrinted => &r.w - bmg * beta - corr,
                    OptimisticForm::BetaScaled => &r.w - (bmg - corr) * beta,
                }
            };
            let next = if r.t < traj.len() {
                traj.record(r.t + 1).w.clone()
            } else {
                traj.w_final.clone()
            };
            assert!((next - expect).amax() < 1e-12);
            x_prev = x;
        }
    }
}

#[test]
fn residual_rules_are_rejected_by_additive_drivers() {
    let p = diag14();
    let r = run_practical(
        &p,
        &UpdateRule::plain_gradient(2, 0.1).residual(),
        BetaSchedule::constant(0.1),
        3,
        &v(&[1.0, 1.0]),
        &v(&[0.0, 0.0]),
        PracticalOptions::default(),
    );
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn bmg_with_identity_target_freezes_w() {
    let p = diag14();
    let w1 = v(&[-0.05, -0.05]);
    let traj = run_bmg(
        &p,
        &UpdateRule::direct(2),
        &mut IdentityTarget,
        &DistanceGenerator::HalfSquaredEuclidean,
        BetaSchedule::constant(0.3),
        20,
        &v(&[4.0, 4.0]),
        &w1,
    )
    .unwrap();
    assert!(traj.records.iter().all(|r| r.w == w1));
    assert!(traj.records.iter().all(|r| r.target.as_ref() == Some(&r.x)));
}

#[test]
fn bmg_with_euclidean_target_subtracts_the_tangent() {
    let p = QuadraticProblem::generate(3, 2).unwrap();
    let rule = UpdateRule::elementwise_lr(3).with_scale(-1.0);
    let eta = 0.05;
    let beta = 1e-3;
    let x0 = p.default_start();
    let w1 = Vector::from_element(3, 0.001);
    let traj = run_bmg(
        &p,
        &rule,
        &mut GradientStepTarget { step: eta },
        &DistanceGenerator::HalfSquaredEuclidean,
        BetaSchedule::constant(beta),
        10,
        &x0,
        &w1,
    )
    .unwrap();
    let mut x_prev = x0.clone();
    for r in &traj.records {
        let y = &r.grad * eta;
        let expect = &r.w - rule.jtvp(&p, &x_prev, &r.w, &y).unwrap() * beta;
        let next = if r.t < traj.len() {
            traj.record(r.t + 1).w.clone()
        } else {
            traj.w_final.clone()
        };
        assert!((next - expect).amax() < 1e-15);
        assert!((r.target.as_ref().unwrap() - (&r.x - &y)).amax() < 1e-15);
        x_prev = r.x.clone();
    }
}

#[test]
fn csv_has_documented_header_and_round_trips() {
    let p = diag14();
    let w1 = v(&[1.0, 1.0]);
    let traj = run_optimistic(
        &p,
        &UpdateRule::direct(2),
        WeightSchedule::Linear,
        unconstrained(2, BetaSchedule::accelerated(1.0, 8.0), &w1),
        &mut HintPolicy::PrevGradient,
        7,
        &v(&[4.0, 4.0]),
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    let text = traj.to_csv_string();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 8);
    let rows = read_csv(&text).unwrap();
    for (row, rec) in rows.iter().zip(&traj.records) {
        assert_eq!(row.t, rec.t);
        assert_eq!(row.f_xbar, rec.f_xbar);
        assert_eq!(row.regret_w, rec.regret_w);
        assert_eq!(row.hint_norm, rec.hint.as_ref().unwrap().norm());
        assert!(row.target_dist.is_nan());
    }
    assert_eq!(text, traj.to_csv_string());
    assert!(read_csv("t,x\n").is_err());
}
