use super::*;
use crate::drivers::{run_bmg, run_convex, run_optimistic, ConvexOptions};
use crate::meta_learner::{ConstraintSet, MetaLearnerState};
use rand::Rng;

fn diag14() -> QuadraticProblem {
    QuadraticProblem::with_rotation(&Matrix::identity(2, 2)).unwrap()
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn free_meta(m: usize, beta: BetaSchedule, center: &Vector) -> MetaLearnerState {
    MetaLearnerState::with_center(ConstraintSet::unconstrained(m), beta, center.clone()).unwrap()
}

fn dgfs(p: &QuadraticProblem) -> [DistanceGenerator; 2] {
    [
        DistanceGenerator::HalfSquaredEuclidean,
        DistanceGenerator::from_problem(p).unwrap(),
    ]
}

#[test]
fn bregman_examples() {
    let e = DistanceGenerator::HalfSquaredEuclidean;
    assert_eq!(e.bregman(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 12.5);
    let p = diag14();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in dgfs(&p) {
        for _ in 0..50 {
            let (z, x) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
            let b = d.bregman(&z, &x).unwrap();
            assert!(b >= 0.0);
            assert_eq!(d.bregman(&z, &z).unwrap(), 0.0);
            let direct = d.mu(&x).unwrap() - d.mu(&z).unwrap() - d.grad(&z).unwrap().dot(&(&x - &z));
            assert!((b - direct).abs() <= 1e-12 * b.max(1.0));
        }
    }
}

#[test]
fn gradient_inverse_examples_and_round_trip() {
    let y = v(&[2.0, 8.0]);
    assert_eq!(DistanceGenerator::HalfSquaredEuclidean.grad_inverse(&y).unwrap(), y);
    let q = DistanceGenerator::quadratic_form(Matrix::from_diagonal(&v(&[1.0, 4.0]))).unwrap();
    assert!((q.grad_inverse(&y).unwrap() - v(&[1.0, 1.0])).amax() < 1e-15);

    let p = QuadraticProblem::generate(6, 2).unwrap();
    let d = DistanceGenerator::from_problem(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let x = random_vec(&mut rng, 6);
        assert!((d.grad_inverse(&d.grad(&x).unwrap()).unwrap() - &x).amax() < 1e-10);
    }
}

#[test]
fn quadratic_form_rejects_bad_matrices() {
    assert!(DistanceGenerator::quadratic_form(Matrix::zeros(2, 3)).is_err());
    assert!(matches!(
        DistanceGenerator::quadratic_form(Matrix::from_diagonal(&v(&[1.0, -1.0]))),
        Err(Error::Singular)
    ));
    let d = DistanceGenerator::from_problem(&diag14()).unwrap();
    assert!(d.grad(&v(&[1.0, 2.0, 3.0])).is_err());
}

#[test]
fn prev_metagrad_hint_is_the_recorded_meta_gradient() {
    let p = diag14();
    let w1 = v(&[0.05, 0.05]);
    for rule in [UpdateRule::direct(2), UpdateRule::elementwise_lr(2)] {
        let traj = run_optimistic(
            &p,
            &rule,
            WeightSchedule::Linear,
            free_meta(2, BetaSchedule::constant(1e-6), &w1),
            &mut HintPolicy::PrevMetaGrad,
            30,
            &v(&[4.0, 4.0]),
            &w1,
            &ConvexOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.record(1).hint, Some(Vector::zeros(2)));
        for r in &traj.records {
            assert_eq!(r.next_hint.as_ref(), Some(&r.meta_grad));
            if rule.kind == crate::update_rules::RuleKind::Direct {
                assert_eq!(r.next_hint.as_ref(), Some(&r.grad));
            }
        }
    }
}

#[test]
fn prev_gradient_needs_matching_dimensions() {
    let p = diag14();
    let rule = UpdateRule::direct(2);
    let z = Vector::zeros(2);
    let g3 = Vector::zeros(3);
    let ctx = HintContext {
        t: 1,
        objective: &p,
        rule: &UpdateRule { meta_dim: 3, ..rule },
        weights: WeightSchedule::ConstantOne,
        xbar_prev: &z,
        xbar: &z,
        w: &g3,
        grad: &z,
        grad_prev: &z,
        meta_grad: &g3,
        hint: &g3,
    };
    assert!(HintPolicy::PrevGradient.next_hint(&ctx).is_err());
    assert_eq!(HintPolicy::Zero.next_hint(&ctx).unwrap(), g3);
}

#[test]
fn hints_replay_from_truncated_runs() {
    let p = QuadraticProblem::generate(3, 6).unwrap();
    let w1 = Vector::from_element(3, 0.01);
    let rule = UpdateRule::elementwise_lr(3);
    let run = |policy: HintPolicy, horizon: usize| {
        run_optimistic(
            &p,
            &rule,
            WeightSchedule::Linear,
            free_meta(3, BetaSchedule::constant(1e-5), &w1),
            &mut { policy },
            horizon,
            &p.default_start(),
            &w1,
            &ConvexOptions::default(),
        )
        .unwrap()
    };
    for policy in [HintPolicy::Zero, HintPolicy::PrevGradient, HintPolicy::PrevMetaGrad] {
        let full = run(policy, 25);
        for t in [1, 7, 25] {
            let short = run(policy, t);
            assert_eq!(short.record(t).next_hint, full.record(t).next_hint);
            let next = if t < 25 { &full.record(t + 1).w } else { &full.w_final };
            assert_eq!(&short.w_final, next);
        }
    }
}

#[test]
fn target_constructors_pin_their_signs() {
    let x = v(&[1.0, 2.0]);
    let y = v(&[0.5, -1.0]);
    let m = BmgTarget::minus(&x, y.clone());
    assert_eq!((m.z.clone(), m.sign), (v(&[0.5, 3.0]), TargetSign::Minus));
    let p = BmgTarget::plus(&x, y.clone());
    assert_eq!((p.z.clone(), p.sign), (v(&[1.5, 1.0]), TargetSign::Plus));
    let a = BmgTarget::at(&x, m.z.clone());
    assert_eq!(a.tangent, y);
}

#[test]
fn tangent_target_steps_ahead_then_descends() {
    let p = diag14();
    let rule = UpdateRule::direct(2);
    let (xp, x, w) = (v(&[4.0, 4.0]), v(&[1.0, -1.0]), v(&[0.25, 0.5]));
    let g = p.grad(&x).unwrap();
    let ctx = BmgContext {
        t: 3,
        objective: &p,
        rule: &rule,
        x_prev: &xp,
        x: &x,
        w: &w,
        grad: &g,
    };
    let target = TangentTarget { gradient_scale: 0.5 }.target(&ctx).unwrap();
    // φ(x, w) = w for the direct rule; x + φ = (1.25, −0.5), ∇f there = (2.5, −4).
    let y = v(&[0.25 - 1.25, 0.5 + 2.0]);
    assert_eq!(target.sign, TargetSign::Plus);
    assert!((&target.tangent - &y).amax() < 1e-15);
    assert!((&target.z - (&x + &y)).amax() < 1e-15);
}

#[test]
fn zero_tangents_give_gradient_step_targets() {
    let p = QuadraticProblem::generate(4, 1).unwrap();
    let traj = run_convex(
        &p,
        &UpdateRule::direct(4),
        WeightSchedule::ConstantOne,
        free_meta(4, BetaSchedule::constant(0.01), &Vector::zeros(4)),
        10,
        &p.default_start(),
        &Vector::zeros(4),
        &ConvexOptions::default(),
    )
    .unwrap();
    let prefix = Prefix::from_trajectory(&traj);
    let tangents = vec![Vector::zeros(4); 10];
    let targets = targets_from_hints(
        &p,
        &DistanceGenerator::HalfSquaredEuclidean,
        &prefix,
        &tangents,
        WeightSchedule::ConstantOne,
    )
    .unwrap();
    for (t, z) in targets.iter().enumerate() {
        let x = &prefix.points[t + 1];
        assert!((&z.z - (x - p.grad(x).unwrap())).amax() < 1e-12);
    }
}

fn practical_prefix(p: &QuadraticProblem, steps: usize) -> (Prefix, Vec<Vector>) {
    let n = p.dim();
    let rule = UpdateRule::elementwise_lr(n).with_scale(-1.0);
    let traj = run_aoftrl_recursion(
        p,
        &rule,
        WeightSchedule::Linear,
        BetaSchedule::constant(1e-4),
        &mut SeededTangents::new(3, 0.1),
        steps,
        &Vector::from_element(n, 0.5),
        &Vector::from_element(n, 0.01),
    )
    .unwrap();
    let mut src = SeededTangents::new(17, 0.3);
    let mut rng_tangents = Vec::new();
    for r in &traj.records {
        let ctx = BmgContext {
            t: r.t,
            objective: p,
            rule: &rule,
            x_prev: &r.x,
            x: &r.x,
            w: &r.w,
            grad: &r.grad,
        };
        rng_tangents.push(src.tangent(&ctx).unwrap());
    }
    (Prefix::from_trajectory(&traj), rng_tangents)
}

#[test]
fn hints_targets_hints_round_trip() {
    let p = QuadraticProblem::generate(4, 12).unwrap();
    let rule = UpdateRule::elementwise_lr(4).with_scale(-1.0);
    let (prefix, tangents) = practical_prefix(&p, 40);
    for weights in [WeightSchedule::ConstantOne, WeightSchedule::Linear] {
        for d in dgfs(&p) {
            let induced = induced_hints(&p, &rule, &prefix, &tangents, weights).unwrap();
            let targets: Vec<Vector> = targets_from_hints(&p, &d, &prefix, &tangents, weights)
                .unwrap()
                .into_iter()
                .map(|t| t.z)
                .collect();
            let back = hints_from_targets(&p, &rule, &d, &prefix, &targets, weights).unwrap();
            assert_eq!(back.len(), 41);
            for (a, b) in induced.iter().zip(&back) {
                assert!((a - b).amax() <= 1e-10 * a.amax().max(1.0));
            }
        }
    }
}

#[test]
fn prefix_must_cover_the_sequence() {
    let p = QuadraticProblem::generate(4, 12).unwrap();
    let (prefix, tangents) = practical_prefix(&p, 5);
    let rule = UpdateRule::elementwise_lr(4);
    assert!(induced_hints(&p, &rule, &prefix.truncate(3), &tangents, WeightSchedule::Linear).is_err());
    assert_eq!(prefix.truncate(3).horizon(), 3);
    let broken = Prefix {
        points: prefix.points.clone(),
        ws: prefix.ws[..2].to_vec(),
    };
    assert!(induced_hints(&p, &rule, &broken, &tangents[..2], WeightSchedule::Linear).is_err());
}

#[test]
fn identical_targets_collapse_the_hint_recursion() {
    let p = QuadraticProblem::generate(4, 12).unwrap();
    let rule = UpdateRule::elementwise_lr(4).with_scale(-1.0);
    let (prefix, _) = practical_prefix(&p, 20);
    let w = WeightSchedule::Linear;
    let targets: Vec<Vector> = prefix.points[1..].to_vec();
    let hints = hints_from_targets(
        &p,
        &rule,
        &DistanceGenerator::HalfSquaredEuclidean,
        &prefix,
        &targets,
        w,
    )
    .unwrap();
    let mut h = Vector::zeros(4);
    for t in 1..=20 {
        let (pp, pt) = (&prefix.points[t - 1], &prefix.points[t]);
        // −α_t Dφᵀ∇f + α_t g̃_t, with Dφᵀv = −v ⊙ ∇f(p_{t−1}) for this rule.
        let jt = p.grad(pt).unwrap().component_mul(&p.grad(pp).unwrap());
        h = (&jt * w.alpha(t) + &h * w.alpha(t)) / w.alpha(t + 1);
        assert!((&hints[t] - &h).amax() <= 1e-12 * h.amax().max(1.0), "t={t}");
    }
}

#[test]
fn mirror_map_equal_to_the_objective() {
    // μ = f with unit weights: g̃_{t+1} = g̃_t − Dφᵀ∇f(z_t).
    let p = QuadraticProblem::generate(3, 4).unwrap();
    let rule = UpdateRule::elementwise_lr(3).with_scale(-1.0);
    let (prefix, _) = practical_prefix(&p, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let targets: Vec<Vector> = (0..15).map(|_| random_vec(&mut rng, 3)).collect();
    let d = DistanceGenerator::from_problem(&p).unwrap();
    let hints = hints_from_targets(&p, &rule, &d, &prefix, &targets, WeightSchedule::ConstantOne).unwrap();
    let mut h = Vector::zeros(3);
    for t in 1..=15 {
        let jt = rule
            .jtvp(
                &p,
                &prefix.points[t - 1],
                &prefix.ws[t - 1],
                &p.grad(&targets[t - 1]).unwrap(),
            )
            .unwrap();
        h -= jt;
        assert!((&hints[t] - &h).amax() <= 1e-10 * h.amax().max(1.0));
    }
}

#[test]
fn bmg_run_on_hint_targets_matches_the_aoftrl_recursion() {
    let p = QuadraticProblem::generate(5, 21).unwrap();
    let rule = UpdateRule::elementwise_lr(5).with_scale(-1.0);
    let x0 = Vector::from_element(5, 0.5);
    let w1 = Vector::from_element(5, 0.02);
    let beta = BetaSchedule::constant(2e-4);
    for weights in [WeightSchedule::ConstantOne, WeightSchedule::Linear] {
        for d in dgfs(&p) {
            let reference = run_aoftrl_recursion(
                &p,
                &rule,
                weights,
                beta,
                &mut SeededTangents::new(9, 0.05),
                50,
                &x0,
                &w1,
            )
            .unwrap();
            let mut tangents = SeededTangents::new(9, 0.05);
            let mut oracle = HintTargets::new(&mut tangents, d.clone(), weights);
            let bmg = run_bmg(&p, &rule, &mut oracle, &d, beta, 50, &x0, &w1).unwrap();
            assert_eq!(oracle.log.len(), 50);
            for (a, b) in reference.records.iter().zip(&bmg.records) {
                assert!((&a.w - &b.w).amax() <= 1e-8, "t={}", a.t);
                assert!((&a.x - &b.x).amax() <= 1e-8);
            }
            assert!((&reference.w_final - &bmg.w_final).amax() <= 1e-8);
        }
    }
}

#[test]
fn target_hints_turn_optimistic_steps_into_bmg_steps() {
    // Direct rule, ỹ_{t+1} = ∇f(x̄_t): each optimistic step equals a BMG step
    // towards the recorded target on the averaged iterates.
    let p = QuadraticProblem::generate(4, 30).unwrap();
    let beta = 1.0 / (4.0 * p.smoothness());
    let w1 = Vector::zeros(4);
    for d in dgfs(&p) {
        let mut tangents = GradientTangent;
        let mut oracle = HintTargets::new(&mut tangents, d.clone(), WeightSchedule::Linear);
        let mut hints = TargetHints::new(&mut oracle, d.clone());
        let traj = run_optimistic(
            &p,
            &UpdateRule::direct(4),
            WeightSchedule::Linear,
            free_meta(4, BetaSchedule::constant(beta), &w1),
            &mut hints,
            50,
            &p.default_start(),
            &w1,
            &ConvexOptions::default(),
        )
        .unwrap();
        assert_eq!(hints.targets.len(), 50);
        for t in 2..=50 {
            let z = &hints.targets[t - 1];
            let xbar = traj.xbar(t);
            let step = d.grad(xbar).unwrap() - d.grad(z).unwrap();
            let expect = &traj.record(t).w - step * beta;
            let next = if t < 50 { &traj.record(t + 1).w } else { &traj.w_final };
            assert!((next - &expect).amax() <= 1e-8, "t={t}");
        }
    }
}

#[test]
fn error_corrected_step_matches_aoftrl_by_hand() {
    let p = QuadraticProblem::from_matrix(Matrix::from_element(1, 1, 1.5)).unwrap();
    let rule = UpdateRule::direct(1);
    let weights = WeightSchedule::ConstantOne;
    let schedule = BetaSchedule::constant(0.1);
    let c = v(&[0.7]);
    let (y2, y3) = (v(&[0.4]), v(&[-0.9]));
    let mut meta = free_meta(1, schedule, &c);
    let p0 = v(&[2.0]);
    let w1 = c.clone();
    let p1 = w1.clone();
    let w2 = meta.aoftrl_step(&p.grad(&p1).unwrap(), &y2, 1.0, 1.0).unwrap();
    let p2 = (&p1 + &w2) / 2.0;
    let w3 = meta.aoftrl_step(&p.grad(&p2).unwrap(), &y3, 1.0, 1.0).unwrap();
    let prefix = Prefix {
        points: vec![p0, p1, p2],
        ws: vec![w1, w2],
    };
    let step = bmg_error_corrected_step(&p, &rule, &prefix, 2, &c, &y3, Some(&y2), weights, schedule).unwrap();
    assert!((&step.w_next - &w3).amax() <= 1e-15, "{} vs {}", step.w_next, w3);
    assert_eq!(step.decay, 1.0);
    assert_eq!(step.correction, &y2 * 0.1);
    assert!((&step.w_next - step.uncorrected() - &step.correction).amax() <= 1e-15);
}

#[test]
fn error_corrected_steps_track_the_optimistic_learner() {
    let p = QuadraticProblem::generate(3, 8).unwrap();
    let rule = UpdateRule::elementwise_lr(3);
    let weights = WeightSchedule::Linear;
    let schedule = BetaSchedule::inverse_sqrt(1e-4);
    let c = Vector::from_element(3, 0.01);
    let mut tangents = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..=30 {
        tangents.push(random_vec(&mut rng, 3) * 0.1);
    }

    struct Induced<'a>(&'a [Vector]);
    impl HintSource for Induced<'_> {
        fn next_hint(&mut self, ctx: &HintContext<'_>) -> Result<Vector> {
            ctx.rule.jtvp(ctx.objective, ctx.xbar_prev, ctx.w, &self.0[ctx.t - 1])
        }
    }
    let traj = run_optimistic(
        &p,
        &rule,
        weights,
        free_meta(3, schedule, &c),
        &mut Induced(&tangents),
        30,
        &p.default_start(),
        &c,
        &ConvexOptions::default(),
    )
    .unwrap();
    let prefix = Prefix::from_trajectory(&traj);
    for t in 1..=30 {
        let y_cur = if t >= 2 { Some(&tangents[t - 2]) } else { None };
        let step =
            bmg_error_corrected_step(&p, &rule, &prefix, t, &c, &tangents[t - 1], y_cur, weights, schedule).unwrap();
        let next = if t < 30 { &traj.record(t + 1).w } else { &traj.w_final };
        assert!((&step.w_next - next).amax() <= 1e-12, "t={t}");
        if t >= 2 {
            let expect = rule
                .jtvp(&p, &prefix.points[t - 2], &prefix.ws[t - 2], &tangents[t - 2])
                .unwrap()
                * (schedule.value(t) * weights.alpha(t));
            assert!((&step.correction - expect).amax() <= 1e-15);
        } else {
            assert_eq!(step.correction, Vector::zeros(3));
        }
    }
}

#[test]
fn zero_tangents_reduce_to_plain_ftrl() {
    let p = QuadraticProblem::generate(3, 8).unwrap();
    let rule = UpdateRule::direct(3);
    let schedule = BetaSchedule::constant(0.02);
    let w1 = Vector::zeros(3);
    let traj = run_convex(
        &p,
        &rule,
        WeightSchedule::ConstantOne,
        free_meta(3, schedule, &w1),
        10,
        &p.default_start(),
        &w1,
        &ConvexOptions::default(),
    )
    .unwrap();
    let prefix = Prefix::from_trajectory(&traj);
    let zero = Vector::zeros(3);
    for t in 1..=10 {
        let step = bmg_error_corrected_step(
            &p,
            &rule,
            &prefix,
            t,
            &w1,
            &zero,
            Some(&zero),
            WeightSchedule::ConstantOne,
            schedule,
        )
        .unwrap();
        let expect = &traj.record(t).w - traj.record(t).grad.clone() * 0.02;
        assert!((&step.w_next - expect).amax() < 1e-14);
    }
}

#[test]
fn error_corrected_step_argument_checks() {
    let p = QuadraticProblem::generate(2, 8).unwrap();
    let (prefix, _) = practical_prefix(&QuadraticProblem::generate(2, 8).unwrap(), 3);
    let rule = UpdateRule::elementwise_lr(2).with_scale(-1.0);
    let z = Vector::zeros(2);
    let c = &prefix.ws[0];
    let w = WeightSchedule::ConstantOne;
    assert!(bmg_error_corrected_step(&p, &rule, &prefix, 0, c, &z, None, w, BetaSchedule::constant(0.1)).is_err());
    assert!(bmg_error_corrected_step(&p, &rule, &prefix, 2, c, &z, None, w, BetaSchedule::constant(0.1)).is_err());
    assert!(bmg_error_corrected_step(&p, &rule, &prefix, 2, c, &z, Some(&z), w, BetaSchedule::constant(0.0)).is_err());
    assert!(bmg_error_corrected_step(&p, &rule, &prefix, 4, c, &z, Some(&z), w, BetaSchedule::constant(0.1)).is_err());
    let first = bmg_error_corrected_step(&p, &rule, &prefix, 1, c, &z, None, w, BetaSchedule::constant(0.0)).unwrap();
    assert_eq!(first.w_next, *c);
}
