//! FTRL and optimistic FTRL meta-learners over a convex set `𝒲`.
//!
//! The regulariser is `‖w − c‖²/(2β_t)` with a fixed center `c` (the
//! initialization `w₁`). With `c = 0` this is the textbook `‖w‖²/(2β_t)`, and
//! every prediction is `w_{t+1} = P_𝒲(c − β_t v_t)` for the accumulated linear
//! loss `v_t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{check_dim, check_finite, Error, Result, Vector, DIVERGENCE_LIMIT};

/// Closed convex feasible set for the meta-parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Ball {
        center: Vector,
        radius: f64,
    },
    /// Per-coordinate bounds; infinite bounds are allowed.
    Box {
        lower: Vector,
        upper: Vector,
    },
    Unconstrained {
        dim: usize,
    },
}

impl ConstraintSet {
    pub fn ball(center: Vector, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Self::Ball { center, radius }
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(upper.iter()).all(|(l, u)| l <= u), "empty box");
        Self::Box { lower, upper }
    }

    /// `[0, ∞)ᵐ`.
    pub fn nonnegative(dim: usize) -> Self {
        Self::boxed(Vector::zeros(dim), Vector::from_element(dim, f64::INFINITY))
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self::Unconstrained { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
            Self::Unconstrained { dim } => *dim,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, w: &Vector) -> Vector {
        match self {
            Self::Ball { center, radius } => {
                let d = w - center;
                let n = d.norm();
                if n <= *radius {
                    w.clone()
                } else {
                    center + d * (*radius / n)
                }
            }
            Self::Box { lower, upper } => Vector::from_fn(w.len(), |i, _| w[i].max(lower[i]).min(upper[i])),
            Self::Unconstrained { .. } => w.clone(),
        }
    }

    pub fn contains(&self, w: &Vector, tol: f64) -> bool {
        match self {
            Self::Ball { center, radius } => (w - center).norm() <= radius + tol,
            Self::Box { lower, upper } => w
                .iter()
                .enumerate()
                .all(|(i, &x)| x >= lower[i] - tol && x <= upper[i] + tol),
            Self::Unconstrained { .. } => true,
        }
    }

    /// `diam(𝒲)`; infinite for unbounded sets.
    pub fn diameter(&self) -> f64 {
        match self {
            Self::Ball { radius, .. } => 2.0 * radius,
            Self::Box { lower, upper } => (upper - lower).norm(),
            Self::Unconstrained { .. } => f64::INFINITY,
        }
    }

    /// The diameter entering bound formulas. An unbounded set reports
    /// `‖w*‖²` of the comparator actually used instead.
    pub fn diameter_for(&self, comparator: &Vector) -> f64 {
        let d = self.diameter();
        if d.is_finite() {
            d
        } else {
            comparator.norm_squared()
        }
    }

    /// A random point of the set. Uniform for balls and bounded boxes; an
    /// unbounded box side is sampled within unit distance of its finite side,
    /// and fully unbounded coordinates are standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            Self::Ball { center, radius } => {
                let m = center.len();
                let dir = Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = dir.norm();
                let r = radius * rng.random::<f64>().powf(1.0 / m as f64);
                if n == 0.0 {
                    center.clone()
                } else {
                    center + dir * (r / n)
                }
            }
            Self::Box { lower, upper } => Vector::from_fn(lower.len(), |i, _| {
                let (l, u) = (lower[i], upper[i]);
                let s: f64 = rng.random();
                match (l.is_finite(), u.is_finite()) {
                    (true, true) => l + s * (u - l),
                    (true, false) => l + s,
                    (false, true) => u - s,
                    (false, false) => rng.sample(StandardNormal),
                }
            }),
            Self::Unconstrained { dim } => Vector::from_fn(*dim, |_, _| rng.sample(StandardNormal)),
        }
    }
}

/// Meta step-size schedule `t ↦ β_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant {
        value: f64,
    },
    /// `β_t = (t − 1)/(2tλ̃L)`, zero at `t = 1`.
    Accelerated {
        lambda_tilde: f64,
        smoothness: f64,
    },
    /// `β_t = base/√t`.
    InverseSqrt {
        base: f64,
    },
}

impl BetaSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn accelerated(lambda_tilde: f64, smoothness: f64) -> Self {
        Self::Accelerated {
            lambda_tilde,
            smoothness,
        }
    }

    pub fn inverse_sqrt(base: f64) -> Self {
        Self::InverseSqrt { base }
    }

    /// `β_t` for `t ≥ 1`.
    pub fn value(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        let tf = t as f64;
        match *self {
            Self::Constant { value } => value,
            Self::Accelerated {
                lambda_tilde,
                smoothness,
            } => (tf - 1.0) / (2.0 * tf * lambda_tilde * smoothness),
            Self::InverseSqrt { base } => base / tf.sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { value } => value > 0.0 && value.is_finite(),
            Self::Accelerated {
                lambda_tilde,
                smoothness,
            } => lambda_tilde > 0.0 && smoothness > 0.0 && (lambda_tilde * smoothness).is_finite(),
            Self::InverseSqrt { base } => base > 0.0 && base.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid beta schedule {self:?}")))
        }
    }
}

/// State of an FTRL / AO-FTRL meta-learner.
#[derive(Debug, Clone)]
pub struct MetaLearnerState {
    pub constraint: ConstraintSet,
    pub schedule: BetaSchedule,
    center: Vector,
    accumulated: Vector,
    pending_hint: Option<Vector>,
    step: usize,
}

impl MetaLearnerState {
    /// Regulariser centered at the origin.
    pub fn new(constraint: ConstraintSet, schedule: BetaSchedule) -> Result<Self> {
        let m = constraint.dim();
        Self::with_center(constraint, schedule, Vector::zeros(m))
    }

    pub fn with_center(constraint: ConstraintSet, schedule: BetaSchedule, center: Vector) -> Result<Self> {
        schedule.validate()?;
        check_dim(constraint.dim(), &center)?;
        check_finite("regulariser center", &center)?;
        let m = center.len();
        Ok(Self {
            constraint,
            schedule,
            center,
            accumulated: Vector::zeros(m),
            pending_hint: None,
            step: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    /// `G_t = Σ_{s≤t} α_s g_s`.
    pub fn accumulated(&self) -> &Vector {
        &self.accumulated
    }

    /// `α_{t+1}g̃_{t+1}` used by the latest optimistic step, cleared by a plain step.
    pub fn pending_hint(&self) -> Option<&Vector> {
        self.pending_hint.as_ref()
    }

    /// Number of steps taken.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// First prediction: the regulariser minimiser over `𝒲`.
    pub fn initial_point(&self) -> Vector {
        self.constraint.project(&self.center)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.schedule.value(t)
    }

    fn accumulate(&mut self, g: &Vector, alpha: f64) -> Result<()> {
        check_dim(self.dim(), g)?;
        check_finite("meta-gradient", g)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        self.step += 1;
        self.accumulated.axpy(alpha, g, 1.0);
        if !self.accumulated.iter().all(|x| x.is_finite()) {
            return Err(Error::Diverged {
                step: self.step,
                what: "accumulated meta-gradient",
                norm: self.accumulated.norm(),
            });
        }
        Ok(())
    }

    fn predict(&self, v: &Vector) -> Result<Vector> {
        let beta = self.schedule.value(self.step);
        if beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta_{} is negative", self.step)));
        }
        // β = 0 means an infinitely heavy regulariser: the limit of the argmin.
        let w = if beta == 0.0 {
            self.initial_point()
        } else {
            self.constraint.project(&(&self.center - v * beta))
        };
        let norm = w.norm();
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                step: self.step,
                what: "meta-parameters",
                norm,
            });
        }
        Ok(w)
    }

    /// `w_{t+1} = P_𝒲(c − β_t G_t)`.
    pub fn ftrl_step(&mut self, g: &Vector, alpha: f64) -> Result<Vector> {
        self.accumulate(g, alpha)?;
        self.pending_hint = None;
        self.predict(&self.accumulated)
    }

    /// `w_{t+1} = P_𝒲(c − β_t(α_{t+1}g̃_{t+1} + G_t))`.
    pub fn aoftrl_step(&mut self, g: &Vector, hint_next: &Vector, alpha: f64, alpha_next: f64) -> Result<Vector> {
        check_dim(self.dim(), hint_next)?;
        check_finite("hint", hint_next)?;
        if !(alpha_next > 0.0 && alpha_next.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha_next must be positive, got {alpha_next}"
            )));
        }
        self.accumulate(g, alpha)?;
        let hint = hint_next * alpha_next;
        let w = self.predict(&(&self.accumulated + &hint))?;
        self.pending_hint = Some(hint);
        Ok(w)
    }
}

/// Running `R^w(T) = Σ α_t⟨g_t, w_t − w*⟩` against a fixed comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub comparator: Vec<f64>,
    pub value: f64,
    pub steps: usize,
}

impl RegretLedger {
    pub fn new(comparator: &Vector) -> Self {
        Self {
            comparator: comparator.iter().copied().collect(),
            value: 0.0,
            steps: 0,
        }
    }

    pub fn update(&mut self, g: &Vector, w: &Vector, alpha: f64) -> f64 {
        let c = Vector::from_column_slice(&self.comparator);
        self.value += alpha * g.dot(&(w - c));
        self.steps += 1;
        self.value
    }
}

/// Tracks whether `⟨g_t, g̃_t⟩ ≥ ε‖g_t‖²` held at every step so far.
/// Descriptive only; nothing gates on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HintCorrelation {
    pub epsilon: f64,
    pub satisfied: bool,
    pub steps: usize,
    pub min_ratio: f64,
}

impl HintCorrelation {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            satisfied: true,
            steps: 0,
            min_ratio: f64::INFINITY,
        }
    }

    pub fn update(&mut self, g: &Vector, hint: &Vector) {
        let gg = g.norm_squared();
        let inner = g.dot(hint);
        self.steps += 1;
        if gg > 0.0 {
            self.min_ratio = self.min_ratio.min(inner / gg);
        }
        if inner < self.epsilon * gg {
            self.satisfied = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let ball = ConstraintSet::ball(Vector::zeros(2), 1.0);
        assert!((ball.project(&v(&[3.0, 4.0])) - v(&[0.6, 0.8])).amax() < 1e-15);
        let nn = ConstraintSet::nonnegative(2);
        assert_eq!(nn.project(&v(&[-1.0, 2.0])), v(&[0.0, 2.0]));
        let inside = v(&[0.1, -0.2]);
        assert_eq!(ball.project(&inside), inside);
        assert_eq!(
            ConstraintSet::unconstrained(2).project(&v(&[9.0, -9.0])),
            v(&[9.0, -9.0])
        );
    }

    #[test]
    fn diameters() {
        assert_eq!(ConstraintSet::ball(Vector::zeros(3), 5.0).diameter(), 10.0);
        let b = ConstraintSet::boxed(Vector::zeros(2), Vector::from_element(2, 10.0));
        assert!((b.diameter() - 200f64.sqrt()).abs() < 1e-12);
        let u = ConstraintSet::unconstrained(2);
        assert!(u.diameter().is_infinite());
        assert_eq!(u.diameter_for(&v(&[3.0, 4.0])), 25.0);
    }

    #[test]
    fn ftrl_closed_form_examples() {
        let mut s = MetaLearnerState::new(ConstraintSet::unconstrained(2), BetaSchedule::constant(0.5)).unwrap();
        let w = s.ftrl_step(&v(&[1.0, -2.0]), 1.0).unwrap();
        assert_eq!(w, v(&[-0.5, 1.0]));

        let ball = ConstraintSet::ball(v(&[1.0, 1.0]), 0.5);
        let mut z = MetaLearnerState::new(ball.clone(), BetaSchedule::constant(0.3)).unwrap();
        for _ in 0..5 {
            let w = z.ftrl_step(&Vector::zeros(2), 1.0).unwrap();
            assert_eq!(w, ball.project(&Vector::zeros(2)));
        }
    }

    #[test]
    fn ftrl_unrolls_to_gradient_recursion() {
        let beta = 0.37;
        let w1 = v(&[0.5, -1.0, 2.0]);
        let mut s = MetaLearnerState::with_center(
            ConstraintSet::unconstrained(3),
            BetaSchedule::constant(beta),
            w1.clone(),
        )
        .unwrap();
        let (g1, g2) = (v(&[1.0, 2.0, -3.0]), v(&[-0.5, 0.25, 4.0]));
        let (a1, a2) = (1.0, 2.0);
        s.ftrl_step(&g1, a1).unwrap();
        let w3 = s.ftrl_step(&g2, a2).unwrap();
        let oracle = &w1 - &g1 * (beta * a1) - &g2 * (beta * a2);
        assert!((w3 - oracle).amax() < 1e-12);
    }

    #[test]
    fn aoftrl_examples() {
        let mut s = MetaLearnerState::new(ConstraintSet::unconstrained(1), BetaSchedule::constant(0.1)).unwrap();
        let w = s.aoftrl_step(&v(&[2.0]), &v(&[1.5]), 1.0, 2.0).unwrap();
        assert!((w[0] + 0.5).abs() < 1e-15);
        assert_eq!(s.pending_hint().unwrap(), &v(&[3.0]));
        s.ftrl_step(&v(&[0.0]), 1.0).unwrap();
        assert!(s.pending_hint().is_none());
    }

    #[test]
    fn zero_hint_matches_plain_ftrl() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cs = ConstraintSet::ball(Vector::zeros(3), 2.0);
        let sched = BetaSchedule::accelerated(1.0, 8.0);
        let mut a = MetaLearnerState::with_center(cs.clone(), sched, v(&[0.1, 0.2, 0.3])).unwrap();
        let mut b = a.clone();
        for t in 1..=30 {
            let g = Vector::from_fn(3, |_, _| rng.sample(StandardNormal));
            let wa = a.ftrl_step(&g, t as f64).unwrap();
            let wb = b.aoftrl_step(&g, &Vector::zeros(3), t as f64, (t + 1) as f64).unwrap();
            assert_eq!(wa, wb);
        }
    }

    #[test]
    fn perfect_hints_follow_decay_recursion() {
        // Constant β: the argmin form and the unrolled recursion
        // w_{t+1} = w_t − β(α_{t+1}g̃_{t+1} + α_t(g_t − g̃_t)) coincide.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let beta = 0.05;
        let gs: Vec<Vector> = (0..52)
            .map(|_| Vector::from_fn(2, |_, _| rng.sample(StandardNormal)))
            .collect();
        let mut s = MetaLearnerState::new(ConstraintSet::unconstrained(2), BetaSchedule::constant(beta)).unwrap();
        let mut rec = Vector::zeros(2);
        // Perfect hints: g̃_t = g_t; with g̃₁ = 0 the first step has a nonzero error term.
        let hint = |t: usize| if t == 1 { Vector::zeros(2) } else { gs[t].clone() };
        for t in 1..=50 {
            let (a, an) = (t as f64, (t + 1) as f64);
            let w = s.aoftrl_step(&gs[t], &gs[t + 1], a, an).unwrap();
            rec = &rec - (&gs[t + 1] * an + (&gs[t] - hint(t)) * a) * beta;
            assert!((w - &rec).amax() < 1e-12 * rec.amax().max(1.0), "t={t}");
        }
    }

    #[test]
    fn rejects_bad_steps() {
        let mut s = MetaLearnerState::new(ConstraintSet::unconstrained(2), BetaSchedule::constant(1.0)).unwrap();
        assert!(s.ftrl_step(&v(&[1.0, f64::NAN]), 1.0).is_err());
        assert!(s.ftrl_step(&v(&[1.0, 1.0]), 0.0).is_err());
        assert!(s.ftrl_step(&v(&[1.0]), 1.0).is_err());
        assert!(MetaLearnerState::new(ConstraintSet::unconstrained(1), BetaSchedule::constant(-1.0)).is_err());
        let err = s.ftrl_step(&v(&[1e13, 0.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }), "{err}");
    }

    #[test]
    fn accelerated_first_step_returns_regulariser_minimiser() {
        let center = v(&[2.0, -1.0]);
        let cs = ConstraintSet::ball(Vector::zeros(2), 1.0);
        let mut s =
            MetaLearnerState::with_center(cs.clone(), BetaSchedule::accelerated(1.0, 8.0), center.clone()).unwrap();
        let w2 = s.aoftrl_step(&v(&[5.0, 5.0]), &v(&[1.0, 1.0]), 1.0, 2.0).unwrap();
        assert_eq!(w2, cs.project(&center));
        assert_eq!(BetaSchedule::accelerated(1.0, 8.0).value(2), 1.0 / 32.0);
    }

    #[test]
    fn ledger_examples() {
        let ws = v(&[1.0, 2.0]);
        let mut l = RegretLedger::new(&ws);
        for _ in 0..3 {
            l.update(&v(&[3.0, -1.0]), &ws, 1.0);
        }
        assert_eq!(l.value, 0.0);
        let mut l = RegretLedger::new(&Vector::zeros(2));
        assert_eq!(l.update(&v(&[1.0, 0.0]), &v(&[2.0, 0.0]), 1.0), 2.0);
    }

    #[test]
    fn regret_bound_on_a_quadratic_ftrl_run() {
        use crate::problems::QuadraticProblem;
        // w_t chases the minimiser of a quadratic through its gradient; check
        // R^w(T) ≤ ‖w* − c‖²/β + ½Σα²β‖g‖² for a handful of comparators.
        let p = QuadraticProblem::generate(3, 2).unwrap();
        let beta = 1.0 / p.smoothness();
        let center = v(&[4.0, 4.0, 4.0]);
        let mut s = MetaLearnerState::with_center(
            ConstraintSet::unconstrained(3),
            BetaSchedule::constant(beta),
            center.clone(),
        )
        .unwrap();
        let mut w = center.clone();
        let mut hist = Vec::new();
        for _ in 0..20 {
            let g = p.grad(&w).unwrap();
            let next = s.ftrl_step(&g, 1.0).unwrap();
            hist.push((w.clone(), g));
            w = next;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let ws = Vector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            let mut l = RegretLedger::new(&ws);
            let mut rhs = (&ws - &center).norm_squared() / beta;
            for (w, g) in &hist {
                l.update(g, w, 1.0);
                rhs += 0.5 * beta * g.norm_squared();
            }
            assert!(l.value <= rhs + 1e-9, "{} > {}", l.value, rhs);
        }
    }

    #[test]
    fn hint_correlation_flag() {
        let mut c = HintCorrelation::new(0.1);
        c.update(&v(&[1.0, 0.0]), &v(&[0.5, 3.0]));
        assert!(c.satisfied);
        c.update(&v(&[1.0, 0.0]), &v(&[-0.5, 0.0]));
        assert!(!c.satisfied);
        assert_eq!(c.min_ratio, -0.5);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            a in proptest::collection::vec(-20.0f64..20.0, 3),
            b in proptest::collection::vec(-20.0f64..20.0, 3),
            r in 0.1f64..10.0,
        ) {
            let (a, b) = (Vector::from_vec(a), Vector::from_vec(b));
            let sets = [
                ConstraintSet::ball(v(&[1.0, -1.0, 0.5]), r),
                ConstraintSet::boxed(v(&[-1.0, 0.0, -r]), v(&[1.0, r, f64::INFINITY])),
                ConstraintSet::unconstrained(3),
            ];
            for s in &sets {
                let (pa, pb) = (s.project(&a), s.project(&b));
                prop_assert!(s.contains(&pa, 1e-9));
                prop_assert!((s.project(&pa) - &pa).amax() <= 1e-12 * pa.amax().max(1.0));
                prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn samples_lie_in_the_set(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sets = [
                ConstraintSet::ball(v(&[1.0, 2.0]), 0.5),
                ConstraintSet::nonnegative(2),
                ConstraintSet::boxed(v(&[-1.0, -1.0]), v(&[1.0, 3.0])),
            ];
            for s in &sets {
                prop_assert!(s.contains(&s.sample(&mut rng), 1e-12));
            }
        }
    }
}
