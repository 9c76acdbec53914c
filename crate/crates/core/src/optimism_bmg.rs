//! Hints for optimistic meta-learning, Bregman matching losses, and the
//! correspondence between bootstrapped targets and optimistic hints.
//!
//! Indexing: at iteration `t` a hint source returns `g̃_{t+1}` and a tangent
//! source returns `ỹ_{t+1}`, using only quantities available at `t`. The hint
//! for the very first step is `g̃₁ = 0`.
//!
//! For hints of the form `g̃_{t+1} = Dφ(p_{t−1}, w_t)ᵀỹ_{t+1}` accumulated as
//! `α_{t+1}g̃_{t+1} = α_{t+1}Dφᵀỹ_{t+1} + α_t g̃_t`, the optimistic recursion
//! `w_{t+1} = w_t − β_t(α_{t+1}g̃_{t+1} + α_t(Dφᵀ∇f(p_t) − g̃_t))`
//! is exactly a BMG step towards
//! `z_t = ∇μ⁻¹(∇μ(p_t) − (α_{t+1}ỹ_{t+1} + α_t∇f(p_t)))`.
//! Conversely a target sequence induces hints through
//! `α_{t+1}g̃_{t+1} = Dφᵀ(∇μ(p_t) − ∇μ(z_t) − α_t∇f(p_t)) + α_t g̃_t`.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drivers::{guard, DriverKind, StepRecord, Trajectory, WeightSchedule};
use crate::meta_learner::BetaSchedule;
use crate::problems::{Objective, QuadraticProblem};
use crate::update_rules::UpdateRule;
use crate::{check_dim, check_finite, Error, Matrix, Result, Vector};

/// What a hint source may look at when choosing `g̃_{t+1}`.
pub struct HintContext<'a> {
    pub t: usize,
    pub objective: &'a dyn Objective,
    pub rule: &'a UpdateRule,
    pub weights: WeightSchedule,
    /// `x̄_{t−1}`
    pub xbar_prev: &'a Vector,
    /// `x̄_t`
    pub xbar: &'a Vector,
    /// `w_t`
    pub w: &'a Vector,
    /// `∇f(x̄_t)`
    pub grad: &'a Vector,
    /// `∇f(x̄_{t−1})`
    pub grad_prev: &'a Vector,
    /// `g_t`
    pub meta_grad: &'a Vector,
    /// `g̃_t`
    pub hint: &'a Vector,
}

pub trait HintSource {
    /// `g̃_{t+1}`.
    fn next_hint(&mut self, ctx: &HintContext<'_>) -> Result<Vector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintPolicy {
    /// `g̃ = 0`: plain FTRL.
    Zero,
    /// `g̃_{t+1} = ∇f(x̄_t)`; needs `m = n`.
    PrevGradient,
    /// `g̃_{t+1} = Dφ(x̄_{t−1}, w_t)ᵀ∇f(x̄_t)`, the meta-gradient just computed.
    PrevMetaGrad,
}

/// The last meta-gradient as the next hint.
pub fn hint_prev_metagrad(ctx: &HintContext<'_>) -> Vector {
    ctx.meta_grad.clone()
}

impl HintSource for HintPolicy {
    fn next_hint(&mut self, ctx: &HintContext<'_>) -> Result<Vector> {
        match self {
            Self::Zero => Ok(Vector::zeros(ctx.rule.meta_dim)),
            Self::PrevGradient => {
                check_dim(ctx.rule.meta_dim, ctx.grad)?;
                Ok(ctx.grad.clone())
            }
            Self::PrevMetaGrad => Ok(hint_prev_metagrad(ctx)),
        }
    }
}

/// Mirror map `μ` of a Bregman divergence.
#[derive(Debug, Clone)]
pub enum DistanceGenerator {
    /// `μ(x) = ½‖x‖²`
    HalfSquaredEuclidean,
    /// `μ(x) = ⟨x, Qx⟩`, so `∇μ(x) = 2Qx`; `Q` must be positive definite.
    QuadraticForm {
        q: Matrix,
        two_q: Cholesky<f64, nalgebra::Dyn>,
    },
}

impl DistanceGenerator {
    pub fn quadratic_form(q: Matrix) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::InvalidArgument("Q must be square".into()));
        }
        let two_q = Cholesky::new(&q * 2.0).ok_or(Error::Singular)?;
        Ok(Self::QuadraticForm { q, two_q })
    }

    /// `μ = f` for a quadratic objective.
    pub fn from_problem(p: &QuadraticProblem) -> Result<Self> {
        Self::quadratic_form(p.q_matrix().clone())
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::HalfSquaredEuclidean => None,
            Self::QuadraticForm { q, .. } => Some(q.nrows()),
        }
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, x)?;
        }
        check_finite("mirror-map argument", x)
    }

    pub fn mu(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            Self::HalfSquaredEuclidean => 0.5 * x.norm_squared(),
            Self::QuadraticForm { q, .. } => x.dot(&(q * x)),
        })
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        Ok(match self {
            Self::HalfSquaredEuclidean => x.clone(),
            Self::QuadraticForm { q, .. } => q * x * 2.0,
        })
    }

    /// The `x` with `∇μ(x) = y`.
    pub fn grad_inverse(&self, y: &Vector) -> Result<Vector> {
        self.check(y)?;
        match self {
            Self::HalfSquaredEuclidean => Ok(y.clone()),
            Self::QuadraticForm { two_q, .. } => {
                let x = two_q.solve(y);
                if x.iter().all(|c| c.is_finite()) {
                    Ok(x)
                } else {
                    Err(Error::Singular)
                }
            }
        }
    }

    /// `B_z(x) = μ(x) − μ(z) − ⟨∇μ(z), x − z⟩`.
    pub fn bregman(&self, z: &Vector, x: &Vector) -> Result<f64> {
        let d = match self {
            Self::HalfSquaredEuclidean => 0.5 * (x - z).norm_squared(),
            Self::QuadraticForm { q, .. } => {
                self.check(x)?;
                self.check(z)?;
                let e = x - z;
                e.dot(&(q * &e))
            }
        };
        Ok(d)
    }
}

/// Side of the tangent in `z = x ∓ y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSign {
    /// `z = x − y`
    Minus,
    /// `z = x + y`
    Plus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmgTarget {
    pub z: Vector,
    pub tangent: Vector,
    pub sign: TargetSign,
}

impl BmgTarget {
    pub fn minus(x: &Vector, y: Vector) -> Self {
        Self {
            z: x - &y,
            tangent: y,
            sign: TargetSign::Minus,
        }
    }

    pub fn plus(x: &Vector, y: Vector) -> Self {
        Self {
            z: x + &y,
            tangent: y,
            sign: TargetSign::Plus,
        }
    }

    /// A given point, recorded with tangent `y = x − z`.
    pub fn at(x: &Vector, z: Vector) -> Self {
        Self {
            tangent: x - &z,
            z,
            sign: TargetSign::Minus,
        }
    }
}

/// What a target oracle or tangent source may look at during iteration `t`.
pub struct BmgContext<'a> {
    pub t: usize,
    pub objective: &'a dyn Objective,
    pub rule: &'a UpdateRule,
    /// `x_{t−1}`
    pub x_prev: &'a Vector,
    /// `x_t`
    pub x: &'a Vector,
    /// `w_t`
    pub w: &'a Vector,
    /// `∇f(x_t)`
    pub grad: &'a Vector,
}

pub trait TargetOracle {
    /// `z_t`.
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget>;
}

/// `z_t = x_t`: no mismatch, `w` stays put.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTarget;

impl TargetOracle for IdentityTarget {
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget> {
        Ok(BmgTarget::at(ctx.x, ctx.x.clone()))
    }
}

/// `z_t = x_t − η∇f(x_t)`.
#[derive(Debug, Clone, Copy)]
pub struct GradientStepTarget {
    pub step: f64,
}

impl TargetOracle for GradientStepTarget {
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget> {
        Ok(BmgTarget::minus(ctx.x, ctx.grad * self.step))
    }
}

/// Bootstrapped tangent: apply the rule once more from `x_t`, then take a
/// gradient step there. `y_t = φ(x_t, w_t) − κ∇f(x_t + φ(x_t, w_t))`,
/// `z_t = x_t + y_t`, with `κ = gradient_scale`.
#[derive(Debug, Clone, Copy)]
pub struct TangentTarget {
    pub gradient_scale: f64,
}

impl Default for TangentTarget {
    fn default() -> Self {
        Self { gradient_scale: 1.0 }
    }
}

impl TargetOracle for TangentTarget {
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget> {
        let step = ctx.rule.apply(ctx.objective, ctx.x, ctx.w)?;
        let ahead = ctx.x + &step;
        let y = step - ctx.objective.gradient(&ahead)? * self.gradient_scale;
        Ok(BmgTarget::plus(ctx.x, y))
    }
}

/// Replays a fixed target sequence `z_1, z_2, …`.
#[derive(Debug, Clone)]
pub struct FixedTargets {
    pub targets: Vec<Vector>,
}

impl TargetOracle for FixedTargets {
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget> {
        let z = self
            .targets
            .get(ctx.t - 1)
            .ok_or_else(|| Error::InvalidArgument(format!("no target recorded for step {}", ctx.t)))?;
        Ok(BmgTarget::at(ctx.x, z.clone()))
    }
}

/// Source of tangents `ỹ_{t+1}`.
pub trait TangentSource {
    fn tangent(&mut self, ctx: &BmgContext<'_>) -> Result<Vector>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTangent;

impl TangentSource for ZeroTangent {
    fn tangent(&mut self, ctx: &BmgContext<'_>) -> Result<Vector> {
        Ok(Vector::zeros(ctx.x.len()))
    }
}

/// `ỹ_{t+1} = ∇f(x_t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientTangent;

impl TangentSource for GradientTangent {
    fn tangent(&mut self, ctx: &BmgContext<'_>) -> Result<Vector> {
        Ok(ctx.grad.clone())
    }
}

/// Seeded Gaussian tangents, independent of the trajectory.
#[derive(Debug, Clone)]
pub struct SeededTangents {
    rng: ChaCha8Rng,
    pub scale: f64,
}

impl SeededTangents {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }
}

impl TangentSource for SeededTangents {
    fn tangent(&mut self, ctx: &BmgContext<'_>) -> Result<Vector> {
        let n = ctx.x.len();
        Ok(Vector::from_fn(n, |_, _| {
            self.rng.sample::<f64, _>(StandardNormal) * self.scale
        }))
    }
}

/// Targets built from tangents:
/// `z_t = ∇μ⁻¹(∇μ(x_t) − (α_{t+1}ỹ_{t+1} + α_t∇f(x_t)))`.
/// The tangents used are kept in `log`.
pub struct HintTargets<'s> {
    pub tangents: &'s mut dyn TangentSource,
    pub dgf: DistanceGenerator,
    pub weights: WeightSchedule,
    pub log: Vec<Vector>,
}

impl<'s> HintTargets<'s> {
    pub fn new(tangents: &'s mut dyn TangentSource, dgf: DistanceGenerator, weights: WeightSchedule) -> Self {
        Self {
            tangents,
            dgf,
            weights,
            log: Vec::new(),
        }
    }
}

impl TargetOracle for HintTargets<'_> {
    fn target(&mut self, ctx: &BmgContext<'_>) -> Result<BmgTarget> {
        let y = self.tangents.tangent(ctx)?;
        let t = ctx.t;
        let shift = &y * self.weights.alpha(t + 1) + ctx.grad * self.weights.alpha(t);
        let z = self.dgf.grad_inverse(&(self.dgf.grad(ctx.x)? - shift))?;
        self.log.push(y);
        Ok(BmgTarget::at(ctx.x, z))
    }
}

/// Hints induced by a target oracle, so that the optimistic meta-learner
/// reproduces BMG steps:
/// `α_{t+1}g̃_{t+1} = Dφ(x̄_{t−1}, w_t)ᵀ(∇μ(x̄_t) − ∇μ(z_t) − α_t∇f(x̄_t)) + α_t g̃_t`.
pub struct TargetHints<'o> {
    pub oracle: &'o mut dyn TargetOracle,
    pub dgf: DistanceGenerator,
    pub targets: Vec<Vector>,
}

impl<'o> TargetHints<'o> {
    pub fn new(oracle: &'o mut dyn TargetOracle, dgf: DistanceGenerator) -> Self {
        Self {
            oracle,
            dgf,
            targets: Vec::new(),
        }
    }
}

impl HintSource for TargetHints<'_> {
    fn next_hint(&mut self, ctx: &HintContext<'_>) -> Result<Vector> {
        let bctx = BmgContext {
            t: ctx.t,
            objective: ctx.objective,
            rule: ctx.rule,
            x_prev: ctx.xbar_prev,
            x: ctx.xbar,
            w: ctx.w,
            grad: ctx.grad,
        };
        let target = self.oracle.target(&bctx)?;
        let (a, an) = (ctx.weights.alpha(ctx.t), ctx.weights.alpha(ctx.t + 1));
        let mismatch = self.dgf.grad(ctx.xbar)? - self.dgf.grad(&target.z)? - ctx.grad * a;
        let scaled = ctx.rule.jtvp(ctx.objective, ctx.xbar_prev, ctx.w, &mismatch)? + ctx.hint * a;
        self.targets.push(target.z);
        Ok(scaled / an)
    }
}

/// Points `p_0, …, p_T` and meta-parameters `w_1, …, w_T` of a run, where
/// `p_t` is `x̄_t` for averaged drivers and `x_t` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefix {
    pub points: Vec<Vector>,
    pub ws: Vec<Vector>,
}

impl Prefix {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut points = vec![traj.x0.clone()];
        points.extend(traj.records.iter().map(|r| r.xbar.clone()));
        Self {
            points,
            ws: traj.records.iter().map(|r| r.w.clone()).collect(),
        }
    }

    /// Keeps iterations `1..=t`.
    pub fn truncate(&self, t: usize) -> Self {
        Self {
            points: self.points[..=t].to_vec(),
            ws: self.ws[..t].to_vec(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.ws.len()
    }

    fn check(&self, needed: usize) -> Result<()> {
        if self.points.len() != self.ws.len() + 1 {
            return Err(Error::InvalidArgument(
                "prefix needs one more point than meta-parameters".into(),
            ));
        }
        if self.ws.len() < needed {
            return Err(Error::InvalidArgument(format!(
                "prefix covers {} steps, {needed} needed",
                self.ws.len()
            )));
        }
        Ok(())
    }
}

/// `g̃_1, …, g̃_{T+1}` with `g̃₁ = 0` and
/// `α_{t+1}g̃_{t+1} = α_{t+1}Dφ(p_{t−1}, w_t)ᵀỹ_{t+1} + α_t g̃_t`.
/// `tangents[t − 1]` is `ỹ_{t+1}`.
pub fn induced_hints(
    objective: &dyn Objective,
    rule: &UpdateRule,
    prefix: &Prefix,
    tangents: &[Vector],
    weights: WeightSchedule,
) -> Result<Vec<Vector>> {
    let horizon = tangents.len();
    prefix.check(horizon)?;
    let mut hints = vec![Vector::zeros(rule.meta_dim)];
    for t in 1..=horizon {
        let (a, an) = (weights.alpha(t), weights.alpha(t + 1));
        let j = rule.jtvp(objective, &prefix.points[t - 1], &prefix.ws[t - 1], &tangents[t - 1])?;
        let scaled = j * an + &hints[t - 1] * a;
        hints.push(scaled / an);
    }
    Ok(hints)
}

/// `z_t = ∇μ⁻¹(∇μ(p_t) − (α_{t+1}ỹ_{t+1} + α_t∇f(p_t)))` for `t = 1..=T`.
pub fn targets_from_hints(
    objective: &dyn Objective,
    dgf: &DistanceGenerator,
    prefix: &Prefix,
    tangents: &[Vector],
    weights: WeightSchedule,
) -> Result<Vec<BmgTarget>> {
    let horizon = tangents.len();
    prefix.check(horizon)?;
    (1..=horizon)
        .map(|t| {
            let p = &prefix.points[t];
            let shift = &tangents[t - 1] * weights.alpha(t + 1) + objective.gradient(p)? * weights.alpha(t);
            let z = dgf.grad_inverse(&(dgf.grad(p)? - shift))?;
            Ok(BmgTarget::at(p, z))
        })
        .collect()
}

/// `g̃_1, …, g̃_{T+1}` from targets `z_1, …, z_T`:
/// `α_{t+1}g̃_{t+1} = Dφ(p_{t−1}, w_t)ᵀ(∇μ(p_t) − ∇μ(z_t) − α_t∇f(p_t)) + α_t g̃_t`, `g̃₁ = 0`.
pub fn hints_from_targets(
    objective: &dyn Objective,
    rule: &UpdateRule,
    dgf: &DistanceGenerator,
    prefix: &Prefix,
    targets: &[Vector],
    weights: WeightSchedule,
) -> Result<Vec<Vector>> {
    let horizon = targets.len();
    prefix.check(horizon)?;
    let mut hints = vec![Vector::zeros(rule.meta_dim)];
    for t in 1..=horizon {
        let (a, an) = (weights.alpha(t), weights.alpha(t + 1));
        let p = &prefix.points[t];
        let mismatch = dgf.grad(p)? - dgf.grad(&targets[t - 1])? - objective.gradient(p)? * a;
        let scaled = rule.jtvp(objective, &prefix.points[t - 1], &prefix.ws[t - 1], &mismatch)? + &hints[t - 1] * a;
        hints.push(scaled / an);
    }
    Ok(hints)
}

/// Optimistic meta-learning on the practical learner, in recursion form:
/// `x_t = x_{t−1} + φ(x_{t−1}, w_t)`,
/// `w_{t+1} = w_t − β_t(α_{t+1}g̃_{t+1} + α_t(Dφ(x_{t−1}, w_t)ᵀ∇f(x_t) − g̃_t))`
/// with hints induced by the tangents.
#[allow(clippy::too_many_arguments)]
pub fn run_aoftrl_recursion(
    objective: &dyn Objective,
    rule: &UpdateRule,
    weights: WeightSchedule,
    schedule: BetaSchedule,
    tangents: &mut dyn TangentSource,
    horizon: usize,
    x0: &Vector,
    w1: &Vector,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_dim(rule.param_dim, x0)?;
    check_dim(rule.meta_dim, w1)?;
    crate::drivers::reject_residual(rule)?;
    let grad0 = objective.gradient(x0)?;
    let mut x_prev = x0.clone();
    let mut w = w1.clone();
    let mut hint = Vector::zeros(rule.meta_dim);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let beta = schedule.value(t);
        let (a, an) = (weights.alpha(t), weights.alpha(t + 1));
        let x = &x_prev + rule.apply(objective, &x_prev, &w)?;
        guard(t, "iterate", &x)?;
        let grad = objective.gradient(&x)?;
        let g = rule.jtvp(objective, &x_prev, &w, &grad)?;
        let ctx = BmgContext {
            t,
            objective,
            rule,
            x_prev: &x_prev,
            x: &x,
            w: &w,
            grad: &grad,
        };
        let y = tangents.tangent(&ctx)?;
        let scaled_next = rule.jtvp(objective, &x_prev, &w, &y)? * an + &hint * a;
        let w_next = &w - (&scaled_next + (&g - &hint) * a) * beta;
        guard(t, "meta-parameters", &w_next)?;
        let next_hint = scaled_next / an;
        let f_x = objective.value(&x)?;
        records.push(StepRecord {
            t,
            alpha: a,
            rho: 1.0,
            beta,
            f_x,
            f_xbar: f_x,
            xbar: x.clone(),
            x: x.clone(),
            w: w.clone(),
            grad: grad.clone(),
            meta_grad: g,
            hint: Some(hint),
            next_hint: Some(next_hint.clone()),
            target: None,
            regret_x: f64::NAN,
            regret_w: f64::NAN,
        });
        hint = next_hint;
        x_prev = x;
        w = w_next;
    }
    Ok(Trajectory {
        driver: DriverKind::AoftrlRecursion,
        weights,
        schedule: Some(schedule),
        chain_rule_rho: false,
        center: w1.clone(),
        x0: x0.clone(),
        grad0,
        w_final: w,
        minimizer: objective.minimizer(),
        min_value: objective.min_value(),
        comparator: None,
        records,
    })
}

/// The terms of one error-corrected BMG step.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedStep {
    /// `β_t/β_{t−1}`; zero at `t = 1`, where `w₁` is the regulariser center.
    pub decay: f64,
    /// `β_t Dφ(p_{t−1}, w_t)ᵀ(α_{t+1}ỹ_{t+1} + α_t∇f(p_t))`
    pub bmg_update: Vector,
    /// `β_t α_t Dφ(p_{t−2}, w_{t−1})ᵀỹ_t`; zero at `t = 1`.
    pub correction: Vector,
    pub w_next: Vector,
}

impl CorrectedStep {
    /// The step without the correction term.
    pub fn uncorrected(&self) -> Vector {
        &self.w_next - &self.correction
    }
}

/// `w_{t+1} = c + (β_t/β_{t−1})(w_t − c) − β_t Dφ(p_{t−1}, w_t)ᵀ(α_{t+1}ỹ_{t+1} + α_t∇f(p_t))
///           + β_t α_t Dφ(p_{t−2}, w_{t−1})ᵀỹ_t`.
///
/// Equal to the unconstrained optimistic step with hints
/// `g̃_{t+1} = Dφ(p_{t−1}, w_t)ᵀỹ_{t+1}`. `prefix` must cover step `t`;
/// `y_cur` is `ỹ_t` and is ignored at `t = 1`.
#[allow(clippy::too_many_arguments)]
pub fn bmg_error_corrected_step(
    objective: &dyn Objective,
    rule: &UpdateRule,
    prefix: &Prefix,
    t: usize,
    center: &Vector,
    y_next: &Vector,
    y_cur: Option<&Vector>,
    weights: WeightSchedule,
    schedule: BetaSchedule,
) -> Result<CorrectedStep> {
    if t == 0 {
        return Err(Error::InvalidArgument("steps are numbered from 1".into()));
    }
    prefix.check(t)?;
    let beta = schedule.value(t);
    let (a, an) = (weights.alpha(t), weights.alpha(t + 1));
    let w = &prefix.ws[t - 1];
    let p = &prefix.points[t];
    let pull = y_next * an + objective.gradient(p)? * a;
    let bmg_update = rule.jtvp(objective, &prefix.points[t - 1], w, &pull)? * beta;
    let (decay, correction) = if t == 1 {
        (0.0, Vector::zeros(rule.meta_dim))
    } else {
        let beta_prev = schedule.value(t - 1);
        if beta_prev <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "decay β_{t}/β_{} is undefined because β_{} = 0",
                t - 1,
                t - 1
            )));
        }
        let y = y_cur.ok_or_else(|| Error::InvalidArgument("ỹ_t is required for t ≥ 2".into()))?;
        let corr = rule.jtvp(objective, &prefix.points[t - 2], &prefix.ws[t - 2], y)? * (beta * a);
        (beta / beta_prev, corr)
    };
    let w_next = center + (w - center) * decay - &bmg_update + &correction;
    Ok(CorrectedStep {
        decay,
        bmg_update,
        correction,
        w_next,
    })
}

/// Agreement between the two forms of the correspondence on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub horizon: usize,
    /// Largest relative gap between the induced hints and the hints
    /// recovered from their own targets.
    pub round_trip_error: f64,
    /// Largest gap between the `w` sequences of the BMG run and the
    /// optimistic recursion.
    pub max_w_gap: f64,
    pub max_x_gap: f64,
}

/// Runs the optimistic recursion with seeded tangents and a BMG learner on
/// the targets those tangents define, and round-trips the induced hints
/// through their targets on the recursion's prefix.
#[allow(clippy::too_many_arguments)]
pub fn isomorphism_check(
    objective: &dyn Objective,
    rule: &UpdateRule,
    dgf: &DistanceGenerator,
    weights: WeightSchedule,
    schedule: BetaSchedule,
    tangent_seed: u64,
    tangent_scale: f64,
    horizon: usize,
    x0: &Vector,
    w1: &Vector,
) -> Result<IsomorphismReport> {
    let reference = run_aoftrl_recursion(
        objective,
        rule,
        weights,
        schedule,
        &mut SeededTangents::new(tangent_seed, tangent_scale),
        horizon,
        x0,
        w1,
    )?;
    let mut tangents = SeededTangents::new(tangent_seed, tangent_scale);
    let mut oracle = HintTargets::new(&mut tangents, dgf.clone(), weights);
    let bmg = crate::drivers::run_bmg(objective, rule, &mut oracle, dgf, schedule, horizon, x0, w1)?;
    let mut max_w_gap = (&reference.w_final - &bmg.w_final).amax();
    let mut max_x_gap: f64 = 0.0;
    for (a, b) in reference.records.iter().zip(&bmg.records) {
        max_w_gap = max_w_gap.max((&a.w - &b.w).amax());
        max_x_gap = max_x_gap.max((&a.x - &b.x).amax());
    }

    let prefix = Prefix::from_trajectory(&reference);
    let ys = oracle.log;
    let induced = induced_hints(objective, rule, &prefix, &ys, weights)?;
    let targets: Vec<Vector> = targets_from_hints(objective, dgf, &prefix, &ys, weights)?
        .into_iter()
        .map(|t| t.z)
        .collect();
    let back = hints_from_targets(objective, rule, dgf, &prefix, &targets, weights)?;
    let round_trip_error = induced
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).amax() / a.amax().max(1.0))
        .fold(0.0, f64::max);
    Ok(IsomorphismReport {
        horizon,
        round_trip_error,
        max_w_gap,
        max_x_gap,
    })
}

#[cfg(test)]
mod tests;
