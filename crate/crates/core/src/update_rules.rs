//! Update rules `φ(x, w)` and their Jacobian-transpose products `Dφ(x, w)ᵀv`.
//!
//! Jacobians are with respect to `w` and coded analytically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::meta_learner::ConstraintSet;
use crate::problems::Objective;
use crate::{check_dim, check_finite, Error, Result, Vector};

/// Default floor applied to `w` before `√w` in the AdaGrad-style rule.
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `φ(x, w) = w`
    Direct,
    /// `φ(x, w) = w ⊙ ∇f(x)`
    ElementwiseLr,
    /// `φ(x, w) = ∇f(x) / √max(w, ε)`
    AdagradStyle,
    /// `φ(x, w) = −η∇f(x)`, independent of `w`
    PlainGradient,
}

/// A rule family together with its dimensions.
///
/// `scale` multiplies the output of `φ` (and therefore its Jacobian). It is 1
/// for the rules as written; practical drivers that treat `φ` as a descent
/// increment use a negative scale, e.g. `−lr · w ⊙ ∇f`.
///
/// With `residual` set the rule returns `x + scale·φ(x, w)`. The averaged
/// drivers use `φ` as the next iterate, so an increment rule such as
/// `−η∇f` needs the residual form to become gradient descent there. The
/// Jacobian with respect to `w` is unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub kind: RuleKind,
    pub param_dim: usize,
    pub meta_dim: usize,
    pub scale: f64,
    pub fixed_step: Option<f64>,
    pub epsilon_floor: f64,
    #[serde(default)]
    pub residual: bool,
}

impl UpdateRule {
    fn base(kind: RuleKind, n: usize) -> Self {
        Self {
            kind,
            param_dim: n,
            meta_dim: n,
            scale: 1.0,
            fixed_step: None,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            residual: false,
        }
    }

    pub fn direct(n: usize) -> Self {
        Self::base(RuleKind::Direct, n)
    }

    pub fn elementwise_lr(n: usize) -> Self {
        Self::base(RuleKind::ElementwiseLr, n)
    }

    pub fn adagrad_style(n: usize) -> Self {
        Self::base(RuleKind::AdagradStyle, n)
    }

    pub fn plain_gradient(n: usize, eta: f64) -> Self {
        Self {
            fixed_step: Some(eta),
            ..Self::base(RuleKind::PlainGradient, n)
        }
    }

    pub fn new(kind: RuleKind, n: usize) -> Self {
        match kind {
            RuleKind::PlainGradient => Self::plain_gradient(n, 0.1),
            k => Self::base(k, n),
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn residual(mut self) -> Self {
        self.residual = true;
        self
    }

    pub fn with_epsilon_floor(mut self, eps: f64) -> Self {
        self.epsilon_floor = eps;
        self
    }

    /// Whether `w ↦ φ(x, w)` is affine, the structural assumption behind the bounds.
    pub fn affine_in_w(&self) -> bool {
        !matches!(self.kind, RuleKind::AdagradStyle)
    }

    fn check(&self, objective: &dyn Objective, x: &Vector, w: &Vector) -> Result<()> {
        if objective.dim() != self.param_dim {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim,
                got: objective.dim(),
            });
        }
        check_dim(self.param_dim, x)?;
        check_dim(self.meta_dim, w)?;
        check_finite("rule input x", x)?;
        check_finite("rule input w", w)
    }

    fn floored(&self, w: &Vector) -> Vector {
        w.map(|wi| wi.max(self.epsilon_floor))
    }

    /// `φ(x, w)`.
    pub fn apply(&self, objective: &dyn Objective, x: &Vector, w: &Vector) -> Result<Vector> {
        self.check(objective, x, w)?;
        let out = match self.kind {
            RuleKind::Direct => w.clone(),
            RuleKind::ElementwiseLr => w.component_mul(&objective.gradient(x)?),
            RuleKind::AdagradStyle => {
                let g = objective.gradient(x)?;
                g.component_div(&self.floored(w).map(f64::sqrt))
            }
            RuleKind::PlainGradient => objective.gradient(x)? * -self.fixed_step.unwrap_or(0.0),
        };
        let out = out * self.scale;
        Ok(if self.residual { out + x } else { out })
    }

    /// `Dφ(x, w)ᵀ v`, an `m`-vector.
    pub fn jtvp(&self, objective: &dyn Objective, x: &Vector, w: &Vector, v: &Vector) -> Result<Vector> {
        self.check(objective, x, w)?;
        check_dim(self.param_dim, v)?;
        check_finite("cotangent v", v)?;
        let out = match self.kind {
            RuleKind::Direct => v.clone(),
            RuleKind::ElementwiseLr => objective.gradient(x)?.component_mul(v),
            RuleKind::AdagradStyle => {
                let g = objective.gradient(x)?;
                let wf = self.floored(w);
                Vector::from_fn(self.meta_dim, |i, _| -0.5 * g[i] * v[i] * wf[i].powf(-1.5))
            }
            RuleKind::PlainGradient => Vector::zeros(self.meta_dim),
        };
        Ok(out * self.scale)
    }
}

/// `Dφ(x, w)ᵀ v` by central differences of `⟨φ(x, ·), v⟩` with step `h`.
pub fn finite_difference_jtvp(
    rule: &UpdateRule,
    objective: &dyn Objective,
    x: &Vector,
    w: &Vector,
    v: &Vector,
    h: f64,
) -> Result<Vector> {
    let mut out = Vector::zeros(rule.meta_dim);
    for i in 0..rule.meta_dim {
        let mut up = w.clone();
        let mut down = w.clone();
        up[i] += h;
        down[i] -= h;
        let diff = rule.apply(objective, x, &up)? - rule.apply(objective, x, &down)?;
        out[i] = diff.dot(v) / (2.0 * h);
    }
    Ok(out)
}

/// Empirical `λ`: the largest `‖Dφ(x,w)ᵀ∇f(x)‖² / ‖∇f(x)‖²` over random samples,
/// with `x` uniform in the box `[−x_radius, x_radius]ⁿ` and `w` drawn from
/// `w_region`. Samples with a zero gradient are skipped.
///
/// This is a lower estimate of the supremum.
pub fn estimate_lambda(
    rule: &UpdateRule,
    objective: &dyn Objective,
    sample_count: usize,
    w_region: &ConstraintSet,
    x_radius: f64,
    seed: u64,
) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rule.param_dim;
    let mut best: Option<f64> = None;
    for _ in 0..sample_count {
        let x = Vector::from_fn(n, |_, _| rng.random_range(-x_radius..=x_radius));
        let w = w_region.sample(&mut rng);
        let g = objective.gradient(&x)?;
        let denom = g.norm_squared();
        if denom == 0.0 {
            continue;
        }
        let ratio = rule.jtvp(objective, &x, &w, &g)?.norm_squared() / denom;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::ZeroGradients)
}
