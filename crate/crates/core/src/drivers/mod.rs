//! Learner / meta-learner co-evolution loops.
//!
//! * [`run_convex`]: averaged iterates with an FTRL meta-learner.
//! * [`run_optimistic`]: the same with an optimistic (hinted) meta-learner.
//! * [`run_practical`]: no averaging, `x_t = x_{t−1} + φ(x_{t−1}, w_t)`, gradient meta-steps.
//! * [`run_bmg`]: practical learner with bootstrapped targets and a Bregman matching loss.

mod trajectory;

pub use trajectory::{read_csv, CsvRow, DriverKind, StepRecord, Trajectory, WeightSchedule, CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::meta_learner::{BetaSchedule, MetaLearnerState};
use crate::optimism_bmg::{BmgContext, DistanceGenerator, HintContext, HintSource, TargetOracle};
use crate::problems::Objective;
use crate::update_rules::{RuleKind, UpdateRule};
use crate::{check_dim, Error, Result, Vector, DIVERGENCE_LIMIT};

/// Options shared by the averaged drivers.
#[derive(Debug, Clone, Default)]
pub struct ConvexOptions {
    /// Multiply `g_t` by `ρ_t`, as the chain rule through the averaging step would.
    pub chain_rule_rho: bool,
    /// Comparator for the `R^w` ledger. Defaults to `x*` for the direct rule
    /// when the minimizer is known; otherwise the ledger is NaN.
    pub comparator: Option<Vector>,
}

pub(crate) fn guard(step: usize, what: &'static str, v: &Vector) -> Result<()> {
    let norm = v.norm();
    if norm <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::Diverged { step, what, norm })
    }
}

fn check_setup(objective: &dyn Objective, rule: &UpdateRule, horizon: usize, x0: &Vector, w1: &Vector) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_dim(rule.param_dim, x0)?;
    check_dim(rule.meta_dim, w1)?;
    if objective.dim() != rule.param_dim {
        return Err(Error::DimensionMismatch {
            expected: rule.param_dim,
            got: objective.dim(),
        });
    }
    Ok(())
}

/// Drivers that add `φ` to the previous iterate need the increment form.
pub(crate) fn reject_residual(rule: &UpdateRule) -> Result<()> {
    if rule.residual {
        return Err(Error::InvalidArgument(
            "this driver adds φ to the iterate; pass the rule without the residual form".into(),
        ));
    }
    Ok(())
}

fn default_comparator(objective: &dyn Objective, rule: &UpdateRule, explicit: Option<Vector>) -> Option<Vector> {
    explicit.or_else(|| match rule.kind {
        RuleKind::Direct => objective.minimizer(),
        _ => None,
    })
}

fn inner_or_nan(a: &Vector, b: Option<&Vector>, x: &Vector) -> f64 {
    b.map_or(f64::NAN, |b| a.dot(&(x - b)))
}

/// Averaged meta-learning with an FTRL meta-learner.
///
/// `x_t = φ(x̄_{t−1}, w_t)`, `x̄_t = (1−ρ_t)x̄_{t−1} + ρ_t x_t`,
/// `g_t = Dφ(x̄_{t−1}, w_t)ᵀ∇f(x̄_t)`, `w_{t+1} = P_𝒲(c − β_t Σ α_s g_s)`.
#[allow(clippy::too_many_arguments)]
pub fn run_convex(
    objective: &dyn Objective,
    rule: &UpdateRule,
    weights: WeightSchedule,
    meta: MetaLearnerState,
    horizon: usize,
    xbar0: &Vector,
    w1: &Vector,
    options: &ConvexOptions,
) -> Result<Trajectory> {
    run_averaged(objective, rule, weights, meta, None, horizon, xbar0, w1, options)
}

/// Averaged meta-learning with an optimistic meta-learner:
/// `w_{t+1} = P_𝒲(c − β_t(α_{t+1}g̃_{t+1} + Σ α_s g_s))`, `g̃₁ = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_optimistic(
    objective: &dyn Objective,
    rule: &UpdateRule,
    weights: WeightSchedule,
    meta: MetaLearnerState,
    hints: &mut dyn HintSource,
    horizon: usize,
    xbar0: &Vector,
    w1: &Vector,
    options: &ConvexOptions,
) -> Result<Trajectory> {
    run_averaged(objective, rule, weights, meta, Some(hints), horizon, xbar0, w1, options)
}

#[allow(clippy::too_many_arguments)]
fn run_averaged(
    objective: &dyn Objective,
    rule: &UpdateRule,
    weights: WeightSchedule,
    mut meta: MetaLearnerState,
    mut hints: Option<&mut dyn HintSource>,
    horizon: usize,
    xbar0: &Vector,
    w1: &Vector,
    options: &ConvexOptions,
) -> Result<Trajectory> {
    check_setup(objective, rule, horizon, xbar0, w1)?;
    check_dim(rule.meta_dim, meta.center())?;
    let xstar = objective.minimizer();
    let comparator = default_comparator(objective, rule, options.comparator.clone());
    let grad0 = objective.gradient(xbar0)?;
    let mut xbar_prev = xbar0.clone();
    let mut grad_prev = grad0.clone();
    let mut w = w1.clone();
    let mut hint = Vector::zeros(rule.meta_dim);
    let (mut regret_x, mut regret_w) = (0.0, 0.0);
    let mut records = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let alpha = weights.alpha(t);
        let rho = weights.rho(t);
        let x = rule.apply(objective, &xbar_prev, &w)?;
        let xbar = &xbar_prev * (1.0 - rho) + &x * rho;
        guard(t, "averaged iterate", &xbar)?;
        let grad = objective.gradient(&xbar)?;
        let mut g = rule.jtvp(objective, &xbar_prev, &w, &grad)?;
        if options.chain_rule_rho {
            g *= rho;
        }
        regret_x += alpha * inner_or_nan(&grad, xstar.as_ref(), &x);
        regret_w += alpha * inner_or_nan(&g, comparator.as_ref(), &w);
        let beta = meta.beta(t);

        let (w_next, next_hint) = match hints.as_mut() {
            None => (meta.ftrl_step(&g, alpha)?, None),
            Some(h) => {
                let ctx = HintContext {
                    t,
                    objective,
                    rule,
                    weights,
                    xbar_prev: &xbar_prev,
                    xbar: &xbar,
                    w: &w,
                    grad: &grad,
                    grad_prev: &grad_prev,
                    meta_grad: &g,
                    hint: &hint,
                };
                let nh = h.next_hint(&ctx)?;
                check_dim(rule.meta_dim, &nh)?;
                (meta.aoftrl_step(&g, &nh, alpha, weights.alpha(t + 1))?, Some(nh))
            }
        };

        records.push(StepRecord {
            t,
            alpha,
            rho,
            beta,
            f_x: objective.value(&x)?,
            f_xbar: objective.value(&xbar)?,
            x,
            xbar: xbar.clone(),
            w: w.clone(),
            grad: grad.clone(),
            meta_grad: g,
            hint: next_hint.as_ref().map(|_| hint.clone()),
            next_hint: next_hint.clone(),
            target: None,
            regret_x,
            regret_w,
        });
        if let Some(nh) = next_hint {
            hint = nh;
        }
        xbar_prev = xbar;
        grad_prev = grad;
        w = w_next;
    }

    Ok(Trajectory {
        driver: if hints.is_some() {
            DriverKind::Optimistic
        } else {
            DriverKind::Convex
        },
        weights,
        schedule: Some(meta.schedule),
        chain_rule_rho: options.chain_rule_rho,
        center: meta.center().clone(),
        x0: xbar0.clone(),
        grad0,
        w_final: w,
        minimizer: xstar,
        min_value: objective.min_value(),
        comparator,
        records,
    })
}

/// Placement of `β` in the optimistic practical meta-update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimisticForm {
    /// `w − β J_tᵀ(g_t + g_{t−1}) − J_{t−1}ᵀ g_{t−1}`: the correction carries no `β`.
    #[default]
    AsPrinted,
    /// `w − β[J_tᵀ(g_t + g_{t−1}) − J_{t−1}ᵀ g_{t−1}]`.
    BetaScaled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PracticalOptions {
    pub optimistic: bool,
    /// Clamp `w` at zero after every meta-step.
    pub nonneg_w: bool,
    pub form: OptimisticForm,
}

/// Practical meta-learning without averaging.
///
/// `x_t = x_{t−1} + φ(x_{t−1}, w_t)` and, with `J_k = Dφ(x_k, ·)`, `g_k = ∇f(x_k)`:
///
/// * standard: `w_{t+1} = w_t − β_t J_{t−1}ᵀ g_t`
/// * optimistic: see [`OptimisticForm`].
///
/// For `φ = w ⊙ ∇f` these are the closed-form element-wise updates
/// `w − β ∇f(x_{t−1}) ⊙ ∇f(x_t)` and
/// `w − β ∇f(x_t) ⊙ (∇f(x_t) + ∇f(x_{t−1})) − ∇f(x_{t−1}) ⊙ ∇f(x_{t−1})`.
pub fn run_practical(
    objective: &dyn Objective,
    rule: &UpdateRule,
    schedule: BetaSchedule,
    horizon: usize,
    x0: &Vector,
    w1: &Vector,
    options: PracticalOptions,
) -> Result<Trajectory> {
    check_setup(objective, rule, horizon, x0, w1)?;
    reject_residual(rule)?;
    let xstar = objective.minimizer();
    let grad0 = objective.gradient(x0)?;
    let mut x_prev = x0.clone();
    let mut grad_prev = grad0.clone();
    let mut w = w1.clone();
    let mut regret_x = 0.0;
    let mut records = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let beta = schedule.value(t);
        let x = &x_prev + rule.apply(objective, &x_prev, &w)?;
        guard(t, "iterate", &x)?;
        let grad = objective.gradient(&x)?;
        let meta_grad = rule.jtvp(objective, &x_prev, &w, &grad)?;
        let mut w_next = if options.optimistic {
            let bmg = rule.jtvp(objective, &x, &w, &(&grad + &grad_prev))?;
            let corr = rule.jtvp(objective, &x_prev, &w, &grad_prev)?;
            match options.form {
                OptimisticForm::AsPrinted => &w - bmg * beta - corr,
                OptimisticForm::BetaScaled => &w - (bmg - corr) * beta,
            }
        } else {
            &w - &meta_grad * beta
        };
        if options.nonneg_w {
            w_next.apply(|c| *c = c.max(0.0));
        }
        guard(t, "meta-parameters", &w_next)?;
        regret_x += inner_or_nan(&grad, xstar.as_ref(), &x);
        let f_x = objective.value(&x)?;
        records.push(StepRecord {
            t,
            alpha: 1.0,
            rho: 1.0,
            beta,
            f_x,
            f_xbar: f_x,
            xbar: x.clone(),
            x: x.clone(),
            w: w.clone(),
            grad: grad.clone(),
            meta_grad,
            hint: None,
            next_hint: None,
            target: None,
            regret_x,
            regret_w: f64::NAN,
        });
        x_prev = x;
        grad_prev = grad;
        w = w_next;
    }

    Ok(Trajectory {
        driver: if options.optimistic {
            DriverKind::PracticalOptimistic
        } else {
            DriverKind::Practical
        },
        weights: WeightSchedule::ConstantOne,
        schedule: Some(schedule),
        chain_rule_rho: false,
        center: w1.clone(),
        x0: x0.clone(),
        grad0,
        w_final: w,
        minimizer: xstar,
        min_value: objective.min_value(),
        comparator: None,
        records,
    })
}

/// Bootstrapped meta-gradients on the practical learner:
/// `w_{t+1} = w_t − β_t Dφ(x_{t−1}, w_t)ᵀ(∇μ(x_t) − ∇μ(z_t))`.
#[allow(clippy::too_many_arguments)]
pub fn run_bmg(
    objective: &dyn Objective,
    rule: &UpdateRule,
    oracle: &mut dyn TargetOracle,
    dgf: &DistanceGenerator,
    schedule: BetaSchedule,
    horizon: usize,
    x0: &Vector,
    w1: &Vector,
) -> Result<Trajectory> {
    check_setup(objective, rule, horizon, x0, w1)?;
    reject_residual(rule)?;
    if dgf.dim().is_some_and(|d| d != rule.param_dim) {
        return Err(Error::DimensionMismatch {
            expected: rule.param_dim,
            got: dgf.dim().unwrap_or(0),
        });
    }
    let xstar = objective.minimizer();
    let grad0 = objective.gradient(x0)?;
    let mut x_prev = x0.clone();
    let mut w = w1.clone();
    let mut regret_x = 0.0;
    let mut records = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let beta = schedule.value(t);
        let x = &x_prev + rule.apply(objective, &x_prev, &w)?;
        guard(t, "iterate", &x)?;
        let grad = objective.gradient(&x)?;
        let ctx = BmgContext {
            t,
            objective,
            rule,
            x_prev: &x_prev,
            x: &x,
            w: &w,
            grad: &grad,
        };
        let target = oracle.target(&ctx)?;
        check_dim(rule.param_dim, &target.z)?;
        let direction = dgf.grad(&x)? - dgf.grad(&target.z)?;
        let w_next = &w - rule.jtvp(objective, &x_prev, &w, &direction)? * beta;
        guard(t, "meta-parameters", &w_next)?;
        regret_x += inner_or_nan(&grad, xstar.as_ref(), &x);
        let f_x = objective.value(&x)?;
        records.push(StepRecord {
            t,
            alpha: 1.0,
            rho: 1.0,
            beta,
            f_x,
            f_xbar: f_x,
            xbar: x.clone(),
            x: x.clone(),
            w: w.clone(),
            meta_grad: rule.jtvp(objective, &x_prev, &w, &grad)?,
            grad,
            hint: None,
            next_hint: None,
            target: Some(target.z),
            regret_x,
            regret_w: f64::NAN,
        });
        x_prev = x;
        w = w_next;
    }

    Ok(Trajectory {
        driver: DriverKind::Bmg,
        weights: WeightSchedule::ConstantOne,
        schedule: Some(schedule),
        chain_rule_rho: false,
        center: w1.clone(),
        x0: x0.clone(),
        grad0,
        w_final: w,
        minimizer: xstar,
        min_value: objective.min_value(),
        comparator: None,
        records,
    })
}

#[cfg(test)]
mod tests;
