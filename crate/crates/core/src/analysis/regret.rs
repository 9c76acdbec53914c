//! Regret-side diagnostics for the averaged drivers: whether an update rule
//! preserves regret on a run, the FTRL regret bound, and the online-to-batch
//! inequality.

use serde::{Deserialize, Serialize};

use super::rates::{fit_rate, sample_curve, RateFit};
use crate::drivers::{DriverKind, Trajectory};
use crate::meta_learner::ConstraintSet;
use crate::problems::Objective;
use crate::update_rules::UpdateRule;
use crate::{Error, Result, Vector};

/// Absolute slack on the preserves-regret inequality, scaled by the size of
/// its right-hand side.
pub const PRESERVES_TOLERANCE: f64 = 1e-9;

/// Relative tolerance of the online-to-batch inequality.
pub const ONLINE_TO_BATCH_TOLERANCE: f64 = 1e-7;

fn require_averaged(traj: &Trajectory) -> Result<()> {
    match traj.driver {
        DriverKind::Convex | DriverKind::Optimistic => Ok(()),
        other => Err(Error::InvalidArgument(format!(
            "needs an averaged trajectory, got {other:?}"
        ))),
    }
}

fn require_minimizer(traj: &Trajectory) -> Result<&Vector> {
    traj.minimizer
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("the objective's minimiser is unknown".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreservesStatus {
    /// A witness `w ∈ 𝒲` was found.
    Certified,
    /// No `w ∈ 𝒲` can satisfy the inequality.
    Refuted,
    /// The search ran out of budget without a witness.
    NotCertified,
}

/// Outcome of the search for `w ∈ 𝒲` with
/// `Σ α_t⟨φ(x̄_{t−1}, w), ∇f(x̄_t)⟩ ≤ Σ α_t⟨x*, ∇f(x̄_t)⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservesRegret {
    pub status: PreservesStatus,
    /// Best point found; the witness when certified.
    pub witness: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `R^x(x*)` of the run.
    pub regret_x: f64,
    /// `R^w(witness)` recomputed from the recorded `w_t`.
    pub regret_w: f64,
    /// For affine rules `R^x(x*) ≤ R^w(w)` exactly when the inequality
    /// holds at `w`; this records whether the two sides agreed at the
    /// returned point. Always true for non-affine rules.
    pub regret_comparison_consistent: bool,
    pub iterations: usize,
}

fn lhs_at(traj: &Trajectory, objective: &dyn Objective, rule: &UpdateRule, w: &Vector) -> Result<f64> {
    let mut s = 0.0;
    for t in 1..=traj.len() {
        let phi = rule.apply(objective, traj.xbar(t - 1), w)?;
        s += traj.record(t).alpha * phi.dot(traj.grad_at(t));
    }
    Ok(s)
}

fn lhs_gradient(traj: &Trajectory, objective: &dyn Objective, rule: &UpdateRule, w: &Vector) -> Result<Vector> {
    let mut g = Vector::zeros(rule.meta_dim);
    for t in 1..=traj.len() {
        g += rule.jtvp(objective, traj.xbar(t - 1), w, traj.grad_at(t))? * traj.record(t).alpha;
    }
    Ok(g)
}

/// `argmin_{w ∈ 𝒲} ⟨c, w⟩`, or `None` when unbounded below.
fn linear_minimizer(constraint: &ConstraintSet, c: &Vector) -> Option<Vector> {
    match constraint {
        ConstraintSet::Ball { center, radius } => {
            let n = c.norm();
            Some(if n == 0.0 {
                center.clone()
            } else {
                center - c * (*radius / n)
            })
        }
        ConstraintSet::Box { lower, upper } => {
            let mut w = Vector::zeros(c.len());
            for i in 0..c.len() {
                w[i] = if c[i] > 0.0 {
                    lower[i]
                } else if c[i] < 0.0 {
                    upper[i]
                } else {
                    0f64.max(lower[i]).min(upper[i])
                };
                if !w[i].is_finite() {
                    return None;
                }
            }
            Some(w)
        }
        ConstraintSet::Unconstrained { .. } => {
            if c.iter().all(|&v| v == 0.0) {
                Some(Vector::zeros(c.len()))
            } else {
                None
            }
        }
    }
}

/// Searches for a meta-comparator that dominates `x*` along the run.
///
/// For rules affine in `w` the search is exact: the minimum of the left side
/// over `𝒲` decides feasibility, and the witness is the smallest multiple
/// `w(ν) = P_𝒲(−ν·c)` that works, found by bisection on `ν`. Other rules get
/// `budget` projected-gradient steps and can only be certified, not refuted.
pub fn certify_preserves_regret(
    traj: &Trajectory,
    objective: &dyn Objective,
    rule: &UpdateRule,
    constraint: &ConstraintSet,
    budget: usize,
) -> Result<PreservesRegret> {
    require_averaged(traj)?;
    let xstar = require_minimizer(traj)?;
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if constraint.dim() != rule.meta_dim {
        return Err(Error::DimensionMismatch {
            expected: rule.meta_dim,
            got: constraint.dim(),
        });
    }
    let rhs: f64 = (1..=traj.len())
        .map(|t| traj.record(t).alpha * xstar.dot(traj.grad_at(t)))
        .sum();
    let tol = PRESERVES_TOLERANCE * rhs.abs().max(1.0);

    let (status, witness, iterations) = if rule.affine_in_w() {
        let zero = Vector::zeros(rule.meta_dim);
        let offset = lhs_at(traj, objective, rule, &zero)?;
        let c = lhs_gradient(traj, objective, rule, &zero)?;
        let affine = |w: &Vector| offset + c.dot(w);
        match linear_minimizer(constraint, &c) {
            Some(best) if affine(&best) > rhs + tol => (PreservesStatus::Refuted, best, 0),
            _ => {
                let at = |nu: f64| constraint.project(&(&c * -nu));
                let mut hi = 1.0;
                let mut iterations = 0;
                while affine(&at(hi)) > rhs + tol && iterations < 200 {
                    hi *= 2.0;
                    iterations += 1;
                }
                let mut lo = 0.0;
                if affine(&at(lo)) <= rhs + tol {
                    hi = 0.0;
                } else {
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if affine(&at(mid)) <= rhs + tol {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        iterations += 1;
                    }
                }
                let w = at(hi);
                let status = if affine(&w) <= rhs + tol {
                    PreservesStatus::Certified
                } else {
                    PreservesStatus::NotCertified
                };
                (status, w, iterations)
            }
        }
    } else {
        let mut w = constraint.project(&traj.w_final);
        let mut value = lhs_at(traj, objective, rule, &w)?;
        let mut step = 1.0;
        let mut iterations = 0;
        while value > rhs + tol && iterations < budget {
            iterations += 1;
            let g = lhs_gradient(traj, objective, rule, &w)?;
            if g.norm() == 0.0 {
                break;
            }
            // Backtracking until the objective decreases.
            let mut moved = false;
            for _ in 0..60 {
                let cand = constraint.project(&(&w - &g * step));
                match lhs_at(traj, objective, rule, &cand) {
                    Ok(v) if v < value => {
                        w = cand;
                        value = v;
                        step *= 2.0;
                        moved = true;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !moved {
                break;
            }
        }
        let status = if value <= rhs + tol {
            PreservesStatus::Certified
        } else {
            PreservesStatus::NotCertified
        };
        (status, w, iterations)
    };

    let lhs = lhs_at(traj, objective, rule, &witness)?;
    let regret_x = traj.records.last().unwrap().regret_x;
    let mut regret_w = 0.0;
    for t in 1..=traj.len() {
        let r = traj.record(t);
        let g = rule.jtvp(objective, traj.xbar(t - 1), &r.w, traj.grad_at(t))?;
        regret_w += r.alpha * g.dot(&(&r.w - &witness));
    }
    let consistent = !rule.affine_in_w() || {
        let scale = regret_x.abs().max(regret_w.abs()).max(rhs.abs()).max(1.0);
        ((regret_x - regret_w) - (lhs - rhs)).abs() <= 1e-8 * scale
    };
    Ok(PreservesRegret {
        status,
        witness: witness.iter().copied().collect(),
        lhs,
        rhs,
        regret_x,
        regret_w,
        regret_comparison_consistent: consistent,
        iterations,
    })
}

/// `R^w(u)` against the FTRL regret bound
/// `‖u − c‖²/β_T + ½ Σ α_t²β_t ‖g_t − g̃_t‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCheck {
    pub regret: f64,
    pub bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Evaluates the FTRL regret bound at the comparator `u`, which must lie in
/// the run's feasible set.
///
/// The bound relies on `1/β_t` being non-decreasing; a schedule whose `β_t`
/// grows (the accelerated one) only satisfies it together with accurate hints.
pub fn ftrl_regret_check(traj: &Trajectory, comparator: &Vector) -> Result<RegretCheck> {
    require_averaged(traj)?;
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    crate::check_dim(traj.center.len(), comparator)?;
    let mut regret = 0.0;
    let mut stability = 0.0;
    for r in &traj.records {
        regret += r.alpha * r.meta_grad.dot(&(&r.w - comparator));
        let err = match &r.hint {
            Some(h) => (&r.meta_grad - h).norm_squared(),
            None => r.meta_grad.norm_squared(),
        };
        stability += 0.5 * r.alpha * r.alpha * r.beta * err;
    }
    let beta_t = traj.records.last().unwrap().beta;
    let bound = (comparator - &traj.center).norm_squared() / beta_t + stability;
    let slack = bound - regret;
    Ok(RegretCheck {
        regret,
        bound,
        slack,
        passed: slack >= -1e-9,
    })
}

/// The online-to-batch inequality
/// `α_{1:t}(f(x̄_t) − f(x*)) ≤ R^x_t − Σ_{s≤t} [α_s/(2L)‖∇f(x̄_s)‖² + α_{1:s−1}/(2L)‖∇f(x̄_{s−1}) − ∇f(x̄_s)‖²]`
/// checked at every prefix `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineToBatch {
    /// Smallest relative slack `(rhs − lhs)/max(1, |lhs|, |rhs|)` over prefixes.
    pub worst_slack: f64,
    pub worst_step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

pub fn online_to_batch_check(traj: &Trajectory, smoothness: f64) -> Result<OnlineToBatch> {
    require_averaged(traj)?;
    require_minimizer(traj)?;
    if traj.min_value.is_none() || traj.is_empty() {
        return Err(Error::InvalidArgument(
            "needs a non-empty run with a known optimum".into(),
        ));
    }
    if !(smoothness > 0.0) {
        return Err(Error::InvalidArgument("smoothness must be positive".into()));
    }
    let mut correction = 0.0;
    let mut alpha_sum = 0.0;
    let mut worst = (f64::INFINITY, 0, 0.0, 0.0);
    for t in 1..=traj.len() {
        let r = traj.record(t);
        let g = traj.grad_at(t);
        correction += r.alpha / (2.0 * smoothness) * g.norm_squared()
            + alpha_sum / (2.0 * smoothness) * (traj.grad_at(t - 1) - g).norm_squared();
        alpha_sum += r.alpha;
        let lhs = alpha_sum * traj.gap(t);
        let rhs = r.regret_x - correction;
        let slack = (rhs - lhs) / lhs.abs().max(rhs.abs()).max(1.0);
        if slack < worst.0 {
            worst = (slack, t, lhs, rhs);
        }
    }
    Ok(OnlineToBatch {
        worst_slack: worst.0,
        worst_step: worst.1,
        lhs: worst.2,
        rhs: worst.3,
        passed: worst.0 >= -ONLINE_TO_BATCH_TOLERANCE,
    })
}

/// The implication "if `‖g_t − g̃_t‖ ≤ λ̃‖∇f(x̄_t) − ∇f(x̄_{t−1})‖` for all
/// `t ≥ 2` then the gap decays at least like `T^{−min_exponent}`", checked on
/// one run read off at `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub lambda_tilde: f64,
    /// Largest `‖g_t − g̃_t‖ / ‖∇f(x̄_t) − ∇f(x̄_{t−1})‖`.
    pub max_ratio: f64,
    pub condition_holds: bool,
    pub rate: Option<RateFit>,
    pub min_exponent: f64,
    pub passed: bool,
}

pub fn predictor_check(
    traj: &Trajectory,
    lambda_tilde: f64,
    grid: &[usize],
    min_exponent: f64,
) -> Result<PredictorReport> {
    require_averaged(traj)?;
    let mut max_ratio: f64 = 0.0;
    let mut holds = true;
    for t in 2..=traj.len() {
        let r = traj.record(t);
        let err = match &r.hint {
            Some(h) => (&r.meta_grad - h).norm(),
            None => r.meta_grad.norm(),
        };
        let denom = (traj.grad_at(t) - traj.grad_at(t - 1)).norm();
        if err > lambda_tilde * denom * (1.0 + 1e-9) + 1e-300 {
            holds = false;
        }
        if denom > 0.0 {
            max_ratio = max_ratio.max(err / denom);
        } else if err > 0.0 {
            max_ratio = f64::INFINITY;
        }
    }
    let curve: Vec<f64> = (1..=traj.len()).map(|t| traj.gap(t)).collect();
    let gaps = sample_curve(&curve, grid)?;
    let ts: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
    let rate = if gaps.iter().all(|&g| g == 0.0) {
        None
    } else {
        Some(fit_rate(&ts, &gaps)?)
    };
    let fast = rate.as_ref().is_none_or(|r| r.exponent >= min_exponent);
    Ok(PredictorReport {
        lambda_tilde,
        max_ratio,
        condition_holds: holds,
        rate,
        min_exponent,
        passed: !holds || fast,
    })
}
