//! Convergence-bound checks for the averaged drivers.
//!
//! `λ` and `λ̃` are empirical maxima over sampled points or over the run
//! itself, so a passing report is a necessary condition for the bound, not a
//! proof of it.

use serde::{Deserialize, Serialize};

use crate::drivers::{DriverKind, Trajectory, WeightSchedule};
use crate::meta_learner::{BetaSchedule, ConstraintSet};
use crate::update_rules::UpdateRule;
use crate::{Error, Result, Vector};

/// Slack allowed before a bound counts as violated.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Estimated,
    Configured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn estimated(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Estimated,
        }
    }

    pub fn configured(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Configured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `λL·D/T` for FTRL meta-learning with unit weights.
    MetaGradient,
    /// `4λ̃L·D/(T²−1)` for optimistic meta-learning with linear weights.
    OptimisticMetaGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Pass,
    Fail,
    /// The run does not meet the bound's preconditions.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub status: BoundStatus,
    pub note: Option<String>,
    /// The bound with `diam(𝒲)`.
    pub bound: f64,
    /// The bound with `‖w* − c‖²` in place of `diam(𝒲)`.
    pub comparator_bound: f64,
    /// The bound before dropping the negative gradient terms.
    pub full_bound: f64,
    pub gap: f64,
    pub margin: f64,
    pub lambda: Constant,
    pub smoothness: f64,
    pub diameter: f64,
    /// `‖w* − c‖²` for the comparator `w*` and regulariser centre `c`.
    pub comparator_distance_sq: f64,
    /// Whether `‖w* − c‖² ≤ diam(𝒲)`, the convention that turns the
    /// comparator bound into the diameter bound.
    pub diameter_convention_holds: bool,
    pub horizon: usize,
    pub schedule: Option<BetaSchedule>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.status == BoundStatus::Pass
    }
}

/// `λL·D/T`.
pub fn meta_gradient_bound(lambda: f64, smoothness: f64, diameter: f64, horizon: usize) -> f64 {
    lambda * smoothness * diameter / horizon as f64
}

/// `4λ̃L·D/(T²−1)`; undefined for `T = 1`.
pub fn optimistic_bound(lambda_tilde: f64, smoothness: f64, diameter: f64, horizon: usize) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::InvalidArgument("the optimistic bound needs T ≥ 2".into()));
    }
    let t = horizon as f64;
    Ok(4.0 * lambda_tilde * smoothness * diameter / (t * t - 1.0))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

struct Common {
    gap: f64,
    dist_sq: f64,
    diameter: f64,
}

fn common(traj: &Trajectory, constraint: &ConstraintSet) -> std::result::Result<Common, String> {
    if traj.is_empty() {
        return Err("empty trajectory".into());
    }
    let Some(comparator) = traj.comparator.clone() else {
        return Err("the run has no comparator".into());
    };
    if traj.minimizer.is_none() {
        return Err("the objective's minimiser is unknown".into());
    }
    if !constraint.contains(&comparator, 1e-12) {
        return Err("the comparator lies outside 𝒲".into());
    }
    let dist_sq = (&comparator - &traj.center).norm_squared();
    let diameter = constraint.diameter_for(&(&comparator - &traj.center));
    Ok(Common {
        gap: traj.final_gap(),
        dist_sq,
        diameter,
    })
}

fn not_applicable(kind: BoundKind, traj: &Trajectory, lambda: Constant, smoothness: f64, why: String) -> BoundReport {
    BoundReport {
        kind,
        status: BoundStatus::NotApplicable,
        note: Some(why),
        bound: f64::NAN,
        comparator_bound: f64::NAN,
        full_bound: f64::NAN,
        gap: if traj.is_empty() { f64::NAN } else { traj.final_gap() },
        margin: f64::NAN,
        lambda,
        smoothness,
        diameter: f64::NAN,
        comparator_distance_sq: f64::NAN,
        diameter_convention_holds: false,
        horizon: traj.len(),
        schedule: traj.schedule,
    }
}

fn finish(mut r: BoundReport) -> BoundReport {
    r.margin = r.bound - r.gap;
    r.status = if r.margin >= -BOUND_SLACK {
        BoundStatus::Pass
    } else {
        BoundStatus::Fail
    };
    r
}

/// `f(x̄_T) − f(x*) ≤ λL·diam(𝒲)/T` for a non-optimistic averaged run with
/// `α_t = 1`, `β = 1/(λL)` and an affine rule. Any other run is reported as
/// not applicable.
pub fn check_bound_mg(
    traj: &Trajectory,
    rule: &UpdateRule,
    lambda: Constant,
    smoothness: f64,
    constraint: &ConstraintSet,
) -> BoundReport {
    let kind = BoundKind::MetaGradient;
    let na = |why: &str| not_applicable(kind, traj, lambda, smoothness, why.to_string());
    if traj.driver != DriverKind::Convex {
        return na("needs the non-optimistic averaged driver");
    }
    if traj.weights != WeightSchedule::ConstantOne {
        return na("needs α_t = 1");
    }
    if traj.chain_rule_rho {
        return na("needs meta-gradients without the ρ_t factor");
    }
    if !rule.affine_in_w() {
        return na("the update rule is not affine in w");
    }
    let beta = match traj.schedule {
        Some(BetaSchedule::Constant { value }) if close(value, 1.0 / (lambda.value * smoothness)) => value,
        Some(BetaSchedule::Constant { value }) => {
            return na(&format!(
                "β = {value:e} is not 1/(λL) = {:e}",
                1.0 / (lambda.value * smoothness)
            ))
        }
        _ => return na("needs a constant β"),
    };
    let c = match common(traj, constraint) {
        Ok(c) => c,
        Err(why) => return na(&why),
    };
    let t_total = traj.len();
    let mut sum = c.dist_sq / beta;
    for t in 1..=t_total {
        let g = traj.grad_at(t);
        let prev = traj.grad_at(t - 1);
        sum += lambda.value * beta / 2.0 * g.norm_squared()
            - g.norm_squared() / (2.0 * smoothness)
            - (t - 1) as f64 / (2.0 * smoothness) * (prev - g).norm_squared();
    }
    finish(BoundReport {
        kind,
        status: BoundStatus::Fail,
        note: None,
        bound: meta_gradient_bound(lambda.value, smoothness, c.diameter, t_total),
        comparator_bound: meta_gradient_bound(lambda.value, smoothness, c.dist_sq, t_total),
        full_bound: sum / t_total as f64,
        gap: c.gap,
        margin: f64::NAN,
        lambda,
        smoothness,
        diameter: c.diameter,
        comparator_distance_sq: c.dist_sq,
        diameter_convention_holds: c.dist_sq <= c.diameter,
        horizon: t_total,
        schedule: traj.schedule,
    })
}

/// `f(x̄_T) − f(x*) ≤ 4λ̃L·diam(𝒲)/(T²−1)` for an optimistic averaged run
/// with `α_t = t`, `β_t = (t−1)/(2tλ̃L)` and an affine rule.
///
/// `full_bound` uses the measured `‖g_t − g̃_t‖²` rather than `λ̃`.
pub fn check_bound_omg(
    traj: &Trajectory,
    rule: &UpdateRule,
    lambda_tilde: Constant,
    smoothness: f64,
    constraint: &ConstraintSet,
) -> Result<BoundReport> {
    if traj.len() == 1 {
        return Err(Error::InvalidArgument("the optimistic bound needs T ≥ 2".into()));
    }
    let kind = BoundKind::OptimisticMetaGradient;
    let na = |why: &str| Ok(not_applicable(kind, traj, lambda_tilde, smoothness, why.to_string()));
    if traj.driver != DriverKind::Optimistic {
        return na("needs the optimistic averaged driver");
    }
    if traj.weights != WeightSchedule::Linear {
        return na("needs α_t = t");
    }
    if traj.chain_rule_rho {
        return na("needs meta-gradients without the ρ_t factor");
    }
    if !rule.affine_in_w() {
        return na("the update rule is not affine in w");
    }
    let schedule = match traj.schedule {
        Some(
            s @ BetaSchedule::Accelerated {
                lambda_tilde: lt,
                smoothness: l,
            },
        ) if close(lt, lambda_tilde.value) && close(l, smoothness) => s,
        _ => return na("needs β_t = (t−1)/(2tλ̃L) with the reported λ̃ and L"),
    };
    let c = match common(traj, constraint) {
        Ok(c) => c,
        Err(why) => return na(&why),
    };
    let t_total = traj.len();
    let w = traj.weights;
    let mut sum = c.dist_sq / schedule.value(t_total);
    for t in 1..=t_total {
        let r = traj.record(t);
        let hint = r.hint.clone().unwrap_or_else(|| Vector::zeros(r.meta_grad.len()));
        let g = traj.grad_at(t);
        let prev = traj.grad_at(t - 1);
        sum += 0.5 * w.alpha(t).powi(2) * r.beta * (&r.meta_grad - hint).norm_squared()
            - w.alpha(t) / (2.0 * smoothness) * g.norm_squared()
            - w.prefix(t - 1) / (2.0 * smoothness) * (prev - g).norm_squared();
    }
    let a_total = w.prefix(t_total);
    Ok(finish(BoundReport {
        kind,
        status: BoundStatus::Fail,
        note: None,
        bound: optimistic_bound(lambda_tilde.value, smoothness, c.diameter, t_total)?,
        comparator_bound: c.dist_sq / (schedule.value(t_total) * a_total),
        full_bound: sum / a_total,
        gap: c.gap,
        margin: f64::NAN,
        lambda: lambda_tilde,
        smoothness,
        diameter: c.diameter,
        comparator_distance_sq: c.dist_sq,
        diameter_convention_holds: c.dist_sq <= c.diameter,
        horizon: t_total,
        schedule: traj.schedule,
    }))
}

/// Largest `‖g_t − g̃_t‖² / ‖∇f(x̄_t) − ∇f(x̄_{t−1})‖²` over steps `t ≥ 2`
/// that recorded a hint, skipping zero denominators.
pub fn estimate_lambda_tilde(traj: &Trajectory) -> Option<f64> {
    let mut best: Option<f64> = None;
    for t in 2..=traj.len() {
        let r = traj.record(t);
        let Some(hint) = &r.hint else { continue };
        let denom = (traj.grad_at(t) - traj.grad_at(t - 1)).norm_squared();
        if denom == 0.0 {
            continue;
        }
        let ratio = (&r.meta_grad - hint).norm_squared() / denom;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best
}

#[derive(Debug, Clone)]
pub struct Calibration {
    /// The `λ̃` the final run used.
    pub lambda_tilde: f64,
    /// The ratio measured on that run.
    pub measured: Option<f64>,
    pub rounds: usize,
    pub trajectory: Trajectory,
}

/// Fixed-point search for a `λ̃` that dominates the ratio measured on the
/// run it schedules: run with `λ̃`, measure, and rerun with the measurement
/// while it exceeds the value used (beyond a relative `1e-9`).
pub fn calibrate_lambda_tilde<F>(mut run: F, initial: f64, max_rounds: usize) -> Result<Calibration>
where
    F: FnMut(f64) -> Result<Trajectory>,
{
    if !(initial > 0.0 && initial.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial λ̃ must be positive, got {initial}"
        )));
    }
    let mut lambda = initial;
    for round in 1..=max_rounds.max(1) {
        let trajectory = run(lambda)?;
        let measured = estimate_lambda_tilde(&trajectory);
        match measured {
            Some(m) if m > lambda * (1.0 + 1e-9) && round < max_rounds => lambda = m,
            _ => {
                return Ok(Calibration {
                    lambda_tilde: lambda,
                    measured,
                    rounds: round,
                    trajectory,
                })
            }
        }
    }
    unreachable!()
}
