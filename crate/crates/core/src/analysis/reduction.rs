//! Certificates that meta-learning with `φ(x, w) = w` reproduces classical
//! momentum methods.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::rates::{fit_rate, sample_curve, RateFit};
use crate::drivers::{run_convex, run_optimistic, ConvexOptions, Trajectory, WeightSchedule};
use crate::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use crate::optimism_bmg::HintPolicy;
use crate::problems::Objective;
use crate::update_rules::UpdateRule;
use crate::{Error, Result, Vector};

pub const RECURSION_TOLERANCE: f64 = 1e-9;
pub const MOMENTUM_TOLERANCE: f64 = 1e-10;
pub const NESTEROV_MIN_EXPONENT: f64 = 1.8;
/// Horizons the Nesterov exponent is fitted over.
pub const NESTEROV_GRID: [usize; 5] = [25, 50, 100, 200, 400];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    HeavyBall,
    Nesterov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCertificate {
    pub kind: ReductionKind,
    /// Step of `residuals[0]`.
    pub first_step: usize,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Heavy Ball: `ρ̃_t` from the recorded averaging weights.
    pub rho_tilde: Vec<f64>,
    /// Heavy Ball: `β̃_t` closed form used in the residuals.
    pub beta_tilde: Vec<f64>,
    /// Heavy Ball: per-step least-squares solution for `(ρ̃_t, β̃_t)`; NaN when
    /// the two directions are (numerically) parallel.
    pub fitted_rho: Vec<f64>,
    pub fitted_beta: Vec<f64>,
    pub max_rho_error: f64,
    /// Heavy Ball: largest residual when `β̃_t = t/(4(t+1)L)` is used instead.
    pub printed_form_residual: Option<f64>,
    /// Nesterov: fitted exponent of the gap curve.
    pub rate: Option<RateFit>,
    pub failure: Option<String>,
    pub passed: bool,
}

impl ReductionCertificate {
    fn new(kind: ReductionKind, first_step: usize) -> Self {
        Self {
            kind,
            first_step,
            residuals: Vec::new(),
            max_residual: 0.0,
            rho_tilde: Vec::new(),
            beta_tilde: Vec::new(),
            fitted_rho: Vec::new(),
            fitted_beta: Vec::new(),
            max_rho_error: 0.0,
            printed_form_residual: None,
            rate: None,
            failure: None,
            passed: false,
        }
    }

    fn push_residual(&mut self, t: usize, r: f64) {
        self.max_residual = self.max_residual.max(r);
        if !(r <= RECURSION_TOLERANCE) && self.failure.is_none() {
            self.failure = Some(format!("step {t}: recursion residual {r:e}"));
        }
        self.residuals.push(r);
    }
}

/// `ρ̃_t = (t−2)/(t+1)` under `α_t = t`.
pub fn heavy_ball_momentum(t: usize) -> f64 {
    let tf = t as f64;
    (tf - 2.0) / (tf + 1.0)
}

/// `β̃_t = 2(t−1)β/(t+1)` under `α_t = t` and constant `β`.
pub fn heavy_ball_step(t: usize, beta: f64) -> f64 {
    let tf = t as f64;
    2.0 * (tf - 1.0) * beta / (tf + 1.0)
}

/// Least squares for `Δ = ρ̃ d − β̃ g`.
fn fit_two(delta: &Vector, d: &Vector, g: &Vector) -> (f64, f64) {
    let m = Matrix2::new(d.dot(d), -d.dot(g), -d.dot(g), g.dot(g));
    let rhs = Vector2::new(d.dot(delta), -g.dot(delta));
    let scale = m.norm();
    match m.try_inverse() {
        Some(inv) if scale > 0.0 && m.determinant().abs() > 1e-10 * scale * scale => {
            let s = inv * rhs;
            (s[0], s[1])
        }
        _ => (f64::NAN, f64::NAN),
    }
}

fn smoothness(objective: &dyn Objective) -> Result<f64> {
    objective
        .smoothness()
        .ok_or_else(|| Error::InvalidArgument("the objective has no known smoothness constant".into()))
}

/// Runs the direct rule with `α_t = t`, constant `β` and an unconstrained
/// meta-learner centred at `w₁`, then checks every step `t ≥ 2` against
/// `x̄_t = x̄_{t−1} + ρ̃_t(x̄_{t−1} − x̄_{t−2}) − β̃_t∇f(x̄_{t−1})`.
pub fn certify_heavy_ball_reduction(
    objective: &dyn Objective,
    beta: f64,
    horizon: usize,
    x0: &Vector,
    w1: &Vector,
) -> Result<(ReductionCertificate, Trajectory)> {
    let n = objective.dim();
    let meta = MetaLearnerState::with_center(
        ConstraintSet::unconstrained(n),
        BetaSchedule::constant(beta),
        w1.clone(),
    )?;
    let traj = run_convex(
        objective,
        &UpdateRule::direct(n),
        WeightSchedule::Linear,
        meta,
        horizon,
        x0,
        w1,
        &ConvexOptions::default(),
    )?;
    let cert = heavy_ball_certificate(&traj, beta, objective.smoothness());
    Ok((cert, traj))
}

/// The Heavy-Ball checks on an existing direct-rule trajectory.
pub fn heavy_ball_certificate(traj: &Trajectory, beta: f64, smoothness: Option<f64>) -> ReductionCertificate {
    let mut cert = ReductionCertificate::new(ReductionKind::HeavyBall, 2);
    let mut printed = smoothness.map(|_| 0.0f64);
    for t in 2..=traj.len() {
        let (rho, rho_prev) = (traj.record(t).rho, traj.record(t - 1).rho);
        let measured = rho * (1.0 - rho_prev) / rho_prev;
        let closed = heavy_ball_momentum(t);
        let err = (measured - closed).abs();
        cert.max_rho_error = cert.max_rho_error.max(err);
        if !(err <= MOMENTUM_TOLERANCE) && cert.failure.is_none() {
            cert.failure = Some(format!("step {t}: momentum {measured} differs from {closed}"));
        }
        let bt = heavy_ball_step(t, beta);
        let d = traj.xbar(t - 1) - traj.xbar(t - 2);
        let g = traj.grad_at(t - 1);
        let delta = traj.xbar(t) - traj.xbar(t - 1);
        cert.push_residual(t, (&delta - &d * closed + g * bt).norm());
        if let (Some(p), Some(l)) = (printed.as_mut(), smoothness) {
            let tf = t as f64;
            let alt = tf / (4.0 * (tf + 1.0) * l);
            *p = p.max((&delta - &d * closed + g * alt).norm());
        }
        let (fr, fb) = fit_two(&delta, &d, g);
        cert.rho_tilde.push(measured);
        cert.beta_tilde.push(bt);
        cert.fitted_rho.push(fr);
        cert.fitted_beta.push(fb);
    }
    cert.printed_form_residual = printed;
    cert.passed = cert.failure.is_none();
    cert
}

/// Runs the direct rule with gradient hints `g̃_{t+1} = ∇f(x̄_t)`, `α_t = t`
/// and `β_t = (t−1)/(2tλ̃L)`, then checks
/// `w_{t+1} − c = (β_t/β_{t−1})(w_t − c) − β_t(α_{t+1}g̃_{t+1} + α_t(g_t − g̃_t))`
/// for `t ≥ 3` (the ratio is undefined while `β_{t−1} = 0`) and fits the
/// gap exponent over [`NESTEROV_GRID`].
///
/// The schedule does not depend on the horizon, so the gaps at every grid
/// point are read off one run of the largest horizon.
pub fn certify_nesterov_reduction(
    objective: &dyn Objective,
    lambda_tilde: f64,
    grid: &[usize],
    x0: &Vector,
    w1: &Vector,
) -> Result<(ReductionCertificate, Trajectory)> {
    let n = objective.dim();
    let l = smoothness(objective)?;
    let horizon = grid
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty horizon grid".into()))?;
    let schedule = BetaSchedule::accelerated(lambda_tilde, l);
    let meta = MetaLearnerState::with_center(ConstraintSet::unconstrained(n), schedule, w1.clone())?;
    let traj = run_optimistic(
        objective,
        &UpdateRule::direct(n),
        WeightSchedule::Linear,
        meta,
        &mut HintPolicy::PrevGradient,
        horizon,
        x0,
        w1,
        &ConvexOptions::default(),
    )?;

    let mut cert = ReductionCertificate::new(ReductionKind::Nesterov, 3);
    let ws = traj.ws();
    let c = &traj.center;
    for t in 3..=traj.len() {
        let r = traj.record(t);
        let (b, b_prev) = (schedule.value(t), schedule.value(t - 1));
        let (a, an) = (traj.weights.alpha(t), traj.weights.alpha(t + 1));
        let (hint, next_hint) = (r.hint.as_ref().unwrap(), r.next_hint.as_ref().unwrap());
        let pred = c + (&ws[t - 1] - c) * (b / b_prev) - (next_hint * an + (&r.meta_grad - hint) * a) * b;
        cert.push_residual(t, (&ws[t] - pred).norm());
    }

    let gaps = sample_curve(&traj.gaps(), grid)?;
    if gaps.iter().all(|&g| g == 0.0) {
        // Started at the optimum: nothing to fit.
    } else {
        let ts: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
        let fit = fit_rate(&ts, &gaps)?;
        if !(fit.exponent >= NESTEROV_MIN_EXPONENT) && cert.failure.is_none() {
            cert.failure = Some(format!(
                "rate exponent {:.3} below {NESTEROV_MIN_EXPONENT}",
                fit.exponent
            ));
        }
        cert.rate = Some(fit);
    }
    cert.passed = cert.failure.is_none();
    Ok((cert, traj))
}
