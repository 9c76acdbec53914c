//! Textbook first-order methods used as references.

use crate::drivers::{guard, DriverKind, StepRecord, Trajectory, WeightSchedule};
use crate::problems::Objective;
use crate::{check_dim, Error, Result, Vector};

/// Floor under the AdaGrad accumulator.
pub const ADAGRAD_EPSILON: f64 = 1e-8;

fn check(objective: &dyn Objective, step: f64, horizon: usize, x0: &Vector) -> Result<()> {
    check_dim(objective.dim(), x0)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

/// Wraps an iterate sequence `x_1..x_T` as a trajectory with `x̄_t = x_t`.
pub(crate) fn iterate_trajectory(objective: &dyn Objective, x0: &Vector, iterates: Vec<Vector>) -> Result<Trajectory> {
    let xstar = objective.minimizer();
    let mut regret_x = 0.0;
    let mut records = Vec::with_capacity(iterates.len());
    for (i, x) in iterates.into_iter().enumerate() {
        let grad = objective.gradient(&x)?;
        if let Some(s) = &xstar {
            regret_x += grad.dot(&(&x - s));
        } else {
            regret_x = f64::NAN;
        }
        let f_x = objective.value(&x)?;
        records.push(StepRecord {
            t: i + 1,
            alpha: 1.0,
            rho: 1.0,
            beta: 0.0,
            f_x,
            f_xbar: f_x,
            xbar: x.clone(),
            x,
            w: Vector::zeros(0),
            grad,
            meta_grad: Vector::zeros(0),
            hint: None,
            next_hint: None,
            target: None,
            regret_x,
            regret_w: f64::NAN,
        });
    }
    Ok(Trajectory {
        driver: DriverKind::Baseline,
        weights: WeightSchedule::ConstantOne,
        schedule: None,
        chain_rule_rho: false,
        center: Vector::zeros(0),
        x0: x0.clone(),
        grad0: objective.gradient(x0)?,
        w_final: Vector::zeros(0),
        minimizer: xstar,
        min_value: objective.min_value(),
        comparator: None,
        records,
    })
}

/// `x_t = x_{t−1} − s∇f(x_{t−1})`.
pub fn gradient_descent(objective: &dyn Objective, step: f64, horizon: usize, x0: &Vector) -> Result<Trajectory> {
    heavy_ball(objective, step, 0.0, horizon, x0)
}

/// Polyak momentum: `x_t = x_{t−1} + m(x_{t−1} − x_{t−2}) − s∇f(x_{t−1})`, `x_{−1} = x_0`.
pub fn heavy_ball(
    objective: &dyn Objective,
    step: f64,
    momentum: f64,
    horizon: usize,
    x0: &Vector,
) -> Result<Trajectory> {
    check(objective, step, horizon, x0)?;
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    let (mut prev, mut x) = (x0.clone(), x0.clone());
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let next = &x + (&x - &prev) * momentum - objective.gradient(&x)? * step;
        guard(t, "iterate", &next)?;
        prev = std::mem::replace(&mut x, next);
        out.push(x.clone());
    }
    iterate_trajectory(objective, x0, out)
}

/// Nesterov's accelerated gradient with momentum `(t−1)/(t+2)`:
/// `y = x_{t−1} + (t−1)/(t+2)·(x_{t−1} − x_{t−2})`, `x_t = y − s∇f(y)`.
pub fn nesterov(objective: &dyn Objective, step: f64, horizon: usize, x0: &Vector) -> Result<Trajectory> {
    check(objective, step, horizon, x0)?;
    let (mut prev, mut x) = (x0.clone(), x0.clone());
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let tf = t as f64;
        let y = &x + (&x - &prev) * ((tf - 1.0) / (tf + 2.0));
        let next = &y - objective.gradient(&y)? * step;
        guard(t, "iterate", &next)?;
        prev = std::mem::replace(&mut x, next);
        out.push(x.clone());
    }
    iterate_trajectory(objective, x0, out)
}

/// Diagonal AdaGrad from a zero accumulator.
pub fn adagrad(objective: &dyn Objective, step: f64, horizon: usize, x0: &Vector) -> Result<Trajectory> {
    adagrad_from(objective, step, 0.0, horizon, x0)
}

/// Diagonal AdaGrad: `a_t = a_{t−1} + g⊙g`, `x_t = x_{t−1} − s·g/√max(a_t, ε)`,
/// with every coordinate of `a_0` equal to `initial_accumulator`.
pub fn adagrad_from(
    objective: &dyn Objective,
    step: f64,
    initial_accumulator: f64,
    horizon: usize,
    x0: &Vector,
) -> Result<Trajectory> {
    check(objective, step, horizon, x0)?;
    if !(initial_accumulator >= 0.0) {
        return Err(Error::InvalidArgument(
            "initial accumulator must be non-negative".into(),
        ));
    }
    let mut acc = Vector::from_element(x0.len(), initial_accumulator);
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let g = objective.gradient(&x)?;
        acc += g.component_mul(&g);
        let scaled = g.zip_map(&acc, |gi, ai| gi / ai.max(ADAGRAD_EPSILON).sqrt());
        x -= scaled * step;
        guard(t, "iterate", &x)?;
        out.push(x.clone());
    }
    iterate_trajectory(objective, x0, out)
}
