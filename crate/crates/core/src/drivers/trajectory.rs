use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::meta_learner::BetaSchedule;
use crate::{Result, Vector};

/// Online-average weights `α_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSchedule {
    /// `α_t = 1`
    ConstantOne,
    /// `α_t = t`
    Linear,
}

impl WeightSchedule {
    pub fn alpha(&self, t: usize) -> f64 {
        match self {
            Self::ConstantOne => 1.0,
            Self::Linear => t as f64,
        }
    }

    /// `α_{1:t}`; zero for `t = 0`.
    pub fn prefix(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            Self::ConstantOne => tf,
            Self::Linear => tf * (tf + 1.0) / 2.0,
        }
    }

    /// `ρ_t = α_t / α_{1:t}`.
    pub fn rho(&self, t: usize) -> f64 {
        match self {
            Self::ConstantOne => 1.0 / t as f64,
            Self::Linear => 2.0 / (t as f64 + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    Convex,
    Optimistic,
    Practical,
    PracticalOptimistic,
    Bmg,
    AoftrlRecursion,
    Baseline,
}

/// One iteration. For drivers without averaging `xbar == x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub alpha: f64,
    pub rho: f64,
    /// Meta step size in force for this step's update, `β_t`.
    pub beta: f64,
    pub x: Vector,
    pub xbar: Vector,
    /// Meta-parameters used at this step, `w_t`.
    pub w: Vector,
    pub f_x: f64,
    pub f_xbar: f64,
    /// Gradient at the evaluation point: `∇f(x̄_t)`, or `∇f(x_t)` without averaging.
    pub grad: Vector,
    /// `g_t = Dφ(·, w_t)ᵀ grad`.
    pub meta_grad: Vector,
    /// `g̃_t`, the hint that shaped `w_t`.
    pub hint: Option<Vector>,
    /// `g̃_{t+1}`, the hint chosen at this step.
    pub next_hint: Option<Vector>,
    /// BMG target `z_t`.
    pub target: Option<Vector>,
    pub regret_x: f64,
    pub regret_w: f64,
}

/// A full run. `records[t - 1]` holds iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub driver: DriverKind,
    pub weights: WeightSchedule,
    pub schedule: Option<BetaSchedule>,
    pub chain_rule_rho: bool,
    /// Regulariser center of the meta-learner (`w₁`).
    pub center: Vector,
    /// `x̄₀` (or `x₀`).
    pub x0: Vector,
    pub grad0: Vector,
    /// `w_{T+1}`.
    pub w_final: Vector,
    pub minimizer: Option<Vector>,
    pub min_value: Option<f64>,
    /// Comparator of the `R^w` ledger.
    pub comparator: Option<Vector>,
    pub records: Vec<StepRecord>,
}

pub const CSV_HEADER: &str = "t,f_xbar,gap,grad_norm,regret_x,regret_w,hint_norm,target_dist";

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn record(&self, t: usize) -> &StepRecord {
        &self.records[t - 1]
    }

    /// `x̄_{t}` with `x̄₀` for `t = 0`.
    pub fn xbar(&self, t: usize) -> &Vector {
        if t == 0 {
            &self.x0
        } else {
            &self.records[t - 1].xbar
        }
    }

    /// `∇f(x̄_t)` with `t = 0` allowed.
    pub fn grad_at(&self, t: usize) -> &Vector {
        if t == 0 {
            &self.grad0
        } else {
            &self.records[t - 1].grad
        }
    }

    /// `f(x̄_t) − f(x*)`, NaN when the optimum is unknown.
    pub fn gap(&self, t: usize) -> f64 {
        match self.min_value {
            Some(m) => self.records[t - 1].f_xbar - m,
            None => f64::NAN,
        }
    }

    pub fn final_gap(&self) -> f64 {
        self.gap(self.len())
    }

    pub fn gaps(&self) -> Vec<f64> {
        (1..=self.len()).map(|t| self.gap(t)).collect()
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.f_xbar)
    }

    /// `Σ_t f(x_t)` on raw iterates.
    pub fn cumulative_loss(&self) -> f64 {
        self.records.iter().map(|r| r.f_x).sum()
    }

    /// `Σ_t f(x̄_t)`.
    pub fn cumulative_loss_averaged(&self) -> f64 {
        self.records.iter().map(|r| r.f_xbar).sum()
    }

    /// Meta-parameter sequence `w_1, …, w_{T+1}`.
    pub fn ws(&self) -> Vec<Vector> {
        let mut out: Vec<Vector> = self.records.iter().map(|r| r.w.clone()).collect();
        out.push(self.w_final.clone());
        out
    }

    /// One CSV row per step under [`CSV_HEADER`], floats as `{:.16e}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for (i, r) in self.records.iter().enumerate() {
            let hint_norm = r.hint.as_ref().map_or(0.0, |h| h.norm());
            let target_dist = r.target.as_ref().map_or(f64::NAN, |z| (&r.x - z).norm());
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t,
                r.f_xbar,
                self.gap(i + 1),
                r.grad.norm(),
                r.regret_x,
                r.regret_w,
                hint_norm,
                target_dist
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// A parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: usize,
    pub f_xbar: f64,
    pub gap: f64,
    pub grad_norm: f64,
    pub regret_x: f64,
    pub regret_w: f64,
    pub hint_norm: f64,
    pub target_dist: f64,
}

/// Reads rows written by [`Trajectory::write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |msg: String| crate::Error::InvalidArgument(format!("trajectory CSV: {msg}"));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", cells.len())));
        }
        let f = |i: usize| cells[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", cells[i])));
        rows.push(CsvRow {
            t: cells[0].parse().map_err(|e| bad(format!("{e}")))?,
            f_xbar: f(1)?,
            gap: f(2)?,
            grad_norm: f(3)?,
            regret_x: f(4)?,
            regret_w: f(5)?,
            hint_norm: f(6)?,
            target_dist: f(7)?,
        });
    }
    Ok(rows)
}
