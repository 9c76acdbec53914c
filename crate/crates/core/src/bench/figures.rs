//! Figure tables regenerated from a persisted sweep.
//!
//! `loss_curves.csv`: `algorithm,seed,t,loss,gap`, one curve group per
//! algorithm and seed, for its best grid point. `loss` is `f(x̄_t)`, which is
//! `f(x_t)` for every driver without averaging.
//!
//! `cumulative_loss_vs_lr.csv`:
//! `algorithm,seed,learning_rate,cumulative_loss,w_init,decay,converged,runs`,
//! the best converged run at each learning rate. `cumulative_loss`, `w_init`
//! and `decay` are empty when nothing converged or the axis is unused.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::sweep::{compare_runs, SweepSummary};
use crate::drivers::read_csv;
use crate::{Error, Result};

pub const LOSS_CURVES: &str = "loss_curves.csv";
pub const CUMULATIVE_LOSS: &str = "cumulative_loss_vs_lr.csv";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Table (a), reading trajectory CSVs relative to `root`.
pub fn loss_curves(summary: &SweepSummary, root: &Path) -> Result<String> {
    if summary.records.is_empty() {
        return Err(Error::InvalidArgument("the sweep has no records".into()));
    }
    let mut out = String::from("algorithm,seed,t,loss,gap\n");
    for b in &summary.best {
        let rec = summary
            .record(&b.config_hash)
            .ok_or_else(|| Error::InvalidArgument(format!("best run {} has no record", b.config_hash)))?;
        let rel = rec.trajectory.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "run {} kept no trajectory; sweep with write_trajectories",
                b.config_hash
            ))
        })?;
        for row in read_csv(&std::fs::read_to_string(root.join(rel))?)? {
            writeln!(out, "{},{},{},{},{}", b.algorithm, b.seed, row.t, row.f_xbar, row.gap).unwrap();
        }
    }
    Ok(out)
}

/// Table (b).
pub fn cumulative_loss_table(summary: &SweepSummary) -> Result<String> {
    if summary.records.is_empty() {
        return Err(Error::InvalidArgument("the sweep has no records".into()));
    }
    let order = |name: &str| summary.algorithms.iter().position(|a| a == name).unwrap_or(usize::MAX);
    // (algorithm index, seed, learning rate bits) -> records
    let mut groups: BTreeMap<(usize, u64, i64), Vec<_>> = BTreeMap::new();
    for r in &summary.records {
        // The integer order of this key matches `f64::total_cmp`.
        let bits = r.hyper.learning_rate.to_bits() as i64;
        let key = bits ^ (((bits >> 63) as u64) >> 1) as i64;
        groups.entry((order(&r.algorithm), r.seed, key)).or_default().push(r);
    }
    let mut out = String::from("algorithm,seed,learning_rate,cumulative_loss,w_init,decay,converged,runs\n");
    for runs in groups.values() {
        let first = runs[0];
        let converged = runs.iter().filter(|r| r.converged()).count();
        let best = runs.iter().filter(|r| r.converged()).min_by(|a, b| compare_runs(a, b));
        let (loss, w, d) = match best {
            Some(b) => (b.cumulative_loss, b.hyper.w_init, b.hyper.decay),
            None => (None, None, None),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            first.algorithm,
            first.seed,
            first.hyper.learning_rate,
            opt(loss),
            opt(w),
            opt(d),
            converged,
            runs.len()
        )
        .unwrap();
    }
    Ok(out)
}

/// Writes both tables into `out` and returns their paths.
pub fn emit_figure_data(summary: &SweepSummary, root: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let curves = loss_curves(summary, root)?;
    let cumulative = cumulative_loss_table(summary)?;
    std::fs::create_dir_all(out)?;
    let a = out.join(LOSS_CURVES);
    let b = out.join(CUMULATIVE_LOSS);
    std::fs::write(&a, curves)?;
    std::fs::write(&b, cumulative)?;
    Ok(vec![a, b])
}
