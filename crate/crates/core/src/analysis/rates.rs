//! Empirical convergence-rate exponents.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fraction of a dense curve discarded as transient before fitting.
pub const TRANSIENT_FRACTION: f64 = 0.1;

/// Fewest points a fit is attempted on.
pub const MIN_FIT_POINTS: usize = 3;

/// `gap ≈ C·T^{−p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    /// `log C`.
    pub intercept: f64,
    /// RMS residual of the log-log regression.
    pub residual: f64,
    pub points: usize,
    /// Trailing grid points discarded because their gap was not positive.
    pub truncated: usize,
}

/// Least-squares slope of `log gap` against `log T`, negated.
///
/// The grid is cut at the first non-positive gap (a run that reached the
/// optimum to machine precision); at least three points must remain.
pub fn fit_rate(horizons: &[f64], gaps: &[f64]) -> Result<RateFit> {
    if horizons.len() != gaps.len() {
        return Err(Error::InvalidArgument(format!(
            "{} horizons for {} gaps",
            horizons.len(),
            gaps.len()
        )));
    }
    if horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("horizons must be positive".into()));
    }
    let keep = gaps
        .iter()
        .position(|&g| !(g > 0.0 && g.is_finite()))
        .unwrap_or(gaps.len());
    let truncated = gaps.len() - keep;
    if truncated > 0 {
        log::warn!(
            "rate fit: dropping {truncated} grid point(s) from T = {} on, gap not positive",
            horizons[keep]
        );
    }
    if keep < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs {MIN_FIT_POINTS} positive gaps, got {keep}"
        )));
    }
    let xs: Vec<f64> = horizons[..keep].iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = gaps[..keep].iter().map(|g| g.ln()).collect();
    let n = keep as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("horizons must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        exponent: -slope,
        intercept,
        residual: (sse / n).sqrt(),
        points: keep,
        truncated,
    })
}

/// Fit over a dense per-step curve `gap_1, …, gap_T` after dropping the
/// first [`TRANSIENT_FRACTION`] of steps.
pub fn fit_rate_curve(gaps: &[f64]) -> Result<RateFit> {
    let skip = (gaps.len() as f64 * TRANSIENT_FRACTION).floor() as usize;
    let ts: Vec<f64> = (skip + 1..=gaps.len()).map(|t| t as f64).collect();
    fit_rate(&ts, &gaps[skip..])
}

/// Gaps of a per-step curve read off at the given horizons.
pub fn sample_curve(gaps: &[f64], horizons: &[usize]) -> Result<Vec<f64>> {
    horizons
        .iter()
        .map(|&t| {
            if t == 0 || t > gaps.len() {
                Err(Error::InvalidArgument(format!(
                    "horizon {t} outside a curve of {} steps",
                    gaps.len()
                )))
            } else {
                Ok(gaps[t - 1])
            }
        })
        .collect()
}
