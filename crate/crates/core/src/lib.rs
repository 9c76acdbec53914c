//! Meta-gradient optimisation in the convex setting.
//!
//! A learner iterates `x_t` with a parameterised update rule `φ(x, w)` while a
//! meta-learner adapts `w` by online convex optimisation on the meta-gradients
//! `Dφ(x, w)ᵀ∇f`. The crate provides:
//!
//! * [`problems`]: seeded ill-conditioned quadratics and a logistic-regression surrogate.
//! * [`update_rules`]: the rule families with exact Jacobian-transpose products.
//! * [`meta_learner`]: FTRL and optimistic FTRL with projection and regret ledgers.
//! * [`drivers`]: the practical, convex, optimistic and bootstrapped co-evolution loops.
//! * [`optimism_bmg`]: hint policies, Bregman divergences and the BMG/optimism correspondence.
//! * [`analysis`]: classical baselines, reduction certificates, bound checks, rate fits.
//! * [`bench`]: sweeps, figure tables and the `verify` bundle behind the CLI.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod drivers;
pub mod error;
pub mod meta_learner;
pub mod optimism_bmg;
pub mod problems;
pub mod update_rules;

pub use error::{Error, Result};

/// Dense column vector used for iterates and meta-parameters.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Norm above which an iterate or meta-parameter counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

pub(crate) fn check_dim(expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &'static str, v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
