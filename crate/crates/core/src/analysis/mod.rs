//! Baselines, reduction certificates, bound checks and rate fits.

pub mod baselines;
pub mod bounds;
pub mod rates;
pub mod reduction;
pub mod regret;

pub use baselines::{adagrad, adagrad_from, gradient_descent, heavy_ball, nesterov};
pub use bounds::{
    calibrate_lambda_tilde, check_bound_mg, check_bound_omg, estimate_lambda_tilde, BoundKind, BoundReport,
    BoundStatus, Calibration, Constant, Provenance,
};
pub use rates::{fit_rate, fit_rate_curve, sample_curve, RateFit};
pub use reduction::{
    certify_heavy_ball_reduction, certify_nesterov_reduction, heavy_ball_certificate, ReductionCertificate,
    ReductionKind,
};
pub use regret::{
    certify_preserves_regret, ftrl_regret_check, online_to_batch_check, predictor_check, OnlineToBatch,
    PredictorReport, PreservesRegret, PreservesStatus, RegretCheck,
};
