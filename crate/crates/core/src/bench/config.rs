//! Experiment configuration, stored as TOML.
//!
//! ```toml
//! name = "convex_quadratic"
//! horizon = 100
//! seeds = [0, 1, 2, 3, 4]
//!
//! [problem]
//! kind = "quadratic"
//! dim = 2
//! x0 = [4.0, 4.0]          # optional; the all-4 vector otherwise
//!
//! [[algorithms]]
//! name = "meta_momentum"
//! method = { kind = "practical", rule = "elementwise_lr" }
//! learning_rates = [0.1, 0.3]   # optional; sweep defaults otherwise
//! ```
//!
//! Grids left out take the sweep defaults: the full lists with `--full`,
//! every other entry without.

use serde::{Deserialize, Serialize};

use crate::drivers::{OptimisticForm, WeightSchedule};
use crate::optimism_bmg::HintPolicy;
use crate::problems::{LogisticRegression, Objective, QuadraticProblem};
use crate::update_rules::{RuleKind, UpdateRule};
use crate::{Error, Result, Vector};

pub const LEARNING_RATES: [f64; 6] = [0.1, 0.3, 0.7, 0.9, 3.0, 5.0];
pub const W_INIT_SCALES: [f64; 6] = [0.0, 0.3, 1.0, 3.0, 10.0, 30.0];
pub const DECAY_RATES: [f64; 10] = [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0];
/// Meta learning rates of the large-scale sweep.
pub const SURROGATE_META_RATES: [f64; 5] = [0.001, 0.01, 0.02, 0.05, 0.1];

fn trimmed(full: &[f64]) -> Vec<f64> {
    full.iter().step_by(2).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
    Logistic {
        dim: usize,
        samples: usize,
        l2: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
}

/// A seeded problem instance.
pub enum Problem {
    Quadratic(QuadraticProblem),
    Logistic(LogisticRegression),
}

impl Problem {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            Self::Quadratic(p) => p,
            Self::Logistic(p) => p,
        }
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { dim, .. } | Self::Logistic { dim, .. } => *dim,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Problem> {
        Ok(match self {
            Self::Quadratic { dim, .. } => Problem::Quadratic(QuadraticProblem::generate(*dim, seed)?),
            Self::Logistic { dim, samples, l2, .. } => {
                Problem::Logistic(LogisticRegression::synthetic(*dim, *samples, *l2, seed)?)
            }
        })
    }

    pub fn start(&self) -> Vector {
        match self {
            Self::Quadratic { dim, x0 } | Self::Logistic { dim, x0, .. } => match x0 {
                Some(v) => Vector::from_column_slice(v),
                None => Vector::from_element(*dim, 4.0),
            },
        }
    }
}

/// How the practical driver turns the learning rate into the rule's scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `x_t = x_{t−1} − lr·φ(x_{t−1}, w_t)`.
    #[default]
    Descent,
    /// `x_t = x_{t−1} + lr·φ(x_{t−1}, w_t)`, the sign the closed-form
    /// element-wise updates are written with.
    AsPrinted,
}

fn yes() -> bool {
    true
}

/// Algorithm families a sweep can run. Grid meaning per family:
///
/// | kind | learning rate | w init | decay |
/// |------|---------------|--------|-------|
/// | `heavy_ball` | step | – | momentum |
/// | `adagrad` | step | initial accumulator | – |
/// | `nesterov`, `gradient_descent` | step | – | – |
/// | `practical` | rule scale | `w₁ = s·1` | constant `β` |
/// | `averaged` | rule scale | `w₁ = s·1` | constant `β` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    HeavyBall,
    Adagrad,
    Nesterov,
    GradientDescent,
    Practical {
        rule: RuleKind,
        #[serde(default)]
        optimistic: bool,
        #[serde(default = "yes")]
        nonneg_w: bool,
        #[serde(default)]
        form: OptimisticForm,
        #[serde(default)]
        convention: Convention,
    },
    Averaged {
        rule: RuleKind,
        weights: WeightSchedule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hint: Option<HintPolicy>,
    },
}

impl Method {
    pub fn uses_w_init(&self) -> bool {
        matches!(self, Self::Adagrad | Self::Practical { .. } | Self::Averaged { .. })
    }

    pub fn uses_decay(&self) -> bool {
        matches!(self, Self::HeavyBall | Self::Practical { .. } | Self::Averaged { .. })
    }

    /// The update rule for learning rate `lr` on an `n`-dimensional problem.
    pub fn rule(&self, n: usize, lr: f64) -> Option<UpdateRule> {
        match self {
            Self::Practical { rule, convention, .. } => Some(scaled(*rule, n, lr, *convention)),
            Self::Averaged { rule, .. } => Some(scaled(*rule, n, lr, Convention::Descent)),
            _ => None,
        }
    }
}

fn scaled(kind: RuleKind, n: usize, lr: f64, convention: Convention) -> UpdateRule {
    match kind {
        RuleKind::PlainGradient => UpdateRule::plain_gradient(n, lr),
        RuleKind::Direct => UpdateRule::direct(n).with_scale(lr),
        other => {
            let sign = match convention {
                Convention::Descent => -1.0,
                Convention::AsPrinted => 1.0,
            };
            UpdateRule::new(other, n).with_scale(sign * lr)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_init: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<Vec<f64>>,
}

/// Concrete grids of one algorithm; unused axes hold a single `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub w_init: Vec<Option<f64>>,
    pub decay: Vec<Option<f64>>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.learning_rates.len() * self.w_init.len() * self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AlgorithmSpec {
    pub fn grid(&self, full: bool) -> Grid {
        let pick = |given: &Option<Vec<f64>>, default: &[f64]| match given {
            Some(v) => v.clone(),
            None if full => default.to_vec(),
            None => trimmed(default),
        };
        let opt = |used: bool, v: Vec<f64>| {
            if used {
                v.into_iter().map(Some).collect()
            } else {
                vec![None]
            }
        };
        Grid {
            learning_rates: pick(&self.learning_rates, &LEARNING_RATES),
            w_init: opt(self.method.uses_w_init(), pick(&self.w_init, &W_INIT_SCALES)),
            decay: opt(self.method.uses_decay(), pick(&self.decay, &DECAY_RATES)),
        }
    }
}

/// Settings of the `verify` and `reduce` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Horizons of the bound checks.
    pub horizons: Vec<usize>,
    pub optimistic_horizons: Vec<usize>,
    /// Grid of the rate fits.
    pub rate_grid: Vec<usize>,
    /// `β = beta_factor/(λL)` in the non-optimistic bound check.
    pub beta_factor: f64,
    /// Constant `β` values of the momentum reduction, in units of `1/L`.
    pub reduction_betas: Vec<f64>,
    pub comparators: usize,
    pub jacobian_samples: usize,
    pub lambda_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 10],
            seeds: (0..5).collect(),
            horizons: vec![50, 100, 200],
            optimistic_horizons: vec![9, 50, 100],
            rate_grid: vec![25, 50, 100, 200, 400],
            beta_factor: 1.0,
            reduction_betas: vec![0.1, 0.5, 1.0],
            comparators: 20,
            jacobian_samples: 100,
            lambda_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSpec>,
    /// Write one trajectory CSV per converged run.
    #[serde(default = "yes")]
    pub write_trajectories: bool,
    /// Record wall time per run; off by default because it breaks byte-level
    /// reproducibility of the summary.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_horizon() -> usize {
    100
}

impl ExperimentConfig {
    /// Heavy Ball, AdaGrad and their meta-learned counterparts on 2-dim quadratics.
    pub fn convex_quadratic() -> Self {
        let practical = |rule| Method::Practical {
            rule,
            optimistic: false,
            nonneg_w: true,
            form: OptimisticForm::default(),
            convention: Convention::Descent,
        };
        let alg = |name: &str, method| AlgorithmSpec {
            name: name.into(),
            method,
            learning_rates: None,
            w_init: None,
            decay: None,
        };
        Self {
            name: "convex_quadratic".into(),
            horizon: 100,
            seeds: (0..5).collect(),
            problem: ProblemSpec::Quadratic {
                dim: 2,
                x0: Some(vec![4.0, 4.0]),
            },
            algorithms: vec![
                alg("heavy_ball", Method::HeavyBall),
                alg("meta_momentum", practical(RuleKind::ElementwiseLr)),
                alg("adagrad", Method::Adagrad),
                alg("meta_adagrad", practical(RuleKind::AdagradStyle)),
            ],
            write_trajectories: true,
            record_wall_time: false,
            verify: VerifyConfig::default(),
        }
    }

    /// Standard against optimistic practical meta-learning of an element-wise
    /// learning rate on a 50-dim quadratic, with the closed-form updates as
    /// printed: `x_t = x_{t−1} + w ⊙ ∇f`, `w ≥ 0`.
    pub fn appendix_c_surrogate() -> Self {
        let practical = |optimistic| Method::Practical {
            rule: RuleKind::ElementwiseLr,
            optimistic,
            nonneg_w: true,
            form: OptimisticForm::AsPrinted,
            convention: Convention::AsPrinted,
        };
        let alg = |name: &str, optimistic| AlgorithmSpec {
            name: name.into(),
            method: practical(optimistic),
            learning_rates: Some(vec![1.0]),
            w_init: Some(W_INIT_SCALES.to_vec()),
            decay: Some(SURROGATE_META_RATES.to_vec()),
        };
        Self {
            name: "appendix_c_surrogate".into(),
            horizon: 100,
            seeds: (0..3).collect(),
            problem: ProblemSpec::Quadratic { dim: 50, x0: None },
            algorithms: vec![alg("standard", false), alg("optimistic", true)],
            write_trajectories: true,
            record_wall_time: false,
            verify: VerifyConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let n = self.problem.dim();
        if n == 0 {
            return bad("problem dimension must be at least 1".into());
        }
        if self.problem.start().len() != n {
            return bad(format!(
                "x0 has {} entries for a {n}-dim problem",
                self.problem.start().len()
            ));
        }
        let mut names: Vec<&str> = self.algorithms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("algorithm names must be distinct".into());
        }
        for a in &self.algorithms {
            for (axis, g) in [
                ("learning_rates", &a.learning_rates),
                ("w_init", &a.w_init),
                ("decay", &a.decay),
            ] {
                match g {
                    Some(v) if v.is_empty() => return bad(format!("{}: {axis} grid is empty", a.name)),
                    Some(v) if v.iter().any(|x| !x.is_finite()) => {
                        return bad(format!("{}: {axis} grid has a non-finite value", a.name))
                    }
                    _ => {}
                }
            }
        }
        let v = &self.verify;
        if v.dims.is_empty() || v.seeds.is_empty() || v.horizons.is_empty() || v.optimistic_horizons.is_empty() {
            return bad("verify grids must not be empty".into());
        }
        if v.rate_grid.len() < crate::analysis::rates::MIN_FIT_POINTS {
            return bad("verify.rate_grid needs at least three horizons".into());
        }
        if v.optimistic_horizons.contains(&1) || v.horizons.contains(&0) {
            return bad("verify horizons must be positive, optimistic ones at least 2".into());
        }
        if !(v.beta_factor > 0.0) {
            return bad("verify.beta_factor must be positive".into());
        }
        Ok(())
    }

    /// Replaces the seed lists with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self.verify.seeds = vec![seed];
        self
    }
}
