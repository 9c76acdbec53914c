//! Grid sweeps over seeds and hyperparameters.

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{AlgorithmSpec, ExperimentConfig, Method};
use crate::analysis::baselines;
use crate::drivers::{run_convex, run_optimistic, run_practical, ConvexOptions, PracticalOptions, Trajectory};
use crate::meta_learner::{BetaSchedule, ConstraintSet, MetaLearnerState};
use crate::{Error, Result, Vector};

/// One grid point. Axes the algorithm does not use are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub w_init: Option<f64>,
    pub decay: Option<f64>,
}

impl Hyper {
    fn key(&self) -> [f64; 3] {
        [
            self.learning_rate,
            self.w_init.unwrap_or(f64::NEG_INFINITY),
            self.decay.unwrap_or(f64::NEG_INFINITY),
        ]
    }

    /// Lexicographic order on `(learning_rate, w_init, decay)`.
    pub fn cmp_lex(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// SHA-256 over the sweep config, algorithm, seed and grid point.
    pub config_hash: String,
    pub algorithm: String,
    pub seed: u64,
    pub hyper: Hyper,
    pub diverged: bool,
    /// Set for runs rejected before or during execution, divergence included.
    pub error: Option<String>,
    pub final_gap: Option<f64>,
    pub final_loss: Option<f64>,
    /// `Σ_t f(x_t)` on the raw iterates.
    pub cumulative_loss: Option<f64>,
    /// `Σ_t f(x̄_t)`, for averaged drivers only.
    pub cumulative_loss_averaged: Option<f64>,
    pub wall_time_ms: Option<f64>,
    /// Trajectory CSV relative to the output directory.
    pub trajectory: Option<String>,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.cumulative_loss.is_some_and(f64::is_finite)
    }
}

/// Best converged run of one algorithm on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRun {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub hyper: Hyper,
    pub cumulative_loss: f64,
    pub final_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub sweep_hash: String,
    pub full: bool,
    pub horizon: usize,
    /// Algorithm names in config order.
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
    /// Sorted by `config_hash`.
    pub records: Vec<RunRecord>,
    /// One entry per algorithm and seed with a converged run, in config order.
    pub best: Vec<BestRun>,
}

impl SweepSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn best_for(&self, algorithm: &str, seed: u64) -> Option<&BestRun> {
        self.best.iter().find(|b| b.algorithm == algorithm && b.seed == seed)
    }

    pub fn record(&self, config_hash: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.config_hash == config_hash)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sweep_hash(cfg: &ExperimentConfig, full: bool) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    h.update([full as u8]);
    Ok(hex(&h.finalize()))
}

fn run_hash(sweep: &str, algorithm: &str, seed: u64, hyper: &Hyper) -> Result<String> {
    let mut h = Sha256::new();
    h.update(sweep.as_bytes());
    h.update(serde_json::to_vec(&(algorithm, seed, hyper))?);
    Ok(hex(&h.finalize()))
}

struct Job<'a> {
    algorithm: &'a AlgorithmSpec,
    seed: u64,
    hyper: Hyper,
}

fn jobs(cfg: &ExperimentConfig, full: bool) -> Vec<Job<'_>> {
    let mut out = Vec::new();
    for algorithm in &cfg.algorithms {
        let grid = algorithm.grid(full);
        for &seed in &cfg.seeds {
            for &learning_rate in &grid.learning_rates {
                for &w_init in &grid.w_init {
                    for &decay in &grid.decay {
                        out.push(Job {
                            algorithm,
                            seed,
                            hyper: Hyper {
                                learning_rate,
                                w_init,
                                decay,
                            },
                        });
                    }
                }
            }
        }
    }
    out
}

/// Executes one grid point.
pub fn run_point(cfg: &ExperimentConfig, method: &Method, seed: u64, hyper: &Hyper) -> Result<Trajectory> {
    let problem = cfg.problem.build(seed)?;
    let obj = problem.objective();
    let x0 = cfg.problem.start();
    let n = x0.len();
    let t = cfg.horizon;
    let lr = hyper.learning_rate;
    let need = |v: Option<f64>, what: &str| v.ok_or_else(|| Error::Config(format!("grid point lacks {what}")));
    match method {
        Method::HeavyBall => baselines::heavy_ball(obj, lr, need(hyper.decay, "decay")?, t, &x0),
        Method::Adagrad => baselines::adagrad_from(obj, lr, need(hyper.w_init, "w_init")?, t, &x0),
        Method::Nesterov => baselines::nesterov(obj, lr, t, &x0),
        Method::GradientDescent => baselines::gradient_descent(obj, lr, t, &x0),
        Method::Practical {
            optimistic,
            nonneg_w,
            form,
            ..
        } => {
            let rule = method.rule(n, lr).expect("practical methods carry a rule");
            let w1 = Vector::from_element(rule.meta_dim, need(hyper.w_init, "w_init")?);
            let options = PracticalOptions {
                optimistic: *optimistic,
                nonneg_w: *nonneg_w,
                form: *form,
            };
            run_practical(
                obj,
                &rule,
                BetaSchedule::constant(need(hyper.decay, "decay")?),
                t,
                &x0,
                &w1,
                options,
            )
        }
        Method::Averaged { weights, hint, .. } => {
            let rule = method.rule(n, lr).expect("averaged methods carry a rule");
            let w1 = Vector::from_element(rule.meta_dim, need(hyper.w_init, "w_init")?);
            let schedule = BetaSchedule::constant(need(hyper.decay, "decay")?);
            let meta =
                MetaLearnerState::with_center(ConstraintSet::unconstrained(rule.meta_dim), schedule, w1.clone())?;
            let opts = ConvexOptions::default();
            match hint {
                Some(policy) => run_optimistic(obj, &rule, *weights, meta, &mut { *policy }, t, &x0, &w1, &opts),
                None => run_convex(obj, &rule, *weights, meta, t, &x0, &w1, &opts),
            }
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Runs the full cross-product of grids and seeds on `workers` threads
/// (0 picks the rayon default). With `out` set, trajectory CSVs go to
/// `out/trajectories/` and the summary to `out/summary.json`.
///
/// Failed runs are recorded, never fatal. The summary depends only on the
/// config and `full` unless wall times are requested.
pub fn run_sweep(cfg: &ExperimentConfig, full: bool, workers: usize, out: Option<&Path>) -> Result<SweepSummary> {
    cfg.validate()?;
    let sweep = sweep_hash(cfg, full)?;
    let jobs = jobs(cfg, full);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir.join("trajectories"))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| -> Result<RunRecord> {
                let hash = run_hash(&sweep, &job.algorithm.name, job.seed, &job.hyper)?;
                let start = Instant::now();
                let result = run_point(cfg, &job.algorithm.method, job.seed, &job.hyper);
                let wall = cfg.record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3);
                let mut rec = RunRecord {
                    config_hash: hash,
                    algorithm: job.algorithm.name.clone(),
                    seed: job.seed,
                    hyper: job.hyper,
                    diverged: false,
                    error: None,
                    final_gap: None,
                    final_loss: None,
                    cumulative_loss: None,
                    cumulative_loss_averaged: None,
                    wall_time_ms: wall,
                    trajectory: None,
                };
                match result {
                    Ok(traj) => {
                        rec.final_gap = finite(traj.final_gap());
                        rec.final_loss = finite(traj.records.last().map_or(f64::NAN, |r| r.f_x));
                        rec.cumulative_loss = finite(traj.cumulative_loss());
                        if matches!(job.algorithm.method, Method::Averaged { .. }) {
                            rec.cumulative_loss_averaged = finite(traj.cumulative_loss_averaged());
                        }
                        rec.diverged = rec.cumulative_loss.is_none();
                        if let (Some(dir), true) = (out, cfg.write_trajectories) {
                            let rel = format!("trajectories/{}.csv", rec.config_hash);
                            std::fs::write(dir.join(&rel), traj.to_csv_string())?;
                            rec.trajectory = Some(rel);
                        }
                    }
                    Err(e @ Error::Diverged { .. }) => {
                        rec.diverged = true;
                        rec.error = Some(e.to_string());
                    }
                    Err(e) => rec.error = Some(e.to_string()),
                }
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    let diverged = records.iter().filter(|r| r.diverged).count();
    if diverged > 0 {
        log::info!("{diverged} of {} runs diverged", records.len());
    }

    let summary = SweepSummary {
        name: cfg.name.clone(),
        sweep_hash: sweep,
        full,
        horizon: cfg.horizon,
        algorithms: cfg.algorithms.iter().map(|a| a.name.clone()).collect(),
        seeds: cfg.seeds.clone(),
        best: select_best(cfg, &records),
        records,
    };
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), summary.to_json()?)?;
    }
    Ok(summary)
}

/// Lowest cumulative loss; ties go to the lower final gap, then to the
/// lexicographically smaller grid point.
pub fn compare_runs(a: &RunRecord, b: &RunRecord) -> Ordering {
    let loss = |r: &RunRecord| r.cumulative_loss.unwrap_or(f64::INFINITY);
    let gap = |r: &RunRecord| r.final_gap.unwrap_or(f64::INFINITY);
    loss(a)
        .total_cmp(&loss(b))
        .then(gap(a).total_cmp(&gap(b)))
        .then(a.hyper.cmp_lex(&b.hyper))
}

fn select_best(cfg: &ExperimentConfig, records: &[RunRecord]) -> Vec<BestRun> {
    let mut best = Vec::new();
    for a in &cfg.algorithms {
        for &seed in &cfg.seeds {
            let winner = records
                .iter()
                .filter(|r| r.algorithm == a.name && r.seed == seed && r.converged())
                .min_by(|x, y| compare_runs(x, y));
            if let Some(r) = winner {
                best.push(BestRun {
                    algorithm: r.algorithm.clone(),
                    seed,
                    config_hash: r.config_hash.clone(),
                    hyper: r.hyper,
                    cumulative_loss: r.cumulative_loss.unwrap(),
                    final_gap: r.final_gap,
                });
            }
        }
    }
    best
}
