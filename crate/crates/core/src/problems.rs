//! Convex objectives: seeded ill-conditioned quadratics and a logistic-regression surrogate.
//!
//! Random draws use [`ChaCha8Rng`] seeded with `seed_from_u64`, so a seed names
//! the same problem on every platform.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{check_dim, check_finite, Error, Matrix, Result, Vector};

/// Value and gradient oracle seen by every driver.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Result<f64>;
    fn gradient(&self, x: &Vector) -> Result<Vector>;

    fn minimizer(&self) -> Option<Vector> {
        None
    }

    /// Lipschitz constant of the gradient, if known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// `f(x*)`, when the minimizer is known.
    fn min_value(&self) -> Option<f64> {
        self.minimizer().and_then(|m| self.value(&m).ok())
    }
}

/// `f(x) = ⟨x, Qx⟩` with `Q = Uᵀ diag(1², …, n²) U`.
///
/// The spectrum is stored as `eigenvalues` (σ_i); `λ` is reserved for the
/// update-rule constant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    dim: usize,
    seed: Option<u64>,
    q: Matrix,
    eigenvalues: Vec<f64>,
    smoothness: f64,
}

/// On-disk form of a [`QuadraticProblem`]; `q_matrix` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub dim: usize,
    pub seed: Option<u64>,
    pub eigenvalues: Vec<f64>,
    pub q_matrix: Vec<f64>,
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`. Entries are drawn row by row.
pub fn haar_orthogonal(dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl QuadraticProblem {
    /// Quadratic of dimension `dim` with a Haar rotation drawn from `seed`.
    pub fn generate(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let u = haar_orthogonal(dim, seed);
        let mut p = Self::with_rotation(&u)?;
        p.seed = Some(seed);
        Ok(p)
    }

    /// Same spectrum with a caller-chosen rotation. The identity gives `diag(1, 4, …)`.
    pub fn with_rotation(u: &Matrix) -> Result<Self> {
        let dim = u.nrows();
        if dim == 0 || u.ncols() != dim {
            return Err(Error::InvalidArgument(
                "rotation must be a non-empty square matrix".into(),
            ));
        }
        let eigenvalues: Vec<f64> = (1..=dim).map(|i| (i * i) as f64).collect();
        let d = Matrix::from_diagonal(&Vector::from_vec(eigenvalues.clone()));
        let q = u.transpose() * d * u;
        let q = (&q + q.transpose()) * 0.5;
        let smoothness = 2.0 * eigenvalues[dim - 1];
        Ok(Self {
            dim,
            seed: None,
            q,
            eigenvalues,
            smoothness,
        })
    }

    /// Wraps an arbitrary symmetric positive-definite matrix.
    pub fn from_matrix(q: Matrix) -> Result<Self> {
        let dim = q.nrows();
        if dim == 0 || q.ncols() != dim {
            return Err(Error::InvalidArgument("Q must be non-empty and square".into()));
        }
        let scale = q.amax().max(f64::MIN_POSITIVE);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("Q is not symmetric".into()));
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(q.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::InvalidArgument("Q is not positive definite".into()));
        }
        let smoothness = 2.0 * eigenvalues[dim - 1];
        Ok(Self {
            dim,
            seed: None,
            q,
            eigenvalues,
            smoothness,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn q_matrix(&self) -> &Matrix {
        &self.q
    }

    /// σ_1 ≤ … ≤ σ_n.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `L = 2·max σ_i`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn eval(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(x.dot(&(&self.q * x)))
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x)?;
        Ok(&self.q * x * 2.0)
    }

    /// The all-4 vector, `(4, 4)` in two dimensions.
    pub fn default_start(&self) -> Vector {
        Vector::from_element(self.dim, 4.0)
    }

    pub fn to_document(&self) -> ProblemDocument {
        ProblemDocument {
            dim: self.dim,
            seed: self.seed,
            eigenvalues: self.eigenvalues.clone(),
            q_matrix: self.q.transpose().iter().copied().collect(),
        }
    }

    pub fn from_document(doc: &ProblemDocument) -> Result<Self> {
        if doc.q_matrix.len() != doc.dim * doc.dim {
            return Err(Error::DimensionMismatch {
                expected: doc.dim * doc.dim,
                got: doc.q_matrix.len(),
            });
        }
        let q = Matrix::from_row_slice(doc.dim, doc.dim, &doc.q_matrix);
        let mut p = Self::from_matrix(q)?;
        // Keep the recorded spectrum bit-exact rather than re-derived.
        if doc.eigenvalues.len() == doc.dim {
            p.eigenvalues = doc.eigenvalues.clone();
            p.smoothness = 2.0 * doc.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        }
        p.seed = doc.seed;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        self.eval(x)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.grad(x)
    }

    fn minimizer(&self) -> Option<Vector> {
        Some(Vector::zeros(self.dim))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn min_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(x) = (1/N) Σ log(1 + exp(−y_i⟨a_i, x⟩)) + (l2/2)‖x‖²` on synthetic data.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    features: Matrix,
    labels: Vector,
    l2: f64,
}

impl LogisticRegression {
    /// Gaussian features; labels from a Gaussian teacher with 10% label noise.
    pub fn synthetic(dim: usize, samples: usize, l2: f64, seed: u64) -> Result<Self> {
        if dim == 0 || samples == 0 {
            return Err(Error::InvalidArgument(
                "dimension and sample count must be positive".into(),
            ));
        }
        if !(l2 >= 0.0) {
            return Err(Error::InvalidArgument("l2 must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let teacher = Vector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let mut features = Matrix::zeros(samples, dim);
        for i in 0..samples {
            for j in 0..dim {
                features[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let labels = Vector::from_fn(samples, |i, _| {
            let s = features.row(i).transpose().dot(&teacher);
            let flip = rng.random::<f64>() < 0.1;
            if (s >= 0.0) != flip {
                1.0
            } else {
                -1.0
            }
        });
        Ok(Self { features, labels, l2 })
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Objective for LogisticRegression {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x)?;
        check_finite("logistic point", x)?;
        let margins = &self.features * x;
        let n = self.samples() as f64;
        let loss: f64 = margins
            .iter()
            .zip(self.labels.iter())
            .map(|(m, y)| log1p_exp(-y * m))
            .sum();
        Ok(loss / n + 0.5 * self.l2 * x.norm_squared())
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x)?;
        check_finite("logistic point", x)?;
        let margins = &self.features * x;
        let n = self.samples() as f64;
        let coeff = Vector::from_fn(self.samples(), |i, _| {
            let y = self.labels[i];
            -y * sigmoid(-y * margins[i]) / n
        });
        Ok(self.features.transpose() * coeff + x * self.l2)
    }

    /// `‖A‖₂²/(4N) + l2`.
    fn smoothness(&self) -> Option<f64> {
        let s = self.features.singular_values().max();
        Some(s * s / (4.0 * self.samples() as f64) + self.l2)
    }
}
