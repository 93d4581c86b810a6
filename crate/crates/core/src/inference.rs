//! Pieces shared by the two models: configuration, objective traces and
//! initialisation helpers.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::svm::SolverOptions;

/// Floor for the initial per-example noise variances.
pub const INIT_VARIANCE_FLOOR: f64 = 1e-6;
/// Floor for re-estimated variances.
pub const HYPER_FLOOR: f64 = 1e-8;
/// Variance of the noise added to the initial feature means of 0.5.
pub const INIT_PSI_NOISE_VARIANCE: f64 = 1e-3;

/// Inference settings shared by both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// IBP concentration.
    pub alpha: f64,
    /// Margin regularisation constant.
    pub c: f64,
    /// Truncation level K.
    pub truncation: usize,
    pub inner_tol: f64,
    pub inner_iters: usize,
    pub outer_tol: f64,
    pub outer_iters: usize,
    pub estimate_hypers: bool,
    pub seed: u64,
    /// Start the loadings from the leading singular vectors of the data.
    pub svd_init: bool,
    /// Run independent per-row / per-task work on the rayon pool.
    pub parallel: bool,
    pub solver: SolverOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 1.0,
            c: 1.0,
            truncation: 50,
            inner_tol: 1e-3,
            inner_iters: 10,
            outer_tol: 1e-4,
            outer_iters: 20,
            estimate_hypers: false,
            seed: 0,
            svd_init: false,
            parallel: false,
            solver: SolverOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::param("c", format!("must be nonnegative, got {}", self.c)));
        }
        if self.truncation == 0 {
            return Err(Error::param("truncation", "K must be at least 1"));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::param("inner_tol", "must be positive"));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::param("outer_tol", "must be positive"));
        }
        if self.inner_iters == 0 {
            return Err(Error::param("inner_iters", "must be at least 1"));
        }
        if self.outer_iters == 0 {
            return Err(Error::param("outer_iters", "must be at least 1"));
        }
        self.solver.validate()
    }
}

/// One coordinate-ascent step, reported to fit observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Sticks,
    Loadings,
    Features,
    Classifier,
    Hypers,
}

/// One line of the objective trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    /// Inner sweep index; `None` for the end-of-outer-iteration entry.
    pub inner: Option<usize>,
    /// Objective with the hinge linearised at the current duals.
    pub lagrangian: f64,
    /// Objective with the hinge itself.
    pub objective: f64,
}

/// Writes the trace as CSV: `outer,inner,lagrangian,objective`.
pub fn write_trace_csv(trace: &[TraceEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "outer,inner,lagrangian,objective")?;
    for e in trace {
        let inner = e.inner.map_or_else(|| "end".to_owned(), |i| i.to_string());
        writeln!(w, "{},{inner},{:e},{:e}", e.outer, e.lagrangian, e.objective)?;
    }
    w.flush()?;
    Ok(())
}

/// `|new - old| / |old|`, falling back to the absolute change near zero.
pub fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

/// Population variance of the entries of `x`, floored.
pub fn empirical_variance(x: ArrayView1<f64>) -> f64 {
    let n = x.len().max(1) as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.max(INIT_VARIANCE_FLOOR)
}

/// Per-row empirical variances.
pub fn row_variances(x: &Array2<f64>) -> Array1<f64> {
    x.rows().into_iter().map(empirical_variance).collect()
}

/// Feature means `0.5 + ε`, clamped to [0, 1].
pub fn init_psi<R: Rng>(rows: usize, k: usize, rng: &mut R) -> Array2<f64> {
    let noise = Normal::new(0.0, INIT_PSI_NOISE_VARIANCE.sqrt()).expect("valid normal");
    Array2::from_shape_simple_fn((rows, k), || (0.5 + noise.sample(rng)).clamp(0.0, 1.0))
}

/// Hex SHA-256 of the shape and bit patterns of `x`.
pub fn fingerprint(x: &Array2<f64>) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Leading right singular vectors of `x` scaled by `s / √rows`, as columns of a
/// `x.ncols() × k` matrix (zero columns past the rank).
pub fn svd_loadings(x: &Array2<f64>, k: usize) -> Array2<f64> {
    let (n, d) = x.dim();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| x[[i, j]]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut phi = Array2::zeros((d, k));
    for (col, &i) in order.iter().take(k).enumerate() {
        let scale = svd.singular_values[i] / (n as f64).sqrt();
        for j in 0..d {
            phi[[j, col]] = scale * vt[(i, j)];
        }
    }
    phi
}
