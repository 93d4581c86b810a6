//! Dual solvers for the two margin subproblems.
//!
//! * Binary (one per task): maximise `-½‖μ‖² + Σ_n ω_n` over the box
//!   `0 ≤ ω_n ≤ C`, with `μ = Σ_n y_n ω_n v_n`. There is no bias term, so plain
//!   dual coordinate ascent with exact one-dimensional steps suffices.
//! * Multi-class: maximise `-½‖μ‖² + Σ_{n,y} ω_n^y ℓ_n(y)` over one scaled
//!   simplex `{ω_n ≥ 0, Σ_y ω_n^y = C}` per example, with
//!   `μ = Σ_{n,y} ω_n^y Δg_n(y)`. Solved by cyclic block ascent; each block
//!   runs projected gradient onto its simplex.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rule shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target KKT residual.
    pub tol: f64,
    /// Upper bound on full passes over the examples.
    pub max_passes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_passes: 1000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Result of a dual solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    /// One row per example; one column (binary) or one per label (multi-class).
    pub omega: Array2<f64>,
    /// Induced classifier mean.
    pub mu: Array1<f64>,
    /// Dual objective at `omega`.
    pub objective: f64,
    /// KKT residual at `omega`.
    pub kkt_violation: f64,
    /// Passes performed.
    pub iterations: usize,
}

impl DualSolution {
    pub fn converged(&self, tol: f64) -> bool {
        self.kkt_violation <= tol
    }
}

/// Shared evaluation surface of the two dual problems.
pub trait DualProblem {
    /// Checks that `omega` is feasible (within a small tolerance).
    fn check_feasible(&self, omega: &Array2<f64>) -> Result<()>;
    /// `μ(ω)`.
    fn induced_mean(&self, omega: &Array2<f64>) -> Array1<f64>;
    /// Dual objective.
    fn dual_objective(&self, omega: &Array2<f64>) -> f64;
    /// Regularised hinge objective of the classifier `mu`.
    fn primal_objective(&self, mu: ArrayView1<f64>) -> f64;
    /// Largest stationarity / complementary-slackness violation at `omega`.
    fn kkt_residual(&self, omega: &Array2<f64>) -> Result<f64>;
}

const FEAS_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Binary box-constrained dual
// ---------------------------------------------------------------------------

/// `v_n` rows, labels in {-1, +1}, and the box bound C.
#[derive(Debug, Clone)]
pub struct BinaryDualProblem {
    features: Array2<f64>,
    labels: Vec<f64>,
    c: f64,
}

impl BinaryDualProblem {
    pub fn new(features: Array2<f64>, labels: Vec<f64>, c: f64) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Empty("binary dual needs at least one example".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("binary dual features".into()));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::param("labels", "binary labels must be -1 or +1"));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::param("c", format!("must be nonnegative, got {c}")));
        }
        Ok(BinaryDualProblem {
            features,
            labels,
            c,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn gradient(&self, i: usize, mu: &Array1<f64>) -> f64 {
        1.0 - self.labels[i] * self.features.row(i).dot(mu)
    }

    fn violation(&self, omega: f64, grad: f64) -> f64 {
        if omega <= 0.0 {
            grad.max(0.0)
        } else if omega >= self.c {
            (-grad).max(0.0)
        } else {
            grad.abs()
        }
    }
}

impl DualProblem for BinaryDualProblem {
    fn check_feasible(&self, omega: &Array2<f64>) -> Result<()> {
        if omega.dim() != (self.len(), 1) {
            return Err(Error::DimensionMismatch(format!(
                "expected {}×1 duals, got {:?}",
                self.len(),
                omega.dim()
            )));
        }
        if omega.iter().any(|&w| !(w >= -FEAS_TOL && w <= self.c + FEAS_TOL)) {
            return Err(Error::Infeasible(format!("duals must lie in [0, {}]", self.c)));
        }
        Ok(())
    }

    fn induced_mean(&self, omega: &Array2<f64>) -> Array1<f64> {
        let mut mu = Array1::zeros(self.features.ncols());
        for (i, row) in self.features.rows().into_iter().enumerate() {
            let s = self.labels[i] * omega[[i, 0]];
            if s != 0.0 {
                mu.scaled_add(s, &row);
            }
        }
        mu
    }

    fn dual_objective(&self, omega: &Array2<f64>) -> f64 {
        let mu = self.induced_mean(omega);
        -0.5 * mu.dot(&mu) + omega.sum()
    }

    fn primal_objective(&self, mu: ArrayView1<f64>) -> f64 {
        let hinge: f64 = (0..self.len())
            .map(|i| (1.0 - self.labels[i] * self.features.row(i).dot(&mu)).max(0.0))
            .sum();
        0.5 * mu.dot(&mu) + self.c * hinge
    }

    fn kkt_residual(&self, omega: &Array2<f64>) -> Result<f64> {
        self.check_feasible(omega)?;
        let mu = self.induced_mean(omega);
        Ok((0..self.len())
            .map(|i| self.violation(omega[[i, 0]], self.gradient(i, &mu)))
            .fold(0.0, f64::max))
    }
}

/// Dual coordinate ascent for the binary box dual, with shrinking.
pub fn solve_binary_box(
    problem: &BinaryDualProblem,
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<DualSolution> {
    opts.validate()?;
    let n = problem.len();
    let c = problem.c;
    let mut omega: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|v| v.clamp(0.0, c)).collect(),
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} duals, problem has {n}",
                w.len()
            )))
        }
        None => vec![0.0; n],
    };
    let norms: Vec<f64> = problem.features.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut mu = Array1::zeros(problem.features.ncols());
    for i in 0..n {
        if omega[i] != 0.0 {
            mu.scaled_add(problem.labels[i] * omega[i], &problem.features.row(i));
        }
    }

    let mut active: Vec<usize> = (0..n).collect();
    let mut passes = 0;
    while passes < opts.max_passes {
        passes += 1;
        let mut max_viol: f64 = 0.0;
        let mut keep = Vec::with_capacity(active.len());
        for &i in &active {
            let grad = problem.gradient(i, &mu);
            max_viol = max_viol.max(problem.violation(omega[i], grad));
            let new = if norms[i] > 0.0 {
                (omega[i] + grad / norms[i]).clamp(0.0, c)
            } else if grad > 0.0 {
                c
            } else {
                omega[i]
            };
            let delta = new - omega[i];
            if delta != 0.0 {
                mu.scaled_add(problem.labels[i] * delta, &problem.features.row(i));
                omega[i] = new;
            }
            // Coordinates stuck at a bound with a gradient pointing outward
            // are set aside until the next full check.
            let stuck = (omega[i] <= 0.0 && grad < -opts.tol) || (omega[i] >= c && grad > opts.tol);
            if !stuck {
                keep.push(i);
            }
        }
        if max_viol <= opts.tol {
            if active.len() == n {
                break;
            }
            active = (0..n).collect();
        } else if keep.is_empty() {
            active = (0..n).collect();
        } else {
            active = keep;
        }
    }

    let omega = Array2::from_shape_vec((n, 1), omega).expect("n×1");
    let kkt = problem.kkt_residual(&omega)?;
    let objective = -0.5 * mu.dot(&mu) + omega.sum();
    Ok(DualSolution {
        omega,
        mu,
        objective,
        kkt_violation: kkt,
        iterations: passes,
    })
}

// ---------------------------------------------------------------------------
// Multi-class simplex-constrained dual
// ---------------------------------------------------------------------------

/// Access to the difference vectors `Δg_n(y)` of a multi-class dual.
pub trait BlockFeatures: Sync {
    fn num_blocks(&self) -> usize;
    fn num_labels(&self) -> usize;
    fn dim(&self) -> usize;
    /// `Δg_n(y) · w`
    fn dot(&self, n: usize, y: usize, w: &[f64]) -> f64;
    /// `w += scale · Δg_n(y)`
    fn axpy(&self, n: usize, y: usize, scale: f64, w: &mut [f64]);
    /// Gram matrix of the block, `G[y, y'] = Δg_n(y) · Δg_n(y')`.
    fn gram(&self, n: usize) -> Array2<f64>;
    fn all_finite(&self) -> bool;
}

/// Explicit difference vectors: one `L × P` matrix per example.
#[derive(Debug, Clone)]
pub struct DenseDifferences {
    blocks: Vec<Array2<f64>>,
}

impl DenseDifferences {
    pub fn new(blocks: Vec<Array2<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Empty("multi-class dual needs at least one example".into()))?
            .dim();
        if blocks.iter().any(|b| b.dim() != first) {
            return Err(Error::DimensionMismatch("difference blocks differ in shape".into()));
        }
        Ok(DenseDifferences { blocks })
    }
}

impl BlockFeatures for DenseDifferences {
    fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
    fn num_labels(&self) -> usize {
        self.blocks[0].nrows()
    }
    fn dim(&self) -> usize {
        self.blocks[0].ncols()
    }
    fn dot(&self, n: usize, y: usize, w: &[f64]) -> f64 {
        self.blocks[n].row(y).iter().zip(w).map(|(a, b)| a * b).sum()
    }
    fn axpy(&self, n: usize, y: usize, scale: f64, w: &mut [f64]) {
        for (wi, a) in w.iter_mut().zip(self.blocks[n].row(y)) {
            *wi += scale * a;
        }
    }
    fn gram(&self, n: usize) -> Array2<f64> {
        let b = &self.blocks[n];
        b.dot(&b.t())
    }
    fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Joint feature map `g(y, z) = e_y ⊗ z`: `Δg_n(y) = (e_{y_n} - e_y) ⊗ z_n`.
/// The classifier vector is laid out label-major, `L` blocks of length `K`.
#[derive(Debug, Clone)]
pub struct JointFeatureMap {
    rows: Array2<f64>,
    labels: Vec<usize>,
    num_labels: usize,
}

impl JointFeatureMap {
    pub fn new(rows: Array2<f64>, labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::Empty("multi-class dual needs at least one example".into()));
        }
        if rows.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                rows.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_labels) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: num_labels,
            });
        }
        Ok(JointFeatureMap {
            rows,
            labels,
            num_labels,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

impl BlockFeatures for JointFeatureMap {
    fn num_blocks(&self) -> usize {
        self.rows.nrows()
    }
    fn num_labels(&self) -> usize {
        self.num_labels
    }
    fn dim(&self) -> usize {
        self.num_labels * self.rows.ncols()
    }
    fn dot(&self, n: usize, y: usize, w: &[f64]) -> f64 {
        let yn = self.labels[n];
        if y == yn {
            return 0.0;
        }
        let k = self.rows.ncols();
        let z = self.rows.row(n);
        let (wt, wy) = (&w[yn * k..(yn + 1) * k], &w[y * k..(y + 1) * k]);
        z.iter().zip(wt.iter().zip(wy)).map(|(zi, (a, b))| zi * (a - b)).sum()
    }
    fn axpy(&self, n: usize, y: usize, scale: f64, w: &mut [f64]) {
        let yn = self.labels[n];
        if y == yn || scale == 0.0 {
            return;
        }
        let k = self.rows.ncols();
        for (i, zi) in self.rows.row(n).iter().enumerate() {
            w[yn * k + i] += scale * zi;
            w[y * k + i] -= scale * zi;
        }
    }
    fn gram(&self, n: usize) -> Array2<f64> {
        let z = self.rows.row(n);
        let s = z.dot(&z);
        let yn = self.labels[n];
        Array2::from_shape_fn((self.num_labels, self.num_labels), |(a, b)| {
            if a == yn || b == yn {
                0.0
            } else if a == b {
                2.0 * s
            } else {
                s
            }
        })
    }
    fn all_finite(&self) -> bool {
        self.rows.iter().all(|v| v.is_finite())
    }
}

/// Multi-class dual: difference features, per-example costs and true labels.
#[derive(Debug, Clone)]
pub struct MulticlassDualProblem<F> {
    features: F,
    labels: Vec<usize>,
    costs: Array2<f64>,
    c: f64,
}

impl<F: BlockFeatures> MulticlassDualProblem<F> {
    pub fn new(features: F, labels: Vec<usize>, costs: Array2<f64>, c: f64) -> Result<Self> {
        let (n, l) = (features.num_blocks(), features.num_labels());
        if n == 0 {
            return Err(Error::Empty("multi-class dual needs at least one example".into()));
        }
        if l < 2 {
            return Err(Error::param("labels", format!("need at least 2 labels, got {l}")));
        }
        if labels.len() != n || costs.dim() != (n, l) {
            return Err(Error::DimensionMismatch(format!(
                "{n} blocks × {l} labels, but {} true labels and {:?} costs",
                labels.len(),
                costs.dim()
            )));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("multi-class dual features".into()));
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= l {
                return Err(Error::IndexOutOfRange { index: y, len: l });
            }
            if costs[[i, y]] != 0.0 {
                return Err(Error::param("costs", "the true label must have zero cost"));
            }
        }
        if costs.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("costs", "must be nonnegative and finite"));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::param("c", format!("must be nonnegative, got {c}")));
        }
        Ok(MulticlassDualProblem {
            features,
            labels,
            costs,
            c,
        })
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn num_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_labels(&self) -> usize {
        self.features.num_labels()
    }

    /// Gradient of the dual objective in block `n`: `ℓ_n(y) - Δg_n(y)·μ`.
    fn block_gradient(&self, n: usize, mu: &[f64]) -> Vec<f64> {
        (0..self.num_labels())
            .map(|y| self.costs[[n, y]] - self.features.dot(n, y, mu))
            .collect()
    }

    /// The all-mass-on-the-true-label point (μ = 0).
    pub fn trivial_point(&self) -> Array2<f64> {
        let mut omega = Array2::zeros((self.num_examples(), self.num_labels()));
        for (n, &y) in self.labels.iter().enumerate() {
            omega[[n, y]] = self.c;
        }
        omega
    }
}

fn block_violation(grad: &[f64], omega: ArrayView1<f64>) -> f64 {
    let max = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_support = grad
        .iter()
        .zip(omega.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    if min_support.is_finite() {
        max - min_support
    } else {
        0.0
    }
}

impl<F: BlockFeatures> DualProblem for MulticlassDualProblem<F> {
    fn check_feasible(&self, omega: &Array2<f64>) -> Result<()> {
        if omega.dim() != (self.num_examples(), self.num_labels()) {
            return Err(Error::DimensionMismatch(format!(
                "expected {}×{} duals, got {:?}",
                self.num_examples(),
                self.num_labels(),
                omega.dim()
            )));
        }
        for row in omega.rows() {
            if row.iter().any(|&w| !(w >= -FEAS_TOL)) || (row.sum() - self.c).abs() > FEAS_TOL {
                return Err(Error::Infeasible(format!(
                    "each example's duals must be nonnegative and sum to {}",
                    self.c
                )));
            }
        }
        Ok(())
    }

    fn induced_mean(&self, omega: &Array2<f64>) -> Array1<f64> {
        let mut mu = vec![0.0; self.features.dim()];
        for n in 0..self.num_examples() {
            for y in 0..self.num_labels() {
                let w = omega[[n, y]];
                if w != 0.0 {
                    self.features.axpy(n, y, w, &mut mu);
                }
            }
        }
        Array1::from(mu)
    }

    fn dual_objective(&self, omega: &Array2<f64>) -> f64 {
        let mu = self.induced_mean(omega);
        -0.5 * mu.dot(&mu) + (omega * &self.costs).sum()
    }

    fn primal_objective(&self, mu: ArrayView1<f64>) -> f64 {
        let mu_s = mu.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| mu.to_vec());
        let hinge: f64 = (0..self.num_examples())
            .map(|n| {
                (0..self.num_labels())
                    .map(|y| self.costs[[n, y]] - self.features.dot(n, y, &mu_s))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        0.5 * mu.dot(&mu) + self.c * hinge
    }

    fn kkt_residual(&self, omega: &Array2<f64>) -> Result<f64> {
        self.check_feasible(omega)?;
        let mu = self.induced_mean(omega).to_vec();
        Ok((0..self.num_examples())
            .map(|n| block_violation(&self.block_gradient(n, &mu), omega.row(n)))
            .fold(0.0, f64::max))
    }
}

/// Euclidean projection of `v` onto `{w ≥ 0, Σ w = c}`.
pub fn project_simplex(v: &[f64], c: f64) -> Vec<f64> {
    if c <= 0.0 {
        return vec![0.0; v.len()];
    }
    // The projection is invariant to shifting v by a constant; shifting by
    // the maximum keeps the cumulative sums small when v has large entries.
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = v.iter().map(|&x| x - top).collect();
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - c) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

const BLOCK_STEPS: usize = 50;
const BLOCK_TOL: f64 = 1e-10;

/// Lowest index among maxima.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cyclic block ascent for the multi-class dual.
pub fn solve_multiclass_simplex<F: BlockFeatures>(
    problem: &MulticlassDualProblem<F>,
    opts: &SolverOptions,
    warm_start: Option<&Array2<f64>>,
) -> Result<DualSolution> {
    opts.validate()?;
    let (n, l) = (problem.num_examples(), problem.num_labels());
    let c = problem.c;
    let mut omega = match warm_start {
        Some(w) if w.dim() == (n, l) => {
            let mut w = w.clone();
            for mut row in w.rows_mut() {
                let p = project_simplex(row.as_slice().expect("contiguous"), c);
                row.assign(&ArrayView1::from(&p));
            }
            w
        }
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start is {:?}, problem is {n}×{l}",
                w.dim()
            )))
        }
        None => problem.trivial_point(),
    };
    let mut mu = problem.induced_mean(&omega).to_vec();
    let grams: Vec<Array2<f64>> = (0..n).map(|i| problem.features.gram(i)).collect();
    // Gershgorin bound on the block Hessian's largest eigenvalue.
    let lips: Vec<f64> = grams
        .iter()
        .map(|g| g.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
        .collect();

    let mut passes = 0;
    while passes < opts.max_passes {
        passes += 1;
        let mut max_viol: f64 = 0.0;
        for i in 0..n {
            let mut grad = problem.block_gradient(i, &mu);
            max_viol = max_viol.max(block_violation(&grad, omega.row(i)));
            let old: Vec<f64> = omega.row(i).to_vec();
            let mut cur = old.clone();
            if lips[i] <= 0.0 {
                // linear objective over the simplex: a vertex is optimal
                cur = vec![0.0; l];
                cur[argmax(&grad)] = c;
            } else {
                let step = 1.0 / lips[i];
                for _ in 0..BLOCK_STEPS {
                    let trial: Vec<f64> = cur.iter().zip(&grad).map(|(w, g)| w + step * g).collect();
                    let next = project_simplex(&trial, c);
                    let delta: Vec<f64> = next.iter().zip(&cur).map(|(a, b)| a - b).collect();
                    let moved = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                    for (y, g) in grad.iter_mut().enumerate() {
                        *g -= (0..l).map(|yy| grams[i][[y, yy]] * delta[yy]).sum::<f64>();
                    }
                    cur = next;
                    if moved < BLOCK_TOL {
                        break;
                    }
                }
            }
            for y in 0..l {
                let d = cur[y] - old[y];
                if d != 0.0 {
                    problem.features.axpy(i, y, d, &mut mu);
                }
                omega[[i, y]] = cur[y];
            }
        }
        if max_viol <= opts.tol {
            break;
        }
    }

    let kkt = problem.kkt_residual(&omega)?;
    let mu = Array1::from(mu);
    let objective = -0.5 * mu.dot(&mu) + (&omega * &problem.costs).sum();
    Ok(DualSolution {
        omega,
        mu,
        objective,
        kkt_violation: kkt,
        iterations: passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn binary_single_example_analytic() {
        for (c, want) in [(10.0, 1.0), (0.5, 0.5)] {
            let p = BinaryDualProblem::new(array![[0.6, 0.8]], vec![1.0], c).unwrap();
            let s = solve_binary_box(&p, &opts(), None).unwrap();
            assert!((s.omega[[0, 0]] - want).abs() < 1e-12);
            assert!(s.kkt_violation <= 1e-9);
        }
        // ‖v‖² = 4 → ω = 1/4
        let p = BinaryDualProblem::new(array![[2.0, 0.0]], vec![-1.0], 10.0).unwrap();
        let s = solve_binary_box(&p, &opts(), None).unwrap();
        assert!((s.omega[[0, 0]] - 0.25).abs() < 1e-12);
        assert!((s.mu[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn binary_zero_c_is_trivial() {
        let p = BinaryDualProblem::new(array![[1.0, 2.0], [0.5, -1.0]], vec![1.0, -1.0], 0.0).unwrap();
        let s = solve_binary_box(&p, &opts(), None).unwrap();
        assert!(s.omega.iter().all(|&w| w == 0.0));
        assert!(s.mu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn binary_rejects_bad_input() {
        assert!(BinaryDualProblem::new(array![[f64::NAN]], vec![1.0], 1.0).is_err());
        assert!(BinaryDualProblem::new(array![[1.0]], vec![0.5], 1.0).is_err());
        assert!(BinaryDualProblem::new(Array2::zeros((0, 2)), vec![], 1.0).is_err());
        let p = BinaryDualProblem::new(array![[1.0]], vec![1.0], 1.0).unwrap();
        assert!(p.kkt_residual(&array![[2.0]]).is_err());
        assert!(solve_binary_box(&p, &SolverOptions { tol: 0.0, max_passes: 1 }, None).is_err());
    }

    #[test]
    fn binary_kkt_positive_at_zero_on_violating_instance() {
        let p = BinaryDualProblem::new(array![[1.0, 0.0], [0.0, 1.0]], vec![1.0, -1.0], 1.0).unwrap();
        assert!(p.kkt_residual(&Array2::zeros((2, 1))).unwrap() > 0.0);
    }

    fn random_binary(rng: &mut ChaCha8Rng, n: usize, k: usize) -> BinaryDualProblem {
        let f = Array2::from_shape_fn((n, k), |_| rng.gen_range(-2.0..2.0));
        let y = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        BinaryDualProblem::new(f, y, rng.gen_range(0.1..3.0)).unwrap()
    }

    #[test]
    fn binary_weak_duality_and_monotone_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let p = random_binary(&mut rng, 8, 3);
            let mut prev = f64::NEG_INFINITY;
            let mut warm: Option<Vec<f64>> = None;
            for _ in 0..10 {
                let s = solve_binary_box(&p, &SolverOptions { tol: 1e-12, max_passes: 1 }, warm.as_deref()).unwrap();
                assert!(s.objective >= prev - 1e-12);
                prev = s.objective;
                warm = Some(s.omega.column(0).to_vec());
            }
            let s = solve_binary_box(&p, &opts(), None).unwrap();
            assert!(s.kkt_violation <= 1e-6);
            assert!(s.objective <= p.primal_objective(s.mu.view()) + 1e-9);
            // at the optimum the duality gap closes
            assert!((p.primal_objective(s.mu.view()) - s.objective).abs() < 1e-4);
        }
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.2, 0.3, 0.5], 1.0);
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        let p = project_simplex(&[5.0, -1.0, 0.0], 2.0);
        assert_eq!(p, vec![2.0, 0.0, 0.0]);
        let p = project_simplex(&[1.0, 1.0], 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[3.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn multiclass_zero_features_goes_to_a_vertex() {
        let f = DenseDifferences::new(vec![Array2::zeros((3, 2))]).unwrap();
        let p = MulticlassDualProblem::new(f, vec![0], array![[0.0, 1.0, 1.0]], 1.0).unwrap();
        let s = solve_multiclass_simplex(&p, &opts(), None).unwrap();
        assert_eq!(s.omega.row(0).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn multiclass_scalar_interior_optimum() {
        // Δg(wrong) = e1, cost 1: maximise -½ω² + ω → ω = 1.
        let f = DenseDifferences::new(vec![array![[0.0, 0.0], [1.0, 0.0]]]).unwrap();
        let p = MulticlassDualProblem::new(f, vec![0], array![[0.0, 1.0]], 50.0).unwrap();
        let s = solve_multiclass_simplex(&p, &opts(), None).unwrap();
        assert!((s.omega[[0, 1]] - 1.0).abs() < 1e-6);
        assert!((s.omega[[0, 0]] - 49.0).abs() < 1e-6);
        assert!(s.kkt_violation <= 1e-6);
    }

    #[test]
    fn multiclass_rejects_bad_input() {
        let f = DenseDifferences::new(vec![Array2::zeros((1, 2))]).unwrap();
        assert!(MulticlassDualProblem::new(f, vec![0], array![[0.0]], 1.0).is_err());
        let f = DenseDifferences::new(vec![Array2::zeros((2, 2))]).unwrap();
        assert!(MulticlassDualProblem::new(f.clone(), vec![0], array![[1.0, 1.0]], 1.0).is_err());
        let f2 = DenseDifferences::new(vec![array![[0.0, 0.0], [f64::INFINITY, 0.0]]]).unwrap();
        assert!(MulticlassDualProblem::new(f2, vec![0], array![[0.0, 1.0]], 1.0).is_err());
        let p = MulticlassDualProblem::new(f, vec![0], array![[0.0, 1.0]], 1.0).unwrap();
        assert!(p.kkt_residual(&array![[0.7, 0.7]]).is_err());
    }

    #[test]
    fn joint_feature_map_matches_dense_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, l, k) = (5, 3, 4);
        let rows = Array2::from_shape_fn((n, k), |_| rng.gen::<f64>());
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..l)).collect();
        let joint = JointFeatureMap::new(rows.clone(), labels.clone(), l).unwrap();
        let blocks = (0..n)
            .map(|i| {
                Array2::from_shape_fn((l, l * k), |(y, j)| {
                    let (blk, kk) = (j / k, j % k);
                    let mut v = 0.0;
                    if blk == labels[i] {
                        v += rows[[i, kk]];
                    }
                    if blk == y {
                        v -= rows[[i, kk]];
                    }
                    v
                })
            })
            .collect();
        let dense = DenseDifferences::new(blocks).unwrap();
        let w: Vec<f64> = (0..l * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n {
            for y in 0..l {
                assert!((joint.dot(i, y, &w) - dense.dot(i, y, &w)).abs() < 1e-12);
            }
            let (a, b) = (joint.gram(i), dense.gram(i));
            assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn multiclass_weak_duality_and_monotone_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (n, l, k) = (6, 3, 3);
            let rows = Array2::from_shape_fn((n, k), |_| rng.gen_range(-1.0..1.0));
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..l)).collect();
            let costs = Array2::from_shape_fn((n, l), |(i, y)| if y == labels[i] { 0.0 } else { 1.0 });
            let f = JointFeatureMap::new(rows, labels.clone(), l).unwrap();
            let p = MulticlassDualProblem::new(f, labels, costs, rng.gen_range(0.2..3.0)).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let mut warm = None;
            for _ in 0..10 {
                let s = solve_multiclass_simplex(&p, &SolverOptions { tol: 1e-12, max_passes: 1 }, warm.as_ref())
                    .unwrap();
                assert!(s.objective >= prev - 1e-12);
                prev = s.objective;
                warm = Some(s.omega);
            }
            let s = solve_multiclass_simplex(&p, &opts(), None).unwrap();
            p.check_feasible(&s.omega).unwrap();
            assert!(s.kkt_violation <= 1e-6, "kkt {}", s.kkt_violation);
            assert!(s.objective <= p.primal_objective(s.mu.view()) + 1e-9);
        }
    }
}
