//! Single-task multi-way infinite latent SVM.
//!
//! Each example `x_n ∈ R^D` has binary latent features `z_n` under a
//! truncated IBP prior, a linear-Gaussian likelihood
//! `x_n ~ N(W z_n, σ_{n0}² I)` with `W_{·k} ~ N(0, σ₀² I)`, and a multi-class
//! linear classifier `η` acting on `g(y, z) = e_y ⊗ z`. The variational
//! posterior is
//!
//! ```text
//! q(ν) = Π Beta(γ_k1, γ_k2)   q(z_nk) = Bern(ψ_nk)
//! q(W_{·k}) = N(Φ_{·k}, σ_k² I)   q(η) = N(μ, I)
//! ```
//!
//! and training minimises `KL(q ‖ p) - E_q[log p(X | Z, W)]` plus
//! `C Σ_n max_y (ℓ_n(y) - Δf(y, n))` over the training rows, where
//! `f(y, n) = Σ_k μ[y, k] ψ_nk`.

use log::warn;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{kl_features, MultinomialBound, StickPosterior};
use crate::inference::{
    empirical_variance, fingerprint, init_psi, relative_change, row_variances, svd_loadings, FitConfig, Step,
    TraceEntry, HYPER_FLOOR,
};
use crate::special::sigmoid;
use crate::svm::{solve_multiclass_simplex, JointFeatureMap, MulticlassDualProblem};

pub type IlsvmConfig = FitConfig;

/// Whether the margin constraints shape the latent features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Joint inference with margin terms in every feature update.
    #[default]
    Full,
    /// Unsupervised latent features, then one classifier fit on top.
    Decoupled,
}

/// Inputs to inference: dense features, labels and the training rows.
#[derive(Debug, Clone)]
pub struct IlsvmData {
    x: Array2<f64>,
    labels: Vec<Option<usize>>,
    train: Vec<usize>,
    num_classes: usize,
    costs: Array2<f64>,
    train_pos: Vec<Option<usize>>,
}

impl IlsvmData {
    /// `labels[n]` must be present for every training row. Costs default to
    /// 0/1.
    pub fn new(x: Array2<f64>, labels: Vec<Option<usize>>, train: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = x.nrows();
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        if train.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        if num_classes == 0 {
            return Err(Error::param("num_classes", "need at least one class"));
        }
        let mut train_pos = vec![None; n];
        for (i, &r) in train.iter().enumerate() {
            if r >= n {
                return Err(Error::IndexOutOfRange { index: r, len: n });
            }
            if train_pos[r].is_some() {
                return Err(Error::Format(format!("training row {r} listed twice")));
            }
            match labels[r] {
                Some(y) if y < num_classes => {}
                Some(y) => return Err(Error::IndexOutOfRange { index: y, len: num_classes }),
                None => return Err(Error::Format(format!("training row {r} has no label"))),
            }
            train_pos[r] = Some(i);
        }
        Ok(IlsvmData {
            x,
            labels,
            train,
            num_classes,
            costs: zero_one_costs(num_classes),
            train_pos,
        })
    }

    /// Every row of `ds` takes part in inference; margins apply to `ds.train`.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let labels = match &ds.labels {
            Some(l) => l.iter().map(|&y| Some(y)).collect(),
            None => vec![None; ds.len()],
        };
        Self::new(ds.features.to_dense(), labels, ds.train.clone(), ds.num_classes())
    }

    /// Replaces the 0/1 costs; `costs[[t, y]]` is the cost of predicting `y`
    /// when the truth is `t`.
    pub fn with_costs(mut self, costs: Array2<f64>) -> Result<Self> {
        let l = self.num_classes;
        if costs.dim() != (l, l) {
            return Err(Error::DimensionMismatch(format!("cost matrix must be {l}×{l}")));
        }
        if (0..l).any(|t| costs[[t, t]] != 0.0) || costs.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::param("costs", "need a zero diagonal and finite nonnegative entries"));
        }
        self.costs = costs;
        Ok(self)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn costs(&self) -> &Array2<f64> {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn cost(&self, n: usize, y: usize) -> f64 {
        self.costs[[self.labels[n].expect("training row"), y]]
    }
}

/// `ℓ(t, y) = 𝕀[t ≠ y]`.
pub fn zero_one_costs(l: usize) -> Array2<f64> {
    Array2::from_shape_fn((l, l), |(t, y)| if t == y { 0.0 } else { 1.0 })
}

/// Variational parameters and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlsvmState {
    pub sticks: StickPosterior,
    /// N×K feature means.
    pub psi: Array2<f64>,
    /// D×K loading means.
    pub phi: Array2<f64>,
    /// Loading variances σ_k².
    pub sigma_sq: Array1<f64>,
    /// L×K classifier mean, one row per label.
    pub mu: Array2<f64>,
    /// Duals, one row per training example (in training order), one column
    /// per label. Each row sums to C.
    pub omega: Array2<f64>,
    /// Prior loading variance σ₀².
    pub sigma0_sq: f64,
    /// Per-example noise variances σ_{n0}².
    pub noise_var: Array1<f64>,
    pub c: f64,
}

impl IlsvmState {
    /// Starting point: prior sticks, `ψ = 0.5 + ε`, zero (or SVD) loadings
    /// with unit variances, `μ = 0`, all dual mass on the true labels and
    /// noise variances from each example's spread.
    pub fn init(data: &IlsvmData, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let k = config.truncation;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let psi = init_psi(data.len(), k, &mut rng);
        let phi = if config.svd_init {
            svd_loadings(&data.x, k)
        } else {
            Array2::zeros((data.dim(), k))
        };
        let mut omega = Array2::zeros((data.train.len(), data.num_classes));
        for (i, &n) in data.train.iter().enumerate() {
            omega[[i, data.labels[n].expect("training row")]] = config.c;
        }
        Ok(IlsvmState {
            sticks: StickPosterior::prior(config.alpha, k)?,
            psi,
            phi,
            sigma_sq: Array1::ones(k),
            mu: Array2::zeros((data.num_classes, k)),
            omega,
            sigma0_sq: 1.0,
            noise_var: row_variances(&data.x),
            c: config.c,
        })
    }

    pub fn truncation(&self) -> usize {
        self.psi.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.mu.nrows()
    }

    /// `f(y, n) = Σ_k μ[y, k] ψ_nk`.
    pub fn discriminant(&self, n: usize, y: usize) -> Result<f64> {
        if n >= self.psi.nrows() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.psi.nrows(),
            });
        }
        if y >= self.num_classes() {
            return Err(Error::IndexOutOfRange {
                index: y,
                len: self.num_classes(),
            });
        }
        Ok(self.mu.row(y).dot(&self.psi.row(n)))
    }

    /// `argmax_y f(y, n)`, lowest label on ties.
    pub fn predict(&self, n: usize) -> usize {
        predict_row(&self.mu, self.psi.row(n))
    }

    /// `E_q‖x_n - W z_n‖²`.
    pub fn expected_sq_error(&self, data: &IlsvmData, n: usize) -> f64 {
        let x = data.x.row(n);
        let psi = self.psi.row(n);
        let d = data.dim() as f64;
        let resid = &x - &self.phi.dot(&psi);
        let mut e = resid.dot(&resid);
        for k in 0..self.truncation() {
            let p = psi[k];
            let col = self.phi.column(k);
            e += p * (1.0 - p) * col.dot(&col) + p * d * self.sigma_sq[k];
        }
        e
    }

    /// `E_q[log p(x_n | z_n, W)]`.
    pub fn expected_loglik(&self, data: &IlsvmData, n: usize) -> f64 {
        let v = self.noise_var[n];
        let d = data.dim() as f64;
        -self.expected_sq_error(data, n) / (2.0 * v) - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln()
    }

    /// `KL(q(W) ‖ p(W | σ₀²))`.
    pub fn kl_loadings(&self) -> f64 {
        let d = self.phi.nrows() as f64;
        let s0 = self.sigma0_sq;
        (0..self.truncation())
            .map(|k| {
                let col = self.phi.column(k);
                let s = self.sigma_sq[k];
                (d * s + col.dot(&col)) / (2.0 * s0) - 0.5 * d - 0.5 * d * (s / s0).ln()
            })
            .sum()
    }

    /// `KL(q(η) ‖ N(0, I))`.
    pub fn kl_classifier(&self) -> f64 {
        0.5 * self.mu.iter().map(|v| v * v).sum::<f64>()
    }

    fn unsupervised_terms(&self, data: &IlsvmData) -> f64 {
        let bound = self.sticks.multinomial_bound();
        let loglik: f64 = (0..data.len()).map(|n| self.expected_loglik(data, n)).sum();
        self.sticks.kl() + kl_features(self.psi.view(), &self.sticks, &bound) + self.kl_loadings() + self.kl_classifier()
            - loglik
    }

    /// `Σ_{n ∈ train} max_y (ℓ_n(y) - Δf(y, n))`.
    pub fn hinge_loss(&self, data: &IlsvmData) -> f64 {
        data.train
            .iter()
            .map(|&n| {
                let f: Vec<f64> = self.mu.rows().into_iter().map(|m| m.dot(&self.psi.row(n))).collect();
                let t = data.labels[n].expect("training row");
                (0..self.num_classes())
                    .map(|y| data.cost(n, y) - (f[t] - f[y]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    /// Training objective: KL terms minus the expected log-likelihood plus
    /// `C` times the hinge loss.
    pub fn objective(&self, data: &IlsvmData) -> f64 {
        self.unsupervised_terms(data) + self.c * self.hinge_loss(data)
    }

    /// The objective with the hinge replaced by
    /// `Σ_{n,y} ω_n^y (ℓ_n(y) - Δf(y, n))` at the current duals.
    pub fn lagrangian(&self, data: &IlsvmData) -> f64 {
        let mut lin = 0.0;
        for (i, &n) in data.train.iter().enumerate() {
            let t = data.labels[n].expect("training row");
            let ft = self.mu.row(t).dot(&self.psi.row(n));
            for y in 0..self.num_classes() {
                let w = self.omega[[i, y]];
                if w != 0.0 {
                    lin += w * (data.cost(n, y) - (ft - self.mu.row(y).dot(&self.psi.row(n))));
                }
            }
        }
        self.unsupervised_terms(data) + lin
    }

    /// Coordinate update of the stick posteriors.
    pub fn update_sticks(&mut self) -> Result<()> {
        let bound = self.sticks.multinomial_bound();
        self.sticks = self.sticks.update(self.psi.view(), &bound)?;
        Ok(())
    }

    /// Gaussian update of each loading column in turn.
    pub fn update_loadings(&mut self, data: &IlsvmData) {
        let prior_prec = 1.0 / self.sigma0_sq;
        let mut resid = &data.x - &self.psi.dot(&self.phi.t());
        for k in 0..self.truncation() {
            let old = self.phi.column(k).to_owned();
            let mut num = Array1::<f64>::zeros(data.dim());
            let mut prec = prior_prec;
            for n in 0..data.len() {
                let p = self.psi[[n, k]];
                if p == 0.0 {
                    continue;
                }
                let w = p / self.noise_var[n];
                prec += w;
                // x_n - Σ_{j≠k} ψ_nj Φ_j = resid_n + ψ_nk Φ_k
                num.scaled_add(w, &resid.row(n));
                num.scaled_add(w * p, &old);
            }
            let new = num / prec;
            self.sigma_sq[k] = 1.0 / prec;
            let delta = &new - &old;
            for n in 0..data.len() {
                let p = self.psi[[n, k]];
                if p != 0.0 {
                    resid.row_mut(n).scaled_add(-p, &delta);
                }
            }
            self.phi.column_mut(k).assign(&new);
        }
    }

    /// Margin contribution `Σ_y ω_n^y (μ[y_n, k] - μ[y, k])` for each k.
    fn margin_term(&self, data: &IlsvmData, n: usize) -> Option<Array1<f64>> {
        let i = data.train_pos[n]?;
        let t = data.labels[n].expect("training row");
        let mut m = Array1::zeros(self.truncation());
        for y in 0..self.num_classes() {
            let w = self.omega[[i, y]];
            if w != 0.0 {
                m.scaled_add(w, &(&self.mu.row(t) - &self.mu.row(y)));
            }
        }
        Some(m)
    }

    /// Mean-field update `ψ_nk = sigmoid(ϑ_nk)` of every row, features in
    /// order within a row. Margin terms apply to training rows when
    /// `with_margin` is set. Rows do not interact, so `parallel` gives the
    /// same result.
    pub fn update_features(&mut self, data: &IlsvmData, with_margin: bool, parallel: bool) {
        let ctx = RowContext::new(self);
        let rows: Vec<Array1<f64>> = if parallel {
            (0..data.len())
                .into_par_iter()
                .map(|n| self.updated_row(&ctx, data, n, with_margin))
                .collect()
        } else {
            (0..data.len()).map(|n| self.updated_row(&ctx, data, n, with_margin)).collect()
        };
        for (n, row) in rows.into_iter().enumerate() {
            self.psi.row_mut(n).assign(&row);
        }
    }

    fn updated_row(&self, ctx: &RowContext, data: &IlsvmData, n: usize, with_margin: bool) -> Array1<f64> {
        let margin = if with_margin { self.margin_term(data, n) } else { None };
        let mut psi = self.psi.row(n).to_owned();
        ctx.sweep(self, data.x.row(n), &mut psi, self.noise_var[n], margin.as_ref());
        psi
    }

    /// Solves the multi-class dual on the current training features and sets
    /// `μ` from it. Returns the KKT residual.
    pub fn update_classifier(&mut self, data: &IlsvmData, config: &FitConfig) -> Result<f64> {
        if data.num_classes < 2 {
            warn!("a single class: classifier mean stays at zero");
            self.mu.fill(0.0);
            return Ok(0.0);
        }
        let labels: Vec<usize> = data.train.iter().map(|&n| data.labels[n].expect("training row")).collect();
        if labels.iter().all(|&y| y == labels[0]) {
            warn!("all training labels are identical");
        }
        let rows = self.psi.select(Axis(0), &data.train);
        let costs = Array2::from_shape_fn((labels.len(), data.num_classes), |(i, y)| {
            data.costs[[labels[i], y]]
        });
        let k = self.truncation();
        let features = JointFeatureMap::new(rows, labels.clone(), data.num_classes)?;
        let problem = MulticlassDualProblem::new(features, labels, costs, self.c)?;
        let sol = solve_multiclass_simplex(&problem, &config.solver, Some(&self.omega))?;
        if !sol.converged(config.solver.tol) {
            warn!("multi-class dual stopped with KKT residual {:.3e}", sol.kkt_violation);
        }
        self.mu = sol.mu.into_shape_with_order((data.num_classes, k)).expect("label-major layout");
        self.omega = sol.omega;
        Ok(sol.kkt_violation)
    }

    /// Closed-form updates of σ₀² and every σ_{n0}², floored at 1e-8.
    pub fn estimate_hypers(&mut self, data: &IlsvmData) {
        let (d, k) = (self.phi.nrows() as f64, self.truncation() as f64);
        let total: f64 = (0..self.truncation())
            .map(|j| {
                let col = self.phi.column(j);
                d * self.sigma_sq[j] + col.dot(&col)
            })
            .sum();
        self.sigma0_sq = (total / (k * d)).max(HYPER_FLOOR);
        for n in 0..data.len() {
            self.noise_var[n] = (self.expected_sq_error(data, n) / d).max(HYPER_FLOOR);
        }
    }

    fn all_finite(&self) -> bool {
        self.psi.iter().chain(&self.phi).chain(&self.mu).chain(&self.sigma_sq).chain(&self.noise_var).all(|v| v.is_finite())
            && self.sigma0_sq.is_finite()
    }
}

/// Quantities shared by every row in one feature sweep.
struct RowContext {
    cum: Vec<f64>,
    lnu: Vec<f64>,
    phi_sq: Vec<f64>,
    d: f64,
}

impl RowContext {
    fn new(state: &IlsvmState) -> Self {
        let bound: MultinomialBound = state.sticks.multinomial_bound();
        RowContext {
            cum: state.sticks.cumulative_log_nu(),
            lnu: bound.lnu().to_vec(),
            phi_sq: state.phi.columns().into_iter().map(|c| c.dot(&c)).collect(),
            d: state.phi.nrows() as f64,
        }
    }

    fn sweep(&self, state: &IlsvmState, x: ArrayView1<f64>, psi: &mut Array1<f64>, noise_var: f64, margin: Option<&Array1<f64>>) {
        let mut resid = &x - &state.phi.dot(psi);
        for k in 0..psi.len() {
            let col = state.phi.column(k);
            let old = psi[k];
            // Φ_kᵀ(x - Σ_{j≠k} ψ_j Φ_j)
            let proj = col.dot(&resid) + old * self.phi_sq[k];
            let mut theta = self.cum[k] - self.lnu[k] - (self.d * state.sigma_sq[k] + self.phi_sq[k]) / (2.0 * noise_var)
                + proj / noise_var;
            if let Some(m) = margin {
                theta += m[k];
            }
            let new = sigmoid(theta);
            if new != old {
                resid.scaled_add(old - new, &col);
                psi[k] = new;
            }
        }
    }
}

fn predict_row(mu: &Array2<f64>, psi: ArrayView1<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (y, m) in mu.rows().into_iter().enumerate() {
        let f = m.dot(&psi);
        if f > best.1 {
            best = (y, f);
        }
    }
    best.0
}

/// A fitted model as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlsvmModel {
    pub config: FitConfig,
    pub mode: Mode,
    /// Original label value of each class index.
    pub classes: Vec<f64>,
    pub dim: usize,
    pub state: IlsvmState,
    pub trace: Vec<TraceEntry>,
    pub outer_iterations: usize,
    /// Whether the outer loop met its tolerance before the iteration cap.
    pub converged: bool,
    pub kkt_violation: f64,
    /// Fingerprint of the feature matrix the state was inferred on.
    pub data_fingerprint: String,
}

impl IlsvmModel {
    /// Feature means for the rows of `x`. Reuses the fitted means when `x`
    /// is the training matrix; otherwise infers them with the global
    /// parameters frozen and no margin terms.
    pub fn feature_means(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, data has {}",
                self.dim,
                x.ncols()
            )));
        }
        if fingerprint(x) == self.data_fingerprint {
            return Ok(self.state.psi.clone());
        }
        Ok(self.infer_features(x))
    }

    /// Feature inference for new rows: ψ starts at 0.5 and is swept to a
    /// fixed point (noise variances re-estimated per row when the model was
    /// fit with hyperparameter estimation).
    pub fn infer_features(&self, x: &Array2<f64>) -> Array2<f64> {
        const MAX_SWEEPS: usize = 100;
        const TOL: f64 = 1e-6;
        let st = &self.state;
        let ctx = RowContext::new(st);
        let k = st.truncation();
        let d = x.ncols() as f64;
        let mut out = Array2::zeros((x.nrows(), k));
        for (n, row) in x.rows().into_iter().enumerate() {
            let mut psi = Array1::from_elem(k, 0.5);
            let mut var = empirical_variance(row);
            for _ in 0..MAX_SWEEPS {
                let before = psi.clone();
                ctx.sweep(st, row, &mut psi, var, None);
                if self.config.estimate_hypers {
                    let resid = &row - &st.phi.dot(&psi);
                    let extra: f64 = (0..k)
                        .map(|j| psi[j] * (1.0 - psi[j]) * ctx.phi_sq[j] + psi[j] * d * st.sigma_sq[j])
                        .sum();
                    var = ((resid.dot(&resid) + extra) / d).max(HYPER_FLOOR);
                }
                let moved = psi.iter().zip(&before).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if moved < TOL {
                    break;
                }
            }
            out.slice_mut(s![n, ..]).assign(&psi);
        }
        out
    }

    /// Class indices for the rows of `x`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let psi = self.feature_means(x)?;
        Ok(psi.rows().into_iter().map(|r| predict_row(&self.state.mu, r)).collect())
    }
}

/// Fits the joint model on `ds` (margins on `ds.train`).
pub fn fit(ds: &Dataset, config: &FitConfig) -> Result<IlsvmModel> {
    let data = IlsvmData::from_dataset(ds)?;
    let mut model = fit_observed(&data, config, Mode::Full, &mut |_, _| {})?;
    model.classes = ds.classes.clone();
    Ok(model)
}

/// Unsupervised latent features followed by a single classifier fit.
pub fn decoupled_baseline(ds: &Dataset, config: &FitConfig) -> Result<IlsvmModel> {
    let data = IlsvmData::from_dataset(ds)?;
    let mut model = fit_observed(&data, config, Mode::Decoupled, &mut |_, _| {})?;
    model.classes = ds.classes.clone();
    Ok(model)
}

/// The nested inference loop. `observer` sees the state after every
/// coordinate step.
///
/// Inner loop: sticks, loadings, features until the relative change of the
/// Lagrangian falls below `inner_tol` or `inner_iters` sweeps. Then the dual
/// solve (full mode only) and the optional hyperparameter update; the outer
/// loop stops on the relative change of the objective.
pub fn fit_observed(
    data: &IlsvmData,
    config: &FitConfig,
    mode: Mode,
    observer: &mut dyn FnMut(Step, &IlsvmState),
) -> Result<IlsvmModel> {
    let mut state = IlsvmState::init(data, config)?;
    let margin = mode == Mode::Full;
    let mut trace = Vec::new();
    let mut prev_obj = state.objective(data);
    let mut converged = false;
    let mut outer_iterations = 0;
    let mut kkt = 0.0;

    for outer in 0..config.outer_iters {
        let mut prev_lag = state.lagrangian(data);
        for inner in 0..config.inner_iters {
            state.update_sticks()?;
            observer(Step::Sticks, &state);
            state.update_loadings(data);
            observer(Step::Loadings, &state);
            state.update_features(data, margin, config.parallel);
            observer(Step::Features, &state);
            let lag = state.lagrangian(data);
            trace.push(TraceEntry {
                outer,
                inner: Some(inner),
                lagrangian: lag,
                objective: state.objective(data),
            });
            let done = relative_change(prev_lag, lag) < config.inner_tol;
            prev_lag = lag;
            if done {
                break;
            }
        }
        if margin {
            kkt = state.update_classifier(data, config)?;
            observer(Step::Classifier, &state);
        }
        if config.estimate_hypers {
            state.estimate_hypers(data);
            observer(Step::Hypers, &state);
        }
        let obj = state.objective(data);
        trace.push(TraceEntry {
            outer,
            inner: None,
            lagrangian: state.lagrangian(data),
            objective: obj,
        });
        outer_iterations = outer + 1;
        if !obj.is_finite() || !state.all_finite() {
            return Err(Error::NonFinite(format!("state after outer iteration {outer}")));
        }
        if relative_change(prev_obj, obj) < config.outer_tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    if !margin {
        kkt = state.update_classifier(data, config)?;
        observer(Step::Classifier, &state);
    }

    Ok(IlsvmModel {
        config: config.clone(),
        mode,
        classes: (0..data.num_classes).map(|c| c as f64).collect(),
        dim: data.dim(),
        state,
        trace,
        outer_iterations,
        converged,
        kkt_violation: kkt,
        data_fingerprint: fingerprint(&data.x),
    })
}
