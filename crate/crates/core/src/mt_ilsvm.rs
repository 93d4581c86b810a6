//! Multi-task infinite latent SVM.
//!
//! Tasks share a binary D×K projection `Z` under a truncated IBP prior (rows
//! of `Z` are input dimensions). Example `n` of task `m` is explained as
//! `x_mn ~ N(Z w_mn, λ_mn² I)` with `w_mn ~ N(0, σ_m0² I)`, and task `m`
//! classifies with `f_m(x) = E[Z η_m]ᵀ x = Σ_k μ_mk ψ_·kᵀ x`.
//!
//! Variational posterior: `q(z_dk) = Bern(ψ_dk)`, `q(w_mn) = N(φ_mn, σ_mn² I)`,
//! `q(η_m) = N(μ_m, I)`. Only training examples enter the likelihood; a test
//! point needs nothing beyond `ψ` and `μ`.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TaskSet;
use crate::error::{Error, Result};
use crate::ibp::{kl_features, StickPosterior};
use crate::ilsvm::Mode;
use crate::inference::{
    empirical_variance, init_psi, relative_change, FitConfig, Step, TraceEntry, HYPER_FLOOR,
};
use crate::special::sigmoid;
use crate::svm::{solve_binary_box, BinaryDualProblem, DualSolution};

pub type MtConfig = FitConfig;

/// Training examples of one task: rows of the shared matrix and ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub rows: Vec<usize>,
    pub labels: Vec<f64>,
}

/// Shared inputs and per-task training examples.
#[derive(Debug, Clone)]
pub struct MtData {
    x: Array2<f64>,
    tasks: Vec<TaskData>,
}

impl MtData {
    pub fn new(x: Array2<f64>, tasks: Vec<TaskData>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Empty("no tasks".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        for (m, t) in tasks.iter().enumerate() {
            if t.rows.is_empty() {
                return Err(Error::Empty(format!("task {m} has no training examples")));
            }
            if t.rows.len() != t.labels.len() {
                return Err(Error::DimensionMismatch(format!(
                    "task {m}: {} rows, {} labels",
                    t.rows.len(),
                    t.labels.len()
                )));
            }
            if let Some(&r) = t.rows.iter().find(|&&r| r >= x.nrows()) {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: x.nrows(),
                });
            }
            if t.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::Format(format!("task {m}: labels must be -1 or +1")));
            }
        }
        Ok(MtData { x, tasks })
    }

    /// Each task's training rows with their labels.
    pub fn from_taskset(ts: &TaskSet) -> Result<Self> {
        let tasks = (0..ts.num_tasks())
            .map(|m| TaskData {
                rows: ts.train[m].clone(),
                labels: ts.train[m]
                    .iter()
                    .map(|&n| f64::from(ts.labels[m][n].expect("training rows are labelled")))
                    .collect(),
            })
            .collect();
        Self::new(ts.features.to_dense(), tasks)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Variational parameters and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtState {
    pub sticks: StickPosterior,
    /// D×K projection means.
    pub psi: Array2<f64>,
    /// Per task, N_m×K loading means.
    pub phi: Vec<Array2<f64>>,
    /// Per task, loading variances σ_mn².
    pub sigma_sq: Vec<Array1<f64>>,
    /// M×K classifier means.
    pub mu: Array2<f64>,
    /// Per task, duals in [0, C].
    pub omega: Vec<Array1<f64>>,
    /// Per-task prior loading variances σ_m0².
    pub sigma_m0_sq: Array1<f64>,
    /// Per task, noise variances λ_mn².
    pub lambda_sq: Vec<Array1<f64>>,
    /// `E[ZᵀZ]`: `U_kk = Σ_d ψ_dk`, `U_jk = Σ_d ψ_dj ψ_dk`.
    pub u: Array2<f64>,
    pub c: f64,
}

/// `E[ZᵀZ]` for feature means `psi`.
pub fn expected_gram(psi: &Array2<f64>) -> Array2<f64> {
    let mut u = psi.t().dot(psi);
    for (k, s) in psi.sum_axis(Axis(0)).iter().enumerate() {
        u[[k, k]] = *s;
    }
    u
}

impl MtState {
    /// `ψ = 0.5 + ε` (seeded), zero loadings with unit variances, `μ = 0`,
    /// `ω = 0` and noise variances from each example's spread.
    pub fn init(data: &MtData, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let k = config.truncation;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let psi = init_psi(data.dim(), k, &mut rng);
        let u = expected_gram(&psi);
        let lambda_sq = data
            .tasks
            .iter()
            .map(|t| t.rows.iter().map(|&n| empirical_variance(data.x.row(n))).collect())
            .collect();
        Ok(MtState {
            sticks: StickPosterior::prior(config.alpha, k)?,
            psi,
            phi: data.tasks.iter().map(|t| Array2::zeros((t.rows.len(), k))).collect(),
            sigma_sq: data.tasks.iter().map(|t| Array1::ones(t.rows.len())).collect(),
            mu: Array2::zeros((data.num_tasks(), k)),
            omega: data.tasks.iter().map(|t| Array1::zeros(t.rows.len())).collect(),
            sigma_m0_sq: Array1::ones(data.num_tasks()),
            lambda_sq,
            u,
            c: config.c,
        })
    }

    pub fn truncation(&self) -> usize {
        self.psi.ncols()
    }

    pub fn num_tasks(&self) -> usize {
        self.mu.nrows()
    }

    /// `f_m(x) = Σ_k μ_mk ψ_·kᵀ x`.
    pub fn task_discriminant(&self, m: usize, x: ArrayView1<f64>) -> Result<f64> {
        if m >= self.num_tasks() {
            return Err(Error::IndexOutOfRange {
                index: m,
                len: self.num_tasks(),
            });
        }
        if x.len() != self.psi.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} features, projection has {}",
                x.len(),
                self.psi.nrows()
            )));
        }
        Ok(self.psi.t().dot(&x).dot(&self.mu.row(m)))
    }

    /// `sign f_m(x)`, with 0 mapped to +1.
    pub fn predict_task(&self, m: usize, x: ArrayView1<f64>) -> Result<i8> {
        Ok(if self.task_discriminant(m, x)? >= 0.0 { 1 } else { -1 })
    }

    /// `E_q‖x_mn - Z w_mn‖²`.
    pub fn expected_sq_error(&self, data: &MtData, m: usize, i: usize) -> f64 {
        let x = data.x.row(data.tasks[m].rows[i]);
        let phi = self.phi[m].row(i);
        let v = self.psi.t().dot(&x);
        let quad = phi.dot(&self.u.dot(&phi)) + self.sigma_sq[m][i] * self.u.diag().sum();
        x.dot(&x) - 2.0 * phi.dot(&v) + quad
    }

    /// `E_q[log p(x_mn | Z, w_mn)]` for the `i`-th training example of task `m`.
    pub fn expected_loglik(&self, data: &MtData, m: usize, i: usize) -> f64 {
        let l = self.lambda_sq[m][i];
        let d = data.dim() as f64;
        -self.expected_sq_error(data, m, i) / (2.0 * l) - 0.5 * d * (2.0 * std::f64::consts::PI * l).ln()
    }

    /// `Σ_mn KL(q(w_mn) ‖ N(0, σ_m0² I))`.
    pub fn kl_loadings(&self) -> f64 {
        let k = self.truncation() as f64;
        let mut kl = 0.0;
        for m in 0..self.num_tasks() {
            let s0 = self.sigma_m0_sq[m];
            for (phi, &s) in self.phi[m].rows().into_iter().zip(&self.sigma_sq[m]) {
                kl += (k * s + phi.dot(&phi)) / (2.0 * s0) - 0.5 * k * (1.0 + (s / s0).ln());
            }
        }
        kl
    }

    fn unsupervised_terms(&self, data: &MtData) -> f64 {
        let bound = self.sticks.multinomial_bound();
        let mut loglik = 0.0;
        for m in 0..self.num_tasks() {
            for i in 0..data.tasks[m].rows.len() {
                loglik += self.expected_loglik(data, m, i);
            }
        }
        self.sticks.kl() + kl_features(self.psi.view(), &self.sticks, &bound) + self.kl_loadings()
            + 0.5 * self.mu.iter().map(|v| v * v).sum::<f64>()
            - loglik
    }

    /// Training margins `y_mn f_m(x_mn)`, per task.
    fn margins(&self, data: &MtData) -> Vec<Vec<f64>> {
        let w = self.psi.dot(&self.mu.t()); // D×M
        data.tasks
            .iter()
            .enumerate()
            .map(|(m, t)| {
                t.rows
                    .iter()
                    .zip(&t.labels)
                    .map(|(&n, &y)| y * data.x.row(n).dot(&w.column(m)))
                    .collect()
            })
            .collect()
    }

    /// `Σ_{m,n} max(0, 1 - y_mn f_m(x_mn))`.
    pub fn hinge_loss(&self, data: &MtData) -> f64 {
        self.margins(data).iter().flatten().map(|&yf| (1.0 - yf).max(0.0)).sum()
    }

    /// Training objective with the hinge loss.
    pub fn objective(&self, data: &MtData) -> f64 {
        self.unsupervised_terms(data) + self.c * self.hinge_loss(data)
    }

    /// The objective with the hinge replaced by `Σ ω_mn (1 - y_mn f_m(x_mn))`.
    pub fn lagrangian(&self, data: &MtData) -> f64 {
        let lin: f64 = self
            .margins(data)
            .iter()
            .zip(&self.omega)
            .map(|(yf, w)| yf.iter().zip(w).map(|(f, w)| w * (1.0 - f)).sum::<f64>())
            .sum();
        self.unsupervised_terms(data) + lin
    }

    pub fn update_sticks(&mut self) -> Result<()> {
        let bound = self.sticks.multinomial_bound();
        self.sticks = self.sticks.update(self.psi.view(), &bound)?;
        Ok(())
    }

    /// Gaussian update of every example's loadings, components in order.
    pub fn update_loadings(&mut self, data: &MtData) {
        let k = self.truncation();
        let v_all = data.x.dot(&self.psi); // N×K, v_n = ψᵀx_n
        let trace_u = self.u.diag().sum();
        for m in 0..self.num_tasks() {
            let prior_prec = 1.0 / self.sigma_m0_sq[m];
            for (i, &n) in data.tasks[m].rows.iter().enumerate() {
                let l = self.lambda_sq[m][i];
                let v = v_all.row(n);
                let mut phi = self.phi[m].row_mut(i);
                for j in 0..k {
                    let cross: f64 = (0..k).filter(|&h| h != j).map(|h| phi[h] * self.u[[j, h]]).sum();
                    phi[j] = (v[j] - cross) / l / (prior_prec + self.u[[j, j]] / l);
                }
                self.sigma_sq[m][i] = 1.0 / (prior_prec + trace_u / (k as f64 * l));
            }
        }
    }

    /// Mean-field update `ψ_dk = sigmoid(ϑ_dk)`, components in order within a
    /// row; `U` is refreshed afterwards. Rows do not interact, so `parallel`
    /// gives the same result.
    pub fn update_projection(&mut self, data: &MtData, with_margin: bool, parallel: bool) {
        let (d, k) = self.psi.dim();
        let bound = self.sticks.multinomial_bound();
        let cum = self.sticks.cumulative_log_nu();
        let lnu = bound.lnu();

        // a_k = Σ (σ² + φ_k²)/(2λ²), B = Σ x φᵀ/λ², G = Σ φ φᵀ/λ²
        let mut a = Array1::<f64>::zeros(k);
        let mut b = Array2::<f64>::zeros((d, k));
        let mut g = Array2::<f64>::zeros((k, k));
        for m in 0..self.num_tasks() {
            let rows = &data.tasks[m].rows;
            let inv_l = self.lambda_sq[m].mapv(|l| 1.0 / l);
            let scaled = &self.phi[m] * &inv_l.view().insert_axis(Axis(1));
            for (i, phi) in self.phi[m].rows().into_iter().enumerate() {
                a += &(phi.mapv(|p| p * p + self.sigma_sq[m][i]) * (0.5 * inv_l[i]));
            }
            b += &data.x.select(Axis(0), rows).t().dot(&scaled);
            g += &self.phi[m].t().dot(&scaled);
        }
        let mut base = b;
        for mut row in base.rows_mut() {
            for j in 0..k {
                row[j] += cum[j] - lnu[j] - a[j];
            }
        }
        if with_margin {
            // Σ_m μ_mk Σ_n ω_mn y_mn x_nd
            let mut s = Array2::<f64>::zeros((self.num_tasks(), d));
            for (m, t) in data.tasks.iter().enumerate() {
                for ((&n, &y), &w) in t.rows.iter().zip(&t.labels).zip(&self.omega[m]) {
                    if w != 0.0 {
                        s.row_mut(m).scaled_add(w * y, &data.x.row(n));
                    }
                }
            }
            base += &s.t().dot(&self.mu);
        }

        let sweep = |dd: usize| -> Array1<f64> {
            let mut psi = self.psi.row(dd).to_owned();
            for j in 0..k {
                let cross: f64 = (0..k).filter(|&h| h != j).map(|h| g[[h, j]] * psi[h]).sum();
                psi[j] = sigmoid(base[[dd, j]] - cross);
            }
            psi
        };
        let rows: Vec<Array1<f64>> = if parallel {
            (0..d).into_par_iter().map(sweep).collect()
        } else {
            (0..d).map(sweep).collect()
        };
        for (dd, row) in rows.into_iter().enumerate() {
            self.psi.row_mut(dd).assign(&row);
        }
        self.u = expected_gram(&self.psi);
    }

    /// Solves each task's binary dual on `v_n = ψᵀx_n` and sets `μ_m`.
    /// Returns the largest KKT residual.
    pub fn update_task_classifiers(&mut self, data: &MtData, config: &FitConfig) -> Result<f64> {
        let solve = |m: usize| -> Result<DualSolution> {
            let t = &data.tasks[m];
            let v = data.x.select(Axis(0), &t.rows).dot(&self.psi);
            let problem = BinaryDualProblem::new(v, t.labels.clone(), self.c)?;
            let warm = self.omega[m].as_slice().expect("contiguous");
            solve_binary_box(&problem, &config.solver, Some(warm))
        };
        let sols: Vec<DualSolution> = if config.parallel {
            (0..self.num_tasks()).into_par_iter().map(solve).collect::<Result<_>>()?
        } else {
            (0..self.num_tasks()).map(solve).collect::<Result<_>>()?
        };
        let mut kkt: f64 = 0.0;
        for (m, sol) in sols.into_iter().enumerate() {
            if !sol.converged(config.solver.tol) {
                warn!("task {m}: dual stopped with KKT residual {:.3e}", sol.kkt_violation);
            }
            kkt = kkt.max(sol.kkt_violation);
            self.mu.row_mut(m).assign(&sol.mu);
            self.omega[m] = sol.omega.column(0).to_owned();
        }
        Ok(kkt)
    }

    /// Closed-form updates of every σ_m0² and λ_mn², floored at 1e-8.
    pub fn estimate_hypers(&mut self, data: &MtData) {
        let k = self.truncation() as f64;
        let d = data.dim() as f64;
        for m in 0..self.num_tasks() {
            let n_m = self.phi[m].nrows() as f64;
            let total: f64 = self.phi[m]
                .rows()
                .into_iter()
                .zip(&self.sigma_sq[m])
                .map(|(phi, &s)| k * s + phi.dot(&phi))
                .sum();
            self.sigma_m0_sq[m] = (total / (k * n_m)).max(HYPER_FLOOR);
            for i in 0..self.phi[m].nrows() {
                self.lambda_sq[m][i] = (self.expected_sq_error(data, m, i) / d).max(HYPER_FLOOR);
            }
        }
    }

    fn all_finite(&self) -> bool {
        let blocks = self.phi.iter().flatten().chain(self.sigma_sq.iter().flatten()).chain(self.lambda_sq.iter().flatten());
        self.psi.iter().chain(&self.mu).chain(&self.sigma_m0_sq).chain(blocks).all(|v| v.is_finite())
    }
}

/// A fitted multi-task model as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtModel {
    pub config: FitConfig,
    pub mode: Mode,
    pub task_names: Vec<String>,
    pub dim: usize,
    pub state: MtState,
    pub trace: Vec<TraceEntry>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub kkt_violation: f64,
}

impl MtModel {
    /// ±1 predictions, `[task][row]`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<Vec<i8>>> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, data has {}",
                self.dim,
                x.ncols()
            )));
        }
        let f = x.dot(&self.state.psi).dot(&self.state.mu.t()); // N×M
        Ok(f.columns()
            .into_iter()
            .map(|col| col.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
            .collect())
    }
}

/// Fits the joint model on every task's training rows.
pub fn fit_mt(ts: &TaskSet, config: &FitConfig) -> Result<MtModel> {
    let data = MtData::from_taskset(ts)?;
    let mut model = fit_mt_observed(&data, config, Mode::Full, &mut |_, _| {})?;
    model.task_names = ts.task_names.clone();
    Ok(model)
}

/// Unsupervised projection, then one dual solve per task.
pub fn decoupled_baseline(ts: &TaskSet, config: &FitConfig) -> Result<MtModel> {
    let data = MtData::from_taskset(ts)?;
    let mut model = fit_mt_observed(&data, config, Mode::Decoupled, &mut |_, _| {})?;
    model.task_names = ts.task_names.clone();
    Ok(model)
}

/// The nested inference loop; `observer` sees the state after every step.
///
/// Inner loop: sticks, loadings, projection until the relative change of
/// the Lagrangian falls below `inner_tol` or `inner_iters` sweeps; then the
/// per-task dual solves (full mode only) and the optional hyperparameter
/// update. The outer loop stops on the relative change of the objective.
pub fn fit_mt_observed(
    data: &MtData,
    config: &FitConfig,
    mode: Mode,
    observer: &mut dyn FnMut(Step, &MtState),
) -> Result<MtModel> {
    let mut state = MtState::init(data, config)?;
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
            state.update_projection(data, margin, config.parallel);
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
            kkt = state.update_task_classifiers(data, config)?;
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
        kkt = state.update_task_classifiers(data, config)?;
        observer(Step::Classifier, &state);
    }

    Ok(MtModel {
        config: config.clone(),
        mode,
        task_names: (1..=data.num_tasks()).map(|m| format!("task{m}")).collect(),
        dim: data.dim(),
        state,
        trace,
        outer_iterations,
        converged,
        kkt_violation: kkt,
    })
}
