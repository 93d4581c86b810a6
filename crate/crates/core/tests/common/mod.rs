#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use regbayes::ibp::StickPosterior;
use regbayes::ilsvm::{IlsvmData, IlsvmState};
use regbayes::mt_ilsvm::{expected_gram, MtData, MtState, TaskData};
use regbayes::svm::project_simplex;

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(lo..hi))
}

pub fn random_sticks(rng: &mut ChaCha8Rng, k: usize) -> StickPosterior {
    let alpha = rng.gen_range(0.5..3.0);
    StickPosterior::new(alpha, uniform(rng, k, 2, 0.5, 5.0)).unwrap()
}

/// Random inputs: `n` rows of dimension `d`, labels in `0..l`, the first
/// `n_train` rows for training.
pub fn random_ilsvm_data(rng: &mut ChaCha8Rng, n: usize, d: usize, l: usize, n_train: usize) -> IlsvmData {
    let x = normal(rng, n, d);
    let labels = (0..n).map(|_| Some(rng.gen_range(0..l))).collect();
    IlsvmData::new(x, labels, (0..n_train).collect(), l).unwrap()
}

/// A random valid state for `data` with truncation `k`.
pub fn random_ilsvm_state(rng: &mut ChaCha8Rng, data: &IlsvmData, k: usize, c: f64) -> IlsvmState {
    let l = data.num_classes();
    let omega = Array2::from_shape_fn((data.train().len(), l), |_| rng.gen_range(0.0..1.0));
    let mut omega_feasible = Array2::zeros(omega.dim());
    for (i, row) in omega.rows().into_iter().enumerate() {
        let p = project_simplex(row.as_slice().unwrap(), c);
        omega_feasible.row_mut(i).assign(&Array1::from(p));
    }
    IlsvmState {
        sticks: random_sticks(rng, k),
        psi: uniform(rng, data.len(), k, 0.02, 0.98),
        phi: normal(rng, data.dim(), k),
        sigma_sq: uniform(rng, k, 1, 0.05, 1.0).column(0).to_owned(),
        mu: normal(rng, l, k),
        omega: omega_feasible,
        sigma0_sq: rng.gen_range(0.5..2.0),
        noise_var: uniform(rng, data.len(), 1, 0.3, 2.0).column(0).to_owned(),
        c,
    }
}

/// Random multi-task inputs: `n` shared rows of dimension `d`; task `m`
/// trains on a random subset of `per_task` rows.
pub fn random_mt_data(rng: &mut ChaCha8Rng, n: usize, d: usize, tasks: usize, per_task: usize) -> MtData {
    let x = normal(rng, n, d);
    let tasks = (0..tasks)
        .map(|_| {
            let mut rows: Vec<usize> = (0..n).collect();
            for i in 0..per_task {
                let j = rng.gen_range(i..n);
                rows.swap(i, j);
            }
            rows.truncate(per_task);
            rows.sort_unstable();
            let labels = rows.iter().map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            TaskData { rows, labels }
        })
        .collect();
    MtData::new(x, tasks).unwrap()
}

pub fn random_mt_state(rng: &mut ChaCha8Rng, data: &MtData, k: usize, c: f64) -> MtState {
    let psi = uniform(rng, data.dim(), k, 0.02, 0.98);
    let u = expected_gram(&psi);
    let sizes: Vec<usize> = data.tasks().iter().map(|t| t.rows.len()).collect();
    MtState {
        sticks: random_sticks(rng, k),
        psi,
        phi: sizes.iter().map(|&s| normal(rng, s, k)).collect(),
        sigma_sq: sizes.iter().map(|&s| uniform(rng, s, 1, 0.05, 1.0).column(0).to_owned()).collect(),
        mu: normal(rng, data.num_tasks(), k),
        omega: sizes.iter().map(|&s| uniform(rng, s, 1, 0.0, 1.0).column(0).mapv(|w| w * c)).collect(),
        sigma_m0_sq: uniform(rng, data.num_tasks(), 1, 0.5, 2.0).column(0).to_owned(),
        lambda_sq: sizes.iter().map(|&s| uniform(rng, s, 1, 0.3, 2.0).column(0).to_owned()).collect(),
        u,
        c,
    }
}

/// `Σ_{j≤k} E[log ν_j]` from an independent digamma.
pub fn cumulative_log_nu_oracle(sticks: &StickPosterior) -> Vec<f64> {
    use statrs::function::gamma::digamma;
    let g = sticks.gamma();
    let mut acc = 0.0;
    (0..sticks.truncation())
        .map(|j| {
            acc += digamma(g[[j, 0]]) - digamma(g[[j, 0]] + g[[j, 1]]);
            acc
        })
        .collect()
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Spearman rank correlation (no ties expected).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let var: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    cov / var
}

/// Gaussian log density of `x` under `N(mean, var I)`.
pub fn log_normal(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
    -sq / (2.0 * var) - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
}
