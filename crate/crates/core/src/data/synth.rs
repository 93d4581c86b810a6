use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Features, Split, TaskSet};
use crate::error::{Error, Result};
use crate::ibp::sample_ibp_with;

/// Parameters of the latent-feature generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Rows (examples).
    pub n: usize,
    /// Observed dimension.
    pub d: usize,
    /// Number of latent features.
    pub k_true: usize,
    pub alpha: f64,
    pub noise_sd: f64,
    /// Classes for single-task data.
    pub labels: usize,
    /// Tasks for multi-task data.
    pub tasks: usize,
    /// Multi-task data only: all tasks label the same `n` rows. Otherwise each
    /// task gets its own `n` rows and the other tasks' labels are missing.
    pub shared_inputs: bool,
    /// When set, a random train/test split with this training fraction.
    pub train_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n: 200,
            d: 20,
            k_true: 5,
            alpha: 2.0,
            noise_sd: 0.1,
            labels: 3,
            tasks: 5,
            shared_inputs: false,
            train_fraction: None,
            seed: 0,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be positive"));
        }
        if self.d == 0 {
            return Err(Error::param("d", "must be positive"));
        }
        if self.k_true == 0 {
            return Err(Error::param("k_true", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::param("noise_sd", format!("must be non-negative, got {}", self.noise_sd)));
        }
        Ok(())
    }

    fn split(&self, n: usize) -> Result<Option<Split>> {
        self.train_fraction
            .map(|f| Split::random(n, f, self.seed.wrapping_add(1)))
            .transpose()
    }
}

/// Ground truth behind a synthetic dataset.
///
/// Single-task: `z` is N×K, `w` is K×D and `eta` is L×K. Multi-task: `z` is
/// the D×K projection, `w` holds one N×K row of loadings per example and
/// `eta` is M×K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub z: Array2<u8>,
    pub w: Array2<f64>,
    pub eta: Array2<f64>,
    pub pi: Vec<f64>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Stick-breaking draw with exactly `k` columns; rows (or, with
/// `nonempty_cols`, columns) that come out all-zero are redrawn.
fn latent_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize, alpha: f64, nonempty_cols: bool) -> Result<(Array2<u8>, Vec<f64>)> {
    let (z0, mut pi) = sample_ibp_with(alpha, n, Some(k), rng)?;
    pi.resize(k, 0.0);
    let mut z = Array2::zeros((n, k));
    z.slice_mut(ndarray::s![.., ..z0.ncols()]).assign(&z0);
    let p_draw = |rng: &mut ChaCha8Rng, p: f64| u8::from(rng.gen::<f64>() < p);
    if nonempty_cols {
        for j in 0..k {
            // a column with π=0 is forced on a single random row
            if pi[j] == 0.0 {
                let i = rng.gen_range(0..n);
                z[[i, j]] = 1;
                continue;
            }
            while z.column(j).iter().all(|&v| v == 0) {
                for i in 0..n {
                    z[[i, j]] = p_draw(rng, pi[j]);
                }
            }
        }
    } else {
        let best = pi.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(j, _)| j);
        for i in 0..n {
            let mut tries = 0;
            while z.row(i).iter().all(|&v| v == 0) {
                if tries == 1000 || pi[best] == 0.0 {
                    z[[i, best]] = 1;
                    break;
                }
                for j in 0..k {
                    z[[i, j]] = p_draw(rng, pi[j]);
                }
                tries += 1;
            }
        }
    }
    Ok((z, pi))
}

fn to_f64(z: &Array2<u8>) -> Array2<f64> {
    z.mapv(f64::from)
}

/// Single-task data: `X = ZW + noise`, `y = argmax_y η*_yᵀ z`.
///
/// Rows whose latent vector came out empty are redrawn, so every row has at
/// least one active feature and the labels are linearly separable in `Z`.
pub fn synth_classification(params: &SynthParams) -> Result<(Dataset, SynthTruth)> {
    params.validate()?;
    if params.labels < 2 {
        return Err(Error::param("labels", "need at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (z, pi) = latent_matrix(&mut rng, params.n, params.k_true, params.alpha, false)?;
    let w = normal_matrix(&mut rng, params.k_true, params.d, 1.0);
    let eta = normal_matrix(&mut rng, params.labels, params.k_true, 1.0);
    let zf = to_f64(&z);
    let x = zf.dot(&w) + normal_matrix(&mut rng, params.n, params.d, params.noise_sd);
    let scores = zf.dot(&eta.t());
    let labels = scores
        .axis_iter(Axis(0))
        .map(|s| argmax(s.iter().copied()))
        .collect();
    let classes = (1..=params.labels).map(|l| l as f64).collect();
    let mut ds = Dataset::new(Features::Dense(x), Some(labels), classes)?;
    if let Some(split) = params.split(params.n)? {
        ds = ds.with_split(&split)?;
    }
    Ok((ds, SynthTruth { z, w, eta, pi }))
}

/// Multi-task data: `x_n = Z w_n + noise` with a D×K projection `Z`, and
/// `y_{mn} = sign(η*_mᵀ Zᵀ x_n)` (zero maps to +1).
///
/// With `shared_inputs` there are `n` rows labelled by every task; otherwise
/// there are `tasks · n` rows and task `m` labels rows `m·n .. (m+1)·n`.
/// Columns of `Z` that came out empty are redrawn.
pub fn synth_multitask(params: &SynthParams) -> Result<(TaskSet, SynthTruth)> {
    params.validate()?;
    if params.tasks == 0 {
        return Err(Error::param("tasks", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (z, pi) = latent_matrix(&mut rng, params.d, params.k_true, params.alpha, true)?;
    let rows = if params.shared_inputs { params.n } else { params.n * params.tasks };
    let w = normal_matrix(&mut rng, rows, params.k_true, 1.0);
    let eta = normal_matrix(&mut rng, params.tasks, params.k_true, 1.0);
    let zf = to_f64(&z);
    let x = w.dot(&zf.t()) + normal_matrix(&mut rng, rows, params.d, params.noise_sd);
    let scores = x.dot(&zf).dot(&eta.t());
    let labels = (0..params.tasks)
        .map(|m| {
            scores
                .column(m)
                .iter()
                .enumerate()
                .map(|(n, &f)| {
                    let own = params.shared_inputs || n / params.n == m;
                    own.then_some(if f >= 0.0 { 1 } else { -1 })
                })
                .collect()
        })
        .collect();
    let names = (1..=params.tasks).map(|m| format!("t{m}")).collect();
    let mut ts = TaskSet::new(Features::Dense(x), labels, names)?;
    if let Some(split) = params.split(rows)? {
        ts = ts.with_split(&split)?;
    }
    Ok((ts, SynthTruth { z, w, eta, pi }))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
