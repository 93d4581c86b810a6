//! Truncated stick-breaking variational state for the Indian buffet process.
//!
//! Sticks `ν_k ~ Beta(α, 1)` have variational posteriors `Beta(γ_k1, γ_k2)`;
//! feature probabilities are `π_k = Π_{j≤k} ν_j`. The intractable term
//! `E_q[log(1 - Π_{j≤k} ν_j)]` is replaced by the multinomial lower bound
//! [`MultinomialBound`], which turns the feature KL into an upper bound.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma_pos, ln_beta, neg_binary_entropy};

pub use crate::special::digamma;

/// Feature means are clamped to `[PSI_CLAMP, 1 - PSI_CLAMP]` inside entropy terms.
pub const PSI_CLAMP: f64 = 1e-12;

/// Sampler truncation: stop breaking once `π_k` falls below this.
pub const SAMPLER_TRUNCATION: f64 = 1e-8;

/// Beta posteriors over the K stick lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickPosterior {
    alpha: f64,
    /// K×2, columns (γ_k1, γ_k2).
    gamma: Array2<f64>,
}

impl StickPosterior {
    /// The prior itself: `γ_k = (α, 1)` for every k.
    pub fn prior(alpha: f64, truncation: usize) -> Result<Self> {
        let mut gamma = Array2::ones((truncation, 2));
        gamma.column_mut(0).fill(alpha);
        Self::new(alpha, gamma)
    }

    pub fn new(alpha: f64, gamma: Array2<f64>) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if gamma.nrows() == 0 || gamma.ncols() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "stick parameters must be K×2 with K ≥ 1, got {:?}",
                gamma.dim()
            )));
        }
        if gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::param("gamma", "entries must be positive and finite"));
        }
        Ok(StickPosterior { alpha, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    /// `E_q[log ν_j]` for a 0-based stick index.
    pub fn expected_log_nu(&self, j: usize) -> Result<f64> {
        if j >= self.truncation() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.truncation(),
            });
        }
        Ok(self.elog_nu(j))
    }

    fn elog_nu(&self, j: usize) -> f64 {
        let (a, b) = (self.gamma[[j, 0]], self.gamma[[j, 1]]);
        digamma_pos(a) - digamma_pos(a + b)
    }

    /// Prefix sums `Σ_{j≤k} E_q[log ν_j]` for k = 0..K.
    pub fn cumulative_log_nu(&self) -> Vec<f64> {
        let mut acc = 0.0;
        (0..self.truncation())
            .map(|j| {
                acc += self.elog_nu(j);
                acc
            })
            .collect()
    }

    /// The tightest multinomial lower bound on `E_q[log(1 - Π_{j≤k} ν_j)]`.
    pub fn multinomial_bound(&self) -> MultinomialBound {
        let k_max = self.truncation();
        let dg1: Vec<f64> = (0..k_max).map(|m| digamma_pos(self.gamma[[m, 0]])).collect();
        let dg2: Vec<f64> = (0..k_max).map(|m| digamma_pos(self.gamma[[m, 1]])).collect();
        let dgs: Vec<f64> = (0..k_max)
            .map(|m| digamma_pos(self.gamma[[m, 0]] + self.gamma[[m, 1]]))
            .collect();

        // Unnormalised log-weights; the m-th weight does not depend on k.
        let mut logw = Vec::with_capacity(k_max);
        let (mut sum1, mut sums) = (0.0, 0.0);
        for m in 0..k_max {
            sums += dgs[m];
            logw.push(dg2[m] + sum1 - sums);
            sum1 += dg1[m];
        }

        let mut q = Vec::with_capacity(k_max);
        let mut lnu = Vec::with_capacity(k_max);
        for k in 0..k_max {
            let w = &logw[..=k];
            let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = w.iter().map(|v| (v - max).exp()).sum();
            let qk: Vec<f64> = w.iter().map(|v| (v - max).exp() / z).collect();
            lnu.push(bound_value(&qk, &dg1, &dg2, &dgs));
            q.push(qk);
        }
        MultinomialBound { q, lnu }
    }

    /// Coordinate update of every `γ_k` given feature means over R rows
    /// (data examples or input dimensions) and the bound computed at the
    /// current `γ`.
    pub fn update(&self, psi: ArrayView2<f64>, bound: &MultinomialBound) -> Result<StickPosterior> {
        let k_max = self.truncation();
        if psi.ncols() != k_max || bound.truncation() != k_max {
            return Err(Error::DimensionMismatch(format!(
                "feature means have {} columns, bound has {}, truncation is {k_max}",
                psi.ncols(),
                bound.truncation()
            )));
        }
        let rows = psi.nrows() as f64;
        let active: Vec<f64> = psi.sum_axis(Axis(0)).to_vec();
        let inactive: Vec<f64> = active.iter().map(|s| rows - s).collect();

        let mut gamma = Array2::zeros((k_max, 2));
        for k in 0..k_max {
            let mut g1 = self.alpha + active[k..].iter().sum::<f64>();
            for m in k + 1..k_max {
                let tail: f64 = bound.q[m][k + 1..=m].iter().sum();
                g1 += inactive[m] * tail;
            }
            let g2 = 1.0 + (k..k_max).map(|m| inactive[m] * bound.q[m][k]).sum::<f64>();
            gamma[[k, 0]] = g1;
            gamma[[k, 1]] = g2;
        }
        StickPosterior::new(self.alpha, gamma)
    }

    /// `KL(q(ν) ‖ π(ν))`.
    pub fn kl(&self) -> f64 {
        let k_max = self.truncation();
        let mut kl = 0.0;
        for k in 0..k_max {
            let (a, b) = (self.gamma[[k, 0]], self.gamma[[k, 1]]);
            let ds = digamma_pos(a + b);
            kl += (a - self.alpha) * (digamma_pos(a) - ds) + (b - 1.0) * (digamma_pos(b) - ds)
                - ln_beta(a, b);
        }
        kl - k_max as f64 * self.alpha.ln()
    }
}

fn bound_value(qk: &[f64], dg1: &[f64], dg2: &[f64], dgs: &[f64]) -> f64 {
    let k = qk.len();
    let mut value = 0.0;
    // tail[m] = Σ_{n≥m} q_kn
    let mut tail = vec![0.0; k + 1];
    for m in (0..k).rev() {
        tail[m] = tail[m + 1] + qk[m];
    }
    for m in 0..k {
        value += qk[m] * dg2[m];
        if m + 1 < k {
            value += tail[m + 1] * dg1[m];
        }
        value -= tail[m] * dgs[m];
        if qk[m] > 0.0 {
            value -= qk[m] * qk[m].ln();
        }
    }
    value
}

/// Auxiliary multinomials `q_k·` and the resulting bounds `L_k^ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialBound {
    q: Vec<Vec<f64>>,
    lnu: Vec<f64>,
}

impl MultinomialBound {
    pub fn truncation(&self) -> usize {
        self.lnu.len()
    }

    /// `q_k·` (length k + 1 for a 0-based k).
    pub fn q(&self, k: usize) -> &[f64] {
        &self.q[k]
    }

    /// `L_k^ν` for every k.
    pub fn lnu(&self) -> &[f64] {
        &self.lnu
    }

    /// Evaluates the bound for stick `k` at an arbitrary point of the simplex.
    pub fn evaluate_at(sticks: &StickPosterior, qk: &[f64]) -> f64 {
        let k = qk.len();
        let g = sticks.gamma();
        let dg1: Vec<f64> = (0..k).map(|m| digamma_pos(g[[m, 0]])).collect();
        let dg2: Vec<f64> = (0..k).map(|m| digamma_pos(g[[m, 1]])).collect();
        let dgs: Vec<f64> = (0..k).map(|m| digamma_pos(g[[m, 0]] + g[[m, 1]])).collect();
        bound_value(qk, &dg1, &dg2, &dgs)
    }
}

/// Upper bound on `E_{q(ν)}[KL(q(Z) ‖ π(Z | ν))]` over the rows of `psi`.
pub fn kl_features(psi: ArrayView2<f64>, sticks: &StickPosterior, bound: &MultinomialBound) -> f64 {
    let cum = sticks.cumulative_log_nu();
    let lnu = bound.lnu();
    let mut kl = 0.0;
    for row in psi.rows() {
        for (k, &p) in row.iter().enumerate() {
            kl += -p * cum[k] - (1.0 - p) * lnu[k] + neg_binary_entropy(p);
        }
    }
    kl
}

/// Draws a binary matrix from the stick-breaking IBP with `n` rows.
///
/// Columns are generated until `π_k < 1e-8`; columns that no row selected are
/// kept, so the column count equals the number of sticks drawn.
pub fn sample_ibp(alpha: f64, n: usize, seed: u64) -> Result<Array2<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_ibp_with(alpha, n, None, &mut rng)?.0)
}

/// Like [`sample_ibp`], optionally capped at `max_features` columns.
/// Returns the matrix and the stick products `π_k`.
pub fn sample_ibp_with<R: Rng>(
    alpha: f64,
    n: usize,
    max_features: Option<usize>,
    rng: &mut R,
) -> Result<(Array2<u8>, Vec<f64>)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::param("n", "need at least one row"));
    }
    let cap = max_features.unwrap_or(usize::MAX);
    let mut pis = Vec::new();
    let mut pi = 1.0;
    while pis.len() < cap {
        // Beta(α, 1) by inversion
        let u: f64 = rng.gen();
        pi *= u.powf(1.0 / alpha);
        if pi < SAMPLER_TRUNCATION {
            break;
        }
        pis.push(pi);
    }
    let mut z = Array2::zeros((n, pis.len()));
    for mut row in z.rows_mut() {
        for (k, &p) in pis.iter().enumerate() {
            row[k] = u8::from(rng.gen::<f64>() < p);
        }
    }
    Ok((z, pis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Beta, Distribution};

    fn random_sticks(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> StickPosterior {
        let alpha = rng.gen_range(0.5..3.0);
        let gamma = Array2::from_shape_fn((k, 2), |_| rng.gen_range(lo..hi));
        StickPosterior::new(alpha, gamma).unwrap()
    }

    #[test]
    fn expected_log_nu_closed_forms() {
        let sp = StickPosterior::new(1.0, array![[1.0, 1.0], [2.0, 1.0]]).unwrap();
        assert!((sp.expected_log_nu(0).unwrap() + 1.0).abs() < 1e-12);
        assert!((sp.expected_log_nu(1).unwrap() + 0.5).abs() < 1e-12);
        assert!(sp.expected_log_nu(2).is_err());
    }

    #[test]
    fn expected_log_nu_monte_carlo() {
        let sp = StickPosterior::new(1.0, array![[3.7, 0.9]]).unwrap();
        let beta = Beta::new(3.7, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v: f64 = beta.sample(&mut rng);
            let l = v.ln();
            s += l;
            s2 += l * l;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((sp.expected_log_nu(0).unwrap() - mean).abs() < 3.0 * se);
    }

    #[test]
    fn bound_single_stick_is_exact() {
        let sp = StickPosterior::new(1.3, array![[2.2, 0.7]]).unwrap();
        let b = sp.multinomial_bound();
        assert_eq!(b.q(0), &[1.0]);
        let want = digamma_pos(0.7) - digamma_pos(2.9);
        assert!((b.lnu()[0] - want).abs() < 1e-12);

        let sp = StickPosterior::new(1.0, array![[1.0, 1.0]]).unwrap();
        assert!((sp.multinomial_bound().lnu()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_is_normalised_and_equals_log_sum_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = random_sticks(&mut rng, 6, 0.5, 5.0);
        let b = sp.multinomial_bound();
        let g = sp.gamma();
        for k in 0..6 {
            let sum: f64 = b.q(k).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(b.q(k).iter().all(|&v| v >= 0.0));
            // at the optimum the bound equals log Σ_m exp(a_m)
            let lse: f64 = (0..=k)
                .map(|m| {
                    let mut a = digamma_pos(g[[m, 1]]);
                    for n in 0..m {
                        a += digamma_pos(g[[n, 0]]);
                    }
                    for n in 0..=m {
                        a -= digamma_pos(g[[n, 0]] + g[[n, 1]]);
                    }
                    a.exp()
                })
                .sum::<f64>()
                .ln();
            assert!((b.lnu()[k] - lse).abs() < 1e-10);
        }
    }

    #[test]
    fn bound_is_maximised_by_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sp = random_sticks(&mut rng, 5, 0.5, 5.0);
        let b = sp.multinomial_bound();
        for k in 1..5 {
            let q = b.q(k).to_vec();
            for i in 0..=k {
                for j in 0..=k {
                    if i == j || q[j] < 1e-3 {
                        continue;
                    }
                    let mut p = q.clone();
                    p[i] += 1e-3;
                    p[j] -= 1e-3;
                    assert!(MultinomialBound::evaluate_at(&sp, &p) < b.lnu()[k]);
                }
            }
        }
    }

    #[test]
    fn bound_below_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sp = random_sticks(&mut rng, 3, 0.5, 5.0);
        let b = sp.multinomial_bound();
        let betas: Vec<Beta<f64>> = (0..3)
            .map(|k| Beta::new(sp.gamma()[[k, 0]], sp.gamma()[[k, 1]]).unwrap())
            .collect();
        let n = 1_000_000;
        let mut s = [0.0; 3];
        let mut s2 = [0.0; 3];
        for _ in 0..n {
            let mut prod = 1.0;
            for k in 0..3 {
                prod *= betas[k].sample(&mut rng);
                let l = (1.0 - prod).ln();
                s[k] += l;
                s2[k] += l * l;
            }
        }
        for k in 0..3 {
            let mean = s[k] / n as f64;
            let se = ((s2[k] / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(b.lnu()[k] <= mean + 3.0 * se, "k = {k}");
        }
    }

    /// Straight-line version of the stick update, written from the formula.
    fn naive_update(sp: &StickPosterior, psi: &Array2<f64>, q: &MultinomialBound) -> Array2<f64> {
        let k_max = sp.truncation();
        let r = psi.nrows() as f64;
        let mut out = Array2::zeros((k_max, 2));
        for k in 0..k_max {
            let mut g1 = sp.alpha();
            for m in k..k_max {
                for row in 0..psi.nrows() {
                    g1 += psi[[row, m]];
                }
            }
            for m in k + 1..k_max {
                let mut col = 0.0;
                for row in 0..psi.nrows() {
                    col += psi[[row, m]];
                }
                let mut tail = 0.0;
                for i in k + 1..=m {
                    tail += q.q(m)[i];
                }
                g1 += (r - col) * tail;
            }
            let mut g2 = 1.0;
            for m in k..k_max {
                let mut col = 0.0;
                for row in 0..psi.nrows() {
                    col += psi[[row, m]];
                }
                g2 += (r - col) * q.q(m)[k];
            }
            out[[k, 0]] = g1;
            out[[k, 1]] = g2;
        }
        out
    }

    #[test]
    fn update_edge_cases() {
        let sp = StickPosterior::prior(2.0, 1).unwrap();
        let psi = Array2::zeros((5, 1));
        let up = sp.update(psi.view(), &sp.multinomial_bound()).unwrap();
        assert_eq!(up.gamma()[[0, 0]], 2.0);
        assert_eq!(up.gamma()[[0, 1]], 6.0);

        let sp = StickPosterior::prior(0.7, 4).unwrap();
        let psi = Array2::ones((3, 4));
        let up = sp.update(psi.view(), &sp.multinomial_bound()).unwrap();
        for k in 0..4 {
            assert_eq!(up.gamma()[[k, 1]], 1.0);
        }
    }

    #[test]
    fn update_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sp = random_sticks(&mut rng, 4, 0.5, 4.0);
        let psi = Array2::from_shape_fn((6, 4), |_| rng.gen::<f64>());
        let bound = sp.multinomial_bound();
        let up = sp.update(psi.view(), &bound).unwrap();
        let want = naive_update(&sp, &psi, &bound);
        for (a, b) in up.gamma().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let floor = sp.alpha().min(1.0);
        assert!(up.gamma().iter().all(|&g| g >= floor));
    }

    #[test]
    fn kl_sticks_prior_is_zero_and_nonnegative() {
        let sp = StickPosterior::prior(1.7, 5).unwrap();
        assert!(sp.kl().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let sp = random_sticks(&mut rng, 4, 0.1, 20.0);
            assert!(sp.kl() >= -1e-12);
        }
    }

    #[test]
    fn kl_sticks_matches_quadrature() {
        // KL(Beta(2,3) ‖ Beta(1,1)) by composite Simpson on the density ratio.
        let sp = StickPosterior::new(1.0, array![[2.0, 3.0]]).unwrap();
        let ln_b = crate::special::ln_beta(2.0, 3.0);
        let n = 200_000;
        let h = 1.0 / n as f64;
        let f = |x: f64| {
            if x <= 0.0 || x >= 1.0 {
                return 0.0;
            }
            let lq = x.ln() + 2.0 * (1.0 - x).ln() - ln_b;
            lq.exp() * lq
        };
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let kl = acc * h / 3.0;
        assert!((sp.kl() - kl).abs() < 1e-6);
    }

    fn naive_kl_features(psi: &Array2<f64>, sp: &StickPosterior) -> f64 {
        let b = sp.multinomial_bound();
        let mut total = 0.0;
        for r in 0..psi.nrows() {
            for k in 0..psi.ncols() {
                let mut cum = 0.0;
                for j in 0..=k {
                    cum += sp.expected_log_nu(j).unwrap();
                }
                let p = psi[[r, k]].clamp(PSI_CLAMP, 1.0 - PSI_CLAMP);
                total += -psi[[r, k]] * cum - (1.0 - psi[[r, k]]) * b.lnu()[k]
                    + p * p.ln()
                    + (1.0 - p) * (1.0 - p).ln();
            }
        }
        total
    }

    #[test]
    fn kl_features_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sp = random_sticks(&mut rng, 5, 0.5, 5.0);
        let psi = Array2::from_shape_fn((7, 5), |_| rng.gen::<f64>());
        let b = sp.multinomial_bound();
        let got = kl_features(psi.view(), &sp, &b);
        assert!((got - naive_kl_features(&psi, &sp)).abs() < 1e-10);

        let sp1 = random_sticks(&mut rng, 1, 0.5, 5.0);
        let one = Array2::ones((1, 1));
        let v = kl_features(one.view(), &sp1, &sp1.multinomial_bound());
        assert!((v + sp1.expected_log_nu(0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn kl_features_stationary_at_sigmoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sp = random_sticks(&mut rng, 4, 0.5, 5.0);
        let b = sp.multinomial_bound();
        let cum = sp.cumulative_log_nu();
        let psi = Array2::from_shape_fn((3, 4), |(_, k)| crate::special::sigmoid(cum[k] - b.lnu()[k]));
        let base = kl_features(psi.view(), &sp, &b);
        for r in 0..3 {
            for k in 0..4 {
                for d in [-1e-3, 1e-3] {
                    let mut p = psi.clone();
                    p[[r, k]] += d;
                    assert!(kl_features(p.view(), &sp, &b) >= base);
                }
            }
        }
    }

    #[test]
    fn sampler_behaviour() {
        let z = sample_ibp(1e-6, 100, 1).unwrap();
        let mean = z.iter().map(|&v| v as f64).sum::<f64>() / 100.0;
        assert!(mean < 0.01);

        let a = sample_ibp(2.0, 50, 99).unwrap();
        let b = sample_ibp(2.0, 50, 99).unwrap();
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (_, pis) = sample_ibp_with(1.5, 3, None, &mut rng).unwrap();
            assert!(pis.windows(2).all(|w| w[1] <= w[0]));
            assert!(pis.iter().all(|&p| p >= SAMPLER_TRUNCATION));
        }
    }

    #[test]
    fn sampler_row_counts_are_poisson_mean() {
        // Rows of one matrix share sticks, so draw independent single-row matrices.
        let alpha = 2.0;
        let rows = 2000;
        let total: f64 = (0..rows)
            .map(|i| sample_ibp(alpha, 1, 1000 + i as u64).unwrap().iter().map(|&v| v as f64).sum::<f64>())
            .sum();
        let mean = total / rows as f64;
        assert!((1.8..=2.2).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invalid_posteriors_rejected() {
        assert!(StickPosterior::prior(0.0, 3).is_err());
        assert!(StickPosterior::prior(1.0, 0).is_err());
        assert!(StickPosterior::new(1.0, array![[1.0, -1.0]]).is_err());
    }
}
