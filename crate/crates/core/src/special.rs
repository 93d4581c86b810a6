//! Special functions needed by the variational updates.

use crate::error::{Error, Result};

/// Coefficients B_{2n} / (2n) of the asymptotic digamma expansion, n = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Digamma function for `x > 0`.
///
/// Shifts the argument up with `ψ(x) = ψ(x + 1) - 1/x` until `x >= 6`, then
/// evaluates the asymptotic series. Absolute error is below 1e-12 on (0, ∞).
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::param("x", format!("digamma needs x > 0, got {x}")));
    }
    Ok(digamma_pos(x))
}

/// Digamma without the domain check. Callers guarantee `x > 0`.
pub(crate) fn digamma_pos(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Horner over 1/x^2: sum_n c_n x^{-2n}
    let mut series = 0.0;
    for c in DIGAMMA_SERIES.iter().rev() {
        series = (series + c) * inv2;
    }
    acc + x.ln() - 0.5 / x - series
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection keeps the approximation in its accurate range
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// log B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `p ln p + (1 - p) ln(1 - p)` with `p` clamped away from {0, 1}.
#[inline]
pub(crate) fn neg_binary_entropy(p: f64) -> f64 {
    let p = p.clamp(crate::ibp::PSI_CLAMP, 1.0 - crate::ibp::PSI_CLAMP);
    p * p.ln() + (1.0 - p) * (1.0 - p).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_at_one_is_minus_euler_gamma() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.01, 0.3, 1.0, 2.5, 5.9, 6.0, 17.25, 300.0] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-11, "x = {x}: {lhs} vs {rhs}");
        }
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-12);
    }

    #[test]
    fn digamma_matches_statrs_reference() {
        for i in 1..400 {
            let x = i as f64 * 0.137;
            let want = statrs::function::gamma::digamma(x);
            assert!((digamma(x).unwrap() - want).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn digamma_at_ten_and_a_half() {
        // psi(n + 1/2) = -gamma - 2 ln 2 + sum_{k=1}^{n} 2/(2k-1)
        let mut want = -EULER_GAMMA - 2.0 * 2f64.ln();
        for k in 1..=10 {
            want += 2.0 / (2.0 * k as f64 - 1.0);
        }
        assert!((digamma(10.5).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn digamma_rejects_nonpositive() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        for i in 1..200 {
            let x = i as f64 * 0.21;
            let want = statrs::function::gamma::ln_gamma(x);
            assert!((ln_gamma(x) - want).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
