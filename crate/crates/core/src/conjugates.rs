//! Hinge-style losses and their Fenchel conjugates.
//!
//! The conjugates of the hinge losses are indicator functions of convex sets
//! (possibly plus a linear/absolute term), so they are reported as an
//! [`ExtendedValue`] rather than a floating-point infinity.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Absolute tolerance used when checking `Σ μ_i = C` for [`g1_conj`].
pub const SUM_TOL: f64 = 1e-9;

/// A value in `ℝ ∪ {+∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedValue {
    Finite(f64),
    Infeasible,
}

impl ExtendedValue {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedValue::Finite(v) => Some(v),
            ExtendedValue::Infeasible => None,
        }
    }

    fn indicator(feasible: bool) -> Self {
        if feasible {
            ExtendedValue::Finite(0.0)
        } else {
            ExtendedValue::Infeasible
        }
    }
}

impl PartialOrd for ExtendedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtendedValue::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), Infeasible) => Some(Ordering::Less),
            (Infeasible, Finite(_)) => Some(Ordering::Greater),
            (Infeasible, Infeasible) => Some(Ordering::Equal),
        }
    }
}

/// Binary hinge: `C max(0, x)`.
pub fn g0(x: f64, c: f64) -> f64 {
    c * x.max(0.0)
}

/// Conjugate of [`g0`]: the indicator of `0 ≤ μ ≤ C`.
pub fn g0_conj(mu: f64, c: f64) -> ExtendedValue {
    ExtendedValue::indicator((0.0..=c).contains(&mu))
}

/// Multi-class hinge: `C max_i x_i`.
pub fn g1(x: &[f64], c: f64) -> Result<f64> {
    let max = x
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::Empty("g1 needs at least one coordinate".into()))?;
    Ok(c * max)
}

/// Conjugate of [`g1`]: the indicator of the scaled simplex
/// `{μ ≥ 0, Σ μ_i = C}`.
pub fn g1_conj(mu: &[f64], c: f64) -> ExtendedValue {
    g1_conj_with_tol(mu, c, SUM_TOL)
}

pub fn g1_conj_with_tol(mu: &[f64], c: f64, tol: f64) -> ExtendedValue {
    let nonneg = mu.iter().all(|&m| m >= 0.0);
    let sum: f64 = mu.iter().sum();
    ExtendedValue::indicator(!mu.is_empty() && nonneg && (sum - c).abs() <= tol)
}

/// ε-insensitive loss: `C max(0, |x - y| - ε)`.
pub fn g2(x: f64, y: f64, eps: f64, c: f64) -> f64 {
    c * ((x - y).abs() - eps).max(0.0)
}

/// Conjugate of [`g2`]: `μ y + ε |μ|` on `|μ| ≤ C`.
pub fn g2_conj(mu: f64, y: f64, eps: f64, c: f64) -> ExtendedValue {
    if mu.abs() <= c {
        ExtendedValue::Finite(mu * y + eps * mu.abs())
    } else {
        ExtendedValue::Infeasible
    }
}
