//! Transform-convention constants shared by every module.
//!
//! Forward transform: `F f(xi) = ∫ e^{-i x·xi} f(x) dx` (no prefactor).
//! Inverse transform: `f(x) = (2π)^{-d} ∫ e^{i x·xi} F f(xi) dxi`.
//!
//! On a grid with half-width `L` and `n` points per axis the integrals become
//! trapezoidal sums with `dx = 2L/n` and `dxi = π/L`. The noise covariance of
//! the increment field is `dt · (2π)^d · Γ(x - y)`, where `Γ` is the inverse
//! transform of the spectral measure; equivalently
//! `E[Ξ(φ) conj Ξ(ψ)] = dt ∫ Fφ conj(Fψ) dM`.

use std::f64::consts::PI;

/// Constant in front of the forward transform.
pub const FORWARD_FACTOR: f64 = 1.0;

/// `(2π)^{-d}`, the constant in front of the inverse transform.
pub fn inverse_factor(dim: usize) -> f64 {
    (2.0 * PI).powi(-(dim as i32))
}

/// Ratio between the increment covariance kernel and the correlation
/// measure: `Cov(ΔΞ(x), ΔΞ(y)) = dt · noise_kernel_factor(d) · Γ(x - y)`.
pub fn noise_kernel_factor(dim: usize) -> f64 {
    (2.0 * PI).powi(dim as i32)
}

/// Japanese bracket `<v> = (1 + |v|^2)^{1/2}`.
#[inline]
pub fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_kernel_factors_cancel() {
        for d in 1..=2 {
            assert!((inverse_factor(d) * noise_kernel_factor(d) - 1.0).abs() < 1e-15);
        }
        assert_eq!(FORWARD_FACTOR, 1.0);
    }

    #[test]
    fn bracket_values() {
        assert_eq!(bracket(&[0.0]), 1.0);
        assert!((bracket(&[3.0, 4.0]) - 26f64.sqrt()).abs() < 1e-15);
    }
}
