use serde::{Deserialize, Serialize};

use super::{Factor, SeparableTerm, Symbol, SymbolOrder};
use crate::conventions::bracket;

/// Potential `m_0`, order `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    #[default]
    None,
    /// Constant real potential.
    Constant { value: f64 },
    /// `(ω^2/2) |x|^2 / (1 + |x|^2 / w^2)`: harmonic near the origin, bounded by `ω^2 w^2 / 2`.
    HarmonicWindow {
        #[serde(default = "one")]
        omega: f64,
        #[serde(default = "default_width")]
        width: f64,
    },
}

/// First-order magnetic term `m_1`, real-valued, order `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MagneticFamily {
    #[default]
    None,
    /// `κ φ(x) ξ_1` with `φ = x_d / <x>`.
    Shear {
        #[serde(default = "one")]
        strength: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_width() -> f64 {
    4.0
}

impl PotentialFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialFamily::None => "none",
            PotentialFamily::Constant { .. } => "constant",
            PotentialFamily::HarmonicWindow { .. } => "harmonic_window",
        }
    }

    pub fn build(&self, dim: usize) -> Symbol {
        match *self {
            PotentialFamily::None => Symbol::zero(dim, SymbolOrder::new(0.0, 0.0)),
            PotentialFamily::Constant { value } => {
                Symbol::multiplication(dim, SymbolOrder::new(0.0, 0.0), move |_| value.into()).with_label("constant")
            }
            PotentialFamily::HarmonicWindow { omega, width } => harmonic_window(dim, omega, width),
        }
    }
}

impl MagneticFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MagneticFamily::None => "none",
            MagneticFamily::Shear { .. } => "shear",
        }
    }

    pub fn build(&self, dim: usize) -> Symbol {
        match *self {
            MagneticFamily::None => Symbol::zero(dim, SymbolOrder::new(0.0, 1.0)),
            MagneticFamily::Shear { strength } => shear(dim, strength),
        }
    }
}

pub fn harmonic_window(dim: usize, omega: f64, width: f64) -> Symbol {
    Symbol::multiplication(dim, SymbolOrder::new(0.0, 0.0), move |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        (0.5 * omega * omega * r2 / (1.0 + r2 / (width * width))).into()
    })
    .with_label("harmonic_window")
}

pub fn shear(dim: usize, strength: f64) -> Symbol {
    let term = SeparableTerm::new(
        Factor::func(move |x| (strength * x[x.len() - 1] / bracket(x)).into()),
        Factor::func(|xi| xi[0].into()),
    );
    Symbol::separable(dim, SymbolOrder::new(0.0, 1.0), vec![term]).with_label("shear")
}

#[cfg(test)]
mod tests {
    use super::super::{check_symbol_estimates, ProbeGrid};
    use super::*;

    #[test]
    fn families_pass_their_declared_orders() {
        for d in 1..=2 {
            let probes = ProbeGrid::standard(d);
            assert!(check_symbol_estimates(&harmonic_window(d, 1.0, 4.0), 2, 2, &probes).pass);
            assert!(check_symbol_estimates(&shear(d, 0.5), 2, 2, &probes).pass);
        }
    }

    #[test]
    fn harmonic_window_values() {
        let v = harmonic_window(1, 2.0, 1.0);
        assert!((v.eval(&[1.0], &[5.0]).re - 1.0).abs() < 1e-15);
        assert!(v.is_xi_independent());
    }

    #[test]
    fn shear_is_real() {
        let m = shear(2, 0.7);
        assert_eq!(m.eval(&[0.3, 1.1], &[-2.0, 4.0]).im, 0.0);
    }
}
