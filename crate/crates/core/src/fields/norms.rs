use serde::{Deserialize, Serialize};

use super::grid::Field;
use super::transform::forward_transform;
use crate::quantization::{weight_from_spectrum, weight_operator};
use crate::{Error, Result};

/// Relative boundary mass above which norm claims are flagged.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

/// Index pair `(z, zeta)` of the space `H_{z,zeta} = ∩_j H^{z-j, j+zeta}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HSpace {
    pub z: u32,
    pub zeta: u32,
}

impl HSpace {
    pub fn new(z: i64, zeta: i64) -> Result<Self> {
        if z < 0 || zeta < 0 {
            return Err(Error::NegativeIndex { z, zeta });
        }
        Ok(HSpace { z: z as u32, zeta: zeta as u32 })
    }

    pub const L2: HSpace = HSpace { z: 0, zeta: 0 };

    /// Sobolev–Kato index pairs `(z - j, j + zeta)`, `j = 0..=z`.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..=self.z).map(move |j| ((self.z - j) as f64, (j + self.zeta) as f64))
    }

    /// Whether `H_{z,zeta}` is an algebra in dimension `dim`.
    pub fn is_algebra(&self, dim: usize) -> bool {
        self.zeta as f64 > dim as f64 / 2.0
    }
}

/// Discrete `L^2` norm `(h^d Σ |f|^2)^{1/2}`.
pub fn l2_norm(f: &Field) -> f64 {
    (f.grid().cell_volume() * f.values().iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// `||Op(<x>^r <ξ>^rho) f||_{L^2}`.
pub fn sobolev_kato_norm(f: &Field, r: f64, rho: f64) -> f64 {
    l2_norm(&weight_operator(f, r, rho))
}

/// The summands `||f||_{H^{z-j, j+zeta}}`, `j = 0..=z`.
pub fn h_zz_components(f: &Field, space: HSpace) -> Vec<f64> {
    let spectrum = if space.z + space.zeta > 0 { Some(forward_transform(f)) } else { None };
    space
        .components()
        .map(|(r, rho)| match &spectrum {
            Some(s) if rho != 0.0 => l2_norm(&weight_from_spectrum(s, r, rho)),
            _ => sobolev_kato_norm(f, r, 0.0),
        })
        .collect()
}

/// `||f||_{H_{z,zeta}} = Σ_{j=0}^{z} ||f||_{H^{z-j, j+zeta}}`.
pub fn h_zz_norm(f: &Field, space: HSpace) -> f64 {
    h_zz_components(f, space).iter().sum()
}

/// Hilbertian equivalent `Σ_j ||f||^2_{H^{z-j, j+zeta}}`; within a factor
/// `z + 1` of `||f||^2_{H_{z,zeta}}` and induced by an inner product.
pub fn h_zz_norm_sq_hilbert(f: &Field, space: HSpace) -> f64 {
    h_zz_components(f, space).iter().map(|c| c * c).sum()
}

/// Fraction of the `L^2` mass carried by the outer eighth of each axis.
pub fn boundary_mass(f: &Field) -> f64 {
    let grid = f.grid();
    let d = grid.dim();
    let cutoff = grid.half_width() * (1.0 - 1.0 / 8.0);
    let mut total = 0.0;
    let mut outer = 0.0;
    for (idx, v) in f.values().iter().enumerate() {
        let p = grid.point(idx);
        let m = v.norm_sqr();
        total += m;
        if p[..d].iter().any(|c| c.abs() >= cutoff) {
            outer += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// Result of probing the algebra constant `||uv|| / (||u|| ||v||)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgebraProbe {
    pub ratio: f64,
    pub pairs: usize,
    /// `false` when `zeta <= d/2`; the probe still runs but no claim is made.
    pub hypothesis_holds: bool,
}

/// Maximum of `||uv||_{H_{z,zeta}} / (||u|| ||v||)` over all sample pairs
/// (including `u = v`); pairs with a vanishing factor are skipped.
pub fn algebra_constant_probe(space: HSpace, samples: &[Field]) -> AlgebraProbe {
    let dim = samples.first().map(|f| f.grid().dim()).unwrap_or(1);
    let norms: Vec<f64> = samples.iter().map(|f| h_zz_norm(f, space)).collect();
    let mut ratio: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..samples.len() {
        for j in i..samples.len() {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let product = samples[i].pointwise(&samples[j]);
            ratio = ratio.max(h_zz_norm(&product, space) / (norms[i] * norms[j]));
            pairs += 1;
        }
    }
    AlgebraProbe { ratio, pairs, hypothesis_holds: space.is_algebra(dim) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn desk() -> Grid {
        Grid::desk(1)
    }

    fn gaussian(g: Grid) -> Field {
        Field::from_real_fn(g, |x| (-x[0] * x[0] / 2.0).exp())
    }

    /// Composite Simpson rule on [-a, a].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, n: usize) -> f64 {
        let h = 2.0 * a / n as f64;
        let mut s = f(-a) + f(a);
        for i in 1..n {
            let x = -a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn negative_indices_rejected() {
        assert!(matches!(HSpace::new(-1, 0), Err(Error::NegativeIndex { .. })));
        assert!(HSpace::new(0, -2).is_err());
        assert_eq!(HSpace::new(1, 2).unwrap(), HSpace { z: 1, zeta: 2 });
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let f = Field::zeros(desk());
        assert_eq!(sobolev_kato_norm(&f, 1.0, 2.0), 0.0);
        assert_eq!(h_zz_norm(&f, HSpace { z: 2, zeta: 1 }), 0.0);
    }

    #[test]
    fn gaussian_l2_norm_is_pi_quarter() {
        // oracle: ∫ e^{-x²} dx = √π by Simpson quadrature
        let quad = simpson(|x| (-x * x).exp(), 16.0, 20_000).sqrt();
        assert!((quad - PI.powf(0.25)).abs() < 1e-12);
        let n = sobolev_kato_norm(&gaussian(desk()), 0.0, 0.0);
        assert!((n - quad).abs() < 1e-12, "{n} vs {quad}");
        assert!((n - 1.331_335_363_800_389_7).abs() < 1e-12);
    }

    #[test]
    fn h_zz_z0_matches_single_summand() {
        let f = gaussian(desk());
        for zeta in 0..3 {
            let a = h_zz_norm(&f, HSpace { z: 0, zeta });
            let b = sobolev_kato_norm(&f, 0.0, zeta as f64);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn h_zz_z1_matches_quadrature() {
        // ||f||_{H^{1,0}}^2 = ∫ (1+x²) e^{-x²};  ||f||_{H^{0,1}}^2 = ∫ |f|² + |f'|² = ∫ (1+x²) e^{-x²}
        let w = simpson(|x| (1.0 + x * x) * (-x * x).exp(), 16.0, 20_000).sqrt();
        let d = simpson(|x| (-x * x).exp() + (x * (-x * x / 2.0).exp()).powi(2), 16.0, 20_000).sqrt();
        let f = gaussian(desk());
        let comps = h_zz_components(&f, HSpace { z: 1, zeta: 0 });
        assert!((comps[0] - w).abs() < 1e-10);
        assert!((comps[1] - d).abs() < 1e-10);
        assert!((h_zz_norm(&f, HSpace { z: 1, zeta: 0 }) - (w + d)).abs() < 1e-10);
    }

    #[test]
    fn frequency_weight_is_monotone() {
        let f = Field::gaussian(desk(), &[1.0], 0.7, &[2.0], 1.0);
        let mut last = 0.0;
        for rho in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let n = sobolev_kato_norm(&f, 1.0, rho);
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn embedding_chain() {
        let f = Field::gaussian(desk(), &[0.5], 1.3, &[1.0], 1.0);
        for (z, zeta) in [(1u32, 0u32), (2, 1), (1, 2)] {
            let sp = HSpace { z, zeta };
            let comps = h_zz_components(&f, sp);
            let total: f64 = comps.iter().sum();
            let weakest = sobolev_kato_norm(&f, z as f64, zeta as f64);
            let strongest = sobolev_kato_norm(&f, z as f64, (z + zeta) as f64);
            assert!(weakest <= total + 1e-12);
            let max = comps.iter().cloned().fold(0.0, f64::max);
            assert!(total <= (z + 1) as f64 * max + 1e-12);
            // H^{z, z+zeta} controls every summand up to the Peetre-free bound <x>^{z-j} <= <x>^z
            assert!(max <= strongest + 1e-12);
        }
    }

    #[test]
    fn boundary_mass_of_decaying_and_flat_fields() {
        assert!(boundary_mass(&gaussian(desk())) < 1e-30);
        let flat = Field::from_real_fn(desk(), |_| 1.0);
        assert!((boundary_mass(&flat) - 1.0 / 8.0).abs() < 0.02);
    }

    #[test]
    fn algebra_probe_skips_zero_and_gates_hypothesis() {
        let g = desk();
        let probe = algebra_constant_probe(HSpace { z: 0, zeta: 1 }, &[Field::zeros(g)]);
        assert_eq!(probe.pairs, 0);
        assert!(probe.hypothesis_holds);
        let probe = algebra_constant_probe(HSpace { z: 0, zeta: 0 }, &[gaussian(g)]);
        assert!(!probe.hypothesis_holds);
        assert!(probe.ratio > 0.0);
    }

    #[test]
    fn algebra_ratio_stable_under_refinement() {
        let space = HSpace { z: 0, zeta: 1 };
        let g = desk();
        let a = algebra_constant_probe(space, &[gaussian(g)]).ratio;
        let b = algebra_constant_probe(space, &[gaussian(g.refined())]).ratio;
        assert!(a.is_finite() && ((a - b) / a).abs() < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn homogeneity_and_triangle(
            c_re in -3.0f64..3.0, c_im in -3.0f64..3.0,
            s1 in 0.5f64..2.0, s2 in 0.5f64..2.0, x1 in -3.0f64..3.0, k2 in -2.0f64..2.0,
            z in 0u32..3, zeta in 0u32..3,
        ) {
            let g = Grid::new(1, 128, 16.0).unwrap();
            let sp = HSpace { z, zeta };
            let f = Field::gaussian(g, &[x1], s1, &[0.0], 1.0);
            let h = Field::gaussian(g, &[0.0], s2, &[k2], 0.7);
            let c = Complex64::new(c_re, c_im);
            let nf = h_zz_norm(&f, sp);
            let scaled = h_zz_norm(&f.scale(c), sp);
            prop_assert!((scaled - c.norm() * nf).abs() <= 1e-10 * (1.0 + scaled));
            let sum = h_zz_norm(&(&f + &h), sp);
            prop_assert!(sum <= nf + h_zz_norm(&h, sp) + 1e-10);
        }
    }
}
