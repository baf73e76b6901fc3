//! Truncated cylindrical Wiener process on the Cameron–Martin space, Itô
//! integrals of operator-valued integrands, the Itô isometry harness, and the
//! Hilbert–Schmidt norm of `ψ ↦ S(t-s)(σ(s, w) ψ)` with its a-priori bound.

use serde::{Deserialize, Serialize};

use crate::fields::{h_zz_norm, h_zz_norm_sq_hilbert, Field, Grid, HSpace};
use crate::noise::CameronMartinBasis;
use crate::par::{map_indices, pairwise_sum};
use crate::propagator::{evolve, PropagatorConfig};
use crate::rng::CounterRng;
use crate::solver::{LipschitzProfile, Nonlinearity};
use crate::{Error, Result};

/// Convention constant turning the Hilbert–Schmidt `≲` into `≤`; measured by
/// [`hs_convention_fixture`] and frozen.
pub const HS_KAPPA: f64 = 1.0;
/// Relative tolerance of the isometry check.
pub const ISOMETRY_TOL: f64 = 0.05;

/// Brownian increments `ΔW_{j,k}`, stored step-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    pub modes: usize,
    pub steps: usize,
    pub dt: f64,
    increments: Vec<f64>,
}

impl WienerPath {
    pub fn zero(modes: usize, dt: f64, steps: usize) -> Self {
        WienerPath { modes, steps, dt, increments: vec![0.0; modes * steps] }
    }

    pub fn increment(&self, step: usize, mode: usize) -> f64 {
        self.increments[step * self.modes + mode]
    }

    /// `ΔW_{·,k}` for one step.
    pub fn step_increments(&self, step: usize) -> &[f64] {
        &self.increments[step * self.modes..(step + 1) * self.modes]
    }

    /// `W_T(e_j)`.
    pub fn terminal(&self, mode: usize) -> f64 {
        pairwise_sum(&(0..self.steps).map(|k| self.increment(k, mode)).collect::<Vec<_>>())
    }

    pub fn is_zero(&self) -> bool {
        self.increments.iter().all(|&v| v == 0.0)
    }
}

/// Path number `index` of the stream family `rng`: every step is a separate
/// counter block, so paths are reproducible in any order.
pub fn sample_path(modes: usize, dt: f64, steps: usize, rng: &CounterRng, index: u64) -> WienerPath {
    let mut path = WienerPath::zero(modes, dt, steps);
    if dt == 0.0 || modes == 0 {
        return path;
    }
    let sd = dt.sqrt();
    for k in 0..steps {
        let slot = &mut path.increments[k * modes..(k + 1) * modes];
        rng.fill_normals(index, k as u64, slot);
        slot.iter_mut().for_each(|v| *v *= sd);
    }
    path
}

/// Increments strictly before `step`: all that a predictable integrand may see.
#[derive(Debug, Clone, Copy)]
pub struct PathPrefix<'a> {
    path: &'a WienerPath,
    upto: usize,
}

impl PathPrefix<'_> {
    pub fn len(&self) -> usize {
        self.upto
    }

    pub fn is_empty(&self) -> bool {
        self.upto == 0
    }

    pub fn increment(&self, step: usize, mode: usize) -> f64 {
        assert!(step < self.upto, "integrand looked at a future increment");
        self.path.increment(step, mode)
    }
}

/// `Φ(s_k) e_j`, evaluated at the left endpoint `s_k`.
pub trait Integrand: Sync {
    fn image(&self, step: usize, mode: usize, past: PathPrefix<'_>) -> Field;

    /// Deterministic integrands ignore the path and are tabulated once.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Path-independent integrand from a closure `(step, mode) -> Field`.
pub struct Deterministic<F>(pub F);

impl<F: Fn(usize, usize) -> Field + Sync> Integrand for Deterministic<F> {
    fn image(&self, step: usize, mode: usize, _: PathPrefix<'_>) -> Field {
        (self.0)(step, mode)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Adapted integrand from a closure `(step, mode, past) -> Field`.
pub struct Adapted<F>(pub F);

impl<F: Fn(usize, usize, PathPrefix<'_>) -> Field + Sync> Integrand for Adapted<F> {
    fn image(&self, step: usize, mode: usize, past: PathPrefix<'_>) -> Field {
        (self.0)(step, mode, past)
    }
}

/// `Σ_k Σ_j Φ(s_k) e_j ΔW_{j,k}`.
pub fn stochastic_integral(integrand: &dyn Integrand, path: &WienerPath, grid: Grid) -> Field {
    let mut out = Field::zeros(grid);
    for k in 0..path.steps {
        let past = PathPrefix { path, upto: k };
        for j in 0..path.modes {
            let w = path.increment(k, j);
            if w != 0.0 {
                out.axpy(w.into(), &integrand.image(k, j, past));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    /// Monte Carlo `E ||∫ Φ dW||^2`.
    pub lhs: f64,
    /// `E Σ_k dt Σ_j ||Φ(s_k) e_j||^2`.
    pub rhs: f64,
    /// `|lhs - rhs| / rhs`, or `|lhs|` in absolute mode.
    pub rel_err: f64,
    /// Standard error of `lhs` relative to `rhs`.
    pub rel_std_err: f64,
    pub samples: usize,
    pub absolute_mode: bool,
    pub pass: bool,
}

/// Itô isometry in the Hilbertian norm `Σ_j ||·||^2_{H^{z-j, j+zeta}}` of
/// `H_{z,zeta}`. Path `m` uses stream `m` of `rng`.
#[allow(clippy::too_many_arguments)]
pub fn ito_isometry_check(
    integrand: &dyn Integrand,
    modes: usize,
    dt: f64,
    steps: usize,
    samples: usize,
    space: HSpace,
    grid: Grid,
    rng: &CounterRng,
) -> IsometryReport {
    let table: Option<Vec<Field>> = integrand.is_deterministic().then(|| {
        let zero = WienerPath::zero(modes, dt, steps);
        map_indices(steps * modes, |i| integrand.image(i / modes, i % modes, PathPrefix { path: &zero, upto: 0 }))
    });
    let per_path = map_indices(samples, |m| {
        let path = sample_path(modes, dt, steps, rng, m as u64);
        match &table {
            Some(t) => {
                let mut acc = Field::zeros(grid);
                for k in 0..steps {
                    for j in 0..modes {
                        let w = path.increment(k, j);
                        if w != 0.0 {
                            acc.axpy(w.into(), &t[k * modes + j]);
                        }
                    }
                }
                (h_zz_norm_sq_hilbert(&acc, space), None)
            }
            None => {
                let value = h_zz_norm_sq_hilbert(&stochastic_integral(integrand, &path, grid), space);
                let mut rhs = Vec::with_capacity(steps * modes);
                for k in 0..steps {
                    for j in 0..modes {
                        rhs.push(dt * h_zz_norm_sq_hilbert(&integrand.image(k, j, PathPrefix { path: &path, upto: k }), space));
                    }
                }
                (value, Some(pairwise_sum(&rhs)))
            }
        }
    });
    let n = samples as f64;
    let values: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let lhs = pairwise_sum(&values) / n;
    let rhs = match &table {
        Some(t) => dt * pairwise_sum(&t.iter().map(|f| h_zz_norm_sq_hilbert(f, space)).collect::<Vec<_>>()),
        None => pairwise_sum(&per_path.iter().map(|p| p.1.unwrap_or(0.0)).collect::<Vec<_>>()) / n,
    };
    let var = values.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_err = (var / n).sqrt();
    let absolute_mode = rhs == 0.0;
    let (rel_err, rel_std_err, pass) = if absolute_mode {
        (lhs.abs(), std_err, lhs == 0.0)
    } else {
        let r = (lhs - rhs).abs() / rhs;
        (r, std_err / rhs, r < ISOMETRY_TOL)
    };
    IsometryReport { lhs, rhs, rel_err, rel_std_err, samples, absolute_mode, pass }
}

/// Partial sums over `J` of `Σ_{j<=J} ||S(t-s)(σ(s, w) e_j)||^2_{H_{z,zeta}}`.
pub fn hs_partial_sums(
    w: &Field,
    sigma: &Nonlinearity,
    t: f64,
    s: f64,
    basis: &CameronMartinBasis,
    cfg: &PropagatorConfig,
    space: HSpace,
) -> Result<Vec<f64>> {
    if !(s <= t) {
        return Err(Error::InvalidTime(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let sw = sigma.apply(s, w)?;
    let terms = map_indices(basis.len(), |j| -> Result<f64> {
        let v = evolve(&sw.pointwise(&basis.modes[j].e), t - s, cfg)?;
        Ok(h_zz_norm(&v, space).powi(2))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut acc = 0.0;
    Ok(terms
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect())
}

/// Truncated Hilbert–Schmidt norm squared of `Φ(t, s)`.
pub fn hs_norm_direct(
    w: &Field,
    sigma: &Nonlinearity,
    t: f64,
    s: f64,
    basis: &CameronMartinBasis,
    cfg: &PropagatorConfig,
    space: HSpace,
) -> Result<f64> {
    Ok(hs_partial_sums(w, sigma, t, s, basis, cfg, space)?.last().copied().unwrap_or(0.0))
}

/// `e^{2 C_zz t} C_s^2 (1 + ||w||_{H_{z,zeta}})^2 · mass`, with `C_s` the
/// supremum of the Lipschitz profile of `σ`.
pub fn hs_bound(w: &Field, sigma_lip: Option<&LipschitzProfile>, t: f64, mass: f64, c_zz: f64, space: HSpace) -> Result<f64> {
    let c_s = sigma_lip.ok_or(Error::MissingLipschitz)?.sup();
    Ok((2.0 * c_zz * t).exp() * c_s * c_s * (1.0 + h_zz_norm(w, space)).powi(2) * mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSReport {
    pub direct: f64,
    pub bound: f64,
    /// `direct / bound`; PASS when at most [`HS_KAPPA`].
    pub ratio: f64,
}

impl HSReport {
    pub fn new(direct: f64, bound: f64) -> Self {
        let ratio = if bound > 0.0 { direct / bound } else if direct == 0.0 { 0.0 } else { f64::INFINITY };
        HSReport { direct, bound, ratio }
    }

    pub fn pass(&self) -> bool {
        self.direct >= 0.0 && self.ratio <= HS_KAPPA
    }
}

/// Measures the convention constant on the one-atom fixture: a single atom of
/// weight `c` at the origin, `σ ≡ 1`, `t = s`. There the last step of the
/// bound is the identity `||σ(w)|| = C_s (1 + ||w||)`, so
/// `κ = direct / (mass · ||σ(w)||^2)`.
pub fn hs_convention_fixture(grid: Grid, c: f64, space: HSpace) -> Result<f64> {
    let m = crate::noise::SpectralMeasure::single_atom(grid.dim(), c)?;
    let basis = crate::noise::build_cm_basis(&m, grid, None)?;
    let sigma = Nonlinearity::constant(1.0.into());
    let w = Field::gaussian(grid, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
    let cfg = PropagatorConfig::new(crate::quantization::GeneratorBundle::free(grid.dim()), 1e-3);
    let direct = hs_norm_direct(&w, &sigma, 0.0, 0.0, &basis, &cfg, space)?;
    let sw = sigma.apply(0.0, &w)?;
    Ok(direct / (crate::noise::total_mass(&m) * h_zz_norm(&sw, space).powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_cm_basis, SpectralMeasure};
    use crate::quantization::GeneratorBundle;

    fn grid() -> Grid {
        Grid::desk(1)
    }

    #[test]
    fn path_contract() {
        let rng = CounterRng::new(5);
        assert!(sample_path(3, 0.0, 10, &rng, 0).is_zero());
        assert_eq!(sample_path(3, 0.01, 10, &rng, 4), sample_path(3, 0.01, 10, &rng, 4));
        assert_ne!(sample_path(3, 0.01, 10, &rng, 4), sample_path(3, 0.01, 10, &CounterRng::new(6), 4));
    }

    #[test]
    fn terminal_variance() {
        let rng = CounterRng::new(9);
        let terminals: Vec<f64> = map_indices(1000, |m| sample_path(1, 1e-2, 10_000, &rng, m as u64).terminal(0));
        let var = terminals.iter().map(|v| v * v).sum::<f64>() / 1000.0;
        assert!((var - 100.0).abs() < 5.0 * 100.0 * (2.0f64 / 1000.0).sqrt(), "{var}");
    }

    #[test]
    fn increments_are_gaussian_and_independent() {
        let rng = CounterRng::new(2);
        let path = sample_path(2, 1.0, 10_000, &rng, 0);
        let a: Vec<f64> = (0..10_000).map(|k| path.increment(k, 0)).collect();
        let b: Vec<f64> = (0..10_000).map(|k| path.increment(k, 1)).collect();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let m2 = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = a.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = a.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        assert!((m3 / m2.powf(1.5)).abs() < 0.1);
        assert!((m4 / (m2 * m2) - 3.0).abs() < 0.2);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        assert!(corr.abs() < 0.05);
    }

    #[test]
    fn integral_is_linear_and_vanishes_on_zero_input() {
        let g = grid();
        let rng = CounterRng::new(1);
        let path = sample_path(2, 0.01, 5, &rng, 0);
        let f = Field::gaussian(g, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
        let h = Field::gaussian(g, &[1.0, 0.0], 0.7, &[1.0, 0.0], 1.0);
        let a = Deterministic(|k: usize, j: usize| f.scale(((k + 1) as f64 * (j + 1) as f64).into()));
        let b = Deterministic(|k: usize, _: usize| h.scale((k as f64).into()));
        let combo = Deterministic(|k: usize, j: usize| {
            let mut v = a.image(k, j, PathPrefix { path: &path, upto: k }).scale(2.0.into());
            v.axpy((-3.0).into(), &b.image(k, j, PathPrefix { path: &path, upto: k }));
            v
        });
        let lhs = stochastic_integral(&combo, &path, g);
        let mut rhs = stochastic_integral(&a, &path, g).scale(2.0.into());
        rhs.axpy((-3.0).into(), &stochastic_integral(&b, &path, g));
        assert!((&lhs - &rhs).max_abs() < 1e-12);
        let zero = Deterministic(|_: usize, _: usize| Field::zeros(g));
        assert_eq!(stochastic_integral(&zero, &path, g).max_abs(), 0.0);
        assert_eq!(stochastic_integral(&a, &WienerPath::zero(2, 0.01, 5), g).max_abs(), 0.0);
    }

    #[test]
    fn zero_integrand_isometry() {
        let g = grid();
        let zero = Deterministic(|_: usize, _: usize| Field::zeros(g));
        let r = ito_isometry_check(&zero, 1, 0.1, 5, 100, HSpace::L2, g, &CounterRng::new(0));
        assert!(r.absolute_mode && r.pass && r.lhs == 0.0 && r.rhs == 0.0);
    }

    #[test]
    fn adapted_integrand_isometry() {
        let g = grid();
        let e = Field::gaussian(g, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
        let adapted = Adapted(|k: usize, _: usize, past: PathPrefix<'_>| {
            let w: f64 = (0..k).map(|i| past.increment(i, 0)).sum();
            e.scale((1.0 + w).into())
        });
        let r = ito_isometry_check(&adapted, 1, 0.05, 8, 4000, HSpace::L2, g, &CounterRng::new(4));
        assert!(r.rel_err < 0.08, "{r:?}");
    }

    #[test]
    fn kappa_fixture_is_frozen() {
        for space in [HSpace::L2, HSpace::new(1, 1).unwrap()] {
            let k = hs_convention_fixture(grid(), 0.7, space).unwrap();
            assert!((k - HS_KAPPA).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn hs_examples() {
        let g = grid();
        let m = SpectralMeasure::single_atom(1, 2.0).unwrap();
        let basis = build_cm_basis(&m, g, None).unwrap();
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3);
        let w = Field::gaussian(g, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
        assert_eq!(hs_norm_direct(&w, &Nonlinearity::zero(), 0.5, 0.1, &basis, &cfg, HSpace::L2).unwrap(), 0.0);
        let lip = LipschitzProfile::constant(1.0);
        let b0 = hs_bound(&Field::zeros(g), Some(&lip), 0.0, 2.0, 0.3, HSpace::L2).unwrap();
        assert_eq!(b0, 2.0);
        let b1 = hs_bound(&w, Some(&lip), 0.4, 2.0, 0.3, HSpace::L2).unwrap();
        let b2 = hs_bound(&w, Some(&LipschitzProfile::constant(2.0)), 0.4, 2.0, 0.3, HSpace::L2).unwrap();
        assert!((b2 - 4.0 * b1).abs() < 1e-12 * b2);
        assert!(matches!(hs_bound(&w, None, 0.0, 1.0, 0.0, HSpace::L2), Err(Error::MissingLipschitz)));
        let dens = SpectralMeasure::gaussian_density(g, 1.0, 1.0, 8.0).unwrap();
        let db = build_cm_basis(&dens, g, Some(16)).unwrap();
        let sums = hs_partial_sums(&w, &Nonlinearity::linear(1.0.into()), 0.2, 0.0, &db, &cfg, HSpace::L2).unwrap();
        assert!(sums.windows(2).all(|p| p[1] >= p[0]));
    }
}
