//! Spatially homogeneous Gaussian noise: spectral measures, the correlation
//! measure, the Cameron–Martin basis and a Monte Carlo covariance check.
//!
//! Measures are discretized as symmetric atoms. The basis is built from
//! Hermitian-symmetric functions on `L^2_M` (`f(-ξ) = conj f(ξ)`), so every
//! `e_j = F(f_j M)` is a real field; each orbit `{ξ, -ξ}` carries a cosine
//! and a sine mode and the atom at the origin carries one constant mode.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conventions::inverse_factor;
use crate::fields::{forward_transform, inverse_transform, Field, Grid, Spectrum};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Default truncation of the Cameron–Martin basis.
pub const DEFAULT_MODES: usize = 64;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub xi: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(xi: &[f64], weight: f64) -> Self {
        Atom { xi: xi.to_vec(), weight }
    }
}

/// Symmetric nonnegative finite measure on frequency space.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralMeasure {
    Atoms { dim: usize, atoms: Vec<Atom> },
    /// Density samples at the FFT-ordered frequency nodes of `grid`.
    GridDensity { grid: Grid, density: Vec<f64> },
}

impl SpectralMeasure {
    pub fn atoms(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if a.xi.len() != dim || a.xi.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom {i} is not a finite point in R^{dim}")));
            }
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::InvalidMeasure(format!("atom {i} has negative or non-finite weight {}", a.weight)));
            }
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.xi.iter().all(|&c| c == 0.0) {
                continue;
            }
            let neg: Vec<f64> = a.xi.iter().map(|c| -c).collect();
            let partner: f64 = atoms.iter().filter(|b| same_point(&b.xi, &neg)).map(|b| b.weight).sum();
            let own: f64 = atoms.iter().filter(|b| same_point(&b.xi, &a.xi)).map(|b| b.weight).sum();
            if (partner - own).abs() > SYMMETRY_TOL * (1.0 + own) {
                return Err(Error::InvalidMeasure(format!("atom {i} at {:?} has no symmetric partner of equal weight", a.xi)));
            }
        }
        Ok(SpectralMeasure::Atoms { dim, atoms })
    }

    /// Atom at the origin.
    pub fn single_atom(dim: usize, weight: f64) -> Result<Self> {
        Self::atoms(dim, vec![Atom::new(&vec![0.0; dim], weight)])
    }

    /// Atoms `±ξ_0`, each of the given weight.
    pub fn atom_pair(xi0: &[f64], weight: f64) -> Result<Self> {
        let neg: Vec<f64> = xi0.iter().map(|c| -c).collect();
        Self::atoms(xi0.len(), vec![Atom::new(xi0, weight), Atom::new(&neg, weight)])
    }

    pub fn grid_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!("density has {} nodes, grid has {}", density.len(), grid.len())));
        }
        if let Some(k) = density.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("density is negative or non-finite at node {k}")));
        }
        for k in 0..grid.len() {
            if grid.is_nyquist(k) {
                continue;
            }
            let (a, b) = (density[k], density[grid.negated_freq_index(k)]);
            if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                return Err(Error::InvalidMeasure(format!("density is not even at node {k}")));
            }
        }
        Ok(SpectralMeasure::GridDensity { grid, density })
    }

    /// Density `g(ξ)` sampled at the grid nodes.
    pub fn density_from_fn(grid: Grid, g: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.dim();
        let density = (0..grid.len()).map(|k| g(&grid.freq_point(k)[..d])).collect();
        Self::grid_density(grid, density)
    }

    /// `amplitude · e^{-|ξ|^2/scale^2} · 1_{|ξ| <= cutoff}`.
    pub fn gaussian_density(grid: Grid, amplitude: f64, scale: f64, cutoff: f64) -> Result<Self> {
        Self::density_from_fn(grid, |xi| {
            let r2: f64 = xi.iter().map(|c| c * c).sum();
            if r2.sqrt() <= cutoff {
                amplitude * (-r2 / (scale * scale)).exp()
            } else {
                0.0
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralMeasure::Atoms { dim, .. } => *dim,
            SpectralMeasure::GridDensity { grid, .. } => grid.dim(),
        }
    }

    /// Positive-weight atoms; densities are binned at the non-Nyquist nodes
    /// with weight `density · Δξ^d`.
    pub fn to_atoms(&self) -> Vec<Atom> {
        match self {
            SpectralMeasure::Atoms { atoms, .. } => atoms.iter().filter(|a| a.weight > 0.0).cloned().collect(),
            SpectralMeasure::GridDensity { grid, density } => {
                let d = grid.dim();
                let cell = grid.freq_cell_volume();
                (0..grid.len())
                    .filter(|&k| !grid.is_nyquist(k) && density[k] > 0.0)
                    .map(|k| Atom::new(&grid.freq_point(k)[..d], density[k] * cell))
                    .collect()
            }
        }
    }

    /// The measure scaled by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            SpectralMeasure::Atoms { dim, atoms } => Self::atoms(
                *dim,
                atoms.iter().map(|a| Atom::new(&a.xi, a.weight * factor)).collect(),
            ),
            SpectralMeasure::GridDensity { grid, density } => {
                Self::grid_density(*grid, density.iter().map(|v| v * factor).collect())
            }
        }
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

/// `∫ M(dξ)`.
pub fn total_mass(m: &SpectralMeasure) -> f64 {
    crate::par::pairwise_sum(&m.to_atoms().iter().map(|a| a.weight).collect::<Vec<_>>())
}

/// Configuration form of a spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    Atoms {
        atoms: Vec<Atom>,
        #[serde(default)]
        mass: Option<f64>,
    },
    /// `e^{-|ξ|^2 / scale^2}` truncated at `cutoff`.
    GaussianDensity {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "default_cutoff")]
        cutoff: f64,
        #[serde(default)]
        mass: Option<f64>,
    },
    /// Constant density on the ball `|ξ| <= radius`.
    UniformDensity {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        mass: Option<f64>,
    },
    /// Space-time white noise; rejected because its mass is infinite.
    White,
}

fn one() -> f64 {
    1.0
}

fn default_cutoff() -> f64 {
    8.0
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec::Atoms { atoms: vec![Atom::new(&[0.0], 1.0)], mass: None }
    }
}

impl MeasureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureSpec::Atoms { .. } => "atoms",
            MeasureSpec::GaussianDensity { .. } => "gaussian_density",
            MeasureSpec::UniformDensity { .. } => "uniform_density",
            MeasureSpec::White => "white",
        }
    }

    pub fn build(&self, grid: Grid) -> Result<SpectralMeasure> {
        let (measure, mass) = match self {
            MeasureSpec::Atoms { atoms, mass } => (SpectralMeasure::atoms(grid.dim(), atoms.clone())?, *mass),
            MeasureSpec::GaussianDensity { scale, cutoff, mass } => {
                (SpectralMeasure::gaussian_density(grid, 1.0, *scale, *cutoff)?, *mass)
            }
            MeasureSpec::UniformDensity { radius, mass } => (
                SpectralMeasure::density_from_fn(grid, |xi| {
                    if xi.iter().map(|c| c * c).sum::<f64>().sqrt() <= *radius {
                        1.0
                    } else {
                        0.0
                    }
                })?,
                *mass,
            ),
            MeasureSpec::White => return Err(Error::InfiniteMass),
        };
        match mass {
            None => Ok(measure),
            Some(target) if target.is_finite() && target >= 0.0 => {
                let current = total_mass(&measure);
                if current == 0.0 {
                    if target == 0.0 {
                        return Ok(measure);
                    }
                    return Err(Error::InvalidMeasure("cannot rescale a zero measure to positive mass".into()));
                }
                measure.scaled(target / current)
            }
            Some(target) if target.is_infinite() => Err(Error::InfiniteMass),
            Some(target) => Err(Error::InvalidMeasure(format!("mass {target} must be nonnegative"))),
        }
    }
}

/// Grid samples of `Γ = F^{-1} M`, real by symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMeasure {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl CorrelationMeasure {
    /// `Γ(0) = (2π)^{-d} · total mass`.
    pub fn at_origin(&self) -> f64 {
        let d = self.grid.dim();
        let origin = self.grid.flat_index([self.grid.n() / 2, if d == 2 { self.grid.n() / 2 } else { 0 }]);
        self.values[origin]
    }

    pub fn as_field(&self) -> Field {
        Field::from_values(self.grid, self.values.iter().map(|&v| v.into()).collect()).expect("finite correlation")
    }
}

/// `Γ(x) = (2π)^{-d} Σ_k w_k e^{i x·ξ_k}`.
pub fn correlation_from_spectral(m: &SpectralMeasure, grid: Grid) -> Result<CorrelationMeasure> {
    if m.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!("{}-d measure on a {}-d grid", m.dim(), grid.dim())));
    }
    if let SpectralMeasure::GridDensity { grid: mg, density } = m {
        if *mg == grid {
            let values =
                (0..grid.len()).map(|k| if grid.is_nyquist(k) { 0.0.into() } else { density[k].into() }).collect();
            let gamma = inverse_transform(&Spectrum::from_values(grid, values));
            return Ok(CorrelationMeasure { grid, values: gamma.values().iter().map(|v| v.re).collect() });
        }
    }
    let d = grid.dim();
    let atoms = m.to_atoms();
    let c = inverse_factor(d);
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            c * atoms.iter().map(|a| a.weight * dot(&x[..d], &a.xi).cos()).sum::<f64>()
        })
        .collect();
    Ok(CorrelationMeasure { grid, values })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F f(ξ) = h^d Σ_x e^{-i x·ξ} f(x)` at an arbitrary frequency.
pub fn transform_at(f: &Field, xi: &[f64]) -> Complex64 {
    let grid = f.grid();
    let d = grid.dim();
    let sum: Complex64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, -dot(&grid.point(i)[..d], xi)))
        .sum();
    sum * grid.cell_volume()
}

/// One Cameron–Martin mode: `f` on the support atoms and `e = F(f M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmMode {
    pub f: Vec<Complex64>,
    pub e: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinBasis {
    pub atoms: Vec<Atom>,
    pub modes: Vec<CmMode>,
    /// Dimension of the discretized `L^2_{M,s}`.
    pub max_modes: usize,
}

/// Orbits `{ξ, -ξ}` of the atoms: `(index, Some(partner))`, or `(index, None)` at the origin.
fn orbits(atoms: &[Atom]) -> Vec<(usize, Option<usize>)> {
    let mut used = vec![false; atoms.len()];
    let mut out = Vec::new();
    for i in 0..atoms.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        if atoms[i].xi.iter().all(|&c| c == 0.0) {
            out.push((i, None));
            continue;
        }
        let neg: Vec<f64> = atoms[i].xi.iter().map(|c| -c).collect();
        let j = (0..atoms.len()).find(|&j| !used[j] && same_point(&atoms[j].xi, &neg));
        if let Some(j) = j {
            used[j] = true;
        }
        out.push((i, j));
    }
    out
}

/// Number of modes `build_cm_basis` can produce for `m`.
pub fn max_modes(m: &SpectralMeasure) -> usize {
    orbits(&merge_coincident(m.to_atoms())).iter().map(|(_, p)| if p.is_some() { 2 } else { 1 }).sum()
}

fn merge_coincident(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.iter_mut().find(|b| same_point(&b.xi, &a.xi)) {
            Some(b) => b.weight += a.weight,
            None => out.push(a),
        }
    }
    out
}

/// Orthonormal basis of the first `j` modes (orbits by decreasing weight,
/// then increasing `|ξ|`); `None` means `min(64, max)`.
pub fn build_cm_basis(m: &SpectralMeasure, grid: Grid, j: Option<usize>) -> Result<CameronMartinBasis> {
    if m.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!("{}-d measure on a {}-d grid", m.dim(), grid.dim())));
    }
    let atoms = merge_coincident(m.to_atoms());
    let mut orbit_list = orbits(&atoms);
    let norm = |a: &Atom| a.xi.iter().map(|c| c * c).sum::<f64>();
    orbit_list.sort_by(|(a, _), (b, _)| {
        let (a, b) = (&atoms[*a], &atoms[*b]);
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(Ordering::Equal)
            .then(norm(a).partial_cmp(&norm(b)).unwrap_or(Ordering::Equal))
            .then(a.xi.partial_cmp(&b.xi).unwrap_or(Ordering::Equal))
    });
    let max = orbit_list.iter().map(|(_, p)| if p.is_some() { 2 } else { 1 }).sum();
    let requested = j.unwrap_or(DEFAULT_MODES.min(max));
    if requested > max {
        return Err(Error::BasisTooLarge { requested, max });
    }

    // Seeds: indicator of the origin, cosine and sine on each orbit.
    let n_atoms = atoms.len();
    let mut seeds: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(requested);
    for &(i, partner) in &orbit_list {
        if seeds.len() >= requested {
            break;
        }
        match partner {
            None => seeds.push(vec![(i, 1.0.into())]),
            Some(p) => {
                seeds.push(vec![(i, 1.0.into()), (p, 1.0.into())]);
                if seeds.len() < requested {
                    seeds.push(vec![(i, Complex64::new(0.0, -1.0)), (p, Complex64::new(0.0, 1.0))]);
                }
            }
        }
    }

    // Gram–Schmidt in the real inner product Re Σ w f conj g; seeds on
    // distinct orbits are already orthogonal so only the norm changes.
    let weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    let inner = |f: &[(usize, Complex64)], g: &[(usize, Complex64)]| -> f64 {
        f.iter()
            .map(|(i, a)| g.iter().filter(|(j, _)| j == i).map(|(_, b)| weights[*i] * (a * b.conj()).re).sum::<f64>())
            .sum()
    };
    let mut ortho: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(requested);
    for mut s in seeds {
        for q in &ortho {
            let c = inner(&s, q);
            if c != 0.0 {
                for (j, b) in q {
                    match s.iter_mut().find(|(i, _)| i == j) {
                        Some((_, a)) => *a -= c * b,
                        None => s.push((*j, -c * b)),
                    }
                }
            }
        }
        let nrm = inner(&s, &s).sqrt();
        s.iter_mut().for_each(|(_, a)| *a /= nrm);
        ortho.push(s);
    }

    let d = grid.dim();
    let modes = crate::par::map_indices(ortho.len(), |m| {
        let sparse = &ortho[m];
        let mut f = vec![Complex64::new(0.0, 0.0); n_atoms];
        for (i, a) in sparse {
            f[*i] = *a;
        }
        let e = Field::from_fn(grid, |x| {
            let v: Complex64 = sparse
                .iter()
                .map(|(i, a)| weights[*i] * a * Complex64::from_polar(1.0, -dot(&x[..d], &atoms[*i].xi)))
                .sum();
            // Hermitian symmetry makes e real; drop the round-off imaginary part.
            v.re.into()
        });
        CmMode { f, e }
    });
    Ok(CameronMartinBasis { atoms, modes, max_modes: max })
}

impl CameronMartinBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.modes.first().map(|m| m.e.grid())
    }

    /// `⟨f, g⟩_M = Σ_k w_k f(ξ_k) conj g(ξ_k)`.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        self.atoms.iter().zip(f.iter().zip(g)).map(|(a, (x, y))| a.weight * x * y.conj()).sum()
    }

    pub fn gram_matrix(&self) -> Vec<Vec<Complex64>> {
        self.modes.iter().map(|p| self.modes.iter().map(|q| self.inner(&p.f, &q.f)).collect()).collect()
    }

    /// Max entrywise deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.gram_matrix();
        let mut err: f64 = 0.0;
        for (i, row) in gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - target).norm());
            }
        }
        err
    }

    /// `Σ_{j<=J} |⟨g, f_j⟩_M|^2` for `J = 1..=len`, with `||g||^2_M`.
    pub fn bessel_partial_sums(&self, g: impl Fn(&[f64]) -> Complex64) -> (Vec<f64>, f64) {
        let gv: Vec<Complex64> = self.atoms.iter().map(|a| g(&a.xi)).collect();
        let total = self.inner(&gv, &gv).re;
        let mut acc = 0.0;
        let partial = self
            .modes
            .iter()
            .map(|m| {
                acc += self.inner(&gv, &m.f).norm_sqr();
                acc
            })
            .collect();
        (partial, total)
    }

    /// `ΔΞ = Σ_j e_j ΔW_j`.
    pub fn increment_field(&self, dw: &[f64]) -> Option<Field> {
        let grid = *self.grid()?;
        let mut out = Field::zeros(grid);
        for (m, w) in self.modes.iter().zip(dw) {
            if *w != 0.0 {
                out.axpy((*w).into(), &m.e);
            }
        }
        Some(out)
    }

    /// `∫ e_j φ dx` for every mode.
    pub fn pairings(&self, phi: &Field) -> Vec<Complex64> {
        let h = phi.grid().cell_volume();
        self.modes
            .iter()
            .map(|m| h * m.e.values().iter().zip(phi.values()).map(|(e, p)| e * p).sum::<Complex64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub empirical: Complex64,
    pub analytic: Complex64,
    /// Relative error, or the absolute error in absolute mode.
    pub rel_err: f64,
    /// Standard error of the empirical mean.
    pub std_err: f64,
    pub absolute_mode: bool,
    pub pass: bool,
}

/// Relative tolerance of the covariance check.
pub const COVARIANCE_TOL: f64 = 0.05;

/// Monte Carlo `E[Ξ(φ) conj Ξ(ψ)]` over `samples` increments of length `dt`
/// against `dt ∫ Fφ conj Fψ dM`.
pub fn covariance_check(
    m: &SpectralMeasure,
    basis: &CameronMartinBasis,
    phi: &Field,
    psi: &Field,
    dt: f64,
    samples: usize,
    rng: &CounterRng,
) -> CovarianceCheck {
    let analytic: Complex64 =
        dt * m.to_atoms().iter().map(|a| a.weight * transform_at(phi, &a.xi) * transform_at(psi, &a.xi).conj()).sum::<Complex64>();
    let cp = basis.pairings(phi);
    let cq = basis.pairings(psi);
    let sd = dt.sqrt();
    let products = crate::par::map_indices(samples, |s| {
        let z = rng.normals(s as u64, 0, basis.len());
        let a: Complex64 = cp.iter().zip(&z).map(|(c, z)| c * z * sd).sum();
        let b: Complex64 = cq.iter().zip(&z).map(|(c, z)| c * z * sd).sum();
        a * b.conj()
    });
    let n = samples as f64;
    let re: Vec<f64> = products.iter().map(|p| p.re).collect();
    let im: Vec<f64> = products.iter().map(|p| p.im).collect();
    let empirical = Complex64::new(crate::par::pairwise_sum(&re), crate::par::pairwise_sum(&im)) / n;
    let var = products.iter().map(|p| (p - empirical).norm_sqr()).sum::<f64>() / (n - 1.0).max(1.0);
    let std_err = (var / n).sqrt();
    // |analytic| <= dt · mass · ||φ||_{L^1} ||ψ||_{L^1}; values below a
    // round-off fraction of that bound count as zero.
    let l1 = |f: &Field| f.grid().cell_volume() * f.values().iter().map(|v| v.norm()).sum::<f64>();
    let floor = 1e-12 * dt * total_mass(m) * l1(phi) * l1(psi);
    let scale = analytic.norm();
    let absolute_mode = scale <= floor;
    let (rel_err, pass) = if absolute_mode {
        let err = empirical.norm();
        (err, err <= 3.0 * std_err + floor)
    } else {
        let r = (empirical - analytic).norm() / scale;
        (r, r < COVARIANCE_TOL)
    };
    CovarianceCheck { empirical, analytic, rel_err, std_err, absolute_mode, pass }
}

/// Spectrum of the correlation field, for round-trip checks.
pub fn correlation_spectrum(gamma: &CorrelationMeasure) -> Spectrum {
    forward_transform(&gamma.as_field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::desk(1)
    }

    #[test]
    fn masses() {
        assert_eq!(total_mass(&SpectralMeasure::single_atom(1, 1.0).unwrap()), 1.0);
        assert_eq!(total_mass(&SpectralMeasure::atom_pair(&[1.0], 0.5).unwrap()), 1.0);
        let g = SpectralMeasure::gaussian_density(grid(), 1.0, 1.0, 8.0).unwrap();
        assert!((total_mass(&g) - PI.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn invalid_measures() {
        assert!(SpectralMeasure::single_atom(1, -1.0).is_err());
        assert!(SpectralMeasure::atoms(1, vec![Atom::new(&[1.0], 1.0)]).is_err());
        assert!(matches!(MeasureSpec::White.build(grid()), Err(Error::InfiniteMass)));
        let odd = (0..256).map(|k| if k == 3 { 1.0 } else { 0.0 }).collect();
        assert!(SpectralMeasure::grid_density(grid(), odd).is_err());
    }

    #[test]
    fn correlation_examples() {
        let g = grid();
        let flat = correlation_from_spectral(&SpectralMeasure::single_atom(1, 1.0).unwrap(), g).unwrap();
        assert!(flat.values.iter().all(|v| (v - 1.0 / (2.0 * PI)).abs() < 1e-15));
        let xi0 = g.freq(4);
        let pair = correlation_from_spectral(&SpectralMeasure::atom_pair(&[xi0], 0.5).unwrap(), g).unwrap();
        for (i, v) in pair.values.iter().enumerate() {
            assert!((v - (xi0 * g.coord(i)).cos() / (2.0 * PI)).abs() < 1e-14);
        }
        let dens = SpectralMeasure::gaussian_density(g, 1.0, 1.0, 1e9).unwrap();
        let gamma = correlation_from_spectral(&dens, g).unwrap();
        assert!((gamma.at_origin() - total_mass(&dens) / (2.0 * PI)).abs() < 1e-12);
        for (i, v) in gamma.values.iter().enumerate() {
            let x = g.coord(i);
            let exact = (-x * x / 4.0).exp() / (2.0 * PI.sqrt());
            assert!((v - exact).abs() < 1e-10);
        }
        let back = correlation_spectrum(&gamma);
        if let SpectralMeasure::GridDensity { density, .. } = &dens {
            for (k, v) in back.values().iter().enumerate() {
                assert!((v.re - density[k]).abs() < 1e-10 && v.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn basis_examples() {
        let g = grid();
        let c = 2.5;
        let one = build_cm_basis(&SpectralMeasure::single_atom(1, c).unwrap(), g, None).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one.modes[0].f[0].re - c.powf(-0.5)).abs() < 1e-15);
        assert!(one.modes[0].e.values().iter().all(|v| (v.re - c.sqrt()).abs() < 1e-14));

        let xi0 = g.freq(3);
        let pair = build_cm_basis(&SpectralMeasure::atom_pair(&[xi0], 0.5).unwrap(), g, None).unwrap();
        assert_eq!(pair.len(), 2);
        for (i, v) in pair.modes[0].e.values().iter().enumerate() {
            assert!((v.re - (xi0 * g.coord(i)).cos()).abs() < 1e-14);
        }
        let f = &pair.modes[0].f;
        assert!((f[0] - f[1].conj()).norm() < 1e-15);
        assert!(pair.orthonormality_error() < 1e-10);

        let dens = SpectralMeasure::gaussian_density(g, 1.0, 1.0, 8.0).unwrap();
        let b = build_cm_basis(&dens, g, None).unwrap();
        assert_eq!(b.len(), DEFAULT_MODES);
        assert!(b.orthonormality_error() < 1e-10);
        match build_cm_basis(&SpectralMeasure::single_atom(1, 1.0).unwrap(), g, Some(2)) {
            Err(Error::BasisTooLarge { requested: 2, max: 1 }) => {}
            other => panic!("expected BasisTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn bessel_partial_sums_increase_to_the_norm() {
        let g = grid();
        let dens = SpectralMeasure::gaussian_density(g, 1.0, 1.0, 8.0).unwrap();
        let full = max_modes(&dens);
        let b = build_cm_basis(&dens, g, Some(full)).unwrap();
        let (partial, total) = b.bessel_partial_sums(|xi| Complex64::new((-xi[0] * xi[0]).exp(), 0.3 * xi[0]));
        assert!(partial.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!((partial.last().unwrap() - total).abs() < 1e-10 * total);
    }

    #[test]
    fn covariance_single_atom_and_orthogonal() {
        let g = grid();
        let m = SpectralMeasure::single_atom(1, 0.7).unwrap();
        let b = build_cm_basis(&m, g, None).unwrap();
        let phi = Field::gaussian(g, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
        let rng = CounterRng::new(3);
        let c = covariance_check(&m, &b, &phi, &phi, 0.01, 10_000, &rng);
        let exact = 0.01 * 0.7 * (2.0 * PI);
        assert!((c.analytic.re - exact).abs() < 1e-10);
        assert!(c.pass, "{c:?}");
        let xi0 = g.freq(8);
        let pair = SpectralMeasure::atom_pair(&[xi0], 0.5).unwrap();
        let bp = build_cm_basis(&pair, g, None).unwrap();
        let ortho = Field::from_fn(g, |x| Complex64::from_polar((-x[0] * x[0] / 2.0).exp(), 0.0));
        let shifted = Field::from_fn(g, |x| (-x[0] * x[0] / 2.0).exp() * Complex64::from_polar(1.0, 20.0 * x[0]));
        let z = covariance_check(&pair, &bp, &shifted, &ortho, 0.01, 10_000, &rng);
        assert!(z.absolute_mode && z.pass, "{z:?}");
    }

    #[test]
    fn measure_specs_rescale_mass() {
        let g = grid();
        let spec: MeasureSpec = serde_json::from_str(r#"{"type":"gaussian_density","mass":2.0}"#).unwrap();
        assert!((total_mass(&spec.build(g).unwrap()) - 2.0).abs() < 1e-12);
        let zero = MeasureSpec::Atoms { atoms: vec![Atom::new(&[0.0], 0.0)], mass: None }.build(g).unwrap();
        assert_eq!(max_modes(&zero), 0);
        assert!(build_cm_basis(&zero, g, None).unwrap().is_empty());
    }
}
