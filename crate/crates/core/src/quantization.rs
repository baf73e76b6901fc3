//! Kohn–Nirenberg quantization
//! `Op(a) f (x) = (2π)^{-d} Σ_ξ e^{i x·ξ} a(x, ξ) F f(ξ) Δξ^d` on a grid, and
//! the generator `G = Op(a) + Op(a_1) + Op(m_1) + Op(m_0)`.
//!
//! Separable symbols cost one inverse transform per term with both factors
//! non-constant; terms with a constant spatial factor are merged into a single
//! multiplier, and terms with a constant frequency factor into a single
//! multiplication. General symbols use direct summation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conventions::{bracket, inverse_factor};
use crate::fields::{boundary_mass, forward_transform, inverse_transform, l2_norm, Field, Grid, Spectrum};
use crate::fields::BOUNDARY_MASS_LIMIT;
use crate::symbol::{
    build_hamiltonian, build_lower_metric_term, check_ellipticity, MetricCoefficients, ProbeGrid, Repr, Symbol,
    SymbolOrder,
};
use crate::{Error, Result};

/// Kernel matrices above this many entries are evaluated on the fly.
const KERNEL_CACHE_LIMIT: usize = 1 << 17;

/// `<x>^r (<D>^rho f)`.
pub fn weight_operator(f: &Field, r: f64, rho: f64) -> Field {
    if rho == 0.0 {
        return spatial_weight(f.clone(), r);
    }
    weight_from_spectrum(&forward_transform(f), r, rho)
}

/// `<x>^r (<D>^rho f)` given `F f`.
pub fn weight_from_spectrum(s: &Spectrum, r: f64, rho: f64) -> Field {
    let mut s = s.clone();
    if rho != 0.0 {
        s.multiply_by(|xi| bracket(xi).powf(rho).into());
    }
    spatial_weight(inverse_transform(&s), r)
}

fn spatial_weight(mut f: Field, r: f64) -> Field {
    if r == 0.0 {
        return f;
    }
    let grid = *f.grid();
    let d = grid.dim();
    for (i, v) in f.values_mut().iter_mut().enumerate() {
        *v *= bracket(&grid.point(i)[..d]).powf(r);
    }
    f
}

/// Result of an operator application with its boundary diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub field: Field,
    /// Set when the input's boundary mass exceeds [`BOUNDARY_MASS_LIMIT`].
    pub boundary_warning: Option<f64>,
}

fn boundary_warning(f: &Field) -> Option<f64> {
    let m = boundary_mass(f);
    if m > BOUNDARY_MASS_LIMIT {
        log::warn!("input boundary mass {m:e} exceeds {BOUNDARY_MASS_LIMIT:e}; periodization error may dominate");
        Some(m)
    } else {
        None
    }
}

pub fn apply_op(sym: &Symbol, f: &Field) -> Result<Applied> {
    let compiled = CompiledOp::new(std::slice::from_ref(sym), *f.grid())?;
    Ok(Applied { field: compiled.apply(f), boundary_warning: boundary_warning(f) })
}

/// Grid samples of a sum of symbols, ready for repeated application.
#[derive(Debug, Clone)]
pub struct CompiledOp {
    grid: Grid,
    multiplier: Option<Vec<Complex64>>,
    multiplication: Option<Vec<Complex64>>,
    mixed: Vec<(Vec<Complex64>, Vec<Complex64>)>,
    general: Vec<GeneralKernel>,
}

#[derive(Debug, Clone)]
enum GeneralKernel {
    Cached(Vec<Complex64>),
    OnTheFly(Symbol),
}

fn accumulate(slot: &mut Option<Vec<Complex64>>, samples: Vec<Complex64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(samples).for_each(|(a, s)| *a += s),
        None => *slot = Some(samples),
    }
}

impl CompiledOp {
    pub fn new(symbols: &[Symbol], grid: Grid) -> Result<Self> {
        let d = grid.dim();
        let xs: Vec<_> = (0..grid.len()).map(|i| grid.point(i)).collect();
        let xis: Vec<_> = (0..grid.len()).map(|k| grid.freq_point(k)).collect();
        let mut op = CompiledOp { grid, multiplier: None, multiplication: None, mixed: Vec::new(), general: Vec::new() };
        for sym in symbols {
            if sym.dim() != d {
                return Err(Error::GridMismatch(format!("symbol in dimension {} on a {d}-d grid", sym.dim())));
            }
            match sym.repr() {
                Repr::Separable(terms) => {
                    for t in terms {
                        let sample = |f: &crate::symbol::Factor, pts: &[[f64; 2]]| -> Vec<Complex64> {
                            pts.iter().map(|p| f.eval(&p[..d])).collect()
                        };
                        match (t.spatial.is_unit(), t.frequency.is_unit()) {
                            (true, true) => accumulate(&mut op.multiplication, vec![Complex64::new(1.0, 0.0); grid.len()]),
                            (true, false) => accumulate(&mut op.multiplier, sample(&t.frequency, &xis)),
                            (false, true) => accumulate(&mut op.multiplication, sample(&t.spatial, &xs)),
                            (false, false) => op.mixed.push((sample(&t.spatial, &xs), sample(&t.frequency, &xis))),
                        }
                    }
                }
                Repr::General(_) => {
                    let n = grid.len();
                    if n * n <= KERNEL_CACHE_LIMIT {
                        let mut kernel = Vec::with_capacity(n * n);
                        for x in &xs {
                            for xi in &xis {
                                kernel.push(kernel_entry(sym, &x[..d], &xi[..d]));
                            }
                        }
                        op.general.push(GeneralKernel::Cached(kernel));
                    } else {
                        op.general.push(GeneralKernel::OnTheFly(sym.clone()));
                    }
                }
            }
        }
        if let Some(m) = &op.multiplication {
            check_finite(m, "multiplication samples")?;
        }
        if let Some(m) = &op.multiplier {
            check_finite(m, "multiplier samples")?;
        }
        for (c, m) in &op.mixed {
            check_finite(c, "spatial factor samples")?;
            check_finite(m, "frequency factor samples")?;
        }
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// True when the operator is a pure multiplier plus a pure multiplication.
    pub fn is_splittable(&self) -> bool {
        self.mixed.is_empty() && self.general.is_empty()
    }

    /// Multiplier samples (FFT order), if any term is `x`-independent.
    pub fn multiplier_samples(&self) -> Option<&[Complex64]> {
        self.multiplier.as_deref()
    }

    /// Multiplication samples, if any term is `ξ`-independent.
    pub fn multiplication_samples(&self) -> Option<&[Complex64]> {
        self.multiplication.as_deref()
    }

    pub fn apply(&self, f: &Field) -> Field {
        assert_eq!(f.grid(), &self.grid, "field grid differs from compiled grid");
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        if let Some(c) = &self.multiplication {
            for ((o, c), v) in out.iter_mut().zip(c).zip(f.values()) {
                *o += c * v;
            }
        }
        if self.multiplier.is_some() || !self.mixed.is_empty() || !self.general.is_empty() {
            let spectrum = forward_transform(f);
            let with_multiplier = |m: &[Complex64]| {
                let values = spectrum.values().iter().zip(m).map(|(s, m)| s * m).collect();
                inverse_transform(&Spectrum::from_values(self.grid, values))
            };
            if let Some(m) = &self.multiplier {
                for (o, v) in out.iter_mut().zip(with_multiplier(m).values()) {
                    *o += v;
                }
            }
            for (c, m) in &self.mixed {
                for ((o, c), v) in out.iter_mut().zip(c).zip(with_multiplier(m).values()) {
                    *o += c * v;
                }
            }
            for kernel in &self.general {
                self.apply_general(kernel, &spectrum, &mut out);
            }
        }
        Field::from_values(self.grid, out).unwrap_or_else(|_| {
            let n = self.grid.len();
            Field::from_values(self.grid, vec![Complex64::new(f64::NAN, 0.0); n]).unwrap_or_else(|_| Field::zeros(self.grid))
        })
    }

    fn apply_general(&self, kernel: &GeneralKernel, spectrum: &Spectrum, out: &mut [Complex64]) {
        let grid = self.grid;
        let d = grid.dim();
        let n = grid.len();
        let scale = inverse_factor(d) * grid.freq_cell_volume();
        let s = spectrum.values();
        let rows = crate::par::map_indices(n, |i| {
            let sum: Complex64 = match kernel {
                GeneralKernel::Cached(k) => k[i * n..(i + 1) * n].iter().zip(s).map(|(k, s)| k * s).sum(),
                GeneralKernel::OnTheFly(sym) => {
                    let x = grid.point(i);
                    (0..n).map(|k| kernel_entry(sym, &x[..d], &grid.freq_point(k)[..d]) * s[k]).sum()
                }
            };
            sum * scale
        });
        for (o, r) in out.iter_mut().zip(rows) {
            *o += r;
        }
    }
}

fn kernel_entry(sym: &Symbol, x: &[f64], xi: &[f64]) -> Complex64 {
    let phase: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
    Complex64::from_polar(1.0, phase) * sym.eval(x, xi)
}

fn check_finite(v: &[Complex64], what: &str) -> Result<()> {
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string(), time_index: None, iteration: None })
    }
}

/// The four symbols of the generator and the ellipticity constant of `a`.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub a: Symbol,
    pub a1: Symbol,
    pub m1: Symbol,
    pub m0: Symbol,
    /// Ellipticity constant of the principal symbol; scales the RK4 step limit.
    pub c_ell: f64,
}

impl GeneratorBundle {
    /// Checks dimensions, declared orders and reality of `m1` on probes.
    pub fn new(a: Symbol, a1: Symbol, m1: Symbol, m0: Symbol, c_ell: f64) -> Result<Self> {
        let d = a.dim();
        if [&a1, &m1, &m0].iter().any(|s| s.dim() != d) {
            return Err(Error::GridMismatch("generator symbols have different dimensions".into()));
        }
        let expected = [
            (&a, SymbolOrder::new(0.0, 2.0), "a"),
            (&a1, SymbolOrder::new(-1.0, 1.0), "a1"),
            (&m1, SymbolOrder::new(0.0, 1.0), "m1"),
            (&m0, SymbolOrder::new(0.0, 0.0), "m0"),
        ];
        for (sym, order, name) in expected {
            if sym.order().m > order.m || sym.order().mu > order.mu {
                return Err(Error::InvalidMetric(format!(
                    "{name} has order ({}, {}), exceeding ({}, {})",
                    sym.order().m,
                    sym.order().mu,
                    order.m,
                    order.mu
                )));
            }
        }
        let probes = ProbeGrid::standard(d);
        for x in probes.x_points_with_origin() {
            for (_, xi) in probes.points() {
                let v = m1.eval(&x, &xi);
                if v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
                    return Err(Error::InvalidMetric(format!("m1 is not real at x = {x:?}, xi = {xi:?}")));
                }
            }
        }
        if !(c_ell.is_finite() && c_ell >= 1.0) {
            return Err(Error::InvalidMetric(format!("ellipticity constant {c_ell} must be finite and >= 1")));
        }
        Ok(GeneratorBundle { a, a1, m1, m0, c_ell })
    }

    /// Principal and lower metric terms from `metric`, ellipticity certified.
    pub fn from_metric(metric: &MetricCoefficients, m1: Symbol, m0: Symbol) -> Result<Self> {
        let c_ell = check_ellipticity(metric, &ProbeGrid::standard(metric.dim()))?;
        Self::new(build_hamiltonian(metric)?, build_lower_metric_term(metric)?, m1, m0, c_ell)
    }

    /// Flat metric, no magnetic or potential term.
    pub fn free(dim: usize) -> Self {
        Self::from_metric(&MetricCoefficients::flat(dim), zero_m1(dim), zero_m0(dim)).expect("flat bundle is valid")
    }

    /// All four symbols zero.
    pub fn zero(dim: usize) -> Self {
        GeneratorBundle {
            a: Symbol::zero(dim, SymbolOrder::new(0.0, 2.0)),
            a1: Symbol::zero(dim, SymbolOrder::new(-1.0, 1.0)),
            m1: zero_m1(dim),
            m0: zero_m0(dim),
            c_ell: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn symbols(&self) -> [&Symbol; 4] {
        [&self.a, &self.a1, &self.m1, &self.m0]
    }

    /// Every term depends on `x` only or on `ξ` only.
    pub fn is_splittable(&self) -> bool {
        self.symbols().iter().all(|s| s.is_x_independent() || s.is_xi_independent())
    }

    pub fn compile(&self, grid: Grid) -> Result<CompiledOp> {
        CompiledOp::new(&self.symbols().map(|s| s.clone()), grid)
    }
}

fn zero_m1(dim: usize) -> Symbol {
    Symbol::zero(dim, SymbolOrder::new(0.0, 1.0))
}

fn zero_m0(dim: usize) -> Symbol {
    Symbol::zero(dim, SymbolOrder::new(0.0, 0.0))
}

/// `Op(a) f + Op(a_1) f + Op(m_1) f + Op(m_0) f`.
pub fn apply_generator(g: &GeneratorBundle, f: &Field) -> Result<Applied> {
    let op = g.compile(*f.grid())?;
    Ok(Applied { field: op.apply(f), boundary_warning: boundary_warning(f) })
}

/// Source indices `(r, rho)` of a continuity probe `H^{r,rho} -> H^{r-m, rho-mu}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    pub r: f64,
    pub rho: f64,
}

/// `max_f ||Op(a) f||_{H^{r-m, rho-mu}} / ||f||_{H^{r,rho}}` over nonzero samples.
pub fn continuity_probe(sym: &Symbol, source: SobolevIndex, samples: &[Field]) -> Result<f64> {
    let order = sym.order();
    let mut ratio: f64 = 0.0;
    for f in samples {
        let denom = l2_norm(&weight_operator(f, source.r, source.rho));
        if denom == 0.0 {
            continue;
        }
        let image = apply_op(sym, f)?.field;
        let num = l2_norm(&weight_operator(&image, source.r - order.m, source.rho - order.mu));
        ratio = ratio.max(num / denom);
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sobolev_kato_norm;
    use crate::symbol::{harmonic_window, shear};
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(1, 128, 16.0).unwrap()
    }

    fn gaussian(grid: Grid) -> Field {
        Field::gaussian(grid, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0)
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_symbol() {
        let f = gaussian(grid());
        let out = apply_op(&Symbol::constant(1, 1.0.into()), &f).unwrap();
        assert!(max_diff(&out.field, &f) < 1e-14);
        assert!(out.boundary_warning.is_none());
    }

    #[test]
    fn multiplier_on_plane_wave() {
        let g = grid();
        let k = 5;
        let xi = g.freq(k);
        let wave = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi * x[0]));
        let out = apply_op(&Symbol::weight(1, 0.0, 2.0), &wave).unwrap().field;
        assert!(max_diff(&out, &wave.scale((1.0 + xi * xi).into())) < 1e-12);
    }

    #[test]
    fn multiplication_reduction() {
        let f = gaussian(grid());
        let out = apply_op(&Symbol::weight(1, 1.0, 0.0), &f).unwrap().field;
        let direct = Field::from_fn(grid(), |x| (bracket(x) * (-x[0] * x[0] / 2.0).exp()).into());
        assert!(max_diff(&out, &direct) < 1e-12);
    }

    #[test]
    fn general_path_matches_separable_path() {
        let sep = shear(1, 0.8);
        let s2 = sep.clone();
        let gen = Symbol::general(1, sep.order(), move |x, xi| s2.eval(x, xi));
        let f = Field::gaussian(grid(), &[0.5, 0.0], 1.2, &[1.0, 0.0], 1.0);
        let a = apply_op(&sep, &f).unwrap().field;
        let b = apply_op(&gen, &f).unwrap().field;
        assert!(max_diff(&a, &b) < 1e-10, "{}", max_diff(&a, &b));
    }

    #[test]
    fn generator_reductions() {
        let g = grid();
        let xi = g.freq(3);
        let wave = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi * x[0]));
        let out = apply_generator(&GeneratorBundle::free(1), &wave).unwrap().field;
        assert!(max_diff(&out, &wave.scale((-xi * xi / 2.0).into())) < 1e-12);
        let zero = apply_generator(&GeneratorBundle::zero(1), &wave).unwrap().field;
        assert_eq!(zero.max_abs(), 0.0);
        let v = harmonic_window(1, 1.0, 4.0);
        let bundle = GeneratorBundle::new(
            Symbol::zero(1, SymbolOrder::new(0.0, 2.0)),
            Symbol::zero(1, SymbolOrder::new(-1.0, 1.0)),
            zero_m1(1),
            v.clone(),
            1.0,
        )
        .unwrap();
        let f = gaussian(g);
        let out = apply_generator(&bundle, &f).unwrap().field;
        let direct = Field::from_fn(g, |x| v.eval(x, &[0.0]) * (-x[0] * x[0] / 2.0).exp());
        assert!(max_diff(&out, &direct) < 1e-12);
    }

    #[test]
    fn boundary_warning_is_attached() {
        let f = Field::from_real_fn(grid(), |_| 1.0);
        assert!(apply_op(&Symbol::constant(1, 1.0.into()), &f).unwrap().boundary_warning.is_some());
    }

    #[test]
    fn weight_operator_is_the_norm_integrand() {
        let f = Field::gaussian(grid(), &[1.0, 0.0], 1.0, &[0.5, 0.0], 1.0);
        let via_op = l2_norm(&apply_op(&Symbol::weight(1, 1.0, 2.0), &f).unwrap().field);
        assert!((via_op - sobolev_kato_norm(&f, 1.0, 2.0)).abs() < 1e-12 * via_op);
    }

    #[test]
    fn continuity_examples() {
        let samples: Vec<Field> = (0..3)
            .map(|i| Field::gaussian(grid(), &[i as f64 - 1.0, 0.0], 1.0 + 0.3 * i as f64, &[i as f64, 0.0], 1.0))
            .chain(std::iter::once(Field::zeros(grid())))
            .collect();
        let id = continuity_probe(&Symbol::constant(1, 1.0.into()), SobolevIndex { r: 0.0, rho: 0.0 }, &samples).unwrap();
        assert!((id - 1.0).abs() < 1e-12);
        let m = continuity_probe(&Symbol::weight(1, 0.0, 2.0), SobolevIndex { r: 0.0, rho: 2.0 }, &samples).unwrap();
        assert!(m <= 1.0 + 1e-10);
        let flat = GeneratorBundle::free(1).a;
        let c = continuity_probe(&flat, SobolevIndex { r: 0.0, rho: 2.0 }, &samples).unwrap();
        assert!(c <= 0.5 + 1e-10);
        let fine = [gaussian(grid().refined())];
        let c2 = continuity_probe(&flat, SobolevIndex { r: 0.0, rho: 2.0 }, &fine).unwrap();
        assert!(c2 <= 0.5 + 1e-10);
    }

    #[test]
    fn bundle_validation() {
        let complex_m1 = Symbol::multiplier(1, SymbolOrder::new(0.0, 1.0), |xi| Complex64::new(0.0, xi[0]));
        let err = GeneratorBundle::from_metric(&MetricCoefficients::flat(1), complex_m1, zero_m0(1));
        assert!(err.is_err());
        assert!(GeneratorBundle::free(2).is_splittable());
        let sheared = GeneratorBundle::from_metric(&MetricCoefficients::flat(1), shear(1, 1.0), zero_m0(1)).unwrap();
        assert!(!sheared.is_splittable());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn linearity(a in -2.0f64..2.0, b in -2.0f64..2.0, s in 0.5f64..2.0, p in -2.0f64..2.0) {
            let g = grid();
            let f = Field::gaussian(g, &[0.0, 0.0], s, &[p, 0.0], 1.0);
            let h = Field::gaussian(g, &[1.0, 0.0], 1.0, &[0.0, 0.0], 1.0);
            let bundle = GeneratorBundle::from_metric(
                &MetricCoefficients::gauss_bump(1, 0.3, &[1.0]).unwrap(), shear(1, 0.5), harmonic_window(1, 1.0, 4.0),
            ).unwrap();
            let op = bundle.compile(g).unwrap();
            let mut combo = f.scale(a.into());
            combo.axpy(b.into(), &h);
            let lhs = op.apply(&combo);
            let mut rhs = op.apply(&f).scale(a.into());
            rhs.axpy(b.into(), &op.apply(&h));
            prop_assert!(max_diff(&lhs, &rhs) < 1e-10 * (1.0 + lhs.max_abs()));
        }
    }
}
