//! The linear evolution `du/dt = i G u`, `G = Op(a) + Op(a_1) + Op(m_1) + Op(m_0)`,
//! realized by Strang splitting or classical RK4, and the growth-bound check
//! `||u(t)||_{H_{z,zeta}} <= e^{C t} ||u_0||_{H_{z,zeta}}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{forward_transform, h_zz_norm, inverse_transform, Field, Grid, HSpace};
use crate::quantization::{CompiledOp, GeneratorBundle};
use crate::{Error, Result};

/// RK4 step limit factor: `dt <= C_CFL h^2 / C_ell`.
pub const C_CFL: f64 = 0.2;
/// Growth fits with a larger relative residual FAIL.
pub const GROWTH_RESIDUAL_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Split step when the bundle separates, RK4 otherwise.
    #[default]
    Auto,
    SplitStep,
    Rk4,
}

#[derive(Debug, Clone)]
pub struct PropagatorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub generator: GeneratorBundle,
}

impl PropagatorConfig {
    pub fn new(generator: GeneratorBundle, dt: f64) -> Self {
        PropagatorConfig { scheme: Scheme::Auto, dt, generator }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        PropagatorConfig { dt, ..self.clone() }
    }

    pub fn resolved_scheme(&self) -> Scheme {
        match self.scheme {
            Scheme::Auto if self.generator.is_splittable() => Scheme::SplitStep,
            Scheme::Auto => Scheme::Rk4,
            s => s,
        }
    }

    /// Largest stable RK4 step on `grid`.
    pub fn max_rk4_dt(&self, grid: &Grid) -> f64 {
        C_CFL * grid.spacing().powi(2) / self.generator.c_ell
    }

    /// Largest step allowed for the resolved scheme.
    pub fn max_dt(&self, grid: &Grid) -> f64 {
        match self.resolved_scheme() {
            Scheme::Rk4 => self.max_rk4_dt(grid),
            _ => f64::INFINITY,
        }
    }
}

enum StepKind {
    Split { half_potential: Option<Vec<Complex64>>, kinetic: Option<Vec<Complex64>> },
    Rk4(CompiledOp),
}

/// One time step `S(dt)`, compiled for a grid. Reusing a stepper makes
/// `S(k dt)` exactly the `k`-fold power of the step.
pub struct Stepper {
    grid: Grid,
    dt: f64,
    scheme: Scheme,
    kind: StepKind,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper").field("grid", &self.grid).field("dt", &self.dt).field("scheme", &self.scheme).finish()
    }
}

impl Stepper {
    pub fn new(cfg: &PropagatorConfig, grid: Grid) -> Result<Self> {
        let dt = cfg.dt;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTime(format!("time step must be positive and finite, got {dt}")));
        }
        let op = cfg.generator.compile(grid)?;
        let scheme = cfg.resolved_scheme();
        let kind = match scheme {
            Scheme::SplitStep => {
                if !op.is_splittable() {
                    return Err(Error::NotSplittable);
                }
                let expi = |s: &[Complex64], tau: f64| s.iter().map(|v| (Complex64::i() * tau * v).exp()).collect();
                StepKind::Split {
                    half_potential: op.multiplication_samples().map(|v| expi(v, 0.5 * dt)),
                    kinetic: op.multiplier_samples().map(|m| expi(m, dt)),
                }
            }
            _ => {
                let max_dt = cfg.max_rk4_dt(&grid);
                if dt > max_dt {
                    return Err(Error::CflViolation { dt, max_dt });
                }
                StepKind::Rk4(op)
            }
        };
        Ok(Stepper { grid, dt, scheme, kind })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn step(&self, u: &Field) -> Field {
        match &self.kind {
            StepKind::Split { half_potential, kinetic } => {
                let mut v = u.clone();
                if let Some(p) = half_potential {
                    v.values_mut().iter_mut().zip(p).for_each(|(a, p)| *a *= p);
                }
                if let Some(k) = kinetic {
                    let mut s = forward_transform(&v);
                    s.values_mut().iter_mut().zip(k).for_each(|(a, k)| *a *= k);
                    v = inverse_transform(&s);
                }
                if let Some(p) = half_potential {
                    v.values_mut().iter_mut().zip(p).for_each(|(a, p)| *a *= p);
                }
                v
            }
            StepKind::Rk4(op) => {
                let dt = self.dt;
                let i = Complex64::i();
                let rhs = |f: &Field| op.apply(f).scale(i);
                let k1 = rhs(u);
                let mut tmp = u.clone();
                tmp.axpy((0.5 * dt).into(), &k1);
                let k2 = rhs(&tmp);
                let mut tmp = u.clone();
                tmp.axpy((0.5 * dt).into(), &k2);
                let k3 = rhs(&tmp);
                let mut tmp = u.clone();
                tmp.axpy(dt.into(), &k3);
                let k4 = rhs(&tmp);
                let mut out = u.clone();
                out.axpy((dt / 6.0).into(), &k1);
                out.axpy((dt / 3.0).into(), &k2);
                out.axpy((dt / 3.0).into(), &k3);
                out.axpy((dt / 6.0).into(), &k4);
                out
            }
        }
    }

    pub fn advance(&self, u: &Field, steps: usize) -> Field {
        let mut v = u.clone();
        for _ in 0..steps {
            v = self.step(&v);
        }
        v
    }
}

/// Number of steps of size at most `dt` covering `t`.
fn step_count(t: f64, dt: f64) -> usize {
    let k = t / dt;
    let r = k.round();
    if (k - r).abs() <= 1e-9 * k.max(1.0) {
        r as usize
    } else {
        k.ceil() as usize
    }
}

/// `S(t) u0`. Uses steps of size `t / ceil(t / dt)`, so `t` is hit exactly.
pub fn evolve(u0: &Field, t: f64, cfg: &PropagatorConfig) -> Result<Field> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(format!("evolution time must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(u0.clone());
    }
    let steps = step_count(t, cfg.dt).max(1);
    let stepper = Stepper::new(&cfg.with_dt(t / steps as f64), *u0.grid())?;
    Ok(stepper.advance(u0, steps))
}

/// The linear map `S(t_to - t_from)`.
#[derive(Debug)]
pub struct PropagatorOp {
    stepper: Option<Stepper>,
    steps: usize,
}

impl PropagatorOp {
    pub fn apply(&self, f: &Field) -> Field {
        match &self.stepper {
            Some(s) => s.advance(f, self.steps),
            None => f.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

pub fn propagator_operator(t_from: f64, t_to: f64, cfg: &PropagatorConfig, grid: Grid) -> Result<PropagatorOp> {
    if !(t_from.is_finite() && t_to.is_finite() && t_from <= t_to) {
        return Err(Error::InvalidTime(format!("need t_from <= t_to, got {t_from} > {t_to}")));
    }
    let t = t_to - t_from;
    if t == 0.0 {
        return Ok(PropagatorOp { stepper: None, steps: 0 });
    }
    let steps = step_count(t, cfg.dt).max(1);
    Ok(PropagatorOp { stepper: Some(Stepper::new(&cfg.with_dt(t / steps as f64), grid)?), steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub space: HSpace,
    pub times: Vec<f64>,
    /// `norms[i][k]`: datum `i` at `times[k]`.
    pub norms: Vec<Vec<f64>>,
    /// Largest per-datum least-squares slope of `log(||u(t)|| / ||u_0||)`
    /// against `t`, with the intercept pinned at 0.
    pub fitted_c: f64,
    /// Smallest `C` with `||u(t)|| <= e^{C t} ||u_0||` on the data.
    pub envelope_c: f64,
    /// Largest per-datum RMS deviation of the log-norm from its fitted line.
    pub residual: f64,
    pub pass: bool,
    pub witness: Option<String>,
}

impl GrowthReport {
    /// Columns `datum,t,norm,bound` with the envelope bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("datum,t,norm,bound\n");
        for (i, row) in self.norms.iter().enumerate() {
            for (t, n) in self.times.iter().zip(row) {
                let bound = (self.envelope_c * t).exp() * row[0];
                out.push_str(&format!("{i},{t},{n:e},{bound:e}\n"));
            }
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "z": self.space.z,
            "zeta": self.space.zeta,
            "fitted_c": self.fitted_c,
            "envelope_c": self.envelope_c,
            "residual": self.residual,
            "verdict": if self.pass { "PASS" } else { "FAIL" },
            "witness": self.witness,
        })
    }
}

/// Evolves every datum over `times` (increasing, starting at 0) and fits the
/// exponential growth rate of its `H_{z,zeta}` norm.
pub fn growth_bound_check(u0_set: &[Field], times: &[f64], space: HSpace, cfg: &PropagatorConfig) -> Result<GrowthReport> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTime("growth times must increase strictly from 0".into()));
    }
    let runs = crate::par::map_indices(u0_set.len(), |i| -> Result<Vec<f64>> {
        let mut u = u0_set[i].clone();
        let mut row = vec![h_zz_norm(&u, space)];
        for w in times.windows(2) {
            u = evolve(&u, w[1] - w[0], cfg)?;
            row.push(h_zz_norm(&u, space));
        }
        Ok(row)
    });
    let norms = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut witness = None;
    'scan: for (i, row) in norms.iter().enumerate() {
        for (k, n) in row.iter().enumerate() {
            if !n.is_finite() {
                witness = Some(format!("datum {i}: norm {n} at t = {}", times[k]));
                break 'scan;
            }
        }
    }
    if witness.is_some() {
        return Ok(GrowthReport {
            space,
            times: times.to_vec(),
            norms,
            fitted_c: f64::NAN,
            envelope_c: f64::INFINITY,
            residual: f64::INFINITY,
            pass: false,
            witness,
        });
    }

    // Per datum: slope of log(||u(t)|| / ||u_0||) through the origin and the
    // RMS of the log residuals; the report keeps the worst of each.
    let mut fitted_c = f64::NEG_INFINITY;
    let mut envelope_c: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let stt: f64 = times.iter().map(|t| t * t).sum();
    for row in norms.iter().filter(|r| r[0] > 0.0) {
        let ys: Vec<f64> = row.iter().map(|n| (n / row[0]).ln()).collect();
        let c = if stt > 0.0 { times.iter().zip(&ys).map(|(t, y)| t * y).sum::<f64>() / stt } else { 0.0 };
        let rms = (times.iter().zip(&ys).map(|(t, y)| (y - c * t).powi(2)).sum::<f64>() / times.len() as f64).sqrt();
        fitted_c = fitted_c.max(c);
        residual = residual.max(rms);
        for (t, y) in times.iter().zip(&ys).skip(1) {
            envelope_c = envelope_c.max(y / t);
        }
    }
    if fitted_c == f64::NEG_INFINITY {
        fitted_c = 0.0;
    }
    let pass = fitted_c.is_finite() && residual < GROWTH_RESIDUAL_LIMIT;
    if !pass {
        witness = Some(format!("fit residual {residual:e} exceeds {GROWTH_RESIDUAL_LIMIT}"));
    }
    Ok(GrowthReport { space, times: times.to_vec(), norms, fitted_c, envelope_c, residual, pass, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::l2_norm;
    use crate::symbol::{harmonic_window, MetricCoefficients, Symbol, SymbolOrder};

    fn gaussian(grid: Grid) -> Field {
        Field::gaussian(grid, &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0)
    }

    fn exact_free(grid: Grid, t: f64) -> Field {
        let c = Complex64::new(1.0, t);
        Field::from_fn(grid, |x| c.powf(-0.5) * (-(x[0] * x[0]) / (2.0 * c)).exp())
    }

    fn l2_diff(a: &Field, b: &Field) -> f64 {
        l2_norm(&(a - b))
    }

    #[test]
    fn zero_time_is_identity() {
        let g = Grid::desk(1);
        let u = gaussian(g);
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3);
        assert_eq!(evolve(&u, 0.0, &cfg).unwrap(), u);
        assert_eq!(propagator_operator(0.3, 0.3, &cfg, g).unwrap().apply(&u), u);
    }

    #[test]
    fn free_gaussian_both_schemes() {
        let g = Grid::desk(1);
        let u = gaussian(g);
        let exact = exact_free(g, 1.0);
        let split = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3);
        let v = evolve(&u, 1.0, &split).unwrap();
        assert!(l2_diff(&v, &exact) < 1e-4);
        assert!((l2_norm(&v) - l2_norm(&u)).abs() < 1e-8);
        let rk = split.with_dt(1e-3).with_scheme(Scheme::Rk4);
        let w = evolve(&u, 1.0, &rk).unwrap();
        assert!(l2_diff(&w, &exact) < 1e-4, "{}", l2_diff(&w, &exact));
    }

    #[test]
    fn cfl_violation_suggests_a_step() {
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 0.1).with_scheme(Scheme::Rk4);
        match Stepper::new(&cfg, Grid::desk(1)) {
            Err(Error::CflViolation { max_dt, .. }) => assert!((max_dt - 0.2 * 0.125f64.powi(2) / 2.0).abs() < 1e-15),
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn split_step_rejects_mixed_bundles() {
        let b = GeneratorBundle::from_metric(
            &MetricCoefficients::gauss_bump(1, 0.3, &[1.0]).unwrap(),
            Symbol::zero(1, SymbolOrder::new(0.0, 1.0)),
            Symbol::zero(1, SymbolOrder::new(0.0, 0.0)),
        )
        .unwrap();
        let cfg = PropagatorConfig::new(b, 1e-3).with_scheme(Scheme::SplitStep);
        assert!(matches!(Stepper::new(&cfg, Grid::desk(1)), Err(Error::NotSplittable)));
        assert_eq!(cfg.with_scheme(Scheme::Auto).resolved_scheme(), Scheme::Rk4);
    }

    #[test]
    fn semigroup_and_partition() {
        let g = Grid::desk(1);
        let b = GeneratorBundle::from_metric(
            &MetricCoefficients::flat(1),
            Symbol::zero(1, SymbolOrder::new(0.0, 1.0)),
            harmonic_window(1, 1.0, 4.0),
        )
        .unwrap();
        let cfg = PropagatorConfig::new(b, 1e-3);
        let u = Field::gaussian(g, &[1.0, 0.0], 1.0, &[0.5, 0.0], 1.0);
        let once = evolve(&u, 0.5, &cfg).unwrap();
        let twice = evolve(&evolve(&u, 0.2, &cfg).unwrap(), 0.3, &cfg).unwrap();
        assert!(l2_diff(&once, &twice) < 1e-6);
        assert!((l2_norm(&once) - l2_norm(&u)).abs() < 1e-8);
    }

    #[test]
    fn strang_is_second_order() {
        let g = Grid::desk(1);
        let b = GeneratorBundle::from_metric(
            &MetricCoefficients::flat(1),
            Symbol::zero(1, SymbolOrder::new(0.0, 1.0)),
            harmonic_window(1, 1.0, 4.0),
        )
        .unwrap();
        let u = gaussian(g);
        let reference = evolve(&u, 0.5, &PropagatorConfig::new(b.clone(), 1e-4)).unwrap();
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| l2_diff(&evolve(&u, 0.5, &PropagatorConfig::new(b.clone(), dt)).unwrap(), &reference))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let u = gaussian(g);
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3).with_scheme(Scheme::Rk4);
        let exact = evolve(&u, 0.5, &cfg.clone().with_scheme(Scheme::SplitStep)).unwrap();
        let max = cfg.max_rk4_dt(&g);
        let errs: Vec<f64> = [max, max / 2.0, max / 4.0]
            .iter()
            .map(|&dt| l2_diff(&evolve(&u, 0.5, &cfg.with_dt(dt)).unwrap(), &exact))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 3.5, "{errs:?}");
        }
    }

    #[test]
    fn growth_report_cases() {
        let g = Grid::desk(1);
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let data = [gaussian(g), Field::gaussian(g, &[1.0, 0.0], 1.5, &[1.0, 0.0], 1.0)];
        let l2 = growth_bound_check(&data, &times, HSpace::L2, &cfg).unwrap();
        assert!(l2.pass && l2.fitted_c.abs() <= 1e-6, "{l2:?}");
        let h1 = growth_bound_check(&data, &times, HSpace::new(1, 0).unwrap(), &cfg).unwrap();
        assert!(h1.pass && h1.fitted_c > 0.0 && h1.fitted_c.is_finite(), "{h1:?}");
        assert!(h1.fitted_c >= l2.fitted_c);
        let zero = growth_bound_check(&[Field::zeros(g)], &times, HSpace::new(1, 1).unwrap(), &cfg).unwrap();
        assert_eq!(zero.fitted_c, 0.0);
        assert!(zero.norms[0].iter().all(|&n| n == 0.0));
        assert!(h1.to_csv().lines().count() == 1 + 2 * times.len());
        assert!(growth_bound_check(&data, &[0.5, 1.0], HSpace::L2, &cfg).is_err());
    }
}
