//! Verification batteries shared by the `verify` subcommand and the
//! acceptance tests. Every battery returns named checks with a measured value,
//! the threshold it was held to, and CSV tables for the run directory.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{
    algebra_constant_probe, boundary_mass, forward_transform, h_zz_norm, l2_norm, Field, Grid, HSpace, BOUNDARY_MASS_LIMIT,
};
use crate::noise::{build_cm_basis, correlation_from_spectral, covariance_check, total_mass, SpectralMeasure, COVARIANCE_TOL};
use crate::propagator::{evolve, growth_bound_check, PropagatorConfig, Scheme};
use crate::quantization::GeneratorBundle;
use crate::rng::CounterRng;
use crate::solver::{
    ball_probes, lip_constants, pick_horizon, Ball, InitialGuess, MildProblem, MildSolver, Nonlinearity, SolveConfig,
    CONTRACTION_MARGIN,
};
use crate::stochastic::{
    hs_bound, hs_convention_fixture, hs_partial_sums, ito_isometry_check, Deterministic, HSReport, HS_KAPPA, ISOMETRY_TOL,
};
use crate::symbol::{
    build_hamiltonian, build_lower_metric_term, check_ellipticity, check_symbol_estimates, MagneticFamily, MetricFamily,
    PotentialFamily, ProbeGrid, Symbol, SymbolOrder,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Symbols,
    Norms,
    Propagator,
    Noise,
    Isometry,
    Hs,
    Contraction,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] =
        [Suite::Symbols, Suite::Norms, Suite::Propagator, Suite::Noise, Suite::Isometry, Suite::Hs, Suite::Contraction];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Symbols => "symbols",
            Suite::Norms => "norms",
            Suite::Propagator => "propagator",
            Suite::Noise => "noise",
            Suite::Isometry => "isometry",
            Suite::Hs => "hs",
            Suite::Contraction => "contraction",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .iter()
            .chain(&[Suite::All])
            .find(|suite| suite.name() == s)
            .copied()
            .ok_or_else(|| Error::UnknownSuite(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass: value <= threshold, value, threshold, detail: detail.into() }
    }

    /// `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass: value >= threshold, value, threshold, detail: detail.into() }
    }

    pub fn flag(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, value: f64::from(u8::from(pass)), threshold: 1.0, detail: detail.into() }
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} value={:.4e} threshold={:.4e}", self.verdict(), self.name, self.value, self.threshold)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

/// Checks and tables of one battery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub seconds: f64,
}

impl Battery {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn table(&mut self, name: impl Into<String>, csv: String) {
        self.tables.push(Table { name: name.into(), csv });
    }

    fn extend(&mut self, other: Battery) {
        self.checks.extend(other.checks);
        self.tables.extend(other.tables);
    }

    fn timed(f: impl FnOnce() -> Result<Battery>) -> Result<Battery> {
        let start = Instant::now();
        let mut b = f()?;
        b.seconds = start.elapsed().as_secs_f64();
        Ok(b)
    }
}

/// Scale knobs of the batteries. The defaults are the acceptance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
    pub seed: u64,
    pub isometry_paths: usize,
    pub covariance_samples: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { dim: 1, n: 256, half_width: 16.0, seed: 20240917, isometry_paths: 10_000, covariance_samples: 10_000 }
    }
}

impl VerifySettings {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.half_width)
    }

    fn rng(&self, salt: u64) -> CounterRng {
        CounterRng::new(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

pub fn run_suite(suite: Suite, settings: &VerifySettings) -> Result<Battery> {
    match suite {
        Suite::Symbols => symbol_battery(settings),
        Suite::Norms => norms_battery(settings),
        Suite::Propagator => {
            let mut b = free_gaussian_benchmark(settings)?;
            b.extend(growth_battery(settings)?);
            Ok(b)
        }
        Suite::Noise => covariance_battery(settings),
        Suite::Isometry => isometry_battery(settings),
        Suite::Hs => hs_battery(settings),
        Suite::Contraction => {
            let mut b = contraction_battery(settings)?;
            b.extend(scheme_crosscheck(settings)?);
            Ok(b)
        }
        Suite::All => {
            let mut b = Battery::default();
            for s in Suite::EACH {
                let part = run_suite(s, settings)?;
                b.seconds += part.seconds;
                b.extend(part);
            }
            Ok(b)
        }
    }
}

fn metric_families() -> [MetricFamily; 3] {
    [
        MetricFamily::Flat,
        MetricFamily::GaussBump { epsilon: 0.3, direction: vec![] },
        MetricFamily::RationalDecay { epsilon: 0.3, direction: vec![] },
    ]
}

/// Generator of a metric family with no magnetic or potential term; RK4 step
/// chosen at half the stability limit when the bundle does not split.
pub fn metric_propagator(family: &MetricFamily, grid: Grid, dt: f64) -> Result<PropagatorConfig> {
    let d = grid.dim();
    let metric = family.build(d)?;
    let bundle = GeneratorBundle::from_metric(&metric, MagneticFamily::None.build(d), PotentialFamily::None.build(d))?;
    let cfg = PropagatorConfig::new(bundle, dt);
    let limit = 0.5 * cfg.max_dt(&grid);
    Ok(if cfg.resolved_scheme() == Scheme::Rk4 && dt > limit { cfg.with_dt(limit) } else { cfg })
}

/// `ξ0 = e_1`.
fn unit_xi(dim: usize) -> Vec<f64> {
    let mut xi = vec![0.0; dim];
    xi[0] = 1.0;
    xi
}

fn gaussian(grid: Grid, center: f64, width: f64, momentum: f64) -> Field {
    Field::gaussian(grid, &[center, 0.0], width, &[momentum, 0.0], 1.0)
}

/// Shipped metric families at their declared orders with `|α|, |β| <= 2`, and
/// the `e^{|x|}` control that must fail at order `(0, 0)`.
pub fn symbol_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let d = settings.dim;
        let probes = ProbeGrid::standard(d);
        let mut b = Battery::default();
        for family in metric_families() {
            let metric = family.build(d)?;
            let c_ell = check_ellipticity(&metric, &probes)?;
            b.checks.push(Check::at_least(format!("symbols/{}/ellipticity", family.name()), c_ell, 1.0, "C_ell"));
            for (role, sym) in [("a", build_hamiltonian(&metric)?), ("a1", build_lower_metric_term(&metric)?)] {
                let report = check_symbol_estimates(&sym, 2, 2, &probes);
                b.checks.push(Check::flag(
                    format!("symbols/{}/{role}", family.name()),
                    report.pass,
                    format!("order ({}, {}), max constant {:.3e}", report.order.m, report.order.mu, report.max_constant()),
                ));
                b.table(format!("symbols_{}_{role}", family.name()), report.to_csv());
            }
        }
        let control = Symbol::multiplication(d, SymbolOrder::new(0.0, 0.0), |x: &[f64]| {
            x.iter().map(|c| c * c).sum::<f64>().sqrt().exp().into()
        })
        .with_label("exp_abs_x");
        let report = check_symbol_estimates(&control, 2, 2, &probes);
        b.checks.push(Check::flag("symbols/control_exp_abs_x_rejected", !report.pass, "e^{|x|} declared at order (0, 0)"));
        b.table("symbols_control", report.to_csv());
        Ok(b)
    })
}

/// Embedding monotonicity, algebra constant, boundary mass and Parseval on
/// a fixed set of Gaussians.
pub fn norms_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let samples = [gaussian(grid, 0.0, 1.0, 0.0), gaussian(grid, 1.5, 0.7, 1.0), gaussian(grid, -2.0, 1.3, -2.0)];
        let mut b = Battery::default();
        let mut csv = String::from("sample,z,zeta,norm\n");
        let mut worst_drop: f64 = 0.0;
        for (i, f) in samples.iter().enumerate() {
            let mut table = [[0.0; 3]; 3];
            for z in 0..3 {
                for zeta in 0..3 {
                    table[z][zeta] = h_zz_norm(f, HSpace::new(z as i64, zeta as i64)?);
                    csv.push_str(&format!("{i},{z},{zeta},{:e}\n", table[z][zeta]));
                }
            }
            for z in 0..3 {
                for zeta in 0..3 {
                    if z > 0 {
                        worst_drop = worst_drop.max(table[z - 1][zeta] - table[z][zeta]);
                    }
                    if zeta > 0 {
                        worst_drop = worst_drop.max(table[z][zeta - 1] - table[z][zeta]);
                    }
                }
            }
        }
        b.checks.push(Check::at_most("norms/embedding_monotone", worst_drop, 0.0, "largest decrease when z or zeta grows"));
        b.table("norms", csv);
        for space in [HSpace::new(0, 1)?, HSpace::new(1, 1)?] {
            let probe = algebra_constant_probe(space, &samples);
            b.checks.push(Check::flag(
                format!("norms/algebra_z{}_zeta{}", space.z, space.zeta),
                probe.hypothesis_holds && probe.ratio.is_finite(),
                format!("ratio {:.3e} over {} pairs", probe.ratio, probe.pairs),
            ));
        }
        let mass = samples.iter().map(boundary_mass).fold(0.0, f64::max);
        b.checks.push(Check::at_most("norms/boundary_mass", mass, BOUNDARY_MASS_LIMIT, ""));
        let parseval = samples
            .iter()
            .map(|f| {
                let spec = forward_transform(f).l2_norm();
                (spec - l2_norm(f)).abs() / l2_norm(f)
            })
            .fold(0.0, f64::max);
        b.checks.push(Check::at_most("norms/parseval", parseval, 1e-12, "relative"));
        Ok(b)
    })
}

/// Flat free Gaussian against `(1+it)^{-1/2} e^{-x^2/(2(1+it))}` at `t = 1`.
pub fn free_gaussian_benchmark(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("the free Gaussian benchmark is one-dimensional".into()));
        }
        let u0 = gaussian(grid, 0.0, 1.0, 0.0);
        let cfg = PropagatorConfig::new(GeneratorBundle::free(1), 1e-3).with_scheme(Scheme::SplitStep);
        let u = evolve(&u0, 1.0, &cfg)?;
        let exact = Field::from_fn(grid, |x| {
            let s = Complex64::new(1.0, 1.0);
            s.powf(-0.5) * (-x[0] * x[0] / (2.0 * s)).exp()
        });
        let mut b = Battery::default();
        b.checks.push(Check::at_most("propagator/free_gaussian_l2_error", l2_norm(&(&u - &exact)), 1e-4, "t = 1, dt = 1e-3"));
        b.checks.push(Check::at_most("propagator/free_gaussian_l2_drift", (l2_norm(&u) - l2_norm(&u0)).abs(), 1e-8, ""));
        Ok(b)
    })
}

/// Growth bound on flat and gauss-bump metrics for the four spaces with
/// `z, zeta <= 1`, over `t in [0, 1]`.
pub fn growth_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let data = [gaussian(grid, 0.0, 1.0, 0.0), gaussian(grid, 1.0, 1.5, 1.0), gaussian(grid, -1.0, 0.8, -0.5)];
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let mut b = Battery::default();
        for family in &metric_families()[..2] {
            let cfg = metric_propagator(family, grid, 1e-3)?;
            let mut fitted = [[0.0; 2]; 2];
            for (z, zeta) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let report = growth_bound_check(&data, &times, HSpace::new(z, zeta)?, &cfg)?;
                fitted[z as usize][zeta as usize] = report.fitted_c;
                let name = format!("propagator/growth/{}/z{z}_zeta{zeta}", family.name());
                b.checks.push(Check {
                    name,
                    pass: report.pass && report.envelope_c.is_finite(),
                    value: report.residual,
                    threshold: crate::propagator::GROWTH_RESIDUAL_LIMIT,
                    detail: format!("fitted C {:.4e}, envelope C {:.4e}", report.fitted_c, report.envelope_c),
                });
                b.table(format!("growth_{}_z{z}_zeta{zeta}", family.name()), report.to_csv());
            }
            // Weaker spaces evolve no worse: C is nondecreasing in z.
            for zeta in 0..2 {
                b.checks.push(Check::at_least(
                    format!("propagator/growth/{}/monotone_in_z_zeta{zeta}", family.name()),
                    fitted[1][zeta] - fitted[0][zeta],
                    -1e-9,
                    format!("C(z=1) - C(z=0), C(z=0) = {:.4e}", fitted[0][zeta]),
                ));
            }
        }
        Ok(b)
    })
}

/// Empirical noise covariance against `dt ∫ Fφ conj(Fψ) dM` for an atom pair
/// and a Gaussian density, including a pair with vanishing covariance, and
/// translation invariance of the point covariance.
pub fn covariance_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let measures = [
            ("atom_pair", SpectralMeasure::atom_pair(&unit_xi(grid.dim()), 0.5)?),
            ("gaussian_density", SpectralMeasure::gaussian_density(grid, 1.0, 1.0, 8.0)?),
        ];
        let phi = gaussian(grid, 0.0, 1.0, 0.0);
        let shifted = gaussian(grid, 0.8, 1.2, 0.0);
        let odd = Field::from_real_fn(grid, |x| x[0] * (-x[0] * x[0] / 2.0).exp());
        let mut b = Battery::default();
        let mut csv = String::from("measure,pair,empirical_re,empirical_im,analytic_re,analytic_im,rel_err,std_err,absolute\n");
        for (mi, (name, m)) in measures.iter().enumerate() {
            let basis = build_cm_basis(m, grid, None)?;
            b.checks.push(Check::at_most(format!("noise/{name}/orthonormality"), basis.orthonormality_error(), 1e-10, ""));
            for (pi, (pair, f, g)) in [("phi_phi", &phi, &phi), ("phi_shifted", &phi, &shifted), ("phi_odd", &phi, &odd)].iter().enumerate() {
                let c = covariance_check(m, &basis, f, g, 0.01, settings.covariance_samples, &settings.rng(100 + 10 * mi as u64 + pi as u64));
                csv.push_str(&format!(
                    "{name},{pair},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                    c.empirical.re, c.empirical.im, c.analytic.re, c.analytic.im, c.rel_err, c.std_err, c.absolute_mode
                ));
                let threshold = if c.absolute_mode { 3.0 * c.std_err } else { COVARIANCE_TOL };
                b.checks.push(Check {
                    name: format!("noise/{name}/{pair}"),
                    pass: c.pass,
                    value: c.rel_err,
                    threshold,
                    detail: if c.absolute_mode { "absolute band 3 standard errors".into() } else { "relative".into() },
                });
            }
        }
        b.table("covariance", csv);

        // Cov(ΔΞ(x), ΔΞ(x + h)) must not depend on the anchor x.
        let (name, density) = &measures[1];
        let basis = build_cm_basis(density, grid, None)?;
        let (dt, h, n) = (0.01_f64, 0.5, grid.n());
        let at = |x: f64| {
            let i = ((n / 2) as f64 + x / grid.spacing()).round() as usize;
            grid.flat_index([i, if grid.dim() == 2 { n / 2 } else { 0 }])
        };
        let anchors = [-3.0, -1.0, 0.0, 2.0];
        let rng = settings.rng(190);
        let products = crate::par::map_indices(settings.covariance_samples, |s| {
            let dw: Vec<f64> = rng.normals(s as u64, 0, basis.len()).into_iter().map(|z| z * dt.sqrt()).collect();
            let f = basis.increment_field(&dw).unwrap_or_else(|| Field::zeros(grid));
            let v = f.values();
            anchors.map(|x| (v[at(x + h)] * v[at(x)].conj()).re / dt)
        });
        let samples = products.len().max(1) as f64;
        let covs: Vec<f64> = (0..anchors.len()).map(|a| products.iter().map(|p| p[a]).sum::<f64>() / samples).collect();
        let mean = covs.iter().sum::<f64>() / covs.len() as f64;
        let analytic = crate::conventions::noise_kernel_factor(grid.dim()) * correlation_from_spectral(density, grid)?.values[at(h)];
        let spread = covs.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max) / analytic.abs();
        b.checks.push(Check::at_most(
            format!("noise/{name}/homogeneity"),
            spread,
            COVARIANCE_TOL,
            format!("lag {h}, anchors {anchors:?}, analytic {analytic:.4e}"),
        ));
        Ok(b)
    })
}

/// Three deterministic integrands at `M` and `4M` paths: relative error under
/// 5% at `M`, and the Monte Carlo error scale shrinking by `1/2 ± 50%`.
pub fn isometry_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let space = HSpace::new(0, 1)?;
        let measure = SpectralMeasure::gaussian_density(grid, 1.0, 1.0, 8.0)?;
        let basis = build_cm_basis(&measure, grid, Some(4))?;
        let (dt, steps) = (0.02, 10);
        let t_final = dt * steps as f64;
        let c = 0.7;
        let e1 = basis.modes[0].e.clone();
        let g = gaussian(grid, 0.0, 1.5, 0.0);
        let cfg = PropagatorConfig::new(GeneratorBundle::free(grid.dim()), 1e-3);
        let images: Vec<Field> = (0..steps * basis.len())
            .map(|i| {
                let (k, j) = (i / basis.len(), i % basis.len());
                evolve(&g.pointwise(&basis.modes[j].e), t_final - k as f64 * dt, &cfg)
            })
            .collect::<Result<_>>()?;
        let zero = || Field::zeros(grid);
        let constant = Deterministic(|_: usize, j: usize| if j == 0 { e1.scale(c.into()) } else { zero() });
        let ramp = Deterministic(|k: usize, j: usize| if j == 0 { e1.scale((c * k as f64 * dt).into()) } else { zero() });
        let propagated = Deterministic(|k: usize, j: usize| images[k * basis.len() + j].clone());
        let battery: [(&str, &dyn crate::stochastic::Integrand); 3] =
            [("constant", &constant), ("ramp", &ramp), ("propagated", &propagated)];
        let mut b = Battery::default();
        let mut csv = String::from("integrand,paths,lhs,rhs,rel_err,rel_std_err\n");
        for (idx, (name, integrand)) in battery.iter().enumerate() {
            let m = settings.isometry_paths;
            let small = ito_isometry_check(*integrand, basis.len(), dt, steps, m, space, grid, &settings.rng(200 + idx as u64));
            let large = ito_isometry_check(*integrand, basis.len(), dt, steps, 4 * m, space, grid, &settings.rng(300 + idx as u64));
            for r in [&small, &large] {
                csv.push_str(&format!("{name},{},{:e},{:e},{:e},{:e}\n", r.samples, r.lhs, r.rhs, r.rel_err, r.rel_std_err));
            }
            b.checks.push(Check::at_most(format!("isometry/{name}/rel_err"), small.rel_err, ISOMETRY_TOL, format!("{m} paths")));
            let shrink = large.rel_std_err / small.rel_std_err;
            b.checks.push(Check {
                name: format!("isometry/{name}/error_scale_x4_paths"),
                pass: (0.25..=0.75).contains(&shrink),
                value: shrink,
                threshold: 0.5,
                detail: format!("rel_err {:.3e} -> {:.3e}", small.rel_err, large.rel_err),
            });
            if *name == "ramp" {
                // Left-endpoint Riemann sum of c^2 ||e1||^2 s^2 against T^3/3.
                let riemann = (0..steps).map(|k| (k as f64 * dt).powi(2) * dt).sum::<f64>() * c * c
                    * crate::fields::h_zz_norm_sq_hilbert(&e1, space);
                b.checks.push(Check::at_most("isometry/ramp/rhs_riemann", (small.rhs - riemann).abs() / riemann, 1e-12, ""));
            }
        }
        b.table("isometry", csv);
        Ok(b)
    })
}

/// One HS comparison: `hs_norm_direct <= κ · hs_bound`.
#[allow(clippy::too_many_arguments)]
pub fn hs_case(
    w: &Field,
    sigma: &Nonlinearity,
    ball: &Ball,
    measure: &SpectralMeasure,
    modes: usize,
    cfg: &PropagatorConfig,
    space: HSpace,
    (t, s): (f64, f64),
    rng: &CounterRng,
) -> Result<(HSReport, Vec<f64>)> {
    let grid = *w.grid();
    let basis = build_cm_basis(measure, grid, Some(modes))?;
    let probes = ball_probes(ball, 8, rng);
    let lip = lip_constants(sigma, Some(ball), &probes, &[s], space)?;
    // C_zz from the growth of the data the propagator actually sees.
    let sw = sigma.apply(s, w)?;
    let mut data = vec![w.clone()];
    data.extend(basis.modes.iter().take(4).map(|m| sw.pointwise(&m.e)));
    data.retain(|f| f.max_abs() > 0.0);
    let times: Vec<f64> = (0..=5).map(|k| k as f64 * t / 5.0).collect();
    let c_zz = growth_bound_check(&data, &times, space, cfg)?.envelope_c.max(0.0);
    let sums = hs_partial_sums(w, sigma, t, s, &basis, cfg, space)?;
    let direct = sums.last().copied().unwrap_or(0.0);
    let bound = hs_bound(w, Some(&lip), t, total_mass(measure), c_zz, space)?;
    Ok((HSReport::new(direct, bound), sums))
}

/// Convention fixture, then 3 metrics × 2 noises × σ ∈ {1, u² on a ball}, and
/// truncation stability `J -> 2J` for the density noise.
pub fn hs_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let space = HSpace::new(0, 1)?;
        let mut b = Battery::default();
        let kappa = hs_convention_fixture(grid, 0.7, space)?;
        b.checks.push(Check::at_most("hs/kappa_fixture", (kappa - HS_KAPPA).abs(), 1e-10, format!("measured {kappa:.12}")));
        let w = gaussian(grid, 0.0, 1.0, 0.0);
        let ball = Ball::around(&w, space);
        let noises = [
            ("atom_pair", SpectralMeasure::atom_pair(&unit_xi(grid.dim()), 0.5)?, 2, false),
            ("gaussian_density", SpectralMeasure::gaussian_density(grid, 1.0, 1.0, 8.0)?, 32, true),
        ];
        let sigmas = [("one", Nonlinearity::constant(1.0.into())), ("square", Nonlinearity::power(2, 1.0.into()).with_ball(ball.clone()))];
        let mut csv = String::from("metric,noise,sigma,modes,direct,bound,ratio\n");
        for family in metric_families() {
            let cfg = metric_propagator(&family, grid, 1e-3)?;
            for (nname, measure, modes, density) in &noises {
                for (sname, sigma) in &sigmas {
                    let rng = settings.rng(400);
                    let (report, _) = hs_case(&w, sigma, &ball, measure, *modes, &cfg, space, (0.5, 0.25), &rng)?;
                    csv.push_str(&format!(
                        "{},{nname},{sname},{modes},{:e},{:e},{:e}\n",
                        family.name(),
                        report.direct,
                        report.bound,
                        report.ratio
                    ));
                    b.checks.push(Check::at_most(
                        format!("hs/{}/{nname}/{sname}", family.name()),
                        report.ratio,
                        HS_KAPPA,
                        format!("direct {:.4e}, bound {:.4e}", report.direct, report.bound),
                    ));
                    if *density {
                        let (doubled, _) = hs_case(&w, sigma, &ball, measure, 2 * modes, &cfg, space, (0.5, 0.25), &rng)?;
                        let change = (doubled.direct - report.direct).abs() / doubled.direct;
                        b.checks.push(Check::at_most(
                            format!("hs/{}/{nname}/{sname}/truncation", family.name()),
                            change,
                            0.01,
                            format!("J = {modes} -> {}", 2 * modes),
                        ));
                    }
                }
            }
        }
        b.table("hs", csv);
        Ok(b)
    })
}

/// A contraction-battery problem: metric, nonlinearities and noise.
#[derive(Debug, Clone)]
pub struct BatteryProblem {
    pub name: &'static str,
    pub metric: MetricFamily,
    pub gamma: Nonlinearity,
    pub sigma: Nonlinearity,
    pub measure: SpectralMeasure,
    pub modes: usize,
}

pub fn contraction_problems(grid: Grid, space: HSpace) -> Result<(Field, Vec<BatteryProblem>)> {
    let u0 = gaussian(grid, 0.0, 1.0, 0.0);
    let ball = Ball::around(&u0, space);
    Ok((
        u0,
        vec![
            BatteryProblem {
                name: "flat_power2",
                metric: MetricFamily::Flat,
                gamma: Nonlinearity::power(2, 0.2.into()).with_ball(ball.clone()),
                sigma: Nonlinearity::linear(0.2.into()),
                measure: SpectralMeasure::gaussian_density(grid, 1.0, 1.0, 8.0)?.scaled(0.5)?,
                modes: 16,
            },
            BatteryProblem {
                name: "gauss_bump_sigma_square",
                metric: MetricFamily::GaussBump { epsilon: 0.3, direction: vec![] },
                gamma: Nonlinearity::linear(0.3.into()),
                sigma: Nonlinearity::power(2, 0.1.into()).with_ball(ball.clone()),
                measure: SpectralMeasure::atom_pair(&unit_xi(grid.dim()), 0.25)?,
                modes: 2,
            },
            BatteryProblem {
                name: "rational_decay_drift",
                metric: MetricFamily::RationalDecay { epsilon: 0.3, direction: vec![] },
                gamma: Nonlinearity::power(2, 0.2.into()).with_ball(ball),
                sigma: Nonlinearity::zero(),
                measure: SpectralMeasure::single_atom(grid.dim(), 0.5)?,
                modes: 1,
            },
        ],
    ))
}

/// Everything `simulate` and the contraction battery need for one problem.
#[derive(Debug)]
pub struct PreparedSolve {
    pub solver: MildSolver,
    pub problem: MildProblem,
    pub horizon: crate::solver::Horizon,
}

/// Lipschitz profiles on the locality balls, `C_zz` from the growth of `u0`,
/// `pick_horizon`, then the drift check `||S(t)u0 - u0|| <= R/2`.
pub fn prepare_solve(cfg: &SolveConfig, problem: MildProblem, rng: &CounterRng) -> Result<PreparedSolve> {
    let space = cfg.space;
    let mut profiles = Vec::new();
    for g in [&problem.gamma, &problem.sigma] {
        let ball = g.ball.clone().unwrap_or_else(|| Ball::around(&problem.u0, space));
        let probes = ball_probes(&ball, 8, rng);
        profiles.push(lip_constants(g, Some(&ball), &probes, &[0.0, cfg.t_final], space)?);
    }
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * cfg.t_final / 10.0).collect();
    let c_zz = growth_bound_check(std::slice::from_ref(&problem.u0), &times, space, &cfg.propagator)?.envelope_c.max(0.0);
    let mut horizon = pick_horizon(cfg.t_final, cfg.dt, &[&profiles[0], &profiles[1]], c_zz, total_mass(&cfg.measure))?;
    let mut solver = MildSolver::new(cfg, horizon.t0)?;
    let steps = solver.ball_drift_steps(&problem);
    if steps < solver.steps() {
        if steps == 0 {
            return Err(Error::NoAdmissibleHorizon { dt: cfg.dt, k_first: horizon.k });
        }
        horizon.steps = steps;
        horizon.t0 = steps as f64 * cfg.dt;
        horizon.k = crate::solver::contraction_constant(horizon.t0, horizon.c, horizon.c_zz, horizon.mass);
        solver = MildSolver::new(cfg, horizon.t0)?;
    }
    Ok(PreparedSolve { solver, problem, horizon })
}

const MEAN_SQUARE_PATHS: usize = 100;

/// `sqrt E ||u||^2_{L^2([0, T0], H)}` and its a-posteriori bound
/// `sqrt E ||v0||^2 + sqrt(T0 E d1^2) / (1 - q)`, from
/// `sup_t ||u - v0|| <= d1 / (1 - q)` with `d1 = sup_t ||T(v0) - v0||` and `q`
/// the larger of `sqrt K` and the worst Picard ratio seen on any path.
///
/// The locality ball of the estimate lives in `L^2(Omega)`, so a path whose
/// iterates leave the pathwise ball is re-solved without it rather than
/// dropped; the count of such paths is returned.
fn mean_square_bound(solver: &MildSolver, problem: &MildProblem, k: f64, paths: usize) -> Result<(f64, f64, usize)> {
    let cfg = solver.config();
    let l2_time = |norms: &[f64]| norms[..norms.len() - 1].iter().map(|n| n * n * cfg.dt).sum::<f64>();
    let v0: Vec<f64> = solver.free_evolution(&problem.u0).iter().map(|f| h_zz_norm(f, cfg.space)).collect();
    let mut unbounded = problem.clone();
    unbounded.gamma.ball = None;
    unbounded.sigma.ball = None;
    let per_path = crate::par::map_indices(paths, |p| -> Result<(f64, f64, f64, bool)> {
        let path = solver.sample_path(p as u64);
        let (tr, exited) = match solver.picard_solve(problem, &path, InitialGuess::Free) {
            Err(Error::LeftBall { .. }) => (solver.picard_solve(&unbounded, &path, InitialGuess::Free)?, true),
            other => (other?, false),
        };
        let q = tr.ratios().into_iter().fold(0.0, f64::max);
        Ok((l2_time(&tr.norms), tr.distances.first().copied().unwrap_or(0.0), q, exited))
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let n = paths.max(1) as f64;
    let size = (per_path.iter().map(|r| r.0).sum::<f64>() / n).sqrt();
    let d1 = (per_path.iter().map(|r| r.1 * r.1).sum::<f64>() / n).sqrt();
    let q = per_path.iter().map(|r| r.2).fold(k.sqrt(), f64::max);
    let t0 = solver.steps() as f64 * cfg.dt;
    let bound = if q < 1.0 { l2_time(&v0).sqrt() + t0.sqrt() * d1 / (1.0 - q) } else { f64::INFINITY };
    Ok((size, bound, per_path.iter().filter(|r| r.3).count()))
}

/// Picard on the battery at `pick_horizon`'s `T0`: squared distance ratios
/// against `1.5 K(T0)`, residual against `10 tol`, and agreement of the
/// fixed points reached from `v0`, `0` and `v0 / 2`. Halving `T0` must lower the
/// measured ratio, and the mean-square size must respect its a-posteriori
/// bound over 100 paths.
pub fn contraction_battery(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let space = HSpace::new(0, 1)?;
        let (u0, problems) = contraction_problems(grid, space)?;
        let mut b = Battery::default();
        let mut csv = String::from("problem,start,iteration,distance,squared_ratio,k\n");
        for p in problems {
            let prop = metric_propagator(&p.metric, grid, 1e-3)?;
            let mut cfg = SolveConfig::new(grid, prop, p.measure.clone(), 0.01, 1.0);
            cfg.space = space;
            cfg.modes = Some(p.modes);
            cfg.seed = settings.seed;
            let problem = MildProblem { u0: u0.clone(), gamma: p.gamma.clone(), sigma: p.sigma.clone() };
            let prepared = prepare_solve(&cfg, problem, &settings.rng(500))?;
            let (solver, problem, k) = (&prepared.solver, &prepared.problem, prepared.horizon.k);
            let path = solver.sample_path(0);
            let free = solver.picard_solve(problem, &path, InitialGuess::Free)?;
            let zero = solver.picard_solve(problem, &path, InitialGuess::Zero)?;
            let half = solver.picard_solve(problem, &path, InitialGuess::Scaled(0.5))?;
            let tol = cfg.picard_tol;
            for (start, tr) in [("free", &free), ("zero", &zero), ("half", &half)] {
                let sq = tr.squared_ratios();
                for (m, d) in tr.distances.iter().enumerate() {
                    let r = if m == 0 { f64::NAN } else { sq.get(m - 1).copied().unwrap_or(f64::NAN) };
                    csv.push_str(&format!("{},{start},{},{d:e},{r:e},{k:e}\n", p.name, m + 1));
                }
                let worst = sq.iter().copied().fold(0.0, f64::max);
                b.checks.push(Check::at_most(
                    format!("contraction/{}/{start}/squared_ratio", p.name),
                    worst,
                    CONTRACTION_MARGIN * k,
                    format!("T0 = {}, K = {k:.4e}, {} iterations", prepared.horizon.t0, tr.iterations),
                ));
            }
            let residual = solver.residual_check(&free, &path, problem)?;
            b.checks.push(Check::at_most(format!("contraction/{}/residual", p.name), residual, 10.0 * tol, ""));
            // With γ(0) = σ(0) = 0 the start 0 maps to v0 in one step, so the
            // start v0/2 is the informative one.
            for (start, other) in [("zero", &zero), ("half", &half)] {
                let gap = free.sup_distance(other, space);
                b.checks.push(Check::at_most(format!("contraction/{}/uniqueness_{start}", p.name), gap, 2.0 * tol, "against start v0"));
            }
            let worst = |sq: Vec<f64>| sq.into_iter().fold(0.0, f64::max);
            let short = MildSolver::new(&cfg, (solver.steps() / 2) as f64 * cfg.dt)?;
            let short_tr = short.picard_solve(problem, &short.sample_path(0), InitialGuess::Free)?;
            let (full_ratio, short_ratio) = (worst(free.squared_ratios()), worst(short_tr.squared_ratios()));
            b.checks.push(Check::flag(
                format!("contraction/{}/ratio_decreases_with_t0", p.name),
                short_ratio < full_ratio,
                format!("{short_ratio:.4e} at T0/2 against {full_ratio:.4e} at T0"),
            ));
            let (size, bound, exits) = mean_square_bound(solver, problem, k, MEAN_SQUARE_PATHS)?;
            b.checks.push(Check::at_most(
                format!("contraction/{}/mean_square_size", p.name),
                size / bound,
                1.0,
                format!("sqrt E||u||^2 = {size:.4e}, bound {bound:.4e}, {MEAN_SQUARE_PATHS} paths, {exits} left the pathwise ball"),
            ));
        }
        b.table("contraction", csv);
        Ok(b)
    })
}

/// `em_solve` at `dt` against `picard_solve` at `dt/2` on a linear drift with
/// `σ = 0`: the gap must shrink at order at least 0.9. Also checks that both
/// schemes coincide up to the Picard tolerance at equal `dt`.
pub fn scheme_crosscheck(settings: &VerifySettings) -> Result<Battery> {
    Battery::timed(|| {
        let grid = settings.grid()?;
        let space = HSpace::L2;
        let u0 = gaussian(grid, 0.0, 1.0, 0.5);
        let t_final = 0.4;
        let problem = MildProblem { u0, gamma: Nonlinearity::linear(1.0.into()), sigma: Nonlinearity::zero() };
        let measure = SpectralMeasure::single_atom(grid.dim(), 1.0)?;
        let solve = |dt: f64, picard: bool| -> Result<crate::solver::Trajectory> {
            let mut cfg = SolveConfig::new(grid, PropagatorConfig::new(GeneratorBundle::free(grid.dim()), 1e-3), measure.clone(), dt, t_final);
            cfg.space = space;
            cfg.picard_tol = 1e-12;
            let solver = MildSolver::new(&cfg, t_final)?;
            let path = solver.sample_path(0);
            if picard {
                solver.picard_solve(&problem, &path, InitialGuess::Free)
            } else {
                solver.em_solve(&problem, &path)
            }
        };
        let ladder = [0.04, 0.02, 0.01, 0.005];
        let mut gaps = Vec::new();
        let mut same_dt: f64 = 0.0;
        let mut csv = String::from("dt,gap\n");
        for &dt in &ladder {
            let em = solve(dt, false)?;
            let fine = solve(dt / 2.0, true)?;
            let gap = em.fields.iter().enumerate().map(|(k, f)| h_zz_norm(&(f - &fine.fields[2 * k]), space)).fold(0.0, f64::max);
            same_dt = same_dt.max(em.sup_distance(&solve(dt, true)?, space));
            csv.push_str(&format!("{dt},{gap:e}\n"));
            gaps.push(gap);
        }
        // Least-squares slope of log gap against log dt.
        let xs: Vec<f64> = ladder.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
        let order = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        let mut b = Battery::default();
        b.checks.push(Check::at_least("scheme/em_vs_picard_order", order, 0.9, format!("gaps {}", gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" "))));
        b.checks.push(Check::at_most("scheme/em_equals_picard_same_dt", same_dt, 1e-10, ""));
        b.table("scheme_crosscheck", csv);
        Ok(b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.iter().chain(&[Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn check_display_carries_verdict() {
        let c = Check::at_most("x", 2.0, 1.0, "");
        assert!(!c.pass && c.to_string().starts_with("FAIL x"));
        assert!(Check::at_least("y", 2.0, 1.0, "").pass);
    }

    #[test]
    fn symbol_suite_on_small_settings() {
        let b = symbol_battery(&VerifySettings::default()).unwrap();
        assert!(b.pass(), "{:#?}", b.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    }
}
