//! Mild solutions `u(t) = S(t)u0 - i∫S(t-s)γ(u)ds - i∫S(t-s)σ(u)dW` on a
//! uniform time grid: the map `T`, Picard iteration, a one-pass Euler scheme
//! and the contraction horizon.

mod nonlinearity;

pub use nonlinearity::{ball_probes, lip_constants, Ball, LipschitzProfile, Nonlinearity, NonlinearityKind, NonlinearitySpec, PointwiseFn};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{h_zz_norm, Field, Grid, HSpace};
use crate::noise::{build_cm_basis, total_mass, CameronMartinBasis, SpectralMeasure};
use crate::propagator::{PropagatorConfig, Stepper};
use crate::rng::CounterRng;
use crate::stochastic::{sample_path, WienerPath};
use crate::{Error, Result};

pub const PICARD_TOL: f64 = 1e-6;
pub const PICARD_MAX_ITERS: usize = 50;
/// Allowed excess of a measured squared Picard ratio over `K(T0)`.
pub const CONTRACTION_MARGIN: f64 = 1.5;

const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// The explicit aggregate behind [`pick_horizon`].
pub const HORIZON_FORMULA: &str = "K(T0) = T0 * exp(2 C_zz T0) * C^2 * (1 + mass), C = max_t max(C_gamma(t), C_sigma(t))";

/// `K(T0)` as in [`HORIZON_FORMULA`].
pub fn contraction_constant(t0: f64, c: f64, c_zz: f64, mass: f64) -> f64 {
    t0 * (2.0 * c_zz * t0).exp() * c * c * (1.0 + mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub t0: f64,
    pub steps: usize,
    pub k: f64,
    pub c: f64,
    pub c_zz: f64,
    pub mass: f64,
    pub formula: String,
}

/// Largest `T0 = k dt <= T` with `K(T0) < 1`.
pub fn pick_horizon(t_final: f64, dt: f64, profiles: &[&LipschitzProfile], c_zz: f64, mass: f64) -> Result<Horizon> {
    if !(dt > 0.0 && t_final >= dt) {
        return Err(Error::InvalidTime(format!("need 0 < dt <= T, got dt = {dt}, T = {t_final}")));
    }
    if !mass.is_finite() {
        return Err(Error::InfiniteMass);
    }
    let c = profiles.iter().map(|p| p.sup()).fold(0.0, f64::max);
    if !c.is_finite() {
        return Err(Error::InvalidTime("Lipschitz profile is not finite".into()));
    }
    let max_steps = (t_final / dt + 1e-9).floor() as usize;
    let k_of = |steps: usize| contraction_constant(steps as f64 * dt, c, c_zz.max(0.0), mass);
    let horizon = |steps: usize| Horizon {
        t0: steps as f64 * dt,
        steps,
        k: k_of(steps),
        c,
        c_zz,
        mass,
        formula: HORIZON_FORMULA.into(),
    };
    if k_of(max_steps) < 1.0 {
        return Ok(horizon(max_steps));
    }
    if k_of(1) >= 1.0 {
        return Err(Error::NoAdmissibleHorizon { dt, k_first: k_of(1) });
    }
    // K is increasing in T0: keep k_of(lo) < 1 <= k_of(hi).
    let (mut lo, mut hi) = (1, max_steps);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if k_of(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(horizon(lo))
}

/// Discretization shared by every solve.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub space: HSpace,
    pub grid: Grid,
    pub propagator: PropagatorConfig,
    pub measure: SpectralMeasure,
    pub modes: Option<usize>,
    pub dt: f64,
    pub t_final: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub seed: u64,
}

impl SolveConfig {
    pub fn new(grid: Grid, propagator: PropagatorConfig, measure: SpectralMeasure, dt: f64, t_final: f64) -> Self {
        SolveConfig {
            space: HSpace::L2,
            grid,
            propagator,
            measure,
            modes: None,
            dt,
            t_final,
            picard_tol: PICARD_TOL,
            picard_max_iters: PICARD_MAX_ITERS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MildProblem {
    pub u0: Field,
    pub gamma: Nonlinearity,
    pub sigma: Nonlinearity,
}

/// Where Picard iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `v0(t) = S(t) u0`.
    #[default]
    Free,
    Zero,
    /// `s · v0`.
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// `||u(t)||_{H_{z,zeta}}` per time.
    pub norms: Vec<f64>,
    /// Picard distances `d_m = sup_t ||u^(m) - u^(m-1)||`, `m >= 1`.
    pub distances: Vec<f64>,
    pub iterations: usize,
    pub residual: Option<f64>,
}

impl Trajectory {
    /// `d_{m+1} / d_m`.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }

    /// `(d_{m+1} / d_m)^2`: the quantity `K(T0)` bounds.
    pub fn squared_ratios(&self) -> Vec<f64> {
        self.ratios().into_iter().map(|r| r * r).collect()
    }

    pub fn sup_distance(&self, other: &Trajectory, space: HSpace) -> f64 {
        sup_distance(&self.fields, &other.fields, space)
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("trajectory has at least one time")
    }
}

fn sup_distance(a: &[Field], b: &[Field], space: HSpace) -> f64 {
    a.iter().zip(b).map(|(x, y)| h_zz_norm(&(x - y), space)).fold(0.0, f64::max)
}

/// Solver bound to a time grid `t_k = k dt`, `k = 0..=steps`.
#[derive(Debug)]
pub struct MildSolver {
    cfg: SolveConfig,
    basis: CameronMartinBasis,
    stepper: Stepper,
    substeps: usize,
    steps: usize,
}

impl MildSolver {
    /// Solver on `[0, horizon]`, with `horizon` rounded to the `dt` grid.
    pub fn new(cfg: &SolveConfig, horizon: f64) -> Result<Self> {
        if !(cfg.dt > 0.0 && horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidTime(format!("need dt > 0 and a finite horizon, got dt = {}, T0 = {horizon}", cfg.dt)));
        }
        if !total_mass(&cfg.measure).is_finite() {
            return Err(Error::InfiniteMass);
        }
        let steps = (horizon / cfg.dt).round() as usize;
        let substeps = (cfg.dt / cfg.propagator.dt * (1.0 - 1e-9)).ceil().max(1.0) as usize;
        let stepper = Stepper::new(&cfg.propagator.with_dt(cfg.dt / substeps as f64), cfg.grid)?;
        let basis = build_cm_basis(&cfg.measure, cfg.grid, cfg.modes)?;
        Ok(MildSolver { cfg: cfg.clone(), basis, stepper, substeps, steps })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &CameronMartinBasis {
        &self.basis
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.cfg.dt).collect()
    }

    /// Path `index` of the run seed.
    pub fn sample_path(&self, index: u64) -> WienerPath {
        sample_path(self.basis.len(), self.cfg.dt, self.steps, &CounterRng::new(self.cfg.seed), index)
    }

    /// `S(dt)` on the solver grid.
    pub fn step(&self, f: &Field) -> Field {
        self.stepper.advance(f, self.substeps)
    }

    /// `ΔΞ_k = Σ_j e_j ΔW_{j,k}`; `None` where the step increment vanishes.
    fn noise_fields(&self, path: &WienerPath) -> Result<Vec<Option<Field>>> {
        if path.steps < self.steps || (path.steps > 0 && path.modes != self.basis.len()) {
            return Err(Error::GridMismatch(format!(
                "path has {} steps x {} modes, solver needs {} x {}",
                path.steps,
                path.modes,
                self.steps,
                self.basis.len()
            )));
        }
        Ok((0..self.steps)
            .map(|k| {
                let dw = path.step_increments(k);
                if dw.iter().all(|&w| w == 0.0) {
                    None
                } else {
                    self.basis.increment_field(dw)
                }
            })
            .collect())
    }

    /// `v0(t_k) = S(t_k) u0`.
    pub fn free_evolution(&self, u0: &Field) -> Vec<Field> {
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(u0.clone());
        for k in 0..self.steps {
            let next = self.step(&out[k]);
            out.push(next);
        }
        out
    }

    /// Forcing `-i[γ(s_k, u_k) dt + σ(s_k, u_k) ΔΞ_k]`.
    fn forcing(&self, problem: &MildProblem, k: usize, u: &Field, noise: &Option<Field>, iteration: Option<usize>) -> Result<Option<Field>> {
        let t = k as f64 * self.cfg.dt;
        let tag = |e: Error| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, time_index: Some(k), iteration },
            e => e,
        };
        let mut acc: Option<Field> = None;
        if !problem.gamma.is_zero() {
            acc = Some(problem.gamma.apply(t, u).map_err(tag)?.scale(MINUS_I * self.cfg.dt));
        }
        if let (false, Some(dxi)) = (problem.sigma.is_zero(), noise) {
            let s = problem.sigma.apply(t, u).map_err(tag)?.pointwise(dxi);
            match &mut acc {
                Some(a) => a.axpy(MINUS_I, &s),
                None => acc = Some(s.scale(MINUS_I)),
            }
        }
        Ok(acc)
    }

    /// `(T u)(t_k)` via `A_{k+1} = S(dt)(A_k + forcing(u_k))`, `A_0 = u0`;
    /// left-endpoint sums for both integrals.
    fn apply_t_with(&self, u: &[Field], noise: &[Option<Field>], problem: &MildProblem, iteration: Option<usize>) -> Result<Vec<Field>> {
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(problem.u0.clone());
        for k in 0..self.steps {
            let mut a = out[k].clone();
            if let Some(f) = self.forcing(problem, k, &u[k], &noise[k], iteration)? {
                a.axpy(1.0.into(), &f);
            }
            let next = self.step(&a);
            if !next.is_finite() {
                return Err(Error::NonFinite { what: "mild map".into(), time_index: Some(k + 1), iteration });
            }
            out.push(next);
        }
        Ok(out)
    }

    /// The map `T` applied to a trajectory on this solver's time grid.
    pub fn apply_t(&self, u: &[Field], path: &WienerPath, problem: &MildProblem) -> Result<Vec<Field>> {
        if u.len() != self.steps + 1 {
            return Err(Error::GridMismatch(format!("trajectory has {} times, solver grid has {}", u.len(), self.steps + 1)));
        }
        let noise = self.noise_fields(path)?;
        self.apply_t_with(u, &noise, problem, None)
    }

    fn trajectory(&self, fields: Vec<Field>, distances: Vec<f64>, iterations: usize) -> Trajectory {
        let norms = fields.iter().map(|f| h_zz_norm(f, self.cfg.space)).collect();
        Trajectory { times: self.times(), fields, norms, distances, iterations, residual: None }
    }

    /// Iterates `u^(m+1) = T u^(m)` until the sup-in-time distance drops below
    /// the tolerance. Iterates (after the initial guess) must stay in the
    /// nonlinearities' locality balls.
    pub fn picard_solve(&self, problem: &MildProblem, path: &WienerPath, start: InitialGuess) -> Result<Trajectory> {
        let noise = self.noise_fields(path)?;
        let mut u = match start {
            InitialGuess::Free => self.free_evolution(&problem.u0),
            InitialGuess::Zero => vec![Field::zeros(self.cfg.grid); self.steps + 1],
            InitialGuess::Scaled(c) => self.free_evolution(&problem.u0).iter().map(|f| f.scale(c.into())).collect(),
        };
        let balls: Vec<&Ball> = [&problem.gamma, &problem.sigma].iter().filter_map(|g| g.ball.as_ref()).collect();
        let mut distances = Vec::new();
        for m in 1..=self.cfg.picard_max_iters {
            let next = self.apply_t_with(&u, &noise, problem, Some(m))?;
            for ball in &balls {
                for (k, f) in next.iter().enumerate() {
                    let distance = ball.distance(f);
                    if distance > ball.radius * (1.0 + 1e-9) {
                        return Err(Error::LeftBall { iteration: m, time: k as f64 * self.cfg.dt, distance, radius: ball.radius });
                    }
                }
            }
            let d = sup_distance(&next, &u, self.cfg.space);
            if !d.is_finite() {
                return Err(Error::NonFinite { what: "Picard distance".into(), time_index: None, iteration: Some(m) });
            }
            distances.push(d);
            u = next;
            if d < self.cfg.picard_tol {
                log::debug!("Picard converged after {m} iterations, distances {distances:?}");
                return Ok(self.trajectory(u, distances, m));
            }
        }
        Err(Error::PicardDiverged { iterations: self.cfg.picard_max_iters, distances })
    }

    /// One pass of `u_{k+1} = S(dt)(u_k + forcing(u_k))`.
    pub fn em_solve(&self, problem: &MildProblem, path: &WienerPath) -> Result<Trajectory> {
        let noise = self.noise_fields(path)?;
        let mut fields = Vec::with_capacity(self.steps + 1);
        fields.push(problem.u0.clone());
        for k in 0..self.steps {
            let mut a = fields[k].clone();
            if let Some(f) = self.forcing(problem, k, &fields[k], &noise[k], None)? {
                a.axpy(1.0.into(), &f);
            }
            let next = self.step(&a);
            if !next.is_finite() {
                return Err(Error::NonFinite { what: "Euler step".into(), time_index: Some(k + 1), iteration: None });
            }
            fields.push(next);
        }
        Ok(self.trajectory(fields, Vec::new(), 1))
    }

    /// `sup_t ||u(t) - (T u)(t)||_{H_{z,zeta}}`.
    pub fn residual_check(&self, u: &Trajectory, path: &WienerPath, problem: &MildProblem) -> Result<f64> {
        let tu = self.apply_t(&u.fields, path, problem)?;
        Ok(sup_distance(&u.fields, &tu, self.cfg.space))
    }

    /// Largest `steps' <= steps` with `||S(t)u0 - u0|| <= R/2` for all
    /// `t <= steps' dt`, where `R` is the smallest ball radius in play.
    pub fn ball_drift_steps(&self, problem: &MildProblem) -> usize {
        let radius = [&problem.gamma, &problem.sigma].iter().filter_map(|g| g.ball.as_ref()).map(|b| b.radius).fold(f64::INFINITY, f64::min);
        if radius.is_infinite() {
            return self.steps;
        }
        let v0 = self.free_evolution(&problem.u0);
        v0.iter().position(|f| h_zz_norm(&(f - &problem.u0), self.cfg.space) > radius / 2.0).map_or(self.steps, |k| k.saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SpectralMeasure;
    use crate::quantization::GeneratorBundle;

    fn config(dt: f64, t: f64, mass: f64) -> SolveConfig {
        let g = Grid::desk(1);
        let m = SpectralMeasure::single_atom(1, mass).unwrap();
        SolveConfig::new(g, PropagatorConfig::new(GeneratorBundle::free(1), 1e-3), m, dt, t)
    }

    fn gaussian() -> Field {
        Field::gaussian(Grid::desk(1), &[0.0], 1.0, &[0.0], 1.0)
    }

    fn problem(gamma: Nonlinearity, sigma: Nonlinearity) -> MildProblem {
        MildProblem { u0: gaussian(), gamma, sigma }
    }

    #[test]
    fn horizon_trivial_and_bisection() {
        let h = pick_horizon(1.0, 0.01, &[&LipschitzProfile::constant(0.0)], 3.0, 5.0).unwrap();
        assert_eq!((h.t0, h.k), (1.0, 0.0));
        // Oracle: scalar bisection on 2 t e^{2t} = 1.
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid * (2.0 * mid).exp() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let one = LipschitzProfile::constant(1.0);
        let h = pick_horizon(1.0, 1e-4, &[&one], 1.0, 1.0).unwrap();
        assert!(h.t0 <= lo && lo - h.t0 < 1e-4 && h.k < 1.0, "{} vs {lo}", h.t0);
        let h2 = pick_horizon(1.0, 1e-4, &[&one], 1.0, 2.0).unwrap();
        assert!(h2.t0 < h.t0);
        assert!(matches!(pick_horizon(1.0, 0.5, &[&one], 1.0, 1.0), Err(Error::NoAdmissibleHorizon { .. })));
    }

    #[test]
    fn zero_nonlinearities_reduce_to_free_evolution() {
        let s = MildSolver::new(&config(0.05, 0.5, 1.0), 0.5).unwrap();
        let p = problem(Nonlinearity::zero(), Nonlinearity::zero());
        let path = s.sample_path(0);
        let v0 = s.free_evolution(&p.u0);
        let junk = vec![Field::zeros(Grid::desk(1)); s.steps() + 1];
        assert_eq!(s.apply_t(&junk, &path, &p).unwrap(), v0);
        let tr = s.picard_solve(&p, &path, InitialGuess::Free).unwrap();
        assert_eq!(tr.iterations, 1);
        assert_eq!(tr.fields, v0);
        assert_eq!(s.em_solve(&p, &path).unwrap().fields, v0);
        assert!(s.residual_check(&tr, &path, &p).unwrap() < 1e-14);
        let direct = crate::propagator::evolve(&p.u0, 0.5, &s.config().propagator).unwrap();
        assert!((tr.last() - &direct).max_abs() < 1e-12);
    }

    #[test]
    fn one_step_hand_expansion() {
        let lambda = 0.3;
        let s = MildSolver::new(&config(0.01, 0.01, 1.0), 0.01).unwrap();
        let p = problem(Nonlinearity::linear(lambda.into()), Nonlinearity::zero());
        let path = s.sample_path(0);
        let v0 = s.free_evolution(&p.u0);
        let tv = s.apply_t(&v0, &path, &p).unwrap();
        let mut expect = v0[1].clone();
        expect.axpy(Complex64::new(0.0, -lambda * 0.01), &s.step(&p.u0));
        assert!((&tv[1] - &expect).max_abs() < 1e-14);
        assert!(s.residual_check(&s.em_solve(&problem(Nonlinearity::zero(), Nonlinearity::zero()), &path).unwrap(), &path, &p).unwrap() > 0.0);
    }

    #[test]
    fn zero_path_kills_noise() {
        let s = MildSolver::new(&config(0.05, 0.5, 1.0), 0.5).unwrap();
        let p = problem(Nonlinearity::zero(), Nonlinearity::constant(1.0.into()));
        let zero = WienerPath::zero(s.basis().len(), 0.05, s.steps());
        let v0 = s.free_evolution(&p.u0);
        assert_eq!(s.apply_t(&v0, &zero, &p).unwrap(), v0);
    }

    #[test]
    fn linear_drift_matches_time_ordered_oracle() {
        let lambda = Complex64::new(0.2, 0.0);
        let mut cfg = config(0.02, 0.4, 1.0);
        cfg.picard_tol = 1e-12;
        let s = MildSolver::new(&cfg, 0.4).unwrap();
        let p = problem(Nonlinearity::linear(lambda), Nonlinearity::zero());
        let tr = s.picard_solve(&p, &s.sample_path(0), InitialGuess::Free).unwrap();
        // Oracle: u_{k+1} = S(dt)(1 - iλ dt) u_k, stepped directly.
        let mut u = p.u0.clone();
        let mut err: f64 = 0.0;
        for k in 0..s.steps() {
            u = s.step(&u.scale(Complex64::new(1.0, 0.0) + MINUS_I * lambda * 0.02));
            err = err.max((&u - &tr.fields[k + 1]).max_abs());
        }
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn noise_free_solution_is_path_independent() {
        let s = MildSolver::new(&config(0.05, 0.3, 1.0), 0.3).unwrap();
        let p = problem(Nonlinearity::linear(0.5.into()), Nonlinearity::zero());
        let a = s.picard_solve(&p, &s.sample_path(0), InitialGuess::Free).unwrap();
        let b = s.picard_solve(&p, &s.sample_path(1), InitialGuess::Free).unwrap();
        assert_eq!(a.fields, b.fields);
    }

    #[test]
    fn stochastic_solve_converges_from_both_guesses() {
        let s = MildSolver::new(&config(0.02, 0.2, 0.5), 0.2).unwrap();
        let p = problem(Nonlinearity::linear(0.5.into()), Nonlinearity::linear(0.5.into()));
        let path = s.sample_path(7);
        let a = s.picard_solve(&p, &path, InitialGuess::Free).unwrap();
        let b = s.picard_solve(&p, &path, InitialGuess::Zero).unwrap();
        assert!(a.sup_distance(&b, HSpace::L2) < 2.0 * PICARD_TOL);
        assert!(s.residual_check(&a, &path, &p).unwrap() <= 10.0 * PICARD_TOL);
        assert_eq!(s.em_solve(&p, &path).unwrap(), s.em_solve(&p, &path).unwrap());
    }

    #[test]
    fn leaving_the_ball_is_reported() {
        let s = MildSolver::new(&config(0.05, 0.5, 1.0), 0.5).unwrap();
        let u0 = gaussian();
        let mut ball = Ball::around(&u0, HSpace::L2);
        ball.radius = 1e-3;
        let p = MildProblem { u0, gamma: Nonlinearity::linear(5.0.into()).with_ball(ball), sigma: Nonlinearity::zero() };
        assert!(matches!(s.picard_solve(&p, &s.sample_path(0), InitialGuess::Free), Err(Error::LeftBall { .. })));
    }

    #[test]
    fn nan_carries_witness() {
        let s = MildSolver::new(&config(0.05, 0.5, 1.0), 0.5).unwrap();
        let p = problem(Nonlinearity::custom("nan", |t, _, u| if t > 0.2 { u * f64::NAN } else { u }), Nonlinearity::zero());
        match s.picard_solve(&p, &s.sample_path(0), InitialGuess::Free) {
            Err(Error::NonFinite { time_index: Some(k), iteration: Some(1), .. }) => assert_eq!(k, 5),
            other => panic!("{other:?}"),
        }
    }
}
