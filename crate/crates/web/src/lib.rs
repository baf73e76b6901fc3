//! Browser bindings: three small one-dimensional runs for the static demo
//! page in `www/`.
//!
//! Everything goes through the same TOML configs the CLI reads, always with an
//! explicit seed (the wasm target has no clock to draw one from).

use schrocurve::fields::Field;
use schrocurve::noise::{build_cm_basis, max_modes};
use schrocurve::propagator::evolve;
use schrocurve::rng::CounterRng;
use schrocurve::run::RunConfig;
use schrocurve::solver::InitialGuess;
use schrocurve::verify::prepare_solve;
use schrocurve::{Error, Result};
use wasm_bindgen::prelude::*;

const N: usize = 256;
const HALF_WIDTH: f64 = 16.0;

/// A sampled profile on the demo grid.
#[wasm_bindgen]
pub struct Profile {
    x: Vec<f64>,
    values: Vec<f64>,
    time: f64,
}

#[wasm_bindgen]
impl Profile {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Time the profile was taken at; for the stochastic run this is `T0`.
    #[wasm_bindgen(getter)]
    pub fn time(&self) -> f64 {
        self.time
    }
}

fn to_js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn metric_table(metric: &str) -> Result<&'static str> {
    Ok(match metric {
        "flat" => "{ family = \"flat\" }",
        "gauss_bump" => "{ family = \"gauss_bump\", epsilon = 0.5 }",
        "rational_decay" => "{ family = \"rational_decay\", epsilon = 0.5 }",
        other => return Err(Error::config("metric", format!("unknown metric family {other:?}"))),
    })
}

fn config(metric: &str, problem: &str, rest: &str) -> Result<RunConfig> {
    let text = format!(
        "[problem]\nmetric = {}\n{problem}\n[discretization]\ndim = 1\nn = {N}\nhalf_width = {HALF_WIDTH}\ndt = 0.01\npropagator_dt = 0.001\n{rest}",
        metric_table(metric)?
    );
    RunConfig::from_toml_str(&text, "web")
}

fn profile(field: &Field, time: f64, f: impl Fn(schrocurve::Complex64) -> f64) -> Profile {
    let grid = field.grid();
    Profile { x: (0..grid.len()).map(|i| grid.point(i)[0]).collect(), values: field.values().iter().map(|&v| f(v)).collect(), time }
}

fn evolve_packet(metric: &str, width: f64, momentum: f64, t: f64) -> Result<Profile> {
    let cfg = config(metric, &format!("initial = {{ family = \"gaussian\", width = {width:?}, momentum = [{momentum:?}] }}"), "")?;
    let u0 = cfg.problem.initial.build(cfg.grid()?);
    let u = evolve(&u0, t, &cfg.propagator()?)?;
    Ok(profile(&u, t, |v| v.norm()))
}

fn increment(mass: f64, scale: f64, seed: u32) -> Result<Profile> {
    let cfg = config("flat", "", &format!("[noise]\nmeasure = {{ type = \"gaussian_density\", scale = {scale:?}, mass = {mass:?} }}\n"))?;
    let grid = cfg.grid()?;
    let measure = cfg.noise.measure.build(grid)?;
    let basis = build_cm_basis(&measure, grid, Some(max_modes(&measure).min(32)))?;
    let dw = CounterRng::new(seed.into()).normals(0, 0, basis.len());
    let field = basis.increment_field(&dw).unwrap_or_else(|| Field::zeros(grid));
    Ok(profile(&field, 1.0, |v| v.re))
}

fn solve_one_path(metric: &str, drift: f64, noise: f64, mass: f64, seed: u32) -> Result<Profile> {
    let problem = format!(
        "gamma = {{ kind = \"power\", n = 2, coefficient = {drift:?} }}\nsigma = {{ kind = \"linear\", lambda = {noise:?} }}\n"
    );
    let rest = format!(
        "[noise]\nmeasure = {{ type = \"gaussian_density\", mass = {mass:?} }}\nmodes = 16\n[solver]\nzeta = 1\n[monte_carlo]\nseed = {seed}\n"
    );
    let cfg = config(metric, &problem, &rest)?;
    let (solve_cfg, problem) = cfg.build()?;
    let prepared = prepare_solve(&solve_cfg, problem, &CounterRng::new(u64::from(seed) ^ 0x5eed))?;
    let path = prepared.solver.sample_path(0);
    let tr = prepared.solver.picard_solve(&prepared.problem, &path, InitialGuess::Free)?;
    let last = tr.fields.last().expect("trajectory holds u0");
    Ok(profile(last, prepared.horizon.t0, |v| v.norm()))
}

/// `|S(t) u0|` for a Gaussian packet on one of the metric families.
#[wasm_bindgen]
pub fn free_evolution(metric: &str, width: f64, momentum: f64, t: f64) -> std::result::Result<Profile, JsValue> {
    evolve_packet(metric, width, momentum, t).map_err(to_js)
}

/// One noise increment `ΔΞ` over `dt = 1` for a Gaussian spectral density.
#[wasm_bindgen]
pub fn noise_sample(mass: f64, scale: f64, seed: u32) -> std::result::Result<Profile, JsValue> {
    increment(mass, scale, seed).map_err(to_js)
}

/// `|u(T0)|` of the Picard solution for a quadratic drift and linear
/// multiplicative noise, on one sample path.
#[wasm_bindgen]
pub fn stochastic_solution(metric: &str, drift: f64, noise: f64, mass: f64, seed: u32) -> std::result::Result<Profile, JsValue> {
    solve_one_path(metric, drift, noise, mass, seed).map_err(to_js)
}
