//! Batch runs: configuration, output directories and manifests.
//!
//! A run directory holds `manifest.json`, `fields/*.bin` (each with a JSON
//! sidecar) and `tables/*.csv`. Every file the manifest lists carries its
//! SHA-256, so a directory can be checked without trusting its producer.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::fields::{io::sha256_hex, io::write_field, Field, Grid, HSpace};
use crate::noise::{build_cm_basis, correlation_from_spectral, max_modes, total_mass, MeasureSpec};
use crate::par::map_indices;
use crate::propagator::{PropagatorConfig, Scheme};
use crate::quantization::GeneratorBundle;
use crate::rng::CounterRng;
use crate::solver::{Ball, InitialGuess, MildProblem, NonlinearitySpec, SolveConfig, CONTRACTION_MARGIN};
use crate::symbol::{MagneticFamily, MetricFamily, PotentialFamily};
use crate::verify::{prepare_solve, run_suite, Battery, Check, Suite, VerifySettings};
use crate::{with_workers, Error, Result};

pub const MANIFEST_FORMAT: &str = "schrocurve-manifest-v1";

const PRESETS: [(&str, &str); 2] = [
    ("flat-gauss-power2", include_str!("../configs/flat-gauss-power2.toml")),
    ("free-gaussian", include_str!("../configs/free-gaussian.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `amplitude · exp(-|x - center|^2 / (2 width^2) + i momentum·x)`.
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        momentum: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Gaussian { center: vec![], width: 1.0, momentum: vec![], amplitude: 1.0 }
    }
}

impl InitialSpec {
    pub fn build(&self, grid: Grid) -> Field {
        match self {
            InitialSpec::Gaussian { center, width, momentum, amplitude } => Field::gaussian(grid, center, *width, momentum, *amplitude),
            InitialSpec::Zero => Field::zeros(grid),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub metric: MetricFamily,
    pub magnetic: MagneticFamily,
    pub potential: PotentialFamily,
    pub gamma: NonlinearitySpec,
    pub sigma: NonlinearitySpec,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
    /// Solver time step.
    pub dt: f64,
    pub t_final: f64,
    /// Largest propagator step; each solver step is split into equal substeps.
    pub propagator_dt: f64,
    pub scheme: Scheme,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig { dim: 1, n: 256, half_width: 16.0, dt: 0.01, t_final: 1.0, propagator_dt: 1e-3, scheme: Scheme::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub measure: MeasureSpec,
    /// Cameron–Martin modes `J`; `None` takes the library default.
    pub modes: Option<usize>,
    /// Increments drawn by `noise-sample`.
    pub samples: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { measure: MeasureSpec::default(), modes: None, samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub z: i64,
    pub zeta: i64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { z: 0, zeta: 1, picard_tol: crate::solver::PICARD_TOL, picard_max_iters: crate::solver::PICARD_MAX_ITERS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    /// Drawn from the clock when absent; the manifest always records it.
    pub seed: Option<u64>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { paths: 4, seed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    /// Times whose fields are written (nearest grid time); `None` writes all.
    pub save_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub problem: ProblemConfig,
    pub discretization: DiscretizationConfig,
    pub noise: NoiseConfig,
    pub solver: SolverSection,
    pub monte_carlo: MonteCarloConfig,
    pub output: OutputConfig,
    pub verify: VerifySettings,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

fn path_error<E: std::fmt::Display>(origin: &str, e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    Error::config(if path == "." { origin.to_string() } else { format!("{origin}: {path}") }, e.into_inner().to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config(origin, e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| path_error(origin, e))
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| path_error(origin, e))
    }

    /// TOML unless the text is a JSON object.
    pub fn from_str_any(text: &str, origin: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json_str(text, origin)
        } else {
            Self::from_toml_str(text, origin)
        }
    }

    pub fn preset(name: &str) -> Option<Result<Self>> {
        PRESETS.iter().find(|(n, _)| *n == name).map(|(n, text)| Self::from_toml_str(text, n))
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// A file path, or else the name of a shipped preset.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            let text = fs::read_to_string(path)?;
            return Self::from_str_any(&text, spec);
        }
        Self::preset(spec).unwrap_or_else(|| {
            Err(Error::config(spec, format!("no such file and no preset of that name (presets: {})", Self::preset_names().collect::<Vec<_>>().join(", "))))
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = &self.discretization;
        Grid::new(d.dim, d.n, d.half_width)
    }

    pub fn space(&self) -> Result<HSpace> {
        HSpace::new(self.solver.z, self.solver.zeta)
    }

    /// The seed, drawn from the clock if the config has none.
    pub fn resolved_seed(&self) -> u64 {
        self.monte_carlo.seed.unwrap_or_else(|| {
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
        })
    }

    /// Copy with the seed fixed, so the echo re-runs bit-exactly.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.monte_carlo.seed = Some(self.resolved_seed());
        c
    }

    pub fn propagator(&self) -> Result<PropagatorConfig> {
        let d = self.discretization.dim;
        let p = &self.problem;
        let bundle = GeneratorBundle::from_metric(&p.metric.build(d)?, p.magnetic.build(d), p.potential.build(d))?;
        Ok(PropagatorConfig::new(bundle, self.discretization.propagator_dt).with_scheme(self.discretization.scheme))
    }

    /// Solver configuration and problem. Genuinely nonlinear terms get the
    /// default locality ball around `u0`.
    pub fn build(&self) -> Result<(SolveConfig, MildProblem)> {
        let grid = self.grid()?;
        let space = self.space()?;
        let d = &self.discretization;
        let measure = self.noise.measure.build(grid)?;
        let mut cfg = SolveConfig::new(grid, self.propagator()?, measure, d.dt, d.t_final);
        cfg.space = space;
        cfg.modes = self.noise.modes;
        cfg.picard_tol = self.solver.picard_tol;
        cfg.picard_max_iters = self.solver.picard_max_iters;
        cfg.seed = self.resolved_seed();
        let u0 = self.problem.initial.build(grid);
        let ball = Ball::around(&u0, space);
        let lift = |spec: &NonlinearitySpec, key: &str| -> Result<crate::solver::Nonlinearity> {
            let g = spec.build();
            if g.is_genuinely_nonlinear() {
                if !space.is_algebra(grid.dim()) {
                    return Err(Error::config(
                        "solver.zeta",
                        format!("problem.{key} is nonlinear, which needs zeta > d/2 (zeta = {}, d = {})", space.zeta, grid.dim()),
                    ));
                }
                return Ok(g.with_ball(ball.clone()));
            }
            Ok(g)
        };
        let problem = MildProblem { gamma: lift(&self.problem.gamma, "gamma")?, sigma: lift(&self.problem.sigma, "sigma")?, u0 };
        Ok((cfg, problem))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Command-specific results (horizon, norms, Picard histories, ...).
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub verdicts: Vec<Check>,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|c| c.pass)
    }

    /// Relative path to checksum, for comparing runs.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }
}

/// Collects the files of one run directory.
struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("fields"))?;
        fs::create_dir_all(root.join("tables"))?;
        Ok(RunDir { root: root.to_path_buf(), files: Vec::new() })
    }

    fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel))?;
        self.files.push(FileEntry { path: rel.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn field(&mut self, name: &str, field: &Field) -> Result<()> {
        let rel = format!("fields/{name}.bin");
        write_field(&self.root.join(&rel), field)?;
        self.record(&rel)?;
        self.record(&format!("fields/{name}.json"))
    }

    fn table(&mut self, name: &str, csv: &str) -> Result<()> {
        let rel = format!("tables/{name}.csv");
        fs::write(self.root.join(&rel), csv)?;
        self.record(&rel)
    }

    fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.files = self.files;
        fs::write(self.root.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn manifest(command: &str, cfg: &RunConfig, seed: u64) -> RunManifest {
    let mut config = cfg.clone();
    config.monte_carlo.seed = Some(seed);
    RunManifest {
        format: MANIFEST_FORMAT.into(),
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config,
        summary: serde_json::Value::Null,
        files: Vec::new(),
        verdicts: Vec::new(),
        timings: BTreeMap::new(),
    }
}

/// Checks that every file a manifest lists exists and matches its checksum.
pub fn check_manifest(dir: &Path) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    for f in &m.files {
        let found = sha256_hex(&fs::read(dir.join(&f.path))?);
        if found != f.sha256 {
            return Err(Error::Checksum { path: f.path.clone(), expected: f.sha256.clone(), found });
        }
    }
    Ok(m)
}

/// `out`, else the config's output directory, else `runs/<name or command>`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>, command: &str) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(if cfg.name.is_empty() { command } else { &cfg.name }))
}

/// Picard solves over the Monte Carlo batch at `pick_horizon`'s `T0`.
pub fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<RunManifest> {
    let seed = cfg.resolved_seed();
    let mut cfg = cfg.clone();
    cfg.monte_carlo.seed = Some(seed);
    with_workers(cfg.workers, || simulate_inner(&cfg, &output_dir(&cfg, out, "simulate"), seed))
}

fn simulate_inner(cfg: &RunConfig, root: &Path, seed: u64) -> Result<RunManifest> {
    let start = Instant::now();
    let (solve_cfg, problem) = cfg.build()?;
    let space = solve_cfg.space;
    let prepared = prepare_solve(&solve_cfg, problem, &CounterRng::new(seed ^ 0x5eed))?;
    let setup = start.elapsed().as_secs_f64();
    let solver = &prepared.solver;
    let k = prepared.horizon.k;
    log::info!("T0 = {} ({} steps), K(T0) = {k:.4e}", prepared.horizon.t0, prepared.horizon.steps);

    let solve_start = Instant::now();
    let paths = cfg.monte_carlo.paths;
    let results = map_indices(paths, |p| -> Result<(crate::solver::Trajectory, f64)> {
        let path = solver.sample_path(p as u64);
        let mut tr = solver.picard_solve(&prepared.problem, &path, InitialGuess::Free)?;
        let residual = solver.residual_check(&tr, &path, &prepared.problem)?;
        tr.residual = Some(residual);
        Ok((tr, residual))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let solve_seconds = solve_start.elapsed().as_secs_f64();

    let mut dir = RunDir::create(root)?;
    let times = solver.times();
    let saved: Vec<usize> = match &cfg.output.save_times {
        None => (0..times.len()).collect(),
        Some(ts) => {
            let mut idx: Vec<usize> = ts
                .iter()
                .map(|t| ((t / solve_cfg.dt).round().max(0.0) as usize).min(times.len() - 1))
                .collect();
            idx.sort_unstable();
            idx.dedup();
            idx
        }
    };
    let mut norms_csv = String::from("path,t,norm\n");
    let mut picard_csv = String::from("path,iteration,distance\n");
    let mut summary_csv = String::from("path,iterations,residual,max_squared_ratio,final_norm\n");
    let mut verdicts = Vec::new();
    let mut mean_square = 0.0;
    for (p, (tr, residual)) in results.iter().enumerate() {
        for &i in &saved {
            dir.field(&format!("path{p:04}_t{i:05}"), &tr.fields[i])?;
        }
        for (t, n) in tr.times.iter().zip(&tr.norms) {
            norms_csv.push_str(&format!("{p},{t},{n:e}\n"));
        }
        for (m, d) in tr.distances.iter().enumerate() {
            picard_csv.push_str(&format!("{p},{},{d:e}\n", m + 1));
        }
        let worst = tr.squared_ratios().into_iter().fold(0.0, f64::max);
        summary_csv.push_str(&format!("{p},{},{residual:e},{worst:e},{:e}\n", tr.iterations, tr.norms.last().copied().unwrap_or(0.0)));
        verdicts.push(Check::at_most(format!("path{p}/squared_ratio"), worst, CONTRACTION_MARGIN * k, ""));
        verdicts.push(Check::at_most(format!("path{p}/residual"), *residual, 10.0 * solve_cfg.picard_tol, ""));
        // Left-endpoint ∫_0^T0 ||u||^2 dt.
        mean_square += tr.norms[..tr.norms.len() - 1].iter().map(|n| n * n * solve_cfg.dt).sum::<f64>() / paths.max(1) as f64;
    }
    dir.table("norms", &norms_csv)?;
    dir.table("picard", &picard_csv)?;
    dir.table("summary", &summary_csv)?;

    let mut m = manifest("simulate", cfg, seed);
    m.summary = serde_json::json!({
        "space": { "z": space.z, "zeta": space.zeta },
        "horizon": prepared.horizon,
        "times": times,
        "saved_time_indices": saved,
        "total_mass": total_mass(&solve_cfg.measure),
        "modes": solver.basis().len(),
        "mean_square_l2_in_time": mean_square,
        "paths": results.iter().enumerate().map(|(p, (tr, residual))| serde_json::json!({
            "path": p,
            "iterations": tr.iterations,
            "distances": tr.distances,
            "residual": residual,
            "norms": tr.norms,
        })).collect::<Vec<_>>(),
    });
    m.verdicts = verdicts;
    m.timings.insert("setup_seconds".into(), setup);
    m.timings.insert("solve_seconds".into(), solve_seconds);
    m.timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
    dir.finish(m)
}

/// Runs a verification suite and stores its tables and verdicts.
pub fn cmd_verify(suite: Suite, cfg: &RunConfig, out: Option<&Path>) -> Result<RunManifest> {
    let seed = cfg.verify.seed;
    with_workers(cfg.workers, || -> Result<RunManifest> {
        let battery: Battery = run_suite(suite, &cfg.verify)?;
        let mut dir = RunDir::create(&output_dir(cfg, out, &format!("verify-{suite}")))?;
        for t in &battery.tables {
            dir.table(&t.name, &t.csv)?;
        }
        let mut m = manifest(&format!("verify {suite}"), cfg, seed);
        m.summary = serde_json::json!({ "suite": suite.name(), "checks": battery.checks.len() });
        m.verdicts = battery.checks;
        m.timings.insert("total_seconds".into(), battery.seconds);
        dir.finish(m)
    })
}

/// Noise increments `ΔΞ` and their empirical covariance against the analytic
/// kernel `dt (2π)^d Γ(x)` at a few lags.
pub fn cmd_noise_sample(cfg: &RunConfig, out: Option<&Path>) -> Result<RunManifest> {
    let seed = cfg.resolved_seed();
    with_workers(cfg.workers, || -> Result<RunManifest> {
        let start = Instant::now();
        let grid = cfg.grid()?;
        let measure = cfg.noise.measure.build(grid)?;
        let modes = cfg.noise.modes.unwrap_or_else(|| max_modes(&measure));
        let basis = build_cm_basis(&measure, grid, Some(modes))?;
        let dt = cfg.discretization.dt;
        let rng = CounterRng::new(seed);
        let samples = cfg.noise.samples;
        let sample = |s: usize| -> Field {
            let dw: Vec<f64> = rng.normals(s as u64, 0, basis.len()).into_iter().map(|z| z * dt.sqrt()).collect();
            basis.increment_field(&dw).unwrap_or_else(|| Field::zeros(grid))
        };
        let origin = grid.flat_index([grid.n() / 2, if grid.dim() == 2 { grid.n() / 2 } else { 0 }]);
        let lags: Vec<usize> = [0.0, 0.5, 1.0, std::f64::consts::FRAC_PI_2, 2.0, 3.0]
            .iter()
            .map(|x| grid.flat_index([((grid.n() / 2) as f64 + x / grid.spacing()).round() as usize, if grid.dim() == 2 { grid.n() / 2 } else { 0 }]))
            .collect();
        let products: Vec<Vec<f64>> = map_indices(samples, |s| {
            let f = sample(s);
            let v = f.values();
            lags.iter().map(|&i| (v[i] * v[origin].conj()).re / dt).collect()
        });
        let gamma = correlation_from_spectral(&measure, grid)?;
        let kernel = crate::conventions::noise_kernel_factor(grid.dim());
        let mut dir = RunDir::create(&output_dir(cfg, out, "noise-sample"))?;
        for s in 0..samples.min(8) {
            dir.field(&format!("increment{s:04}"), &sample(s))?;
        }
        let mut csv = String::from("x,empirical,analytic,std_err\n");
        let mut verdicts = Vec::new();
        let n = samples.max(1) as f64;
        for (li, &i) in lags.iter().enumerate() {
            let col: Vec<f64> = products.iter().map(|p| p[li]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let se = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0) / n).sqrt();
            let analytic = kernel * gamma.values[i];
            let x = grid.point(i)[0];
            csv.push_str(&format!("{x},{mean:e},{analytic:e},{se:e}\n"));
            let err = (mean - analytic).abs();
            // Relative 5% where the kernel is resolvable, otherwise the
            // 3-standard-error absolute band.
            let check = if analytic.abs() * crate::noise::COVARIANCE_TOL > 3.0 * se {
                Check::at_most(format!("covariance/x={x:.3}"), err / analytic.abs(), crate::noise::COVARIANCE_TOL, "relative")
            } else {
                Check::at_most(format!("covariance/x={x:.3}"), err, 3.0 * se + 1e-12 * kernel * gamma.at_origin().abs(), "absolute band")
            };
            verdicts.push(check);
        }
        dir.table("covariance", &csv)?;
        let mut m = manifest("noise-sample", cfg, seed);
        m.summary = serde_json::json!({
            "measure": cfg.noise.measure.name(),
            "total_mass": total_mass(&measure),
            "modes": basis.len(),
            "samples": samples,
            "dt": dt,
        });
        m.verdicts = verdicts;
        m.timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
        dir.finish(m)
    })
}

/// Resolved config, total mass, predicted horizon and a size estimate.
pub fn cmd_info(cfg: &RunConfig) -> Result<String> {
    let resolved = cfg.resolved();
    let (solve_cfg, problem) = resolved.build()?;
    let grid = solve_cfg.grid;
    let mass = total_mass(&solve_cfg.measure);
    let seed = resolved.monte_carlo.seed.unwrap_or_default();
    let prepared = with_workers(cfg.workers, || prepare_solve(&solve_cfg, problem, &CounterRng::new(seed ^ 0x5eed)))?;
    let h = &prepared.horizon;
    let steps = h.steps;
    let field_bytes = grid.len() * 16;
    let trajectory_bytes = field_bytes * (steps + 1);
    let mut out = String::new();
    out.push_str("# resolved config\n");
    out.push_str(&resolved.to_toml());
    out.push_str("\n# run\n");
    out.push_str(&format!("total_mass = {mass}\n"));
    out.push_str(&format!("modes = {}\n", prepared.solver.basis().len()));
    out.push_str(&format!("T = {}\nT0 = {}\nK(T0) = {}\nC = {}\nC_zz = {}\n", solve_cfg.t_final, h.t0, h.k, h.c, h.c_zz));
    out.push_str(&format!("horizon_formula = \"{}\"\n", h.formula));
    out.push_str(&format!("time_steps = {steps}\npropagator_scheme = {:?}\n", solve_cfg.propagator.resolved_scheme()));
    out.push_str(&format!(
        "memory_per_path_bytes = {}  # two trajectories of {} bytes during Picard\n",
        2 * trajectory_bytes, trajectory_bytes
    ));
    out.push_str(&format!("output_bytes_estimate = {}\n", trajectory_bytes * resolved.monte_carlo.paths));
    Ok(out)
}

/// Runs a preset twice per worker count and compares field checksums.
pub fn reproducibility_check(preset: &str, workers: &[usize]) -> Result<Battery> {
    let start = Instant::now();
    let base = RunConfig::preset(preset).ok_or_else(|| Error::config(preset, "unknown preset"))??;
    let scratch = std::env::temp_dir().join(format!("schrocurve-repro-{}-{}", std::process::id(), start.elapsed().as_nanos()));
    let mut runs = Vec::new();
    for (i, w) in workers.iter().flat_map(|&w| [w, w]).enumerate() {
        let mut cfg = base.clone();
        cfg.workers = w;
        let m = cmd_simulate(&cfg, Some(&scratch.join(format!("run{i}"))))?;
        let fields: BTreeMap<String, String> = m.checksums().into_iter().filter(|(p, _)| p.starts_with("fields/")).collect();
        runs.push((w, fields));
    }
    let _ = fs::remove_dir_all(&scratch);
    let mut b = Battery::default();
    let (w0, reference) = &runs[0];
    b.checks.push(Check::flag("reproducibility/fields_written", !reference.is_empty(), format!("{} field files", reference.len())));
    for (i, (w, sums)) in runs.iter().enumerate().skip(1) {
        b.checks.push(Check::flag(format!("reproducibility/run{i}_workers{w}_vs_run0_workers{w0}"), sums == reference, ""));
    }
    b.seconds = start.elapsed().as_secs_f64();
    Ok(b)
}
