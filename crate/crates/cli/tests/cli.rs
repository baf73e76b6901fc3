use std::path::Path;
use std::process::{Command, Output};

use schrocurve::fields::io::read_field;
use schrocurve::fields::l2_norm;
use schrocurve::propagator::evolve;
use schrocurve::run::{check_manifest, RunConfig};

fn schrocurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schrocurve"))
        .args(args)
        .env_remove("SCHROCURVE_WORKERS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_gives_identical_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "2")] {
        let dir = tmp.path().join(run);
        let out = schrocurve(&["simulate", "--config", "flat-gauss-power2", "--seed", "7", "--workers", workers, "--out", path_str(&dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m = check_manifest(&dir).unwrap();
        assert_eq!(m.seed, 7);
        let fields: Vec<_> = m.checksums().into_iter().filter(|(p, _)| p.starts_with("fields/")).collect();
        assert!(!fields.is_empty());
        sums.push(fields);
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn zero_noise_and_drift_reduce_to_free_evolution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = schrocurve(&["simulate", "--config", "free-gaussian", "--out", path_str(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    check_manifest(tmp.path()).unwrap();

    let cfg = RunConfig::load("free-gaussian").unwrap();
    let grid = cfg.grid().unwrap();
    let u0 = cfg.problem.initial.build(grid);
    let expected = evolve(&u0, 1.0, &cfg.propagator().unwrap()).unwrap();
    let got = read_field(&tmp.path().join("fields/path0000_t00100.bin")).unwrap();
    let err = l2_norm(&(&got - &expected));
    assert!(err < 1e-10 * l2_norm(&u0), "{err}");
}

#[test]
fn unknown_suite_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = schrocurve(&["verify", "bogus", "--out", path_str(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn verify_symbols_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = schrocurve(&["verify", "symbols", "--out", path_str(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS symbols/flat/ellipticity")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
    let m = check_manifest(tmp.path()).unwrap();
    assert!(m.pass());
}

#[test]
fn massless_noise_samples_are_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("massless.toml");
    std::fs::write(&config, "[noise]\nmeasure = { type = \"gaussian_density\", mass = 0.0 }\nsamples = 200\n").unwrap();
    let run = tmp.path().join("run");
    let out = schrocurve(&["noise-sample", "--config", path_str(&config), "--seed", "3", "--out", path_str(&run)]);
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    let m = check_manifest(&run).unwrap();
    let bins: Vec<_> = m.files.iter().filter(|f| f.path.ends_with(".bin")).collect();
    assert!(!bins.is_empty());
    for f in bins {
        let field = read_field(&run.join(&f.path)).unwrap();
        assert!(field.values().iter().all(|v| v.norm() == 0.0), "{}", f.path);
    }
}

#[test]
fn tampered_run_fails_the_manifest_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = schrocurve(&["verify", "symbols", "--out", path_str(tmp.path())]);
    assert!(out.status.success());
    let m = check_manifest(tmp.path()).unwrap();
    let victim = tmp.path().join(&m.files[0].path);
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes.push(b'\n');
    std::fs::write(&victim, bytes).unwrap();
    assert!(check_manifest(tmp.path()).is_err());
}

#[test]
fn info_prints_the_horizon() {
    let out = schrocurve(&["info", "--config", "flat-gauss-power2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let t0: f64 = stdout.lines().find_map(|l| l.strip_prefix("T0 = ")).unwrap().parse().unwrap();
    assert!(t0 > 0.0 && t0 <= 1.0, "{t0}");
    assert!(stdout.contains("seed = 1"));
}

#[test]
fn missing_config_is_an_error() {
    let out = schrocurve(&["info", "--config", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat-gauss-power2"));
}
