use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Symbol, SymbolOrder};
use crate::conventions::bracket;
use crate::par;

/// PASS requires the last-shell supremum to stay within this factor of the
/// median over shells.
pub const STABILITY_FACTOR: f64 = 4.0;
/// Absolute floor below which suprema count as stable zeros.
const ZERO_FLOOR: f64 = 1e-6;
const FIRST_ORDER_STEP: f64 = 1e-4;

/// Dyadic probe shells: every radius times every direction, in `x` and in `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl ProbeGrid {
    /// Radii `{1, 2, 4, 8, 16}` along `±e_i`.
    pub fn standard(dim: usize) -> Self {
        let mut directions = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = s;
                directions.push(e);
            }
        }
        ProbeGrid { dim, radii: vec![1.0, 2.0, 4.0, 8.0, 16.0], directions }
    }

    /// `(shell index, point)` for every radius and direction.
    pub fn points(&self) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::with_capacity(self.radii.len() * self.directions.len());
        for (s, &r) in self.radii.iter().enumerate() {
            for dir in &self.directions {
                out.push((s, dir.iter().map(|c| r * c).collect()));
            }
        }
        out
    }

    pub fn x_points_with_origin(&self) -> Vec<Vec<f64>> {
        std::iter::once(vec![0.0; self.dim]).chain(self.points().into_iter().map(|(_, p)| p)).collect()
    }
}

/// All multi-indices in `dim` variables with total order at most `max`,
/// sorted by total order.
pub fn multi_indices(dim: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=max {
        match dim {
            1 => out.push(vec![total]),
            _ => (0..=total).rev().for_each(|a| out.push(vec![a, total - a])),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    /// Supremum of the normalized derivative on each dyadic shell.
    pub shell_sup: Vec<f64>,
    pub pass: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub label: String,
    pub order: SymbolOrder,
    pub radii: Vec<f64>,
    pub entries: Vec<EstimateEntry>,
    pub pass: bool,
}

impl EstimateReport {
    /// Largest normalized constant over all entries and shells.
    pub fn max_constant(&self) -> f64 {
        self.entries.iter().flat_map(|e| e.shell_sup.iter().copied()).fold(0.0, f64::max)
    }

    pub fn entry(&self, alpha: &[usize], beta: &[usize]) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.alpha == alpha && e.beta == beta)
    }

    /// One row per `(α, β, shell)`; multi-index components are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,shell,radius,sup,verdict\n");
        let join = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
        for e in &self.entries {
            let verdict = match (&e.failure, e.pass) {
                (Some(_), _) => "ERROR",
                (None, true) => "PASS",
                (None, false) => "FAIL",
            };
            for (s, sup) in e.shell_sup.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{:e},{}\n",
                    join(&e.alpha),
                    join(&e.beta),
                    s,
                    self.radii[s],
                    sup,
                    verdict
                ));
            }
        }
        out
    }
}

/// Sup over probes of `|∂_ξ^α ∂_x^β a| <x>^{|β|-m} <ξ>^{|α|-μ}` per dyadic shell,
/// for `|α| ≤ max_alpha`, `|β| ≤ max_beta`. The shell of a probe pair is the
/// larger of its two radius indices.
pub fn check_symbol_estimates(sym: &Symbol, max_alpha: usize, max_beta: usize, probes: &ProbeGrid) -> EstimateReport {
    let d = sym.dim();
    let order = sym.order();
    let shells = probes.radii.len();
    let points = probes.points();
    let pairs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|i| (0..points.len()).map(move |j| (i, j))).collect();
    let mut entries = Vec::new();
    for alpha in multi_indices(d, max_alpha) {
        for beta in multi_indices(d, max_beta) {
            let values = par::map_indices(pairs.len(), |p| {
                let (i, j) = pairs[p];
                let (sx, x) = &points[i];
                let (sxi, xi) = &points[j];
                let raw = derivative(sym, &alpha, &beta, x, xi)?;
                let a: usize = alpha.iter().sum();
                let b: usize = beta.iter().sum();
                let weight = bracket(x).powf(b as f64 - order.m) * bracket(xi).powf(a as f64 - order.mu);
                Ok::<_, String>(((*sx).max(*sxi), raw.norm() * weight))
            });
            let mut shell_sup = vec![0.0f64; shells];
            let mut failure = None;
            for v in values {
                match v {
                    Ok((s, val)) if val.is_finite() => shell_sup[s] = shell_sup[s].max(val),
                    Ok((s, _)) => {
                        shell_sup[s] = f64::INFINITY;
                        failure.get_or_insert_with(|| format!("non-finite derivative estimate on shell {s}"));
                    }
                    Err(msg) => {
                        failure.get_or_insert(msg);
                    }
                }
            }
            let pass = failure.is_none() && stable(&shell_sup);
            entries.push(EstimateEntry { alpha: alpha.clone(), beta, shell_sup, pass, failure });
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    EstimateReport { label: sym.label().to_string(), order, radii: probes.radii.clone(), entries, pass }
}

fn stable(shell_sup: &[f64]) -> bool {
    if shell_sup.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let mut sorted = shell_sup.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    shell_sup[n - 1] <= STABILITY_FACTOR * median + ZERO_FLOOR
}

/// `∂_ξ^α ∂_x^β a(x, ξ)` from the oracle, or by nested central differences.
fn derivative(sym: &Symbol, alpha: &[usize], beta: &[usize], x: &[f64], xi: &[f64]) -> Result<Complex64, String> {
    if let Some(oracle) = sym.derivative_oracle() {
        return Ok(oracle(alpha, beta, x, xi));
    }
    let d = x.len();
    let total: usize = alpha.iter().sum::<usize>() + beta.iter().sum::<usize>();
    // First derivatives use the fixed relative step; higher orders balance
    // round-off (ε / h^K) against the extrapolated truncation error (h^4).
    let rel = if total <= 1 { FIRST_ORDER_STEP } else { f64::EPSILON.powf(1.0 / (total as f64 + 4.0)) };
    let (bx, bxi) = (bracket(x), bracket(xi));
    let mut z: Vec<f64> = x.iter().chain(xi).copied().collect();
    let orders: Vec<usize> = beta.iter().chain(alpha).copied().collect();
    let steps: Vec<f64> = (0..2 * d).map(|c| rel * if c < d { bx } else { bxi }).collect();
    let f = |z: &[f64]| sym.eval(&z[..d], &z[d..]);
    nested(&f, &mut z, &orders, &steps, 0)
}

fn nested(
    f: &dyn Fn(&[f64]) -> Complex64,
    z: &mut Vec<f64>,
    orders: &[usize],
    steps: &[f64],
    from: usize,
) -> Result<Complex64, String> {
    let Some(c) = (from..orders.len()).find(|&c| orders[c] > 0) else {
        return Ok(f(z));
    };
    let k = orders[c];
    let base = z[c];
    let stencil = |h: f64, z: &mut Vec<f64>| -> Result<Complex64, String> {
        if base + 0.5 * h == base {
            return Err(format!("finite-difference step {h:e} underflows at coordinate {c} = {base}"));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        for i in 0..=k {
            z[c] = base + (0.5 * k as f64 - i as f64) * h;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * nested(f, z, orders, steps, c + 1)?;
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        z[c] = base;
        Ok(acc / h.powi(k as i32))
    };
    let coarse = stencil(steps[c], z)?;
    let fine = stencil(0.5 * steps[c], z)?;
    Ok((4.0 * fine - coarse) / 3.0)
}
