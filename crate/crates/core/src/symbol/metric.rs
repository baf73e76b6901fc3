use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::estimates::ProbeGrid;
use super::{Factor, SeparableTerm, Symbol, SymbolOrder};
use crate::conventions::bracket;
use crate::{Error, Result};

pub type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

const SYMMETRY_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-4;

/// Named metric families selectable from configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricFamily {
    #[default]
    Flat,
    /// `δ_jl + ε e^{-|x|^2} v_j v_l`.
    GaussBump {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        direction: Vec<f64>,
    },
    /// `δ_jl + ε (1 + |x|^2)^{-1} v_j v_l`.
    RationalDecay {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        direction: Vec<f64>,
    },
}

fn default_epsilon() -> f64 {
    0.3
}

impl MetricFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MetricFamily::Flat => "flat",
            MetricFamily::GaussBump { .. } => "gauss_bump",
            MetricFamily::RationalDecay { .. } => "rational_decay",
        }
    }

    pub fn build(&self, dim: usize) -> Result<MetricCoefficients> {
        match self {
            MetricFamily::Flat => Ok(MetricCoefficients::flat(dim)),
            MetricFamily::GaussBump { epsilon, direction } => {
                MetricCoefficients::gauss_bump(dim, *epsilon, &unit_direction(dim, direction)?)
            }
            MetricFamily::RationalDecay { epsilon, direction } => {
                MetricCoefficients::rational_decay(dim, *epsilon, &unit_direction(dim, direction)?)
            }
        }
    }
}

/// Empty direction means `e_1`.
fn unit_direction(dim: usize, v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return Ok(e);
    }
    if v.len() != dim {
        return Err(Error::InvalidMetric(format!("direction has {} components, expected {dim}", v.len())));
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidMetric("direction must be a nonzero finite vector".into()));
    }
    Ok(v.iter().map(|c| c / norm).collect())
}

/// The coefficient matrix `(a_jl(x))` of the principal part.
#[derive(Clone)]
pub struct MetricCoefficients {
    dim: usize,
    entries: Vec<RealFn>,
    /// `∂_{x_k} a_jl` at index `(j*d + l)*d + k`.
    gradients: Option<Vec<RealFn>>,
    /// Row-major matrix when the coefficients do not depend on `x`.
    constant: Option<Vec<f64>>,
    decay_rate: f64,
    label: String,
}

impl std::fmt::Debug for MetricCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricCoefficients")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("constant", &self.constant)
            .field("decay_rate", &self.decay_rate)
            .finish()
    }
}

impl MetricCoefficients {
    /// Coefficients given as `d*d` row-major functions. `decay_rate` is the
    /// exponent with which `a_jl - δ_jl` decays at infinity.
    pub fn from_fns(dim: usize, entries: Vec<RealFn>, decay_rate: f64) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::InvalidMetric(format!("expected {} entries, got {}", dim * dim, entries.len())));
        }
        if !(decay_rate > 0.0) {
            return Err(Error::InvalidMetric("decay rate must be positive".into()));
        }
        Ok(MetricCoefficients { dim, entries, gradients: None, constant: None, decay_rate, label: "custom".into() })
    }

    /// Constant coefficients, row-major.
    pub fn constant(dim: usize, matrix: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if matrix.len() != dim * dim || matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMetric("constant metric needs d*d finite entries".into()));
        }
        let entries = matrix.iter().map(|&v| Arc::new(move |_: &[f64]| v) as RealFn).collect();
        let zero = (0..dim * dim * dim).map(|_| Arc::new(|_: &[f64]| 0.0) as RealFn).collect();
        Ok(MetricCoefficients {
            dim,
            entries,
            gradients: Some(zero),
            constant: Some(matrix.to_vec()),
            decay_rate: f64::INFINITY,
            label: "constant".into(),
        })
    }

    pub fn flat(dim: usize) -> Self {
        let identity: Vec<f64> = (0..dim * dim).map(|i| if i / dim == i % dim { 1.0 } else { 0.0 }).collect();
        let mut m = Self::constant(dim, &identity).expect("dimension 1 or 2");
        m.label = "flat".into();
        m
    }

    pub fn gauss_bump(dim: usize, epsilon: f64, direction: &[f64]) -> Result<Self> {
        Self::rank_one_perturbation(
            dim,
            epsilon,
            direction,
            |r2| (-r2).exp(),
            |r2| -(-r2).exp(),
            f64::INFINITY,
            "gauss_bump",
        )
    }

    pub fn rational_decay(dim: usize, epsilon: f64, direction: &[f64]) -> Result<Self> {
        Self::rank_one_perturbation(
            dim,
            epsilon,
            direction,
            |r2| 1.0 / (1.0 + r2),
            |r2| -1.0 / ((1.0 + r2) * (1.0 + r2)),
            2.0,
            "rational_decay",
        )
    }

    /// `δ_jl + ε p(|x|^2) v_j v_l`; `dp` is `p'` so that `∂_k = 2 x_k ε p'(|x|^2) v_j v_l`.
    fn rank_one_perturbation(
        dim: usize,
        epsilon: f64,
        direction: &[f64],
        p: fn(f64) -> f64,
        dp: fn(f64) -> f64,
        decay_rate: f64,
        label: &str,
    ) -> Result<Self> {
        check_dim(dim)?;
        if !epsilon.is_finite() || direction.len() != dim {
            return Err(Error::InvalidMetric(format!("{label}: need finite epsilon and a {dim}-vector direction")));
        }
        let r2 = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>();
        let mut entries: Vec<RealFn> = Vec::with_capacity(dim * dim);
        let mut gradients: Vec<RealFn> = Vec::with_capacity(dim * dim * dim);
        for j in 0..dim {
            for l in 0..dim {
                let delta = if j == l { 1.0 } else { 0.0 };
                let c = epsilon * direction[j] * direction[l];
                entries.push(Arc::new(move |x: &[f64]| delta + c * p(r2(x))));
                for k in 0..dim {
                    gradients.push(Arc::new(move |x: &[f64]| 2.0 * x[k] * c * dp(r2(x))));
                }
            }
        }
        Ok(MetricCoefficients {
            dim,
            entries,
            gradients: Some(gradients),
            constant: None,
            decay_rate,
            label: label.into(),
        })
    }

    pub fn with_gradients(mut self, gradients: Vec<RealFn>) -> Result<Self> {
        if gradients.len() != self.dim.pow(3) {
            return Err(Error::InvalidMetric(format!("expected {} gradient entries", self.dim.pow(3))));
        }
        self.gradients = Some(gradients);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn entry(&self, j: usize, l: usize, x: &[f64]) -> f64 {
        (self.entries[j * self.dim + l])(x)
    }

    /// Row-major `(a_jl(x))`.
    pub fn matrix(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|f| f(x)).collect()
    }

    /// `∂_{x_k} a_jl(x)`: the analytic gradient when known, otherwise a
    /// Richardson-extrapolated central difference.
    pub fn partial(&self, j: usize, l: usize, k: usize, x: &[f64]) -> f64 {
        if let Some(g) = &self.gradients {
            return (g[(j * self.dim + l) * self.dim + k])(x);
        }
        let f = &self.entries[j * self.dim + l];
        let h = FD_STEP * bracket(x);
        let mut y = x.to_vec();
        let mut central = |h: f64| {
            y[k] = x[k] + h;
            let plus = f(&y);
            y[k] = x[k] - h;
            let minus = f(&y);
            y[k] = x[k];
            (plus - minus) / (2.0 * h)
        };
        let coarse = central(h);
        let fine = central(h / 2.0);
        (4.0 * fine - coarse) / 3.0
    }

    /// `(1/2) Σ a_jl(x) ξ_j ξ_l`.
    pub fn quadratic_form(&self, x: &[f64], xi: &[f64]) -> f64 {
        let a = self.matrix(x);
        let d = self.dim;
        0.5 * (0..d).flat_map(|j| (0..d).map(move |l| (j, l))).map(|(j, l)| a[j * d + l] * xi[j] * xi[l]).sum::<f64>()
    }

    fn check_symmetry(&self, probes: &ProbeGrid) -> Result<()> {
        let d = self.dim;
        for x in probes.x_points_with_origin() {
            let a = self.matrix(&x);
            if let Some(bad) = a.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidMetric(format!(
                    "entry ({}, {}) is not finite at x = {x:?}",
                    bad / d,
                    bad % d
                )));
            }
            for j in 0..d {
                for l in j + 1..d {
                    let (p, q) = (a[j * d + l], a[l * d + j]);
                    if (p - q).abs() > SYMMETRY_TOL * (1.0 + p.abs().max(q.abs())) {
                        return Err(Error::NonSymmetricMetric { row: j, col: l, x: x.clone() });
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidMetric(format!("dimension {dim} not supported")))
    }
}

/// `a(x, ξ) = -(1/2) Σ a_jl(x) ξ_j ξ_l`, order `(0, 2)`.
pub fn build_hamiltonian(metric: &MetricCoefficients) -> Result<Symbol> {
    let d = metric.dim;
    metric.check_symmetry(&ProbeGrid::standard(d))?;
    let order = SymbolOrder::new(0.0, 2.0);
    let label = format!("hamiltonian[{}]", metric.label);
    if let Some(a) = metric.constant.clone() {
        let m = move |xi: &[f64]| -> Complex64 {
            let mut q = 0.0;
            for j in 0..d {
                for l in 0..d {
                    q += a[j * d + l] * xi[j] * xi[l];
                }
            }
            (-0.5 * q).into()
        };
        return Ok(Symbol::multiplier(d, order, m).with_label(label));
    }
    let mut terms = Vec::with_capacity(d * d);
    for j in 0..d {
        for l in j..d {
            let f = Arc::clone(&metric.entries[j * d + l]);
            let twice = if j == l { 1.0 } else { 2.0 };
            terms.push(SeparableTerm::new(
                Factor::func(move |x| (twice * f(x)).into()),
                Factor::func(move |xi| (-0.5 * xi[j] * xi[l]).into()),
            ));
        }
    }
    Ok(Symbol::separable(d, order, terms).with_label(label))
}

/// `a_1(x, ξ) = (i/2) Σ_{j,l} ∂_{x_j} a_jl(x) ξ_l`, order `(-1, 1)`.
pub fn build_lower_metric_term(metric: &MetricCoefficients) -> Result<Symbol> {
    let d = metric.dim;
    metric.check_symmetry(&ProbeGrid::standard(d))?;
    let order = SymbolOrder::new(-1.0, 1.0);
    let label = format!("lower[{}]", metric.label);
    if metric.is_constant() {
        return Ok(Symbol::zero(d, order).with_label(label));
    }
    let terms = (0..d)
        .map(|l| {
            let m = metric.clone();
            let b = move |x: &[f64]| Complex64::new(0.0, 0.5 * (0..m.dim).map(|j| m.partial(j, l, j, x)).sum::<f64>());
            SeparableTerm::new(Factor::func(b), Factor::func(move |xi| xi[l].into()))
        })
        .collect();
    Ok(Symbol::separable(d, order, terms).with_label(label))
}

/// Smallest `C ≥ 1` with `C^{-1}|ξ|^2 ≤ (1/2) Σ a_jl ξ_j ξ_l ≤ C |ξ|^2` over the
/// spatial probes (origin included), taken over all directions `ξ` through the
/// eigenvalues of `(a_jl(x))`.
pub fn check_ellipticity(metric: &MetricCoefficients, probes: &ProbeGrid) -> Result<f64> {
    metric.check_symmetry(probes)?;
    let d = metric.dim;
    let mut c: f64 = 1.0;
    for x in probes.x_points_with_origin() {
        let a = metric.matrix(&x);
        let (lo, lo_vec, hi) = extreme_eigen(d, &a);
        let (q_lo, q_hi) = (0.5 * lo, 0.5 * hi);
        if !(q_lo > 0.0) || !q_hi.is_finite() {
            return Err(Error::IndefiniteMetric { x, xi: lo_vec, value: q_lo });
        }
        c = c.max(q_hi).max(1.0 / q_lo);
    }
    Ok(c)
}

/// Smallest eigenvalue with a unit eigenvector, and the largest eigenvalue,
/// of a symmetric 1x1 or 2x2 matrix.
fn extreme_eigen(d: usize, a: &[f64]) -> (f64, Vec<f64>, f64) {
    if d == 1 {
        return (a[0], vec![1.0], a[0]);
    }
    let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let lo = mean - rad;
    let v = if q.abs() > 0.0 {
        vec![q, lo - p]
    } else if p <= r {
        vec![1.0, 0.0]
    } else {
        vec![0.0, 1.0]
    };
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    (lo, vec![v[0] / n, v[1] / n], mean + rad)
}
