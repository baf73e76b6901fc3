//! Nemytskii nonlinearities `u ↦ g(t, ·, u(·))` and sampled Lipschitz profiles.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{h_zz_norm, Field, HSpace};
use crate::par::map_indices;
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Pointwise law `(t, x, u) -> g`.
pub type PointwiseFn = Arc<dyn Fn(f64, &[f64], Complex64) -> Complex64 + Send + Sync>;

/// Closed ball `{v : ||v - center||_{H_{z,zeta}} <= radius}` on which a
/// nonlinearity is claimed Lipschitz.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Field,
    pub radius: f64,
    pub space: HSpace,
}

impl Ball {
    /// Default locality ball: centred at `u0` with radius `||u0||`.
    pub fn around(u0: &Field, space: HSpace) -> Self {
        Ball { center: u0.clone(), radius: h_zz_norm(u0, space), space }
    }

    pub fn distance(&self, v: &Field) -> f64 {
        h_zz_norm(&(v - &self.center), self.space)
    }

    pub fn contains(&self, v: &Field) -> bool {
        self.distance(v) <= self.radius * (1.0 + 1e-12)
    }
}

#[derive(Clone)]
pub enum NonlinearityKind {
    Zero,
    Constant(Complex64),
    Linear(Complex64),
    /// `coefficient · u^n`.
    Power { n: u32, coefficient: Complex64 },
    Custom { label: String, eval: PointwiseFn },
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearityKind::Zero => write!(f, "Zero"),
            NonlinearityKind::Constant(c) => write!(f, "Constant({c})"),
            NonlinearityKind::Linear(c) => write!(f, "Linear({c})"),
            NonlinearityKind::Power { n, coefficient } => write!(f, "Power({coefficient} u^{n})"),
            NonlinearityKind::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub ball: Option<Ball>,
}

impl Nonlinearity {
    fn of(kind: NonlinearityKind) -> Self {
        Nonlinearity { kind, ball: None }
    }

    pub fn zero() -> Self {
        Self::of(NonlinearityKind::Zero)
    }

    pub fn constant(c: Complex64) -> Self {
        Self::of(NonlinearityKind::Constant(c))
    }

    pub fn linear(lambda: Complex64) -> Self {
        Self::of(NonlinearityKind::Linear(lambda))
    }

    pub fn power(n: u32, coefficient: Complex64) -> Self {
        Self::of(NonlinearityKind::Power { n, coefficient })
    }

    pub fn custom(label: impl Into<String>, eval: impl Fn(f64, &[f64], Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self::of(NonlinearityKind::Custom { label: label.into(), eval: Arc::new(eval) })
    }

    pub fn with_ball(mut self, ball: Ball) -> Self {
        self.ball = Some(ball);
        self
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            NonlinearityKind::Zero => true,
            NonlinearityKind::Constant(c) | NonlinearityKind::Linear(c) => *c == Complex64::new(0.0, 0.0),
            NonlinearityKind::Power { coefficient, .. } => *coefficient == Complex64::new(0.0, 0.0),
            NonlinearityKind::Custom { .. } => false,
        }
    }

    /// Lipschitz claims for these need `zeta > d/2`.
    pub fn is_genuinely_nonlinear(&self) -> bool {
        match &self.kind {
            NonlinearityKind::Power { n, .. } => *n >= 2 && !self.is_zero(),
            NonlinearityKind::Custom { .. } => true,
            _ => false,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: Complex64) -> Complex64 {
        match &self.kind {
            NonlinearityKind::Zero => Complex64::new(0.0, 0.0),
            NonlinearityKind::Constant(c) => *c,
            NonlinearityKind::Linear(c) => c * u,
            NonlinearityKind::Power { n, coefficient } => coefficient * u.powu(*n),
            NonlinearityKind::Custom { eval, .. } => eval(t, x, u),
        }
    }

    /// The Nemytskii operator at time `t`. Non-finite output is an error.
    pub fn apply(&self, t: f64, u: &Field) -> Result<Field> {
        let grid = *u.grid();
        let values: Vec<Complex64> =
            u.values().iter().enumerate().map(|(i, &v)| self.eval(t, &grid.point(i)[..grid.dim()], v)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("nonlinearity {:?}", self.kind), time_index: None, iteration: None });
        }
        Field::from_values(grid, values)
    }

    pub fn spec(&self) -> Option<NonlinearitySpec> {
        Some(match &self.kind {
            NonlinearityKind::Zero => NonlinearitySpec::Zero,
            NonlinearityKind::Constant(c) => NonlinearitySpec::Constant { value: c.re },
            NonlinearityKind::Linear(c) => NonlinearitySpec::Linear { lambda: c.re },
            NonlinearityKind::Power { n, coefficient } => NonlinearitySpec::Power { n: *n, coefficient: coefficient.re },
            NonlinearityKind::Custom { .. } => return None,
        })
    }
}

/// Config form of the built-in nonlinearities (real coefficients).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    #[default]
    Zero,
    Constant { value: f64 },
    Linear { lambda: f64 },
    Power {
        n: u32,
        #[serde(default = "one")]
        coefficient: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl NonlinearitySpec {
    pub fn build(&self) -> Nonlinearity {
        match *self {
            NonlinearitySpec::Zero => Nonlinearity::zero(),
            NonlinearitySpec::Constant { value } => Nonlinearity::constant(value.into()),
            NonlinearitySpec::Linear { lambda } => Nonlinearity::linear(lambda.into()),
            NonlinearitySpec::Power { n, coefficient } => Nonlinearity::power(n, coefficient.into()),
        }
    }
}

/// Sampled `C(t)`: per probe time, the larger of the Lipschitz ratio and the
/// linear-growth ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    pub times: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub growth: Vec<f64>,
    pub values: Vec<f64>,
}

impl LipschitzProfile {
    pub fn constant(c: f64) -> Self {
        LipschitzProfile { times: vec![0.0], lipschitz: vec![c], growth: vec![c], values: vec![c] }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Probes of `ball`: the centre, the two boundary points on the ray through
/// the centre (`0` for the default ball), then random smooth perturbations with
/// `H_{z,zeta}` size uniform in `[0, 0.9 R]`.
pub fn ball_probes(ball: &Ball, count: usize, rng: &CounterRng) -> Vec<Field> {
    let grid = *ball.center.grid();
    let half = grid.half_width();
    let center_norm = h_zz_norm(&ball.center, ball.space);
    (0..count)
        .map(|i| {
            if i == 0 {
                return ball.center.clone();
            }
            if i <= 2 && center_norm > 0.0 {
                let s = if i == 1 { -1.0 } else { 1.0 };
                return ball.center.scale((1.0 + s * ball.radius / center_norm).into());
            }
            let mut r = rng.at(i as u64, 0);
            let mut bump = Field::zeros(grid);
            for _ in 0..3 {
                let center: Vec<f64> = (0..grid.dim()).map(|_| r.random_range(-half / 4.0..half / 4.0)).collect();
                let momentum: Vec<f64> = (0..grid.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
                let width = r.random_range(0.5..2.0);
                let phase = Complex64::from_polar(1.0, r.random_range(0.0..std::f64::consts::TAU));
                bump.axpy(phase, &Field::gaussian(grid, &center, width, &momentum, 1.0));
            }
            let size = 0.9 * ball.radius * r.random::<f64>();
            let norm = h_zz_norm(&bump, ball.space);
            let mut v = ball.center.clone();
            if norm > 0.0 {
                v.axpy((size / norm).into(), &bump);
            }
            v
        })
        .collect()
}

/// Per time, the max over probe pairs of `||g(v1) - g(v2)|| / ||v1 - v2||` and
/// over probes of `||g(v)|| / (1 + ||v||)`, all in `H_{z,zeta}`.
pub fn lip_constants(g: &Nonlinearity, ball: Option<&Ball>, probes: &[Field], times: &[f64], space: HSpace) -> Result<LipschitzProfile> {
    if let Some(ball) = ball {
        for (index, p) in probes.iter().enumerate() {
            let distance = ball.distance(p);
            if distance > ball.radius * (1.0 + 1e-12) {
                return Err(Error::ProbeOutsideBall { index, distance, radius: ball.radius });
            }
        }
    }
    let norms: Vec<f64> = probes.iter().map(|p| h_zz_norm(p, space)).collect();
    let per_time = map_indices(times.len(), |k| -> Result<(f64, f64)> {
        let t = times[k];
        let images = probes.iter().map(|p| g.apply(t, p)).collect::<Result<Vec<_>>>()?;
        let gnorms: Vec<f64> = images.iter().map(|f| h_zz_norm(f, space)).collect();
        let growth = gnorms.iter().zip(&norms).map(|(gn, n)| gn / (1.0 + n)).fold(0.0, f64::max);
        let mut lip: f64 = 0.0;
        for a in 0..probes.len() {
            for b in a + 1..probes.len() {
                let den = h_zz_norm(&(&probes[a] - &probes[b]), space);
                if den > 0.0 {
                    lip = lip.max(h_zz_norm(&(&images[a] - &images[b]), space) / den);
                }
            }
        }
        Ok((lip, growth))
    });
    let mut profile = LipschitzProfile { times: times.to_vec(), lipschitz: vec![], growth: vec![], values: vec![] };
    for entry in per_time {
        let (l, gr) = entry?;
        profile.lipschitz.push(l);
        profile.growth.push(gr);
        profile.values.push(l.max(gr));
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn setup(radius_scale: f64) -> (Ball, Vec<Field>, HSpace) {
        let g = Grid::desk(1);
        let space = HSpace::new(0, 1).unwrap();
        let u0 = Field::gaussian(g, &[0.0], 1.0, &[0.0], 1.0);
        let mut ball = Ball::around(&u0, space);
        ball.radius *= radius_scale;
        let probes = ball_probes(&ball, 12, &CounterRng::new(3));
        (ball, probes, space)
    }

    #[test]
    fn zero_and_linear_constants() {
        let (ball, probes, space) = setup(1.0);
        let z = lip_constants(&Nonlinearity::zero(), Some(&ball), &probes, &[0.0, 0.5], space).unwrap();
        assert_eq!(z.sup(), 0.0);
        let l = lip_constants(&Nonlinearity::linear(Complex64::new(0.0, -1.5)), Some(&ball), &probes, &[0.0], space).unwrap();
        assert!((l.lipschitz[0] - 1.5).abs() < 1e-12 && (l.sup() - 1.5).abs() < 1e-12);
        assert!(l.growth[0] < 1.5);
    }

    #[test]
    fn square_scales_with_radius() {
        let sq = Nonlinearity::power(2, 1.0.into());
        let (b1, p1, space) = setup(1.0);
        let (b2, p2, _) = setup(2.0);
        let c1 = lip_constants(&sq, Some(&b1), &p1, &[0.0], space).unwrap().sup();
        let c2 = lip_constants(&sq, Some(&b2), &p2, &[0.0], space).unwrap().sup();
        assert!(c1.is_finite() && c2 >= c1 && c2 <= 2.0 * c1 * 1.2, "{c1} {c2}");
    }

    #[test]
    fn probes_outside_ball_are_rejected() {
        let (ball, mut probes, space) = setup(1.0);
        probes.push(ball.center.scale(3.0.into()));
        let err = lip_constants(&Nonlinearity::zero(), Some(&ball), &probes, &[0.0], space).unwrap_err();
        assert!(matches!(err, Error::ProbeOutsideBall { index: 12, .. }));
    }

    #[test]
    fn nonfinite_output_is_an_error() {
        let g = Grid::desk(1);
        let bad = Nonlinearity::custom("blowup", |_, _, u| u / 0.0);
        assert!(matches!(bad.apply(0.0, &Field::zeros(g)), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn spec_round_trip() {
        let s: NonlinearitySpec = toml::from_str("kind = \"power\"\nn = 2").unwrap();
        assert_eq!(s, NonlinearitySpec::Power { n: 2, coefficient: 1.0 });
        assert_eq!(s.build().spec(), Some(s));
    }
}
