use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point of `R^d` with `d <= 2`; unused trailing coordinates are zero.
pub type Point = [f64; 2];

/// Uniform periodic grid on `[-L, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        Ok(Grid { dim, n, half_width })
    }

    /// Desk-scale default for the given dimension.
    pub fn desk(dim: usize) -> Self {
        match dim {
            1 => Grid { dim: 1, n: 256, half_width: 16.0 },
            _ => Grid { dim: 2, n: 128, half_width: 12.0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn freq_spacing(&self) -> f64 {
        PI / self.half_width
    }

    /// Volume element `h^d` of the spatial trapezoidal rule.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Volume element `(π/L)^d` of the frequency quadrature.
    pub fn freq_cell_volume(&self) -> f64 {
        self.freq_spacing().powi(self.dim as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Signed wavenumber of the FFT-ordered index `k`, in `[-n/2, n/2)`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Frequency `ξ_k = π k / L` of the FFT-ordered axis index.
    pub fn freq(&self, k: usize) -> f64 {
        self.wavenumber(k) as f64 * self.freq_spacing()
    }

    /// Per-axis indices of the flat (row-major) index.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flat_index(&self, axes: [usize; 2]) -> usize {
        match self.dim {
            1 => axes[0],
            _ => axes[0] * self.n + axes[1],
        }
    }

    pub fn point(&self, idx: usize) -> Point {
        let a = self.axis_indices(idx);
        match self.dim {
            1 => [self.coord(a[0]), 0.0],
            _ => [self.coord(a[0]), self.coord(a[1])],
        }
    }

    /// Frequency node of the flat FFT-ordered index.
    pub fn freq_point(&self, idx: usize) -> Point {
        let a = self.axis_indices(idx);
        match self.dim {
            1 => [self.freq(a[0]), 0.0],
            _ => [self.freq(a[0]), self.freq(a[1])],
        }
    }

    /// True when the flat frequency index touches the unpaired Nyquist row.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let a = self.axis_indices(idx);
        (0..self.dim).any(|ax| a[ax] == self.n / 2)
    }

    /// Flat index of the frequency node `-ξ` (Nyquist nodes map to themselves).
    pub fn negated_freq_index(&self, idx: usize) -> usize {
        let a = self.axis_indices(idx);
        let neg = |k: usize| (self.n - k) % self.n;
        match self.dim {
            1 => neg(a[0]),
            _ => self.flat_index([neg(a[0]), neg(a[1])]),
        }
    }

    /// Flat FFT-ordered index of a frequency point lying on the grid, if any.
    pub fn freq_index_of(&self, xi: &[f64]) -> Option<usize> {
        let mut axes = [0usize; 2];
        for (ax, slot) in axes.iter_mut().enumerate().take(self.dim) {
            let k = xi[ax] / self.freq_spacing();
            let kr = k.round();
            if (k - kr).abs() > 1e-9 || kr < -(self.n as f64) / 2.0 || kr >= self.n as f64 / 2.0 {
                return None;
            }
            *slot = (kr as i64).rem_euclid(self.n as i64) as usize;
        }
        Some(self.flat_index(axes))
    }

    /// Grid with the same domain and twice the resolution per axis.
    pub fn refined(&self) -> Self {
        Grid { n: self.n * 2, ..*self }
    }
}

/// Complex samples of a function on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(Field { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Field { grid, values }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// `amplitude · exp(-|x - center|^2 / (2 width^2) + i momentum·x)`.
    pub fn gaussian(grid: Grid, center: &[f64], width: f64, momentum: &[f64], amplitude: f64) -> Self {
        Self::from_fn(grid, |x| {
            let mut r2 = 0.0;
            let mut phase = 0.0;
            for ax in 0..x.len() {
                let c = center.get(ax).copied().unwrap_or(0.0);
                let p = momentum.get(ax).copied().unwrap_or(0.0);
                r2 += (x[ax] - c).powi(2);
                phase += p * x[ax];
            }
            Complex64::from_polar(amplitude * (-r2 / (2.0 * width * width)).exp(), phase)
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: Complex64, other: &Field) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// Pointwise product.
    pub fn pointwise(&self, other: &Field) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// Largest sample modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        debug_assert_eq!(self.grid, rhs.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        debug_assert_eq!(self.grid, rhs.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<Complex64> for &Field {
    type Output = Field;
    fn mul(self, rhs: Complex64) -> Field {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 64, 1.0).is_err());
        assert!(Grid::new(1, 100, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 64, 0.0).is_err());
        assert!(Grid::new(2, 8, 1.0).is_ok());
    }

    #[test]
    fn frequency_nodes() {
        let g = Grid::new(1, 8, 4.0).unwrap();
        let xs: Vec<f64> = (0..8).map(|k| g.freq(k) / g.freq_spacing()).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        assert_eq!(g.coord(0), -4.0);
        assert_eq!(g.negated_freq_index(1), 7);
        assert_eq!(g.negated_freq_index(0), 0);
        assert!(g.is_nyquist(4));
        assert_eq!(g.freq_index_of(&[-2.0 * g.freq_spacing()]), Some(6));
        assert_eq!(g.freq_index_of(&[0.3]), None);
    }

    #[test]
    fn two_dimensional_indexing_round_trips() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.flat_index(g.axis_indices(idx)), idx);
            let neg = g.negated_freq_index(idx);
            if !g.is_nyquist(idx) {
                let (a, b) = (g.freq_point(idx), g.freq_point(neg));
                assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_values_checks_length_and_finiteness() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        assert!(Field::from_values(g, vec![Complex64::new(0.0, 0.0); 7]).is_err());
        let mut v = vec![Complex64::new(0.0, 0.0); 8];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(Field::from_values(g, v).is_err());
    }
}
