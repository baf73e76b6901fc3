use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::grid::{Field, Grid};

/// Frequency samples of a field at the grid nodes `ξ_k`, FFT-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Spectrum { grid, values }
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

    /// Multiplies every node by `m(ξ_k)`.
    pub fn multiply_by(&mut self, m: impl Fn(&[f64]) -> Complex64) {
        let d = self.grid.dim();
        for (k, v) in self.values.iter_mut().enumerate() {
            *v *= m(&self.grid.freq_point(k)[..d]);
        }
    }

    /// Discrete `L^2` norm of the spectrum, `(Δξ^d Σ |F|^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.freq_cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    type Cache = Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>;
    static PLANS: OnceLock<Cache> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
    let forward = direction == FftDirection::Forward;
    if let Some(p) = guard.1.get(&(n, forward)) {
        return Arc::clone(p);
    }
    let p = guard.0.plan_fft(n, direction);
    guard.1.insert((n, forward), Arc::clone(&p));
    p
}

/// In-place unnormalized DFT along every axis.
fn fft_nd(grid: &Grid, data: &mut [Complex64], direction: FftDirection) {
    let n = grid.n();
    let fft = plan(n, direction);
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // rows (axis 1 contiguous)
            fft.process(data);
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    column[r] = data[r * n + c];
                }
                fft.process(&mut column);
                for r in 0..n {
                    data[r * n + c] = column[r];
                }
            }
        }
    }
}

/// `(-1)^{k_1 + ... + k_d}`: the phase `e^{i L ξ_k}` from the grid origin at `-L`.
fn origin_sign(grid: &Grid, idx: usize) -> f64 {
    let a = grid.axis_indices(idx);
    let parity: usize = (0..grid.dim()).map(|ax| a[ax]).sum();
    if parity % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Trapezoidal approximation of `∫ e^{-i x·ξ} f(x) dx` at the grid frequencies.
pub fn forward_transform(f: &Field) -> Spectrum {
    let grid = *f.grid();
    let mut data = f.values().to_vec();
    fft_nd(&grid, &mut data, FftDirection::Forward);
    let h = grid.cell_volume();
    for (k, v) in data.iter_mut().enumerate() {
        *v *= h * origin_sign(&grid, k);
    }
    Spectrum { grid, values: data }
}

/// `(2π)^{-d} Σ_k e^{i x·ξ_k} F(ξ_k) Δξ^d`, the exact inverse of [`forward_transform`].
pub fn inverse_transform(s: &Spectrum) -> Field {
    let grid = *s.grid();
    let mut data: Vec<Complex64> =
        s.values().iter().enumerate().map(|(k, v)| v * origin_sign(&grid, k)).collect();
    fft_nd(&grid, &mut data, FftDirection::Inverse);
    // (2π)^{-d} (π/L)^d = (2L)^{-d}
    let scale = crate::conventions::inverse_factor(grid.dim()) * grid.freq_cell_volume();
    for v in data.iter_mut() {
        *v *= scale;
    }
    Field::from_values(grid, data).unwrap_or_else(|_| Field::zeros(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::l2_norm;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = Grid::new(1, 64, 8.0).unwrap();
        let s = forward_transform(&Field::zeros(g));
        assert!(s.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn plane_wave_is_scaled_delta() {
        let g = Grid::new(1, 64, 8.0).unwrap();
        for k in [0usize, 3, 40] {
            let xi = g.freq(k);
            let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi * x[0]));
            let s = forward_transform(&f);
            for (m, v) in s.values().iter().enumerate() {
                let expected = if m == k { 2.0 * g.half_width() } else { 0.0 };
                assert!((v - c(expected)).norm() < 1e-11, "k={k} m={m} v={v}");
            }
        }
    }

    #[test]
    fn gaussian_pair_matches_closed_form() {
        // oracle: ∫ e^{-ixξ} e^{-x²/2} dx = √(2π) e^{-ξ²/2}
        let g = Grid::new(1, 256, 16.0).unwrap();
        let f = Field::from_real_fn(g, |x| (-x[0] * x[0] / 2.0).exp());
        let s = forward_transform(&f);
        for (k, v) in s.values().iter().enumerate() {
            let xi = g.freq(k);
            let exact = (2.0 * PI).sqrt() * (-xi * xi / 2.0).exp();
            assert!((v - c(exact)).norm() < 1e-8);
        }
    }

    #[test]
    fn round_trip_and_parseval_2d() {
        let g = Grid::new(2, 32, 6.0).unwrap();
        let f = Field::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp(), x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp())
        });
        let s = forward_transform(&f);
        let back = inverse_transform(&s);
        let err = (&back - &f).max_abs();
        assert!(err < 1e-13, "{err}");
        let lhs = l2_norm(&f).powi(2);
        let rhs = crate::conventions::inverse_factor(2) * s.l2_norm().powi(2);
        assert!(((lhs - rhs) / lhs).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_gaussian_pair() {
        let g = Grid::new(2, 64, 10.0).unwrap();
        let f = Field::from_real_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
        let s = forward_transform(&f);
        for (k, v) in s.values().iter().enumerate() {
            let xi = g.freq_point(k);
            let exact = 2.0 * PI * (-(xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp();
            assert!((v - c(exact)).norm() < 1e-8);
        }
    }
}
