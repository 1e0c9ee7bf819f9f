//! Periodic spectral grid on `[-L, L)^d` with FFT transforms and exact
//! summation-by-parts spectral derivatives.
//!
//! Fourier-coefficient convention: `fft_forward` produces coefficients
//! `c~_m = (1/n^d) Σ_j u_j e^{-2πi j·m/n}` in FFT index layout. The physical
//! expansion is `u(x_j) = Σ_ν c_ν e^{i k_ν·x_j}` with `k_ν = ν π / L`,
//! `ν ∈ {-n/2, ..., n/2-1}` per axis, and `c_ν = (-1)^{m_1+...+m_d} c~_m`.
//! The unpaired Nyquist mode `ν = -n/2` is annihilated by every derivative.

use crate::error::{Error, Result};
use crate::C64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("half_width", &self.half_width)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n && self.half_width == other.half_width
    }
}

impl Grid {
    pub fn new(d: usize, n: usize, half_width: f64) -> Result<Grid> {
        if d == 0 || d > 2 {
            return Err(Error::UnsupportedDimension { d, what: "Grid" });
        }
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be a power of two >= 4, got {n}"
            )));
        }
        if half_width <= 0.0 {
            return Err(Error::InvalidParameter("half_width must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            d,
            n,
            half_width,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    /// Total number of grid points `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.d as i32)
    }

    /// Axis coordinate of 1d index `j`.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Point coordinates of a flat row-major index.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [self.coord(idx), 0.0],
            _ => [self.coord(idx / self.n), self.coord(idx % self.n)],
        }
    }

    /// Signed integer frequency of FFT slot `m`.
    pub fn freq_index(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Wavenumber of FFT slot `m` along one axis: `ν π / L`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        self.freq_index(m) as f64 * std::f64::consts::PI / self.half_width
    }

    /// Wavenumber vector of a flat row-major spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [self.wavenumber(idx), 0.0],
            _ => [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)],
        }
    }

    /// Largest resolved wavenumber magnitude along one axis (Nyquist).
    pub fn k_max(&self) -> f64 {
        self.n as f64 / 2.0 * std::f64::consts::PI / self.half_width
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    /// Sign relating FFT-layout coefficients to physical ones:
    /// `c_ν = phys_phase(idx) * c~_m`.
    pub fn phys_phase(&self, idx: usize) -> f64 {
        let parity = match self.d {
            1 => idx,
            _ => idx / self.n + idx % self.n,
        };
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn fft_axis(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        match self.d {
            1 => plan.process(data),
            _ => {
                // rows
                for row in data.chunks_exact_mut(n) {
                    plan.process(row);
                }
                // columns via gather/scatter
                let mut col = vec![C64::new(0.0, 0.0); n];
                for c in 0..n {
                    for r in 0..n {
                        col[r] = data[r * n + c];
                    }
                    plan.process(&mut col);
                    for r in 0..n {
                        data[r * n + c] = col[r];
                    }
                }
            }
        }
    }

    /// In-place forward transform to normalized coefficients `c~`.
    pub fn fft_forward(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        self.fft_axis(data, &self.fwd.clone());
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place inverse transform from coefficients `c~` to grid values.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        self.fft_axis(data, &self.inv.clone());
    }

    /// Multiply coefficients by `(i k_axis)`, zeroing the Nyquist slot.
    pub fn spectral_derivative_coeffs(&self, coeffs: &mut [C64], axis: usize) {
        debug_assert!(axis < self.d);
        let n = self.n;
        for (idx, v) in coeffs.iter_mut().enumerate() {
            let m = match (self.d, axis) {
                (1, _) => idx,
                (_, 0) => idx / n,
                _ => idx % n,
            };
            if self.is_nyquist(m) {
                *v = C64::new(0.0, 0.0);
            } else {
                *v *= C64::new(0.0, self.wavenumber(m));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mode(grid: &Grid, nu: i64) -> Vec<C64> {
        (0..grid.len())
            .map(|j| {
                let x = grid.point(j)[0];
                C64::from_polar(1.0, nu as f64 * std::f64::consts::PI / grid.half_width * x)
            })
            .collect()
    }

    #[test]
    fn forward_picks_single_mode() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let mut u = mode(&g, 3);
        g.fft_forward(&mut u);
        for (m, c) in u.iter().enumerate() {
            let phys = c * g.phys_phase(m);
            if g.freq_index(m) == 3 {
                assert_relative_eq!(phys.re, 1.0, epsilon = 1e-12);
                assert_relative_eq!(phys.im, 0.0, epsilon = 1e-12);
            } else {
                assert!(phys.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let g = Grid::new(2, 16, 3.0).unwrap();
        let u: Vec<C64> = (0..g.len())
            .map(|j| C64::new((j as f64 * 0.37).sin(), (j as f64 * 0.11).cos()))
            .collect();
        let mut c = u.clone();
        g.fft_forward(&mut c);
        let sum_c: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let sum_u: f64 = u.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(sum_u * g.cell_volume(), g.box_volume() * sum_c, max_relative = 1e-12);
        let mut back = c.clone();
        g.fft_inverse(&mut back);
        for (a, b) in u.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_mode_and_summation_by_parts() {
        let g = Grid::new(1, 64, 5.0).unwrap();
        let k = 4.0 * std::f64::consts::PI / 5.0;
        let mut c = mode(&g, 4);
        g.fft_forward(&mut c);
        g.spectral_derivative_coeffs(&mut c, 0);
        g.fft_inverse(&mut c);
        for (j, v) in c.iter().enumerate() {
            let x = g.coord(j);
            let expect = C64::new(0.0, k) * C64::from_polar(1.0, k * x);
            assert!((v - expect).norm() < 1e-10);
        }
        // <du, v> = -<u, dv> exactly for random fields
        let u: Vec<C64> = (0..g.len())
            .map(|j| C64::new((j as f64).sin(), (1.3 * j as f64).cos()))
            .collect();
        let v: Vec<C64> = (0..g.len())
            .map(|j| C64::new((0.7 * j as f64).cos(), (2.1 * j as f64).sin()))
            .collect();
        let deriv = |f: &Vec<C64>| {
            let mut c = f.clone();
            g.fft_forward(&mut c);
            g.spectral_derivative_coeffs(&mut c, 0);
            g.fft_inverse(&mut c);
            c
        };
        let du = deriv(&u);
        let dv = deriv(&v);
        let ip = |a: &Vec<C64>, b: &Vec<C64>| -> C64 {
            a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
        };
        let lhs = ip(&du, &v);
        let rhs = -ip(&u, &dv);
        assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }
}
