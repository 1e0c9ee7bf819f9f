//! The discrete Laplace–Beltrami operator `P = -Δ_g` in divergence form,
//! `P u = -(1/√ḡ) Σ_i ∂_i(√ḡ g^{ij} ∂_j u)`, with spectral derivatives.
//!
//! Because summation by parts is exact for the spectral derivative (skew
//! matrix with the Nyquist slot zeroed), P is self-adjoint and nonnegative
//! with respect to the `√ḡ`-weighted inner product up to roundoff.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::metric::Metric;
use crate::C64;
use nalgebra::DMatrix;

/// Pointwise geometric coefficients of a (metric, grid) pairing, built once
/// and shared by every operator application.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub metric: Metric,
    pub grid: Grid,
    /// `√ḡ` at grid points.
    pub sqrt_g: Vec<f64>,
    pub inv_sqrt_g: Vec<f64>,
    /// `√ḡ g^{ii}` at grid points (conformal metrics: equal on all axes).
    pub flux_coef: Vec<f64>,
    /// Conformal factor `a` with `g^{ij} = a δ_ij`.
    pub conformal: Vec<f64>,
}

impl Geometry {
    pub fn new(metric: &Metric, grid: &Grid) -> Result<Geometry> {
        if metric.d != grid.d {
            return Err(Error::DimensionMismatch(format!(
                "metric d = {} vs grid d = {}",
                metric.d, grid.d
            )));
        }
        if !metric.is_flat() && metric.l_flat > grid.half_width / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "flattening radius {} exceeds half the box half-width {}",
                metric.l_flat,
                grid.half_width / 2.0
            )));
        }
        let len = grid.len();
        let mut sqrt_g = Vec::with_capacity(len);
        let mut inv_sqrt_g = Vec::with_capacity(len);
        let mut flux_coef = Vec::with_capacity(len);
        let mut conformal = Vec::with_capacity(len);
        for idx in 0..len {
            let p = grid.point(idx);
            let x = &p[..grid.d];
            let w = metric.sqrt_det_g(x);
            let a = metric.conformal(x);
            sqrt_g.push(w);
            inv_sqrt_g.push(1.0 / w);
            flux_coef.push(w * a);
            conformal.push(a);
        }
        Ok(Geometry {
            metric: metric.clone(),
            grid: grid.clone(),
            sqrt_g,
            inv_sqrt_g,
            flux_coef,
            conformal,
        })
    }

    /// `P u` for a field on this geometry's grid.
    pub fn apply_p(&self, u: &Field) -> Result<Field> {
        if u.grid != self.grid {
            return Err(Error::GridMismatch("apply_p".into()));
        }
        let grid = &self.grid;
        let coeffs = u.coeffs();
        let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
        for axis in 0..grid.d {
            let mut dc = coeffs.clone();
            grid.spectral_derivative_coeffs(&mut dc, axis);
            grid.fft_inverse(&mut dc);
            for (v, &c) in dc.iter_mut().zip(self.flux_coef.iter()) {
                *v *= c;
            }
            grid.fft_forward(&mut dc);
            grid.spectral_derivative_coeffs(&mut dc, axis);
            for (a, b) in acc.iter_mut().zip(dc.iter()) {
                *a += b;
            }
        }
        grid.fft_inverse(&mut acc);
        for (v, &w) in acc.iter_mut().zip(self.inv_sqrt_g.iter()) {
            *v *= -w;
        }
        Ok(Field { grid: grid.clone(), values: acc })
    }

    /// Weighted inner product `<u, v>_ḡ`.
    pub fn inner(&self, u: &Field, v: &Field) -> C64 {
        u.inner_weighted(v, &self.sqrt_g)
    }

    pub fn norm(&self, u: &Field) -> f64 {
        u.norm_l2_weighted(&self.sqrt_g)
    }

    /// Upper bound for the spectrum of P by power iteration (seeded,
    /// deterministic), inflated by 2%.
    pub fn lambda_max(&self) -> f64 {
        let mut v = Field::from_fn(&self.grid, |x| {
            C64::new((7.3 * x[0]).sin() + 0.3, (3.1 * x[0] + 1.0).cos())
        });
        // the top of the spectrum is clustered, so demand a tight Rayleigh
        // quotient stall before trusting the estimate
        let mut lam = 0.0;
        for it in 0..600 {
            let mut w = self.apply_p(&v).expect("grid matches");
            let n = self.norm(&w);
            if n == 0.0 {
                break;
            }
            w.scale(C64::new(1.0 / n, 0.0));
            let new_lam = self.inner(&self.apply_p(&w).expect("grid matches"), &w).re;
            v = w;
            if it > 30 && (new_lam - lam).abs() <= 1e-7 * new_lam.abs() {
                lam = new_lam;
                break;
            }
            lam = new_lam;
        }
        // flat-top bound as a sanity floor: lam_max <= max(a) * d * k_max^2
        let sup = self
            .conformal
            .iter()
            .fold(0.0f64, |m, &a| m.max(a))
            * self.grid.d as f64
            * self.grid.k_max().powi(2);
        (lam * 1.02).min(sup * 1.0001).max(lam)
    }

    /// Dense symmetric matrix `M = D^{1/2} P D^{-1/2}` (D = diag √ḡ) in the
    /// flat l2 frame; its eigenvectors pulled back by `D^{-1/2}` are
    /// ḡ-orthonormal eigenfunctions of P.
    pub fn dense_symmetric_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut basis = Field::zeros(&self.grid);
        for j in 0..n {
            basis.values[j] = C64::new(self.inv_sqrt_g[j].sqrt(), 0.0);
            let pu = self.apply_p(&basis).expect("grid matches");
            for i in 0..n {
                m[(i, j)] = pu.values[i].re * self.sqrt_g[i].sqrt();
            }
            basis.values[j] = C64::new(0.0, 0.0);
        }
        // symmetrize away roundoff
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}

/// Energy integrand machinery shared by `propagate::energy` and tests:
/// `Σ √ḡ g^{ij} ∂_i u ∂_j ū dx^d` (real part).
pub fn dirichlet_energy(geom: &Geometry, u: &Field) -> f64 {
    let mut total = 0.0;
    for axis in 0..geom.grid.d {
        let du = u.gradient_axis(axis);
        let s: f64 = du
            .values
            .iter()
            .zip(geom.flux_coef.iter())
            .map(|(v, &c)| c * v.norm_sqr())
            .sum();
        total += s;
    }
    total * geom.grid.cell_volume()
}
