//! Complex states on the spectral grid: norms, wave packets, serialization.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::C64;
use std::io::{Read, Write};

/// A complex-valued state sampled on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Field {
        Field { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> C64) -> Field {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(&p[..grid.d])
            })
            .collect();
        Field { grid: grid.clone(), values }
    }

    /// Grid delta at the node closest to `x0`, scaled so it integrates to one.
    pub fn delta_at(grid: &Grid, x0: &[f64]) -> Field {
        let mut idx = 0;
        let mut best = f64::INFINITY;
        for j in 0..grid.len() {
            let p = grid.point(j);
            let dist: f64 = (0..grid.d).map(|i| (p[i] - x0[i]).powi(2)).sum();
            if dist < best {
                best = dist;
                idx = j;
            }
        }
        let mut f = Field::zeros(grid);
        f.values[idx] = C64::new(1.0 / grid.cell_volume(), 0.0);
        f
    }

    pub fn coeffs(&self) -> Vec<C64> {
        let mut c = self.values.clone();
        self.grid.fft_forward(&mut c);
        c
    }

    pub fn from_coeffs(grid: &Grid, mut coeffs: Vec<C64>) -> Field {
        grid.fft_inverse(&mut coeffs);
        Field { grid: grid.clone(), values: coeffs }
    }

    pub fn scale(&mut self, s: C64) {
        for v in self.values.iter_mut() {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, a: C64, other: &Field) {
        for (v, w) in self.values.iter_mut().zip(other.values.iter()) {
            *v += a * w;
        }
    }

    pub fn conj(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    /// Spatial gradient along `axis` via the spectral derivative.
    pub fn gradient_axis(&self, axis: usize) -> Field {
        let mut c = self.coeffs();
        self.grid.spectral_derivative_coeffs(&mut c, axis);
        Field::from_coeffs(&self.grid, c)
    }

    /// Unweighted L2 inner product `Σ u v̄ dx^d`.
    pub fn inner(&self, other: &Field) -> C64 {
        let s: C64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(u, v)| u * v.conj())
            .sum();
        s * self.grid.cell_volume()
    }

    /// Weighted inner product `Σ w u v̄ dx^d`.
    pub fn inner_weighted(&self, other: &Field, weight: &[f64]) -> C64 {
        let s: C64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .zip(weight.iter())
            .map(|((u, v), &w)| u * v.conj() * w)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        norm_lq(self, 2.0, None).expect("q = 2 is valid")
    }

    pub fn norm_l2_weighted(&self, weight: &[f64]) -> f64 {
        self.inner_weighted(self, weight).re.max(0.0).sqrt()
    }
}

/// Riemann-sum `L^q` norm; `q = inf` gives the max modulus; `weight` (the
/// volume density `sqrt(det g)`) multiplies the measure when present.
pub fn norm_lq(u: &Field, q: f64, weight: Option<&[f64]>) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::InvalidParameter(format!("L^q norm needs q >= 1, got {q}")));
    }
    if q.is_infinite() {
        return Ok(u.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let sum: f64 = match weight {
        None => u.values.iter().map(|v| v.norm().powf(q)).sum(),
        Some(w) => u
            .values
            .iter()
            .zip(w.iter())
            .map(|(v, &wi)| wi * v.norm().powf(q))
            .sum(),
    };
    Ok((sum * u.grid.cell_volume()).powf(1.0 / q))
}

/// Flat Sobolev norm `||<k>^s û||_{l^2}` with the grid's Parseval
/// normalization, so `s = 0` coincides with the unweighted L2 norm.
pub fn norm_hs(u: &Field, s: f64) -> f64 {
    let c = u.coeffs();
    let mut sum = 0.0;
    for (idx, v) in c.iter().enumerate() {
        let k = u.grid.wavevector(idx);
        let k2: f64 = k.iter().take(u.grid.d).map(|x| x * x).sum();
        sum += (1.0 + k2).powf(s) * v.norm_sqr();
    }
    (u.grid.box_volume() * sum).sqrt()
}

/// L2-normalized Gaussian wave packet centered at `(x0, xi0/h)` with spatial
/// width `sqrt(h)`. Refuses packets the grid cannot resolve.
pub fn coherent_state(grid: &Grid, x0: &[f64], xi0: &[f64], h: f64) -> Result<Field> {
    if !(0.0 < h && h <= 1.0) {
        return Err(Error::InvalidParameter(format!("h must be in (0,1], got {h}")));
    }
    let width = h.sqrt();
    if width < 4.0 * grid.dx() {
        return Err(Error::UnderResolved { width, min_width: 4.0 * grid.dx() });
    }
    for i in 0..grid.d {
        if x0[i].abs() > grid.half_width {
            return Err(Error::InvalidParameter("packet center outside the box".into()));
        }
        if xi0[i].abs() / h + 3.0 / width > grid.k_max() {
            return Err(Error::SymbolSupportExceedsLattice);
        }
    }
    let two_l = 2.0 * grid.half_width;
    let mut f = Field::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for i in 0..grid.d {
            // minimal-image displacement keeps the packet smooth across the seam
            let mut dxi = x[i] - x0[i];
            dxi -= two_l * (dxi / two_l).round();
            r2 += dxi * dxi;
            phase += xi0[i] * dxi / h;
        }
        C64::from_polar((-r2 / (2.0 * h)).exp(), phase)
    });
    let n = f.norm_l2();
    f.scale(C64::new(1.0 / n, 0.0));
    Ok(f)
}

const MAGIC: &[u8; 8] = b"DSFIELD1";

/// Binary layout (little-endian): magic `DSFIELD1`, u64 d, u64 n, f64 L,
/// then `n^d` interleaved (re, im) f64 pairs in row-major order.
pub fn write_binary<W: Write>(u: &Field, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(u.grid.d as u64).to_le_bytes())?;
    w.write_all(&(u.grid.n as u64).to_le_bytes())?;
    w.write_all(&u.grid.half_width.to_le_bytes())?;
    for v in &u.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Field> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidParameter("bad field magic".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let d = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let half_width = f64::from_le_bytes(b8);
    let grid = Grid::new(d, n, half_width)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        values.push(C64::new(re, im));
    }
    Ok(Field { grid, values })
}

/// CSV dump `x[, y], re, im`, intended for small grids.
pub fn write_csv<W: Write>(u: &Field, mut w: W) -> Result<()> {
    if u.grid.d == 1 {
        writeln!(w, "x,re,im")?;
    } else {
        writeln!(w, "x,y,re,im")?;
    }
    for (idx, v) in u.values.iter().enumerate() {
        let p = u.grid.point(idx);
        if u.grid.d == 1 {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", p[0], v.re, v.im)?;
        } else {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", p[0], p[1], v.re, v.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_modulus_lq_norm() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let a = 1.7;
        let u = Field::from_fn(&g, |x| C64::from_polar(a, x[0]));
        for q in [1.0, 2.0, 4.0] {
            let expect = a * (2.0f64 * 3.0).powf(2.0 / q);
            assert_relative_eq!(norm_lq(&u, q, None).unwrap(), expect, max_relative = 1e-12);
        }
        assert_relative_eq!(norm_lq(&u, f64::INFINITY, None).unwrap(), a, max_relative = 1e-12);
        assert!(norm_lq(&u, 0.5, None).is_err());
    }

    #[test]
    fn hs_norm_of_single_mode() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let k0 = 3.0 * std::f64::consts::PI / 4.0;
        let u = Field::from_fn(&g, |x| C64::from_polar(1.0, k0 * x[0]));
        let expect = (1.0 + k0 * k0).sqrt() * (2.0f64 * 4.0).sqrt();
        assert_relative_eq!(norm_hs(&u, 1.0), expect, max_relative = 1e-12);
        // s = 0 equals L2
        let r = Field::from_fn(&g, |x| C64::new((3.0 * x[0]).sin(), x[0].cos()));
        assert_relative_eq!(norm_hs(&r, 0.0), r.norm_l2(), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_l4_matches_refined_quadrature() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let u = Field::from_fn(&g, |x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let coarse = norm_lq(&u, 4.0, None).unwrap();
        let fine = Grid::new(1, 1024, 8.0).unwrap();
        let uf = Field::from_fn(&fine, |x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let refined = norm_lq(&uf, 4.0, None).unwrap();
        assert_relative_eq!(coarse, refined, max_relative = 1e-10);
    }

    #[test]
    fn coherent_state_contract() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let u = coherent_state(&g, &[0.0], &[0.0], 0.25).unwrap();
        assert_relative_eq!(u.norm_l2(), 1.0, epsilon = 1e-10);
        // centered zero-frequency packet is real and even
        for (idx, v) in u.values.iter().enumerate() {
            assert!(v.im.abs() < 1e-12);
            let mirrored = (g.len() - idx) % g.len();
            assert!((v.re - u.values[mirrored].re).abs() < 1e-10);
        }
        // under-resolved packet refused
        assert!(coherent_state(&g, &[0.0], &[0.0], 1e-4).is_err());
    }

    #[test]
    fn binary_roundtrip() {
        let g = Grid::new(2, 8, 2.0).unwrap();
        let u = Field::from_fn(&g, |x| C64::new(x[0], x[1] * x[1]));
        let mut buf = Vec::new();
        write_binary(&u, &mut buf).unwrap();
        let v = read_binary(&buf[..]).unwrap();
        assert_eq!(u, v);
    }
}
