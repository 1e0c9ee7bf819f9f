//! Semiclassical functional calculus for `P = -Δ_g`.
//!
//! Two realizations of `φ(h²P)` are kept side by side: an exact dense
//! eigendecomposition ([`SpectralOracle`], affordable at desk scale) and the
//! fast Chebyshev filter ([`ChebCalculus`]) used on every hot path. The
//! module also provides exact discrete left quantization `a(x, hD)`, the
//! one-corrector pseudodifferential expansion of `φ(h²P)`, the dyadic
//! Littlewood–Paley decomposition, and the empirical spectral-localization
//! and operator-norm sweeps.

use crate::error::{Error, Result};
use crate::field::{norm_hs, norm_lq, Field};
use crate::fit::DecayFit;
use crate::grid::Grid;
use crate::metric::SymbolField;
use crate::operator::Geometry;
use crate::probes::{band_limited_random, ProbeFamily};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Bump functions
// ---------------------------------------------------------------------------

/// `e^{-1/u}` mollifier and two derivatives (zero for `u <= 0`).
fn moll(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / u).exp();
    let f1 = f / (u * u);
    let f2 = f * (1.0 / u.powi(4) - 2.0 / u.powi(3));
    (f, f1, f2)
}

/// Smooth transition `B` on [0,1] with `B(0)=0`, `B(1)=1`:
/// `B(u) = f(u) / (f(u) + f(1-u))`, `f(u) = e^{-1/u}`. Returns (B, B', B'').
fn transition(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (f, f1, f2) = moll(u);
    let (gm, gm1, gm2) = moll(1.0 - u);
    let g = f + gm;
    let g1 = f1 - gm1;
    let g2 = f2 + gm2;
    let b = f / g;
    let b1 = f1 / g - f * g1 / (g * g);
    let b2 = f2 / g - 2.0 * f1 * g1 / (g * g) - f * g2 / (g * g)
        + 2.0 * f * g1 * g1 / (g * g * g);
    (b, b1, b2)
}

#[derive(Debug, Clone)]
enum Shape {
    One,
    /// Rise on `left = (l0, l1)` if present, plateau, fall on `right = (r0, r1)`.
    Plateau { left: Option<(f64, f64)>, right: (f64, f64) },
    /// `ψ(λ/4) - ψ(λ)` with `ψ` the fall plateau on (1, 4); support [1, 16].
    DyadicRing,
    /// Sharp indicator of `[lo, hi]` (non-smooth, rejected by the filter).
    Indicator { lo: f64, hi: f64 },
}

/// A bump function `φ: ℝ -> ℝ` with closed-form first and second
/// derivatives, compact support metadata and smoothness flags.
#[derive(Debug, Clone)]
pub struct BumpFunction {
    shape: Shape,
    pub support: (f64, f64),
    pub vanishes_near_zero: bool,
    pub smooth: bool,
}

fn plateau_eval(left: &Option<(f64, f64)>, right: (f64, f64), lam: f64) -> (f64, f64, f64) {
    let (rv, rd1, rd2) = match left {
        None => (1.0, 0.0, 0.0),
        Some((l0, l1)) => {
            let s = 1.0 / (l1 - l0);
            let (b, b1, b2) = transition((lam - l0) * s);
            (b, b1 * s, b2 * s * s)
        }
    };
    let (r0, r1) = right;
    let s = 1.0 / (r1 - r0);
    let (b, b1, b2) = transition((r1 - lam) * s);
    let (fv, fd1, fd2) = (b, -b1 * s, b2 * s * s);
    (
        rv * fv,
        rd1 * fv + rv * fd1,
        rd2 * fv + 2.0 * rd1 * fd1 + rv * fd2,
    )
}

impl BumpFunction {
    pub fn one() -> BumpFunction {
        BumpFunction {
            shape: Shape::One,
            support: (f64::NEG_INFINITY, f64::INFINITY),
            vanishes_near_zero: false,
            smooth: true,
        }
    }

    /// Smooth compactly supported plateau: 0 below `l0`, 1 on `[l1, r0]`,
    /// 0 above `r1`.
    pub fn plateau(l0: f64, l1: f64, r0: f64, r1: f64) -> BumpFunction {
        assert!(l0 < l1 && l1 <= r0 && r0 < r1, "plateau edges must nest");
        BumpFunction {
            shape: Shape::Plateau { left: Some((l0, l1)), right: (r0, r1) },
            support: (l0, r1),
            vanishes_near_zero: l0 > 0.0,
            smooth: true,
        }
    }

    /// Low-pass piece of the dyadic partition: 1 for `λ <= 4`, 0 for `λ >= 16`.
    pub fn low_pass() -> BumpFunction {
        BumpFunction {
            shape: Shape::Plateau { left: None, right: (4.0, 16.0) },
            support: (f64::NEG_INFINITY, 16.0),
            vanishes_near_zero: false,
            smooth: true,
        }
    }

    /// Ring piece `φ(λ) = ψ(λ/4) - ψ(λ)` of the exact dyadic partition
    /// `Id = φ_1(P) + Σ φ(4^{-j} P)`; supported in [1, 16].
    pub fn dyadic_ring() -> BumpFunction {
        BumpFunction {
            shape: Shape::DyadicRing,
            support: (1.0, 16.0),
            vanishes_near_zero: true,
            smooth: true,
        }
    }

    /// Sharp indicator; carried as a negative control for the smoothness
    /// contract of the Chebyshev filter.
    pub fn indicator(lo: f64, hi: f64) -> BumpFunction {
        BumpFunction {
            shape: Shape::Indicator { lo, hi },
            support: (lo, hi),
            vanishes_near_zero: lo > 0.0,
            smooth: false,
        }
    }

    fn eval_all(&self, lam: f64) -> (f64, f64, f64) {
        match &self.shape {
            Shape::One => (1.0, 0.0, 0.0),
            Shape::Plateau { left, right } => plateau_eval(left, *right, lam),
            Shape::DyadicRing => {
                let psi = |l: f64| plateau_eval(&None, (1.0, 4.0), l);
                let (a0, a1, a2) = psi(lam / 4.0);
                let (b0, b1, b2) = psi(lam);
                (a0 - b0, a1 / 4.0 - b1, a2 / 16.0 - b2)
            }
            Shape::Indicator { lo, hi } => {
                let v = if lam >= *lo && lam <= *hi { 1.0 } else { 0.0 };
                (v, 0.0, 0.0)
            }
        }
    }

    pub fn eval(&self, lam: f64) -> f64 {
        self.eval_all(lam).0
    }

    pub fn d1(&self, lam: f64) -> f64 {
        self.eval_all(lam).1
    }

    pub fn d2(&self, lam: f64) -> f64 {
        self.eval_all(lam).2
    }
}

// ---------------------------------------------------------------------------
// Dense spectral oracle
// ---------------------------------------------------------------------------

/// Exact functional calculus from a dense eigendecomposition of the
/// symmetrized operator `D^{1/2} P D^{-1/2}` (D = diag √ḡ).
pub struct SpectralOracle {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
    d_half: Vec<f64>,
    d_half_inv: Vec<f64>,
}

impl SpectralOracle {
    pub fn build(geom: &Geometry) -> SpectralOracle {
        let m = geom.dense_symmetric_matrix();
        let eig = nalgebra::SymmetricEigen::new(m);
        SpectralOracle {
            grid: geom.grid.clone(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
            d_half: geom.sqrt_g.iter().map(|w| w.sqrt()).collect(),
            d_half_inv: geom.sqrt_g.iter().map(|w| 1.0 / w.sqrt()).collect(),
        }
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Apply `f(P)` exactly: `Σ_j f(λ_j) <u, e_j>_ḡ e_j`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64, u: &Field) -> Result<Field> {
        if u.grid != self.grid {
            return Err(Error::GridMismatch("oracle_apply".into()));
        }
        let n = self.grid.len();
        let w_re = DVector::from_iterator(
            n,
            u.values.iter().zip(self.d_half.iter()).map(|(v, &s)| v.re * s),
        );
        let w_im = DVector::from_iterator(
            n,
            u.values.iter().zip(self.d_half.iter()).map(|(v, &s)| v.im * s),
        );
        let mut c_re = self.vectors.tr_mul(&w_re);
        let mut c_im = self.vectors.tr_mul(&w_im);
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fv = f(lam);
            let (re, im) = (c_re[j], c_im[j]);
            c_re[j] = fv.re * re - fv.im * im;
            c_im[j] = fv.re * im + fv.im * re;
        }
        let out_re = &self.vectors * c_re;
        let out_im = &self.vectors * c_im;
        let values = (0..n)
            .map(|i| C64::new(out_re[i], out_im[i]) * self.d_half_inv[i])
            .collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    /// `φ(h²P) u` by the exact calculus.
    pub fn oracle_apply(&self, phi: &BumpFunction, h: f64, u: &Field) -> Result<Field> {
        self.apply_fn(|lam| C64::new(phi.eval(h * h * lam), 0.0), u)
    }
}

// ---------------------------------------------------------------------------
// Chebyshev filtering
// ---------------------------------------------------------------------------

/// Degree cap of the auto-degree rule.
pub const CHEB_CAP: usize = 8192;
/// Successive-output stall threshold of the auto-degree rule.
pub const CHEB_TOL: f64 = 1e-9;

/// Fast functional calculus: Chebyshev expansion of `f` on `[0, λ_max]`
/// applied through the three-term operator recurrence.
pub struct ChebCalculus {
    pub geom: Geometry,
    pub lambda_max: f64,
}

impl ChebCalculus {
    pub fn new(geom: &Geometry) -> ChebCalculus {
        ChebCalculus { geom: geom.clone(), lambda_max: geom.lambda_max() }
    }

    /// Chebyshev coefficients of `f(center + radius w)` up to `deg`,
    /// sampled at `2 (deg+1)` Chebyshev points.
    fn coefficients(&self, f: &dyn Fn(f64) -> C64, deg: usize) -> Vec<C64> {
        let m = 2 * (deg + 1);
        let center = self.lambda_max / 2.0;
        let radius = self.lambda_max / 2.0;
        let samples: Vec<C64> = (0..m)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                f(center + radius * theta.cos())
            })
            .collect();
        (0..=deg)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, s) in samples.iter().enumerate() {
                    let theta = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                    acc += s * (k as f64 * theta).cos();
                }
                let scale = if k == 0 { 1.0 } else { 2.0 } / m as f64;
                acc * scale
            })
            .collect()
    }

    /// Apply `f(P)` with the auto-degree rule: start at 64, double until the
    /// degree-m and degree-2m outputs differ by less than `tol` (relative),
    /// cap at `cap`.
    pub fn apply_fn_tol(
        &self,
        f: &dyn Fn(f64) -> C64,
        u: &Field,
        tol: f64,
        cap: usize,
    ) -> Result<Field> {
        if u.grid != self.geom.grid {
            return Err(Error::GridMismatch("cheb apply".into()));
        }
        let unorm = u.norm_l2();
        if unorm == 0.0 {
            return Ok(u.clone());
        }
        let center = self.lambda_max / 2.0;
        let radius = self.lambda_max / 2.0;
        let mut deg = 64usize;
        loop {
            let full = 2 * deg;
            let coeff = self.coefficients(f, full);
            // recurrence on A = (P - c)/r
            let apply_a = |v: &Field| -> Result<Field> {
                let mut w = self.geom.apply_p(v)?;
                w.axpy(C64::new(-center, 0.0), v);
                w.scale(C64::new(1.0 / radius, 0.0));
                Ok(w)
            };
            let mut t_prev = u.clone();
            let mut t_cur = apply_a(u)?;
            let mut y = Field::zeros(&u.grid);
            y.axpy(coeff[0], &t_prev);
            y.axpy(coeff[1], &t_cur);
            let mut y_half = None;
            for k in 2..=full {
                let mut t_next = apply_a(&t_cur)?;
                t_next.scale(C64::new(2.0, 0.0));
                t_next.axpy(C64::new(-1.0, 0.0), &t_prev);
                y.axpy(coeff[k], &t_next);
                t_prev = t_cur;
                t_cur = t_next;
                if k == deg {
                    y_half = Some(y.clone());
                }
            }
            let y_half = y_half.expect("deg >= 2");
            let mut diff = y.clone();
            diff.axpy(C64::new(-1.0, 0.0), &y_half);
            let delta = diff.norm_l2() / unorm;
            if delta < tol {
                return Ok(y);
            }
            if full >= cap {
                return Err(Error::DegreeCapExceeded { cap, tol });
            }
            deg = full;
        }
    }

    pub fn apply_fn(&self, f: impl Fn(f64) -> f64, u: &Field) -> Result<Field> {
        self.apply_fn_tol(&|lam| C64::new(f(lam), 0.0), u, CHEB_TOL, CHEB_CAP)
    }

    /// `φ(h²P) u` through Chebyshev filtering; rejects non-smooth bumps.
    pub fn filter(&self, phi: &BumpFunction, h: f64, u: &Field) -> Result<Field> {
        if !phi.smooth {
            return Err(Error::NonSmoothBump);
        }
        self.apply_fn(|lam| phi.eval(h * h * lam), u)
    }
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Exact discrete left quantization:
/// `a(x,hD) u (x_j) = Σ_ν a(x_j, h k_ν) c_ν e^{i k_ν·x_j}`.
pub fn quantize(a: &SymbolField, h: f64, u: &Field) -> Result<Field> {
    let grid = &u.grid;
    if let Some(ref sup) = a.freq_support {
        if sup.len() < grid.d {
            return Err(Error::DimensionMismatch("symbol support box".into()));
        }
        for &(lo, hi) in sup.iter().take(grid.d) {
            if lo.abs().max(hi.abs()) / h > grid.k_max() {
                return Err(Error::SymbolSupportExceedsLattice);
            }
        }
    }
    let coeffs = u.coeffs();
    let n = grid.n;
    // e^{i k_ν x_j} = (-1)^ν ω^{ν j} and c_ν = (-1)^m c~_m cancel signs:
    // out_j = Σ_m a(x_j, h k(m)) c~_m ω^{(m·j) mod n}
    let omega: Vec<C64> = (0..n)
        .map(|r| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * r as f64 / n as f64))
        .collect();
    // keep only modes the symbol can touch
    let active: Vec<(usize, [f64; 2], C64)> = coeffs
        .iter()
        .enumerate()
        .filter_map(|(idx, &c)| {
            let k = grid.wavevector(idx);
            if let Some(ref sup) = a.freq_support {
                for ax in 0..grid.d {
                    let xi = h * k[ax];
                    let (lo, hi) = sup[ax];
                    if xi < lo || xi > hi {
                        return None;
                    }
                }
            }
            if c.norm_sqr() == 0.0 && a.freq_support.is_none() {
                return None;
            }
            Some((idx, k, c))
        })
        .collect();
    use rayon::prelude::*;
    let values: Vec<C64> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let p = grid.point(j);
            let x = &p[..grid.d];
            let (j0, j1) = match grid.d {
                1 => (j, 0),
                _ => (j / n, j % n),
            };
            let mut acc = C64::new(0.0, 0.0);
            for &(idx, k, c) in &active {
                let (m0, m1) = match grid.d {
                    1 => (idx, 0),
                    _ => (idx / n, idx % n),
                };
                let tw = omega[(m0 * j0 + m1 * j1) % n];
                let xi = [h * k[0], h * k[1]];
                acc += a.eval(x, &xi[..grid.d]) * c * tw;
            }
            acc
        })
        .collect();
    Ok(Field { grid: grid.clone(), values })
}

// ---------------------------------------------------------------------------
// Littlewood–Paley
// ---------------------------------------------------------------------------

/// Pieces `{φ_1(P) u, φ(4^{-j} P) u}_{1 <= j <= j_max}` of the exact dyadic
/// partition; their sum reconstructs `u`. `j_max` is chosen to cover the
/// grid's spectral range unless given.
pub fn littlewood_paley(
    cheb: &ChebCalculus,
    u: &Field,
    j_max: Option<usize>,
) -> Result<Vec<Field>> {
    let phi1 = BumpFunction::low_pass();
    let phi = BumpFunction::dyadic_ring();
    let lam_max = cheb.lambda_max;
    let j_max = j_max.unwrap_or_else(|| {
        let mut j = 1usize;
        while 4.0f64.powi(j as i32 + 1) < lam_max {
            j += 1;
        }
        j
    });
    // verify the partition pointwise on the covered range
    let mut defect: f64 = 0.0;
    for s in 0..4096 {
        let lam = lam_max * s as f64 / 4095.0;
        let mut total = phi1.eval(lam);
        for j in 1..=j_max {
            total += phi.eval(lam * 0.25f64.powi(j as i32));
        }
        defect = defect.max((total - 1.0).abs());
    }
    if defect > 1e-12 {
        return Err(Error::PartitionDefect { defect });
    }
    let mut pieces = Vec::with_capacity(j_max + 1);
    pieces.push(cheb.apply_fn(|lam| phi1.eval(lam), u)?);
    for j in 1..=j_max {
        let scale = 0.25f64.powi(j as i32);
        pieces.push(cheb.apply_fn(|lam| phi.eval(lam * scale), u)?);
    }
    Ok(pieces)
}

// ---------------------------------------------------------------------------
// Pseudodifferential expansion of φ(h²P)
// ---------------------------------------------------------------------------

/// Principal symbol of the expansion, `a_0 = φ ∘ p_0`, with frequency
/// support derived from the bump's support and the ellipticity bound.
pub fn expansion_symbol_a0(geom: &Geometry, phi: &BumpFunction) -> SymbolField {
    let metric = geom.metric.clone();
    let phi = phi.clone();
    let xi_max = (phi.support.1 / (1.0 - metric.epsilon).max(1e-9)).sqrt();
    let d = metric.d;
    SymbolField::new(
        move |x, xi| {
            let p0 = crate::metric::principal_symbol(&metric, x, xi);
            C64::new(phi.eval(p0), 0.0)
        },
        Some(vec![(-xi_max, xi_max); d]),
        0.0,
    )
}

/// First corrector `a_1 = -i [ b·ξ φ'(p_0) + a (ξ·∇a) |ξ|² φ''(p_0) ]`,
/// from the resolvent parametrix with left symbols `p = p_0 + h p_1`,
/// `p_1 = -i b^j ξ_j`.
pub fn expansion_symbol_a1(geom: &Geometry, phi: &BumpFunction) -> SymbolField {
    let metric = geom.metric.clone();
    let phi = phi.clone();
    let xi_max = (phi.support.1 / (1.0 - metric.epsilon).max(1e-9)).sqrt();
    let d = metric.d;
    SymbolField::new(
        move |x, xi| {
            let a = metric.conformal(x);
            let grad = metric.grad_conformal(x);
            let b = metric.first_order_coeff(x);
            let xi2: f64 = xi.iter().map(|v| v * v).sum();
            let p0 = a * xi2;
            let b_dot_xi: f64 = xi.iter().enumerate().map(|(i, v)| b[i] * v).sum();
            let xi_dot_grad: f64 = xi.iter().enumerate().map(|(i, v)| grad[i] * v).sum();
            let val = b_dot_xi * phi.d1(p0) + a * xi_dot_grad * xi2 * phi.d2(p0);
            C64::new(0.0, -val)
        },
        Some(vec![(-xi_max, xi_max); d]),
        -1.0,
    )
}

/// Residual sweep `|| φ(h²P)u - Σ_{k<=order} h^k a_k(x,hD) u || / ||u||`
/// against the oracle, fitted in h. `order` is 0 or 1.
pub fn pdo_expansion_check(
    oracle: &SpectralOracle,
    geom: &Geometry,
    phi: &BumpFunction,
    h_sweep: &[f64],
    order: usize,
    seed: u64,
) -> Result<DecayFit> {
    if h_sweep.len() < 4 {
        return Err(Error::InvalidParameter("need at least 4 dyadic h".into()));
    }
    let a0 = expansion_symbol_a0(geom, phi);
    let a1 = expansion_symbol_a1(geom, phi);
    let mut points = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &h in h_sweep {
        let k_cap = (2.0 * phi.support.1.max(1.0).sqrt() / h).min(0.95 * geom.grid.k_max());
        let mut worst: f64 = 0.0;
        for _ in 0..4 {
            let u = band_limited_random(&geom.grid, k_cap, &mut rng);
            let exact = oracle.oracle_apply(phi, h, &u)?;
            let mut approx = quantize(&a0, h, &u)?;
            if order >= 1 {
                let corr = quantize(&a1, h, &u)?;
                approx.axpy(C64::new(h, 0.0), &corr);
            }
            let mut diff = exact;
            diff.axpy(C64::new(-1.0, 0.0), &approx);
            worst = worst.max(diff.norm_l2() / u.norm_l2());
        }
        points.push((h, worst));
    }
    Ok(DecayFit::from_points(&points, &format!("pdo-order{order}-seed{seed}"), 1e-13))
}

// ---------------------------------------------------------------------------
// Operator-norm and localization sweeps
// ---------------------------------------------------------------------------

/// Empirical `L^q -> L^r` constants of `φ(h²P)` over the standard probe
/// family (with point-like data), fitted against h.
pub fn bernstein_check(
    cheb: &ChebCalculus,
    phi: &BumpFunction,
    q: f64,
    r: f64,
    h_sweep: &[f64],
    seed: u64,
) -> Result<DecayFit> {
    if !(1.0 <= q && q <= r) {
        return Err(Error::InvalidParameter(format!("need 1 <= q <= r, got ({q}, {r})")));
    }
    let grid = &cheb.geom.grid;
    let j = (phi.support.0.max(0.25), phi.support.1);
    let mut points = Vec::new();
    for &h in h_sweep {
        let fam = ProbeFamily::standard(grid, h, j, seed, 4).with_point_data(grid);
        let mut worst: f64 = 0.0;
        for p in &fam.probes {
            let den = norm_lq(&p.field, q, None)?;
            if den == 0.0 {
                continue;
            }
            let out = cheb.filter(phi, h, &p.field)?;
            worst = worst.max(norm_lq(&out, r, None)? / den);
        }
        points.push((h, worst));
    }
    Ok(DecayFit::from_points(&points, &format!("bernstein-q{q}-r{r}-seed{seed}"), 1e-14))
}

/// Spectral localization `||φ(h²P) w||_{L²} / ||w||_{H^s}` for bumps
/// vanishing near zero; the fitted slope should be at least `s` up to the
/// declared tolerance.
pub fn spectral_localization_check(
    cheb: &ChebCalculus,
    phi: &BumpFunction,
    s: f64,
    h_sweep: &[f64],
    seed: u64,
) -> Result<DecayFit> {
    if !phi.vanishes_near_zero {
        return Err(Error::InvalidParameter(
            "spectral localization needs a bump vanishing near 0".into(),
        ));
    }
    let grid = &cheb.geom.grid;
    let j = (phi.support.0, phi.support.1);
    let mut points = Vec::new();
    for &h in h_sweep {
        let fam = ProbeFamily::standard(grid, h, j, seed, 4);
        let mut worst: f64 = 0.0;
        for p in &fam.probes {
            let den = norm_hs(&p.field, s);
            if den == 0.0 {
                continue;
            }
            let out = cheb.filter(phi, h, &p.field)?;
            worst = worst.max(out.norm_l2() / den);
        }
        points.push((h, worst));
    }
    Ok(DecayFit::from_points(&points, &format!("specloc-s{s}-seed{seed}"), 1e-14))
}

/// `W^{1,p}` variant: `||φ(h²P) w||_{L^p} / ||w||_{W^{1,p}}` with the
/// gradient-augmented norm; expected slope about 1.
pub fn spectral_localization_w1p(
    cheb: &ChebCalculus,
    phi: &BumpFunction,
    p: f64,
    h_sweep: &[f64],
    seed: u64,
) -> Result<DecayFit> {
    if !phi.vanishes_near_zero {
        return Err(Error::InvalidParameter(
            "spectral localization needs a bump vanishing near 0".into(),
        ));
    }
    let grid = &cheb.geom.grid;
    let j = (phi.support.0, phi.support.1);
    let mut points = Vec::new();
    for &h in h_sweep {
        let fam = ProbeFamily::standard(grid, h, j, seed, 4);
        let mut worst: f64 = 0.0;
        for pr in &fam.probes {
            let mut den = norm_lq(&pr.field, p, None)?;
            for axis in 0..grid.d {
                den += norm_lq(&pr.field.gradient_axis(axis), p, None)?;
            }
            if den == 0.0 {
                continue;
            }
            let out = cheb.filter(phi, h, &pr.field)?;
            worst = worst.max(norm_lq(&out, p, None)? / den);
        }
        points.push((h, worst));
    }
    Ok(DecayFit::from_points(&points, &format!("specloc-w1p-p{p}-seed{seed}"), 1e-14))
}

/// Commutator smallness `||[χ, φ(h²P)] u|| <= C h ||u||`: empirical sweep of
/// the constant, fitted in h (slope about 1).
pub fn commutator_decay(
    cheb: &ChebCalculus,
    phi: &BumpFunction,
    chi: &(dyn Fn(&[f64]) -> f64 + Sync),
    h_sweep: &[f64],
    seed: u64,
) -> Result<DecayFit> {
    let grid = &cheb.geom.grid;
    let chi_field: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            chi(&p[..grid.d])
        })
        .collect();
    let j = (phi.support.0.max(0.25), phi.support.1);
    let mut points = Vec::new();
    for &h in h_sweep {
        let fam = ProbeFamily::standard(grid, h, j, seed, 4);
        let mut worst: f64 = 0.0;
        for p in &fam.probes {
            let mut chi_u = p.field.clone();
            for (v, &c) in chi_u.values.iter_mut().zip(chi_field.iter()) {
                *v *= c;
            }
            let a = cheb.filter(phi, h, &chi_u)?;
            let mut b = cheb.filter(phi, h, &p.field)?;
            for (v, &c) in b.values.iter_mut().zip(chi_field.iter()) {
                *v *= c;
            }
            let mut comm = a;
            comm.axpy(C64::new(-1.0, 0.0), &b);
            worst = worst.max(comm.norm_l2() / p.field.norm_l2());
        }
        points.push((h, worst));
    }
    Ok(DecayFit::from_points(&points, &format!("commutator-seed{seed}"), 1e-14))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{builtin_metric, Metric};
    use approx::assert_relative_eq;

    fn small_geom() -> Geometry {
        let grid = Grid::new(1, 64, 4.0).unwrap();
        let metric =
            builtin_metric("long_range_radial", &[("epsilon", 0.2), ("l_flat", 2.0)]).unwrap();
        Geometry::new(&metric, &grid).unwrap()
    }

    #[test]
    fn bump_shapes_and_derivatives() {
        let phi = BumpFunction::plateau(1.0, 2.0, 3.0, 4.0);
        assert_eq!(phi.eval(0.5), 0.0);
        assert_eq!(phi.eval(2.5), 1.0);
        assert_eq!(phi.eval(4.5), 0.0);
        assert!(phi.vanishes_near_zero && phi.smooth);
        // derivatives against central differences
        for lam in [1.3, 1.9, 3.2, 3.9] {
            let e = 1e-6;
            let fd1 = (phi.eval(lam + e) - phi.eval(lam - e)) / (2.0 * e);
            assert_relative_eq!(phi.d1(lam), fd1, max_relative = 1e-5, epsilon = 1e-8);
            let fd2 = (phi.d1(lam + e) - phi.d1(lam - e)) / (2.0 * e);
            assert_relative_eq!(phi.d2(lam), fd2, max_relative = 1e-5, epsilon = 1e-7);
        }
        let ring = BumpFunction::dyadic_ring();
        assert_eq!(ring.eval(0.9), 0.0);
        assert_eq!(ring.eval(17.0), 0.0);
        assert!(ring.eval(6.0) > 0.0);
    }

    #[test]
    fn partition_telescopes_exactly() {
        let phi1 = BumpFunction::low_pass();
        let ring = BumpFunction::dyadic_ring();
        for lam in [0.0, 0.7, 3.9, 12.0, 55.0, 400.0, 3000.0] {
            let mut total = phi1.eval(lam);
            for j in 1..=8 {
                total += ring.eval(lam * 0.25f64.powi(j));
            }
            assert!((total - 1.0).abs() < 1e-13, "lam = {lam}: {total}");
        }
    }

    #[test]
    fn oracle_reconstruction_and_identity() {
        let geom = small_geom();
        let oracle = SpectralOracle::build(&geom);
        assert!(oracle.eigenvalues.iter().all(|&l| l >= -1e-8));
        let u = Field::from_fn(&geom.grid, |x| C64::new((1.3 * x[0]).sin(), x[0].cos()));
        // phi = 1 on the range: resolution of identity
        let one = BumpFunction::one();
        let back = oracle.oracle_apply(&one, 0.5, &u).unwrap();
        let mut diff = back;
        diff.axpy(C64::new(-1.0, 0.0), &u);
        assert!(diff.norm_l2() <= 1e-8 * u.norm_l2());
        // reconstruction of P itself
        let pu = oracle.apply_fn(|lam| C64::new(lam, 0.0), &u).unwrap();
        let direct = geom.apply_p(&u).unwrap();
        let mut d = pu;
        d.axpy(C64::new(-1.0, 0.0), &direct);
        assert!(d.norm_l2() <= 1e-8 * direct.norm_l2());
        // support gap: bump strictly below the spectrum after h^2 scaling
        let low = BumpFunction::plateau(1e-9, 2e-9, 3e-9, 4e-9);
        let zero = oracle.oracle_apply(&low, 1.0, &u).unwrap();
        assert!(zero.norm_l2() <= 1e-10);
    }

    #[test]
    fn oracle_is_multiplier_on_flat_metric() {
        let grid = Grid::new(1, 64, 4.0).unwrap();
        let geom = Geometry::new(&Metric::flat(1), &grid).unwrap();
        let oracle = SpectralOracle::build(&geom);
        let phi = BumpFunction::dyadic_ring();
        let h = 0.5;
        let u = Field::from_fn(&grid, |x| C64::new((2.0 * x[0]).cos(), (0.7 * x[0]).sin()));
        let via_oracle = oracle.oracle_apply(&phi, h, &u).unwrap();
        let mut coeffs = u.coeffs();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = grid.wavevector(idx);
            let k2 = k[0] * k[0];
            *c *= phi.eval(h * h * k2);
        }
        let direct = Field::from_coeffs(&grid, coeffs);
        let mut d = via_oracle;
        d.axpy(C64::new(-1.0, 0.0), &direct);
        assert!(d.norm_l2() <= 1e-10 * u.norm_l2().max(1.0));
    }

    #[test]
    fn oracle_homomorphism() {
        let geom = small_geom();
        let oracle = SpectralOracle::build(&geom);
        let phi = BumpFunction::plateau(0.5, 1.0, 4.0, 6.0);
        let psi = BumpFunction::plateau(0.8, 2.0, 5.0, 8.0);
        let u = Field::from_fn(&geom.grid, |x| C64::new((0.9 * x[0]).sin(), 0.2));
        let h = 0.4;
        let a = oracle
            .oracle_apply(&psi, h, &oracle.oracle_apply(&phi, h, &u).unwrap())
            .unwrap();
        let b = oracle
            .apply_fn(
                |lam| C64::new(phi.eval(h * h * lam) * psi.eval(h * h * lam), 0.0),
                &u,
            )
            .unwrap();
        let mut d = a;
        d.axpy(C64::new(-1.0, 0.0), &b);
        assert!(d.norm_l2() <= 1e-10 * u.norm_l2());
    }

    #[test]
    fn cheb_matches_oracle_and_rejects_indicator() {
        let geom = small_geom();
        let oracle = SpectralOracle::build(&geom);
        let cheb = ChebCalculus::new(&geom);
        let phi = BumpFunction::dyadic_ring();
        let u = Field::from_fn(&geom.grid, |x| {
            C64::new((2.2 * x[0]).sin() + 0.1, (1.1 * x[0]).cos())
        });
        for &h in &[0.5, 0.25, 0.125] {
            let a = cheb.filter(&phi, h, &u).unwrap();
            let b = oracle.oracle_apply(&phi, h, &u).unwrap();
            let mut d = a;
            d.axpy(C64::new(-1.0, 0.0), &b);
            assert!(
                d.norm_l2() <= 1e-8 * u.norm_l2(),
                "h = {h}: {}",
                d.norm_l2() / u.norm_l2()
            );
        }
        // phi = 1: identity
        let id = cheb.filter(&BumpFunction::one(), 0.5, &u).unwrap();
        let mut d = id;
        d.axpy(C64::new(-1.0, 0.0), &u);
        assert!(d.norm_l2() <= 1e-10 * u.norm_l2());
        // non-smooth input is a contract violation
        let sharp = BumpFunction::indicator(1.0, 4.0);
        assert!(matches!(
            cheb.filter(&sharp, 0.5, &u),
            Err(Error::NonSmoothBump)
        ));
    }

    #[test]
    fn quantize_identity_and_multiplier() {
        let geom = small_geom();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = band_limited_random(&geom.grid, 0.8 * geom.grid.k_max(), &mut rng);
        let one = SymbolField::constant_one();
        let q = quantize(&one, 0.5, &u).unwrap();
        let mut d = q;
        d.axpy(C64::new(-1.0, 0.0), &u);
        assert!(d.norm_l2() <= 1e-12 * u.norm_l2());
        // a = xi_1: h * (spectral derivative)/i
        let sym = SymbolField::new(|_x, xi| C64::new(xi[0], 0.0), None, 0.0);
        let h = 0.3;
        let qd = quantize(&sym, h, &u).unwrap();
        let mut expect = u.gradient_axis(0);
        expect.scale(C64::new(0.0, -h)); // h * d/dx / i
        let mut d2 = qd;
        d2.axpy(C64::new(-1.0, 0.0), &expect);
        assert!(d2.norm_l2() <= 1e-10 * expect.norm_l2());
    }

    #[test]
    fn quantize_rejects_unresolvable_support() {
        let geom = small_geom();
        let u = Field::zeros(&geom.grid);
        let wide = SymbolField::new(
            |_, _| C64::new(1.0, 0.0),
            Some(vec![(-100.0, 100.0)]),
            0.0,
        );
        assert!(matches!(
            quantize(&wide, 0.01, &u),
            Err(Error::SymbolSupportExceedsLattice)
        ));
    }

    #[test]
    fn littlewood_paley_reconstructs() {
        let geom = small_geom();
        let cheb = ChebCalculus::new(&geom);
        let u = Field::from_fn(&geom.grid, |x| {
            C64::new((5.0 * x[0]).sin() + 0.2 * (11.0 * x[0]).cos(), (3.0 * x[0]).sin())
        });
        let pieces = littlewood_paley(&cheb, &u, None).unwrap();
        let mut sum = Field::zeros(&geom.grid);
        for p in &pieces {
            sum.axpy(C64::new(1.0, 0.0), p);
        }
        let mut d = sum;
        d.axpy(C64::new(-1.0, 0.0), &u);
        assert!(d.norm_l2() <= 1e-8 * u.norm_l2(), "{}", d.norm_l2() / u.norm_l2());
    }

    #[test]
    fn low_eigenmode_sits_in_low_pass_piece() {
        let grid = Grid::new(1, 64, 4.0).unwrap();
        let geom = Geometry::new(&Metric::flat(1), &grid).unwrap();
        let cheb = ChebCalculus::new(&geom);
        // k = pi/4: lambda ~ 0.61, inside {phi_1 = 1}
        let u = Field::from_fn(&grid, |x| C64::from_polar(1.0, std::f64::consts::PI / 4.0 * x[0]));
        let pieces = littlewood_paley(&cheb, &u, None).unwrap();
        let mut d = pieces[0].clone();
        d.axpy(C64::new(-1.0, 0.0), &u);
        assert!(d.norm_l2() <= 1e-8 * u.norm_l2());
        for p in pieces.iter().skip(1) {
            assert!(p.norm_l2() <= 1e-8 * u.norm_l2());
        }
    }
}
