//! Long-range metrics on the periodic box.
//!
//! Every builtin is a conformal perturbation of the flat metric,
//! `g^{ij}(x) = (1 + m(|x|^2)) δ_ij`, with the profile `m` given in closed
//! form together with its first two derivatives. Profiles are windowed so that
//! `g = Id` exactly for `|x| >= l_flat`; the window is the C^4 smoothstep
//! `s4(u) = u^5 (70u^4 - 315u^3 + 540u^2 - 420u + 126)` applied in the
//! variable `s = |x|^2` between `(0.6 l_flat)^2` and `l_flat^2`, so all
//! evaluators are smooth across the origin and across the flattening radius.

use crate::error::{Error, Result};
use crate::fit::DecayFit;
use crate::C64;
use std::sync::Arc;

pub const MAX_D: usize = 2;

/// Fraction of `l_flat` where the flattening window starts.
pub const WINDOW_START_FRACTION: f64 = 0.6;

/// C^4 smoothstep on [0,1] and its first two derivatives.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u.powi(5) * (70.0 * u.powi(4) - 315.0 * u.powi(3) + 540.0 * u * u - 420.0 * u + 126.0)
    }
}

pub fn smoothstep_d1(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        630.0 * u.powi(4) * (1.0 - u).powi(4)
    }
}

pub fn smoothstep_d2(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        2520.0 * u.powi(3) * (1.0 - u).powi(3) * (1.0 - 2.0 * u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile {
    Flat,
    /// `m(s) = -eps (1+s)^{-rho/2} W(s)`
    Radial,
    /// `m(s) = -eps (1-u^2)^5` on `|u| < 1`, `u = (s - s_center)/s_width`
    Well { s_center: f64, s_width: f64 },
}

/// A metric of the long-range class: dimension, decay data, ellipticity
/// constants and closed-form evaluators for `g^{ij}`, `g_{ij}` and the first
/// two derivatives of `g^{ij}`.
#[derive(Debug, Clone)]
pub struct Metric {
    pub d: usize,
    pub name: String,
    pub epsilon: f64,
    pub rho: f64,
    pub l_flat: f64,
    /// Ellipticity constants `c Id <= g_{ij} <= C Id`.
    pub ell_lower: f64,
    pub ell_upper: f64,
    profile: Profile,
    /// Radius of the circular geodesic for the trapping well, if any.
    pub trapped_radius: Option<f64>,
}

impl Metric {
    pub fn flat(d: usize) -> Metric {
        Metric {
            d,
            name: "flat".into(),
            epsilon: 0.0,
            rho: 1.0,
            l_flat: 0.0,
            ell_lower: 1.0,
            ell_upper: 1.0,
            profile: Profile::Flat,
            trapped_radius: None,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.profile == Profile::Flat || self.epsilon == 0.0
    }

    fn window(&self, s: f64) -> (f64, f64, f64) {
        let s_lo = (WINDOW_START_FRACTION * self.l_flat).powi(2);
        let s_hi = self.l_flat * self.l_flat;
        if s <= s_lo {
            (1.0, 0.0, 0.0)
        } else if s >= s_hi {
            (0.0, 0.0, 0.0)
        } else {
            let den = s_hi - s_lo;
            let u = (s - s_lo) / den;
            (
                1.0 - smoothstep(u),
                -smoothstep_d1(u) / den,
                -smoothstep_d2(u) / (den * den),
            )
        }
    }

    /// Profile `m(s)` with `s = |x|^2`, and its first two s-derivatives.
    fn profile_m(&self, s: f64) -> (f64, f64, f64) {
        match self.profile {
            Profile::Flat => (0.0, 0.0, 0.0),
            Profile::Radial => {
                let (w, w1, w2) = self.window(s);
                if w == 0.0 && w1 == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let e = -self.rho / 2.0;
                let d0 = (1.0 + s).powf(e);
                let d1 = e * (1.0 + s).powf(e - 1.0);
                let d2 = e * (e - 1.0) * (1.0 + s).powf(e - 2.0);
                (
                    -self.epsilon * d0 * w,
                    -self.epsilon * (d1 * w + d0 * w1),
                    -self.epsilon * (d2 * w + 2.0 * d1 * w1 + d0 * w2),
                )
            }
            Profile::Well { s_center, s_width } => {
                let u = (s - s_center) / s_width;
                if u.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let q = 1.0 - u * u;
                let b0 = q.powi(5);
                let b1 = -10.0 * u * q.powi(4);
                let b2 = -10.0 * q.powi(4) + 80.0 * u * u * q.powi(3);
                (
                    -self.epsilon * b0,
                    -self.epsilon * b1 / s_width,
                    -self.epsilon * b2 / (s_width * s_width),
                )
            }
        }
    }

    fn s_of(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    /// Conformal factor `a(x)` with `g^{ij} = a δ_ij`.
    pub fn conformal(&self, x: &[f64]) -> f64 {
        1.0 + self.profile_m(self.s_of(x)).0
    }

    /// `∂_i a(x)`.
    pub fn grad_conformal(&self, x: &[f64]) -> [f64; MAX_D] {
        let (_, m1, _) = self.profile_m(self.s_of(x));
        let mut g = [0.0; MAX_D];
        for (i, &xi) in x.iter().enumerate() {
            g[i] = 2.0 * xi * m1;
        }
        g
    }

    /// `∂_i ∂_j a(x)`.
    pub fn hess_conformal(&self, x: &[f64]) -> [[f64; MAX_D]; MAX_D] {
        let (_, m1, m2) = self.profile_m(self.s_of(x));
        let mut h = [[0.0; MAX_D]; MAX_D];
        for i in 0..self.d {
            for j in 0..self.d {
                h[i][j] = 4.0 * x[i] * x[j] * m2;
                if i == j {
                    h[i][j] += 2.0 * m1;
                }
            }
        }
        h
    }

    /// Inverse metric `g^{ij}(x)` as a dense `d x d` matrix.
    pub fn inv_metric(&self, x: &[f64]) -> [[f64; MAX_D]; MAX_D] {
        let a = self.conformal(x);
        let mut m = [[0.0; MAX_D]; MAX_D];
        for i in 0..self.d {
            m[i][i] = a;
        }
        m
    }

    /// Metric `g_{ij}(x)`.
    pub fn metric_tensor(&self, x: &[f64]) -> [[f64; MAX_D]; MAX_D] {
        let a = self.conformal(x);
        let mut m = [[0.0; MAX_D]; MAX_D];
        for i in 0..self.d {
            m[i][i] = 1.0 / a;
        }
        m
    }

    /// `sqrt(det g_{ij})`, the Riemannian volume density.
    pub fn sqrt_det_g(&self, x: &[f64]) -> f64 {
        self.conformal(x).powf(-(self.d as f64) / 2.0)
    }

    /// First-order left-symbol coefficient `b^j` of `P = -a Δ - b^j ∂_j` in
    /// divergence form: `b^j = (1 - d/2) ∂_j a`.
    pub fn first_order_coeff(&self, x: &[f64]) -> [f64; MAX_D] {
        let g = self.grad_conformal(x);
        let c = 1.0 - self.d as f64 / 2.0;
        let mut b = [0.0; MAX_D];
        for i in 0..self.d {
            b[i] = c * g[i];
        }
        b
    }

    /// `∂_x p0(x, xi)`.
    pub fn dx_principal_symbol(&self, x: &[f64], xi: &[f64]) -> [f64; MAX_D] {
        let ga = self.grad_conformal(x);
        let xi2: f64 = xi.iter().map(|v| v * v).sum();
        let mut out = [0.0; MAX_D];
        for i in 0..self.d {
            out[i] = ga[i] * xi2;
        }
        out
    }
}

/// Principal symbol `p0(x, xi) = Σ g^{ij}(x) xi_i xi_j`.
pub fn principal_symbol(metric: &Metric, x: &[f64], xi: &[f64]) -> f64 {
    let xi2: f64 = xi.iter().take(metric.d).map(|v| v * v).sum();
    metric.conformal(x) * xi2
}

/// Instantiate a builtin metric. Recognized names: `flat`,
/// `long_range_radial`, `short_range_radial`, `trapping_2d`; parameter keys:
/// `epsilon`, `rho`, `l_flat`, `dim`.
pub fn builtin_metric(name: &str, params: &[(&str, f64)]) -> Result<Metric> {
    let mut epsilon = None;
    let mut rho = None;
    let mut l_flat = None;
    let mut dim = None;
    for &(k, v) in params {
        match k {
            "epsilon" => epsilon = Some(v),
            "rho" => rho = Some(v),
            "l_flat" => l_flat = Some(v),
            "dim" => dim = Some(v as usize),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown metric parameter `{other}`"
                )))
            }
        }
    }
    let metric = match name {
        "flat" => {
            let d = dim.unwrap_or(1);
            Metric::flat(d)
        }
        "long_range_radial" | "short_range_radial" => {
            let d = dim.unwrap_or(1);
            let epsilon = epsilon.unwrap_or(0.2);
            let rho = rho.unwrap_or(if name == "short_range_radial" { 2.0 } else { 1.0 });
            let l_flat = l_flat.unwrap_or(16.0);
            if epsilon >= 1.0 {
                return Err(Error::EllipticityViolated { epsilon });
            }
            if epsilon < 0.0 || rho <= 0.0 || l_flat <= 0.0 {
                return Err(Error::InvalidParameter(
                    "need epsilon >= 0, rho > 0, l_flat > 0".into(),
                ));
            }
            Metric {
                d,
                name: name.into(),
                epsilon,
                rho,
                l_flat,
                ell_lower: 1.0,
                ell_upper: 1.0 / (1.0 - epsilon),
                profile: Profile::Radial,
                trapped_radius: None,
            }
        }
        "trapping_2d" => {
            let d = dim.unwrap_or(2);
            if d != 2 {
                return Err(Error::UnsupportedDimension { d, what: "trapping_2d" });
            }
            let epsilon = epsilon.unwrap_or(0.6);
            if epsilon >= 1.0 {
                return Err(Error::EllipticityViolated { epsilon });
            }
            let l_flat = l_flat.unwrap_or(8.0);
            // Radial well centered at r = 3 (s = 9), supported in r ∈ [sqrt(2), 4].
            let (s_center, s_width) = (9.0, 7.0);
            if l_flat < 4.5 {
                return Err(Error::InvalidParameter(
                    "trapping_2d needs l_flat >= 4.5 to contain the well".into(),
                ));
            }
            let mut m = Metric {
                d,
                name: name.into(),
                epsilon,
                rho: rho.unwrap_or(1.0),
                l_flat,
                ell_lower: 1.0,
                ell_upper: 1.0 / (1.0 - epsilon),
                profile: Profile::Well { s_center, s_width },
                trapped_radius: None,
            };
            m.trapped_radius = circular_geodesic_radius(&m);
            if m.trapped_radius.is_none() {
                return Err(Error::InvalidParameter(
                    "trapping_2d well too shallow: no circular geodesic (raise epsilon)".into(),
                ));
            }
            m
        }
        other => return Err(Error::UnknownMetric(other.into())),
    };
    Ok(metric)
}

/// Solve `s m'(s) = 1 + m(s)` on the rising side of the well by bisection.
/// A root is a radius with a circular Hamiltonian orbit.
fn circular_geodesic_radius(metric: &Metric) -> Option<f64> {
    let cond = |s: f64| {
        let (m0, m1, _) = metric.profile_m(s);
        s * m1 - (1.0 + m0)
    };
    let (s_center, s_width) = match metric.profile {
        Profile::Well { s_center, s_width } => (s_center, s_width),
        _ => return None,
    };
    // scan [s_center, s_center + s_width] for a sign change
    let n = 400;
    let mut prev = cond(s_center);
    for k in 1..=n {
        let s = s_center + s_width * k as f64 / n as f64;
        let cur = cond(s);
        if prev <= 0.0 && cur > 0.0 || prev >= 0.0 && cur < 0.0 {
            let (mut lo, mut hi) = (s_center + s_width * (k - 1) as f64 / n as f64, s);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if cond(lo) * cond(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some((0.5 * (lo + hi)).sqrt());
        }
        prev = cur;
    }
    None
}

/// Per-derivative-order verdict of the long-range decay law.
#[derive(Debug, Clone)]
pub struct LongRangeReport {
    pub fits: Vec<DecayFit>,
    /// `true` when every fitted exponent is within `tol` of `-(rho + order)`.
    pub pass: bool,
    pub tol: f64,
}

/// Fit `sup_{|x|=r} |∂^α (g^{ij} - δ)|` against `r^{-ρ-|α|}` on dyadic shells
/// `r = 2, 4, 8, ...` inside the flattening window.
pub fn verify_long_range(metric: &Metric, box_half: f64, orders: usize) -> Result<LongRangeReport> {
    if orders > 2 {
        return Err(Error::InvalidParameter(
            "analytic derivatives available up to order 2".into(),
        ));
    }
    let r_cap = if metric.is_flat() {
        box_half
    } else {
        box_half.min(WINDOW_START_FRACTION * metric.l_flat)
    };
    let mut radii = Vec::new();
    let mut r = 2.0;
    while r <= r_cap {
        radii.push(r);
        r *= 2.0;
    }
    if radii.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "sample box holds only {} dyadic shells inside the flattening radius (need 3)",
            radii.len()
        )));
    }
    let tol = 0.3;
    let mut fits = Vec::new();
    let mut pass = true;
    for order in 0..=orders {
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .map(|&r| (r, shell_sup_deriv(metric, r, order)))
            .collect();
        let fit = DecayFit::from_points(&pts, &format!("shells_order{order}"), 1e-14);
        if !fit.identically_zero {
            pass &= fit.slope_within(-(metric.rho + order as f64), tol);
        }
        fits.push(fit);
    }
    Ok(LongRangeReport { fits, pass, tol })
}

/// Max over a shell (and over all entries / multi-indices of given order) of
/// `|∂^α (g^{ij} - δ_{ij})|`.
fn shell_sup_deriv(metric: &Metric, r: f64, order: usize) -> f64 {
    let points: Vec<Vec<f64>> = if metric.d == 1 {
        vec![vec![r], vec![-r]]
    } else {
        (0..64)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                vec![r * th.cos(), r * th.sin()]
            })
            .collect()
    };
    let mut sup: f64 = 0.0;
    for x in &points {
        let v = match order {
            0 => (metric.conformal(x) - 1.0).abs(),
            1 => {
                let g = metric.grad_conformal(x);
                g.iter().take(metric.d).fold(0.0f64, |m, &v| m.max(v.abs()))
            }
            _ => {
                let h = metric.hess_conformal(x);
                let mut m: f64 = 0.0;
                for i in 0..metric.d {
                    for j in 0..metric.d {
                        m = m.max(h[i][j].abs());
                    }
                }
                m
            }
        };
        sup = sup.max(v);
    }
    sup
}

/// Smooth radial cutoff: 1 for `|x| <= inner`, 0 for `|x| >= outer`,
/// C^4 smoothstep transition in between.
pub fn radial_cutoff(inner: f64, outer: f64) -> impl Fn(&[f64]) -> f64 + Clone + Send + Sync {
    move |x: &[f64]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= inner {
            1.0
        } else if r >= outer {
            0.0
        } else {
            1.0 - smoothstep((r - inner) / (outer - inner))
        }
    }
}

type SymbolEval = Arc<dyn Fn(&[f64], &[f64]) -> C64 + Send + Sync>;

/// A phase-space symbol `a(x, xi)` with optional compact frequency support
/// (an axis-aligned box in `xi`) and decay-order metadata for the class
/// `S(mu, -infinity)`.
#[derive(Clone)]
pub struct SymbolField {
    eval: SymbolEval,
    pub freq_support: Option<Vec<(f64, f64)>>,
    pub decay_order: f64,
    /// Declared independence of the spatial variable (enables exact
    /// profile factorizations downstream).
    pub x_independent: bool,
}

impl SymbolField {
    pub fn new<F>(eval: F, freq_support: Option<Vec<(f64, f64)>>, decay_order: f64) -> Self
    where
        F: Fn(&[f64], &[f64]) -> C64 + Send + Sync + 'static,
    {
        SymbolField { eval: Arc::new(eval), freq_support, decay_order, x_independent: false }
    }

    /// A pure frequency profile `a(x, ξ) = A(ξ)`.
    pub fn frequency_profile<F>(profile: F, freq_support: Vec<(f64, f64)>) -> Self
    where
        F: Fn(&[f64]) -> C64 + Send + Sync + 'static,
    {
        SymbolField {
            eval: Arc::new(move |_x, xi| profile(xi)),
            freq_support: Some(freq_support),
            decay_order: 0.0,
            x_independent: true,
        }
    }

    pub fn constant_one() -> Self {
        let mut s = SymbolField::new(|_, _| C64::new(1.0, 0.0), None, 0.0);
        s.x_independent = true;
        s
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> C64 {
        if let Some(ref sup) = self.freq_support {
            for (i, &(lo, hi)) in sup.iter().enumerate() {
                if xi[i] < lo || xi[i] > hi {
                    return C64::new(0.0, 0.0);
                }
            }
        }
        (self.eval)(x, xi)
    }
}

impl std::fmt::Debug for SymbolField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolField")
            .field("freq_support", &self.freq_support)
            .field("decay_order", &self.decay_order)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_principal_symbol_is_euclidean() {
        let m = builtin_metric("flat", &[("dim", 2.0)]).unwrap();
        let v = principal_symbol(&m, &[0.3, -1.2], &[3.0, 4.0]);
        assert_relative_eq!(v, 25.0, max_relative = 1e-15);
        assert_eq!(principal_symbol(&m, &[0.1, 0.2], &[0.0, 0.0]), 0.0);
        assert_eq!(m.ell_lower, 1.0);
        assert_eq!(m.ell_upper, 1.0);
    }

    #[test]
    fn bump_metric_matches_closed_form() {
        // g^{11}(x) = 1 + eps*w(x), w(x) = -(1+x^2)^{-rho/2} W(x^2)
        let eps = 0.1;
        let m = builtin_metric(
            "long_range_radial",
            &[("epsilon", eps), ("rho", 1.0), ("l_flat", 16.0)],
        )
        .unwrap();
        let x: f64 = 3.7; // inside the window plateau: W = 1
        let w = -(1.0 + x * x).powf(-0.5);
        let expect = (1.0 + eps * w) * 2.5 * 2.5;
        assert_relative_eq!(
            principal_symbol(&m, &[x], &[2.5]),
            expect,
            max_relative = 1e-14
        );
    }

    #[test]
    fn homogeneity_degree_two() {
        let m = builtin_metric("long_range_radial", &[("dim", 2.0)]).unwrap();
        let x = [1.3, -0.4];
        let xi = [0.7, 1.9];
        let lam = 3.7;
        let scaled: Vec<f64> = xi.iter().map(|v| v * lam).collect();
        assert_relative_eq!(
            principal_symbol(&m, &x, &scaled),
            lam * lam * principal_symbol(&m, &x, &xi),
            max_relative = 1e-12
        );
    }

    #[test]
    fn symmetry_inverse_and_ellipticity_on_samples() {
        for name in ["long_range_radial", "short_range_radial"] {
            let m = builtin_metric(name, &[("dim", 2.0), ("epsilon", 0.3)]).unwrap();
            for k in 0..50 {
                let x = [0.37 * k as f64 - 9.0, 0.11 * k as f64 - 2.0];
                let gi = m.inv_metric(&x);
                let gl = m.metric_tensor(&x);
                for i in 0..2 {
                    for j in 0..2 {
                        assert_eq!(gi[i][j], gi[j][i]);
                        // g^{ik} g_{kj} = delta
                        let mut s = 0.0;
                        for l in 0..2 {
                            s += gi[i][l] * gl[l][j];
                        }
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((s - expect).abs() < 1e-12);
                    }
                }
                // ellipticity of g_{ij} within the recorded constants
                let lam = gl[0][0];
                assert!(lam >= m.ell_lower - 1e-12 && lam <= m.ell_upper + 1e-12);
            }
        }
    }

    #[test]
    fn exactly_flat_beyond_window() {
        let m = builtin_metric("long_range_radial", &[("l_flat", 8.0)]).unwrap();
        for &x in &[8.0, 9.5, 20.0, -13.0] {
            assert_eq!(m.conformal(&[x]), 1.0);
            assert_eq!(m.grad_conformal(&[x])[0], 0.0);
        }
    }

    #[test]
    fn grad_hess_match_finite_differences() {
        let m = builtin_metric(
            "long_range_radial",
            &[("dim", 2.0), ("epsilon", 0.25), ("rho", 0.8), ("l_flat", 12.0)],
        )
        .unwrap();
        let h = 1e-5;
        for x in [[1.1, 0.7], [3.9, -2.2], [6.5, 1.0]] {
            let g = m.grad_conformal(&x);
            let hess = m.hess_conformal(&x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (m.conformal(&xp) - m.conformal(&xm)) / (2.0 * h);
                assert_relative_eq!(g[i], fd, max_relative = 1e-6, epsilon = 1e-9);
                for j in 0..2 {
                    let fd2 = (m.grad_conformal(&xp)[j] - m.grad_conformal(&xm)[j]) / (2.0 * h);
                    assert_relative_eq!(hess[i][j], fd2, max_relative = 1e-5, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn verify_long_range_flat_is_identically_zero() {
        let m = Metric::flat(1);
        let rep = verify_long_range(&m, 64.0, 1).unwrap();
        assert!(rep.pass);
        assert!(rep.fits.iter().all(|f| f.identically_zero));
    }

    #[test]
    fn verify_long_range_fits_declared_rho() {
        // rho = 1: orders 0 and 1 fit -1 and -2 within 0.3
        let m = builtin_metric(
            "long_range_radial",
            &[("epsilon", 0.2), ("rho", 1.0), ("l_flat", 20.0)],
        )
        .unwrap();
        let rep = verify_long_range(&m, 64.0, 1).unwrap();
        assert!(rep.pass, "fits: {:?}", rep.fits);
        assert!(rep.fits[0].exponent > -1.3 && rep.fits[0].exponent < -0.7);
        assert!(rep.fits[1].exponent > -2.3 && rep.fits[1].exponent < -1.7);
    }

    #[test]
    fn verify_long_range_rejects_thin_boxes() {
        let m = builtin_metric("long_range_radial", &[("l_flat", 4.0)]).unwrap();
        assert!(verify_long_range(&m, 64.0, 1).is_err());
    }

    #[test]
    fn ellipticity_guard() {
        let err = builtin_metric("long_range_radial", &[("epsilon", 2.0)]).unwrap_err();
        match err {
            Error::EllipticityViolated { epsilon } => assert_eq!(epsilon, 2.0),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(builtin_metric("nope", &[]).is_err());
    }

    #[test]
    fn trapping_well_has_circular_geodesic() {
        let m = builtin_metric("trapping_2d", &[]).unwrap();
        let r = m.trapped_radius.expect("well must trap");
        // on the rising side of the well, inside the flattening radius
        assert!(r > 3.0 && r < 4.0, "r = {r}");
        let s = r * r;
        let (m0, m1, _) = m.profile_m(s);
        assert!((s * m1 - (1.0 + m0)).abs() < 1e-10);
    }

    #[test]
    fn symbol_support_box_enforced() {
        let a = SymbolField::new(
            |_, _| C64::new(1.0, 0.0),
            Some(vec![(-1.0, 1.0)]),
            0.0,
        );
        assert_eq!(a.eval(&[0.0], &[2.0]).re, 0.0);
        assert_eq!(a.eval(&[0.0], &[0.5]).re, 1.0);
    }
}
