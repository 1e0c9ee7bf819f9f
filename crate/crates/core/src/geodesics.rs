//! Hamiltonian flow of the principal symbol, non-trapping certification,
//! and the outgoing/incoming phase-space zones with their smooth cutoffs.

use crate::error::{Error, Result};
use crate::metric::{smoothstep, Metric, SymbolField};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneSign {
    Outgoing,
    Incoming,
}

impl ZoneSign {
    pub fn factor(&self) -> f64 {
        match self {
            ZoneSign::Outgoing => 1.0,
            ZoneSign::Incoming => -1.0,
        }
    }
}

/// The zone `Γ^±(R, J, σ) = { |x| > R, |ξ|² ∈ J, ± cos(x,ξ) > -σ }`.
#[derive(Debug, Clone, Copy)]
pub struct ZoneDescriptor {
    pub sign: ZoneSign,
    pub radius: f64,
    pub energy: (f64, f64),
    pub aperture: f64,
}

impl ZoneDescriptor {
    pub fn new(sign: ZoneSign, radius: f64, energy: (f64, f64), aperture: f64) -> Result<ZoneDescriptor> {
        if !(0.0 < energy.0 && energy.0 < energy.1) {
            return Err(Error::InvalidParameter("need 0 < E- < E+".into()));
        }
        if radius <= 0.0 {
            return Err(Error::InvalidParameter("zone radius must be positive".into()));
        }
        if !(-1.0 < aperture && aperture < 1.0) {
            return Err(Error::InvalidParameter("aperture must lie in (-1, 1)".into()));
        }
        Ok(ZoneDescriptor { sign, radius, energy, aperture })
    }
}

/// Exact evaluation of the three defining inequalities (all strict);
/// `x = 0` or `ξ = 0` is outside every zone.
pub fn zone_membership(z: &ZoneDescriptor, x: &[f64], xi: &[f64]) -> bool {
    let rx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rxi: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rx == 0.0 || rxi == 0.0 {
        return false;
    }
    if rx <= z.radius {
        return false;
    }
    let e = rxi * rxi;
    if e <= z.energy.0 || e >= z.energy.1 {
        return false;
    }
    let cos: f64 = x.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>() / (rx * rxi);
    z.sign.factor() * cos > -z.aperture
}

/// Product cutoff `ψ_R^± = χ_R(x) θ_{J,J0}(|ξ|²) κ_{σ,σ0}(± cos(x,ξ))`:
/// identically 1 on `Γ^±(R, J, σ)` and 0 outside `Γ^±(R/2, J0, σ0)`.
pub fn zone_cutoff(z: &ZoneDescriptor, j0: (f64, f64), sigma0: f64) -> Result<SymbolField> {
    if !(j0.0 < z.energy.0 && z.energy.1 < j0.1 && j0.0 > 0.0) {
        return Err(Error::InvalidParameter("need J strictly nested in J0".into()));
    }
    if !(z.aperture < sigma0 && sigma0 < 1.0) {
        return Err(Error::InvalidParameter("need sigma < sigma0 < 1".into()));
    }
    let z = *z;
    let rise = |v: f64, lo: f64, hi: f64| smoothstep((v - lo) / (hi - lo));
    Ok(SymbolField::new(
        move |x: &[f64], xi: &[f64]| {
            let rx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rxi: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rx == 0.0 || rxi == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let chi = rise(rx / z.radius, 0.5, 1.0);
            let e = rxi * rxi;
            let theta = rise(e, j0.0, z.energy.0) * (1.0 - rise(e, z.energy.1, j0.1));
            let cos: f64 =
                x.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>() / (rx * rxi);
            let kappa = rise(z.sign.factor() * cos, -sigma0, -z.aperture);
            C64::new(chi * theta * kappa, 0.0)
        },
        None,
        0.0,
    ))
}

// ---------------------------------------------------------------------------
// Hamiltonian flow
// ---------------------------------------------------------------------------

const STATE_MAX: usize = 4; // (x, xi) in d <= 2

type State = [f64; STATE_MAX];

fn rhs(metric: &Metric, y: &State, out: &mut State) {
    let d = metric.d;
    let x = &y[..d];
    let xi = &y[d..2 * d];
    let a = metric.conformal(x);
    let ga = metric.grad_conformal(x);
    let xi2: f64 = xi.iter().map(|v| v * v).sum();
    for i in 0..d {
        out[i] = 2.0 * a * xi[i];
        out[d + i] = -ga[i] * xi2;
    }
}

fn rkf45_step(metric: &Metric, y: &State, h: f64, dim2: usize) -> (State, f64) {
    let mut k = [[0.0; STATE_MAX]; 6];
    let mut tmp = [0.0; STATE_MAX];
    let a: [&[f64]; 5] = [
        &[0.25],
        &[3.0 / 32.0, 9.0 / 32.0],
        &[1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
        &[439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
        &[-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ];
    let b5 = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
    let b4 = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];
    rhs(metric, y, &mut k[0]);
    for stage in 0..5 {
        for i in 0..dim2 {
            let mut acc = y[i];
            for (s, &c) in a[stage].iter().enumerate() {
                acc += h * c * k[s][i];
            }
            tmp[i] = acc;
        }
        let mut kn = [0.0; STATE_MAX];
        rhs(metric, &tmp, &mut kn);
        k[stage + 1] = kn;
    }
    let mut y5 = [0.0; STATE_MAX];
    let mut err: f64 = 0.0;
    for i in 0..dim2 {
        let mut acc5 = y[i];
        let mut acc4 = y[i];
        for s in 0..6 {
            acc5 += h * b5[s] * k[s][i];
            acc4 += h * b4[s] * k[s][i];
        }
        y5[i] = acc5;
        err = err.max((acc5 - acc4).abs());
    }
    (y5, err)
}

/// One seed integrated adaptively to time `t_end` (either sign), invoking
/// `watch` after every accepted step; `watch` may stop the integration by
/// returning `false`.
fn integrate(
    metric: &Metric,
    seed: (&[f64], &[f64]),
    t_end: f64,
    tol: f64,
    mut watch: impl FnMut(f64, &State) -> bool,
) -> Result<(f64, State)> {
    let d = metric.d;
    let dim2 = 2 * d;
    let mut y = [0.0; STATE_MAX];
    y[..d].copy_from_slice(seed.0);
    y[d..dim2].copy_from_slice(&seed.1[..d]);
    let dir = t_end.signum();
    let t_abs = t_end.abs();
    if t_abs == 0.0 {
        return Ok((0.0, y));
    }
    let mut t = 0.0;
    let mut h = (t_abs / 100.0).min(0.1).max(1e-6);
    let p0_seed = crate::metric::principal_symbol(metric, seed.0, seed.1);
    let scale: f64 = y.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    while t < t_abs {
        let step = h.min(t_abs - t);
        let (y_new, err) = rkf45_step(metric, &y, dir * step, dim2);
        let target = tol * scale.max(1.0);
        if err <= target * step.max(1e-12) {
            // energy-drift rejection guard
            let p0_new = crate::metric::principal_symbol(metric, &y_new[..d], &y_new[d..dim2]);
            if (p0_new - p0_seed).abs() > 10.0 * tol * p0_seed.max(1.0) * (t + step).max(1.0) {
                if step < 1e-12 {
                    return Err(Error::Numerical("step-size underflow in flow".into()));
                }
                h = step * 0.5;
                continue;
            }
            t += step;
            y = y_new;
            if !watch(dir * t, &y) {
                return Ok((dir * t, y));
            }
            let grow = if err > 0.0 { 0.9 * (target * step / err).powf(0.2) } else { 2.0 };
            h = (step * grow.clamp(0.2, 2.5)).min(1.0);
        } else {
            if step < 1e-12 {
                return Err(Error::Numerical("step-size underflow in flow".into()));
            }
            h = step * 0.5 * (target * step / err).powf(0.25).clamp(0.1, 0.9);
        }
    }
    Ok((dir * t, y))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: (Vec<f64>, Vec<f64>),
    /// `(t, x, xi)` samples at the requested output times.
    pub samples: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub p0: f64,
    /// Max relative drift of `p0` along the recorded samples.
    pub energy_drift: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub trajectories: Vec<Trajectory>,
    pub tol: f64,
}

/// Integrate the Hamiltonian system `ẋ = ∂_ξ p0, ξ̇ = -∂_x p0` for every
/// seed, sampling at the given increasing time lattice (first entry 0).
pub fn hamiltonian_flow(
    metric: &Metric,
    seeds: &[(Vec<f64>, Vec<f64>)],
    times: &[f64],
    tol: f64,
) -> Result<TrajectoryBundle> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidParameter("time lattice must start at 0".into()));
    }
    let d = metric.d;
    let mut trajectories = Vec::with_capacity(seeds.len());
    for (x0, xi0) in seeds {
        let p0 = crate::metric::principal_symbol(metric, x0, xi0);
        let mut samples = vec![(0.0, x0.clone(), xi0.clone())];
        let mut drift: f64 = 0.0;
        let mut cur_x = x0.clone();
        let mut cur_xi = xi0.clone();
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            let (_, y) = integrate(metric, (&cur_x, &cur_xi), dt, tol, |_, _| true)?;
            cur_x = y[..d].to_vec();
            cur_xi = y[d..2 * d].to_vec();
            let p = crate::metric::principal_symbol(metric, &cur_x, &cur_xi);
            drift = drift.max((p - p0).abs() / p0.max(1e-300));
            samples.push((w[1], cur_x.clone(), cur_xi.clone()));
        }
        trajectories.push(Trajectory { seed: (x0.clone(), xi0.clone()), samples, p0, energy_drift: drift });
    }
    Ok(TrajectoryBundle { trajectories, tol })
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub seed: (Vec<f64>, Vec<f64>),
    /// Escape time, or None when the seed failed to leave by `t_max`.
    pub escape_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub outcomes: Vec<ScanOutcome>,
    pub trapped: bool,
    pub worst_escape_time: f64,
}

/// Integrate each seed until `|X_t| > r_escape` or `t = t_max`; a seed that
/// never leaves is reported as a failure-to-escape certificate.
pub fn nontrapping_scan(
    metric: &Metric,
    seeds: &[(Vec<f64>, Vec<f64>)],
    r_escape: f64,
    t_max: f64,
    tol: f64,
) -> Result<ScanReport> {
    use rayon::prelude::*;
    let d = metric.d;
    let outcomes: Vec<ScanOutcome> = seeds
        .par_iter()
        .map(|(x0, xi0)| {
            let mut escape = None;
            let _ = integrate(metric, (x0, xi0), t_max, tol, |t, y| {
                let r: f64 = y[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > r_escape {
                    escape = Some(t);
                    false
                } else {
                    true
                }
            });
            ScanOutcome { seed: (x0.clone(), xi0.clone()), escape_time: escape }
        })
        .collect();
    let trapped = outcomes.iter().any(|o| o.escape_time.is_none());
    let worst = outcomes
        .iter()
        .filter_map(|o| o.escape_time)
        .fold(0.0, f64::max);
    Ok(ScanReport { outcomes, trapped, worst_escape_time: worst })
}

/// Uniform seed lattice covering `{|x| <= r, |ξ|² ∈ J}`: `nx` positions per
/// axis and `ndir` momentum directions at three energies.
pub fn seed_lattice(d: usize, r: f64, j: (f64, f64), nx: usize, ndir: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let energies = [j.0 * 1.01, 0.5 * (j.0 + j.1), j.1 * 0.99];
    let mut seeds = Vec::new();
    let positions: Vec<Vec<f64>> = match d {
        1 => (0..nx)
            .map(|i| vec![-r + 2.0 * r * (i as f64 + 0.5) / nx as f64])
            .collect(),
        _ => {
            let mut p = Vec::new();
            for i in 0..nx {
                for l in 0..nx {
                    let x = -r + 2.0 * r * (i as f64 + 0.5) / nx as f64;
                    let y = -r + 2.0 * r * (l as f64 + 0.5) / nx as f64;
                    if x * x + y * y <= r * r {
                        p.push(vec![x, y]);
                    }
                }
            }
            p
        }
    };
    for pos in positions {
        for dir in 0..ndir {
            for &e in &energies {
                let speed = e.sqrt();
                let xi = match d {
                    1 => vec![if dir % 2 == 0 { speed } else { -speed }],
                    _ => {
                        let th = 2.0 * std::f64::consts::PI * dir as f64 / ndir as f64;
                        vec![speed * th.cos(), speed * th.sin()]
                    }
                };
                seeds.push((pos.clone(), xi));
            }
        }
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::builtin_metric;

    #[test]
    fn flat_flow_is_straight() {
        let m = Metric::flat(2);
        let seeds = vec![(vec![0.0, 0.0], vec![1.0, 0.0])];
        let times: Vec<f64> = (0..6).map(|k| 0.5 * k as f64).collect();
        let b = hamiltonian_flow(&m, &seeds, &times, 1e-10).unwrap();
        for (t, x, xi) in &b.trajectories[0].samples {
            assert!((x[0] - 2.0 * t).abs() < 1e-9);
            assert!(x[1].abs() < 1e-12);
            assert!((xi[0] - 1.0).abs() < 1e-12 && xi[1].abs() < 1e-12);
        }
    }

    #[test]
    fn energy_conserved_along_flow() {
        let m = builtin_metric(
            "long_range_radial",
            &[("dim", 2.0), ("epsilon", 0.3), ("rho", 0.8), ("l_flat", 10.0)],
        )
        .unwrap();
        let seeds = vec![
            (vec![1.0, 2.0], vec![0.9, -0.3]),
            (vec![-3.0, 0.5], vec![0.2, 1.1]),
        ];
        let times: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let b = hamiltonian_flow(&m, &seeds, &times, 1e-10).unwrap();
        for traj in &b.trajectories {
            assert!(traj.energy_drift < 1e-8, "drift {}", traj.energy_drift);
        }
    }

    #[test]
    fn matches_fine_fixed_step_rk4() {
        let m = builtin_metric("long_range_radial", &[("epsilon", 0.3), ("l_flat", 6.0)]).unwrap();
        let seed = (vec![-4.0], vec![1.2]);
        let t_end = 3.0;
        let times = vec![0.0, t_end];
        let b = hamiltonian_flow(&m, &[seed.clone()], &times, 1e-10).unwrap();
        let (_, x_adapt, xi_adapt) = &b.trajectories[0].samples[1];
        // independent fixed-step RK4 oracle at high resolution
        let n = 30_000;
        let h = t_end / n as f64;
        let mut y = [seed.0[0], seed.1[0], 0.0, 0.0];
        let f = |y: &[f64; 4]| {
            let a = m.conformal(&y[..1]);
            let ga = m.grad_conformal(&y[..1]);
            [2.0 * a * y[1], -ga[0] * y[1] * y[1], 0.0, 0.0]
        };
        for _ in 0..n {
            let k1 = f(&y);
            let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], 0.0, 0.0];
            let k2 = f(&y2);
            let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], 0.0, 0.0];
            let k3 = f(&y3);
            let y4 = [y[0] + h * k3[0], y[1] + h * k3[1], 0.0, 0.0];
            let k4 = f(&y4);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        assert!((x_adapt[0] - y[0]).abs() < 1e-6, "{} vs {}", x_adapt[0], y[0]);
        assert!((xi_adapt[0] - y[1]).abs() < 1e-6);
    }

    #[test]
    fn flow_time_reversal() {
        let m = builtin_metric(
            "long_range_radial",
            &[("dim", 2.0), ("epsilon", 0.25), ("l_flat", 8.0)],
        )
        .unwrap();
        let x0 = vec![1.5, -0.7];
        let xi0 = vec![0.8, 0.4];
        let t = 2.0;
        let fwd = hamiltonian_flow(&m, &[(x0.clone(), xi0.clone())], &[0.0, t], 1e-11).unwrap();
        let (_, x1, xi1) = fwd.trajectories[0].samples[1].clone();
        // reverse momentum, flow t, reverse again
        let neg: Vec<f64> = xi1.iter().map(|v| -v).collect();
        let back = hamiltonian_flow(&m, &[(x1, neg)], &[0.0, t], 1e-11).unwrap();
        let (_, x2, xi2) = back.trajectories[0].samples[1].clone();
        for i in 0..2 {
            assert!((x2[i] - x0[i]).abs() < 1e-6);
            assert!((-xi2[i] - xi0[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_scan_escapes_quickly() {
        let m = Metric::flat(1);
        let j = (0.5, 2.0);
        let seeds = seed_lattice(1, 8.0, j, 6, 2);
        let rep = nontrapping_scan(&m, &seeds, 8.0, 100.0, 1e-9).unwrap();
        assert!(!rep.trapped);
        let bound = 8.0 / (2.0 * j.0.sqrt()) + 8.05 / j.0.sqrt();
        assert!(rep.worst_escape_time <= bound, "{} > {}", rep.worst_escape_time, bound);
    }

    #[test]
    fn small_perturbation_is_nontrapping() {
        let m = builtin_metric(
            "long_range_radial",
            &[("dim", 2.0), ("epsilon", 0.2), ("rho", 1.0), ("l_flat", 10.0)],
        )
        .unwrap();
        let seeds = seed_lattice(2, 12.0, (0.5, 2.0), 4, 4);
        let rep = nontrapping_scan(&m, &seeds, 12.0, 200.0, 1e-9).unwrap();
        assert!(!rep.trapped);
    }

    #[test]
    fn trapping_well_flags_trapped_seed() {
        let m = builtin_metric("trapping_2d", &[]).unwrap();
        let r = m.trapped_radius.unwrap();
        let e = 1.0;
        let speed = (e / m.conformal(&[r, 0.0])).sqrt();
        let mut seeds = vec![(vec![r, 0.0], vec![0.0, speed])];
        seeds.extend(seed_lattice(2, 6.0, (0.5, 2.0), 3, 4));
        let rep = nontrapping_scan(&m, &seeds, 12.0, 300.0, 1e-9).unwrap();
        assert!(rep.trapped);
        assert!(rep.outcomes[0].escape_time.is_none(), "circular orbit escaped");
        // radial seeds still escape
        assert!(rep.outcomes.iter().any(|o| o.escape_time.is_some()));
    }

    #[test]
    fn zone_membership_trivials() {
        let z = ZoneDescriptor::new(ZoneSign::Outgoing, 1.0, (0.5, 2.0), 0.5).unwrap();
        let r = 1.0;
        assert!(zone_membership(&z, &[2.0 * r, 0.0], &[1.0, 0.0]));
        assert!(!zone_membership(&z, &[2.0 * r, 0.0], &[-1.0, 0.0]));
        let zm = ZoneDescriptor::new(ZoneSign::Incoming, 1.0, (0.5, 2.0), 0.5).unwrap();
        assert!(zone_membership(&zm, &[2.0 * r, 0.0], &[-1.0, 0.0]));
        // boundary cos = -sigma exactly: excluded by strictness
        let c = -0.5;
        let x = [2.0, 0.0];
        let xi = [c, (1.0f64 - c * c).sqrt()];
        assert!(!zone_membership(&z, &x, &xi));
        // degenerate inputs
        assert!(!zone_membership(&z, &[0.0, 0.0], &[1.0, 0.0]));
        assert!(!zone_membership(&z, &[2.0, 0.0], &[0.0, 0.0]));
    }

    #[test]
    fn outgoing_persistence_on_flat_metric() {
        let m = Metric::flat(2);
        let z = ZoneDescriptor::new(ZoneSign::Outgoing, 4.0, (0.5, 2.0), 0.5).unwrap();
        let seeds = vec![
            (vec![5.0, 1.0], vec![1.0, 0.2]),
            (vec![0.0, 6.0], vec![0.3, -0.2]),
            (vec![-5.0, 3.0], vec![-0.9, 0.5]),
        ];
        let times: Vec<f64> = (0..21).map(|k| 0.5 * k as f64).collect();
        let b = hamiltonian_flow(&m, &seeds, &times, 1e-10).unwrap();
        for traj in &b.trajectories {
            let (x0, xi0) = (&traj.seed.0, &traj.seed.1);
            if !zone_membership(&z, x0, xi0) {
                continue;
            }
            for (_, x, xi) in &traj.samples {
                assert!(zone_membership(&z, x, xi), "left the zone at {x:?}");
            }
        }
    }

    #[test]
    fn cutoff_profile_and_derivative_sweep() {
        let j = (0.5, 2.0);
        let j0 = (0.4, 2.5);
        for &r in &[8.0f64, 16.0, 32.0] {
            let z = ZoneDescriptor::new(ZoneSign::Outgoing, r, j, 0.5).unwrap();
            let psi = zone_cutoff(&z, j0, 0.7).unwrap();
            // deep inside: 1; below R/2: 0
            assert_eq!(psi.eval(&[2.0 * r, 0.0], &[1.0, 0.0]).re, 1.0);
            assert_eq!(psi.eval(&[0.4 * r, 0.0], &[1.0, 0.0]).re, 0.0);
            // |d_x psi| * min(<x>, R) stays bounded across the R sweep
            let e = 1e-5;
            let mut worst: f64 = 0.0;
            for s in 0..200 {
                let x = 0.4 * r + (1.4 * r) * s as f64 / 199.0;
                let up = psi.eval(&[x + e, 0.0], &[1.0, 0.0]).re;
                let dn = psi.eval(&[x - e, 0.0], &[1.0, 0.0]).re;
                let deriv = ((up - dn) / (2.0 * e)).abs();
                worst = worst.max(deriv * x.hypot(1.0).min(r));
            }
            assert!(worst < 6.0, "R = {r}: sup |dpsi| min(<x>,R) = {worst}");
        }
    }

    proptest::proptest! {
        #[test]
        fn membership_sign_symmetry(
            x0 in -10.0f64..10.0, x1 in -10.0f64..10.0,
            k0 in -2.0f64..2.0, k1 in -2.0f64..2.0,
        ) {
            let zp = ZoneDescriptor::new(ZoneSign::Outgoing, 2.0, (0.25, 3.0), 0.4).unwrap();
            let zm = ZoneDescriptor::new(ZoneSign::Incoming, 2.0, (0.25, 3.0), 0.4).unwrap();
            let x = [x0, x1];
            let xi = [k0, k1];
            let neg = [-k0, -k1];
            proptest::prop_assert_eq!(
                zone_membership(&zp, &x, &xi),
                zone_membership(&zm, &x, &neg)
            );
        }
    }
}
