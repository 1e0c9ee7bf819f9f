//! Versioned, seeded probe families for empirical operator norms.
//!
//! Sweep constants are suprema over these fixed families (coherent-state
//! lattice, seeded band-limited random fields, point-like data), so repeated
//! runs with the same seed give identical numbers.

use crate::field::{coherent_state, Field};
use crate::grid::Grid;
use crate::C64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const PROBE_VERSION: &str = "v1";

#[derive(Debug, Clone)]
pub struct Probe {
    pub id: String,
    pub field: Field,
}

#[derive(Debug, Clone)]
pub struct ProbeFamily {
    pub id: String,
    pub probes: Vec<Probe>,
}

impl ProbeFamily {
    /// Coherent-state lattice adapted to the energy window `j` at scale `h`,
    /// plus seeded band-limited random fields. All probes are L2-normalized.
    pub fn standard(grid: &Grid, h: f64, j: (f64, f64), seed: u64, n_random: usize) -> ProbeFamily {
        let mut probes = Vec::new();
        let e_mid = 0.5 * (j.0 + j.1);
        let speed = e_mid.sqrt();
        let centers: Vec<Vec<f64>> = if grid.d == 1 {
            vec![vec![0.0], vec![-grid.half_width / 3.0]]
        } else {
            vec![vec![0.0, 0.0], vec![-grid.half_width / 3.0, grid.half_width / 4.0]]
        };
        let directions: Vec<Vec<f64>> = if grid.d == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-std::f64::consts::FRAC_1_SQRT_2; 2]]
        };
        for (ci, c) in centers.iter().enumerate() {
            for (di, dir) in directions.iter().enumerate() {
                let xi0: Vec<f64> = dir.iter().map(|v| v * speed).collect();
                if let Ok(f) = coherent_state(grid, c, &xi0, h) {
                    probes.push(Probe { id: format!("coh{ci}{di}"), field: f });
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k_cap = (1.2 * j.1.sqrt() / h).min(0.95 * grid.k_max());
        for r in 0..n_random {
            let f = band_limited_random(grid, k_cap, &mut rng);
            probes.push(Probe { id: format!("rnd{r}"), field: f });
        }
        ProbeFamily {
            id: format!("{PROBE_VERSION}-std-seed{seed}"),
            probes,
        }
    }

    /// Family with point-like data added, for `L^q -> L^r` constants with
    /// small q where concentrated data saturates the bound.
    pub fn with_point_data(mut self, grid: &Grid) -> ProbeFamily {
        let mut f = Field::delta_at(grid, &vec![0.0; grid.d]);
        let n = f.norm_l2();
        f.scale(C64::new(1.0 / n, 0.0));
        self.probes.push(Probe { id: "delta".into(), field: f });
        self.id.push_str("-pt");
        self
    }

    pub fn ids(&self) -> Vec<String> {
        self.probes.iter().map(|p| p.id.clone()).collect()
    }
}

/// Random field with spectrum supported in `|k|_inf <= k_cap`, L2-normalized,
/// Nyquist-free.
pub fn band_limited_random(grid: &Grid, k_cap: f64, rng: &mut ChaCha8Rng) -> Field {
    let mut coeffs = vec![C64::new(0.0, 0.0); grid.len()];
    for (idx, c) in coeffs.iter_mut().enumerate() {
        let k = grid.wavevector(idx);
        let m_axes = match grid.d {
            1 => [idx, 0],
            _ => [idx / grid.n, idx % grid.n],
        };
        let nyquist = (0..grid.d).any(|a| grid.is_nyquist(m_axes[a]));
        let inside = (0..grid.d).all(|a| k[a].abs() <= k_cap);
        if inside && !nyquist {
            *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let mut f = Field::from_coeffs(grid, coeffs);
    let n = f.norm_l2();
    if n > 0.0 {
        f.scale(C64::new(1.0 / n, 0.0));
    }
    f
}
