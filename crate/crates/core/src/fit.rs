//! Least-squares slope fits on log-log data and the `DecayFit` report type.

/// Result of fitting `log(value) = intercept + exponent * log(x)`.
///
/// `constant` is `exp(intercept)`, i.e. the prefactor of the fitted power law.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub exponent: f64,
    pub constant: f64,
    pub r2: f64,
    /// Window of the abscissa (h or t or lambda) the fit was taken over.
    pub window: (f64, f64),
    pub n_points: usize,
    /// Identifier of the probe family or data source that produced the values.
    pub probe_family: String,
    /// All values were below this floor; no meaningful power law (flat metric cases).
    pub identically_zero: bool,
}

impl DecayFit {
    /// Fit over `(x, value)` pairs with positive x. Non-positive values are
    /// treated via the `zero_floor`: if every value is below it the fit is
    /// reported as identically zero.
    pub fn from_points(points: &[(f64, f64)], probe_family: &str, zero_floor: f64) -> Self {
        let window = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
                (lo.min(x), hi.max(x))
            });
        if points.iter().all(|&(_, v)| v.abs() <= zero_floor) {
            return DecayFit {
                exponent: 0.0,
                constant: 0.0,
                r2: 1.0,
                window,
                n_points: points.len(),
                probe_family: probe_family.to_string(),
                identically_zero: true,
            };
        }
        let logs: Vec<(f64, f64)> = points
            .iter()
            .filter(|&&(x, v)| x > 0.0 && v > zero_floor)
            .map(|&(x, v)| (x.ln(), v.ln()))
            .collect();
        let (slope, intercept, r2) = linear_fit(&logs);
        DecayFit {
            exponent: slope,
            constant: intercept.exp(),
            r2,
            window,
            n_points: logs.len(),
            probe_family: probe_family.to_string(),
            identically_zero: false,
        }
    }

    pub fn slope_within(&self, target: f64, tol: f64) -> bool {
        (self.exponent - target).abs() <= tol
    }
}

/// Ordinary least squares for `y = a*x + b`; returns `(a, b, r2)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map_or(0.0, |p| p.1), 1.0);
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n, 0.0);
    }
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}
