//! Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.

use crate::error::{Error, Result};

pub const KS_MIN_SAMPLE: usize = 50;

const SERIES_TERMS: usize = 100;

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form, fast for small lambda
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=SERIES_TERMS)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                (-k * k * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let sf: f64 = (1..=SERIES_TERMS)
        .map(|j| {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            let jf = j as f64;
            sign * (-2.0 * jf * jf * lambda * lambda).exp()
        })
        .sum::<f64>()
        * 2.0;
    sf.clamp(0.0, 1.0)
}

/// Statistic `D = sup |F_x - F_y|` and its asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    for s in [x, y] {
        if s.len() < KS_MIN_SAMPLE {
            return Err(Error::InsufficientData {
                needed: KS_MIN_SAMPLE,
                got: s.len(),
            });
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("KS sample contains NaN".into()));
        }
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let lambda = (n * m / (n + m)).sqrt() * d;
    Ok((d, kolmogorov_sf(lambda)))
}
