//! Coefficient sequences `{a_k}` of the linear process and the exact
//! variances of their partial sums.
//!
//! For a kernel supported on `[k_min, k_max]` the block sum
//! `S_n = X_1 + ... + X_n` is linear in the innovations with coefficient
//! `W_n(m) = P(n - m) - P(-m)` on `xi_m`, where `P` is the prefix sum of the
//! kernel. Every variance here is `sum_m W_n(m)^2`, computed exactly over the
//! finite window.

use crate::error::{Error, Result};
use crate::series::IndexedSeries;

/// Relative bound on the discarded squared mass for fractional kernels.
pub const TAIL_TOLERANCE: f64 = 1e-6;

/// Largest truncation picked by [`default_truncation`].
pub const MAX_DEFAULT_K: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Reject `K` whose tail estimate exceeds the tolerance.
    Enforce,
    /// Accept any `K`, recording the tail estimate.
    Override,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    start: i64,
    coeffs: Vec<f64>,
    target_hurst: f64,
    tail_bound: f64,
    prefix: Vec<f64>,
    sum_sq: f64,
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index must lie in (0, 1), got {h}")))
    }
}

/// Fractional-difference coefficients `psi_0..=psi_k` for `d = H - 1/2`.
fn fractional_coeffs(d: f64, k: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(k + 1);
    psi.push(1.0);
    for j in 1..=k {
        let prev = psi[j - 1];
        psi.push(prev * (j as f64 - 1.0 + d) / j as f64);
    }
    psi
}

/// Power-law estimate of `sum_{j > k} psi_j^2`, using `psi_j ~ psi_k (j/k)^(d-1)`.
fn tail_estimate(d: f64, psi_k: f64, k: usize) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    psi_k * psi_k * k as f64 / (1.0 - 2.0 * d)
}

/// Smallest power-of-two truncation meeting [`TAIL_TOLERANCE`], capped at
/// [`MAX_DEFAULT_K`]. The flag is false when the cap binds.
pub fn default_truncation(h: f64) -> Result<(usize, bool)> {
    check_hurst(h)?;
    let d = h - 0.5;
    if d == 0.0 {
        return Ok((1, true));
    }
    let psi = fractional_coeffs(d, MAX_DEFAULT_K);
    let mut sum_sq = 0.0;
    let mut next = 16usize;
    for (j, p) in psi.iter().enumerate() {
        sum_sq += p * p;
        if j == next {
            if tail_estimate(d, *p, j) <= TAIL_TOLERANCE * sum_sq {
                return Ok((j, true));
            }
            next *= 2;
        }
    }
    Ok((MAX_DEFAULT_K, false))
}

/// One-sided fractional kernel truncated at `k` under the default rule.
pub fn make_fractional_kernel(h: f64, k: usize) -> Result<Kernel> {
    Kernel::fractional(h, k, Truncation::Enforce)
}

impl Kernel {
    fn from_parts(start: i64, coeffs: Vec<f64>, target_hurst: f64, tail_bound: f64) -> Result<Self> {
        check_hurst(target_hurst)?;
        if coeffs.is_empty() || coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("kernel coefficients must be finite and non-empty".into()));
        }
        let sum_sq: f64 = coeffs.iter().map(|a| a * a).sum();
        if !(sum_sq > 0.0) {
            return Err(Error::Degenerate("kernel has zero squared mass".into()));
        }
        let mut acc = 0.0;
        let prefix = coeffs
            .iter()
            .map(|a| {
                acc += a;
                acc
            })
            .collect();
        Ok(Self {
            start,
            coeffs,
            target_hurst,
            tail_bound,
            prefix,
            sum_sq,
        })
    }

    /// `a_0 = 1`: i.i.d. increments, declared with Hurst index `h`.
    pub fn iid(h: f64) -> Result<Self> {
        Self::from_parts(0, vec![1.0], h, 0.0)
    }

    /// Arbitrary finite kernel with `a_{start + i} = coeffs[i]`.
    pub fn explicit(start: i64, coeffs: Vec<f64>, h: f64) -> Result<Self> {
        Self::from_parts(start, coeffs, h, 0.0)
    }

    /// One-sided fractional-difference kernel `psi_0..=psi_k`, `d = h - 1/2`.
    /// For `h = 1/2` this is the i.i.d. kernel.
    pub fn fractional(h: f64, k: usize, truncation: Truncation) -> Result<Self> {
        check_hurst(h)?;
        if k < 1 {
            return Err(Error::Domain("truncation K must be >= 1".into()));
        }
        let d = h - 0.5;
        if d == 0.0 {
            return Self::iid(h);
        }
        let psi = fractional_coeffs(d, k);
        let tail = tail_estimate(d, psi[k], k);
        let kept: f64 = psi.iter().map(|p| p * p).sum();
        if truncation == Truncation::Enforce && tail > TAIL_TOLERANCE * kept {
            return Err(Error::Truncation {
                k,
                tail,
                limit: TAIL_TOLERANCE * kept,
            });
        }
        Self::from_parts(0, psi, h, tail)
    }

    /// Fractional kernel with the default truncation.
    pub fn fractional_default(h: f64) -> Result<Self> {
        let (k, within) = default_truncation(h)?;
        if !within {
            log::warn!("H = {h}: default truncation capped at K = {k}; tail tolerance not met");
        }
        let mode = if within { Truncation::Enforce } else { Truncation::Override };
        Self::fractional(h, k, mode)
    }

    /// Symmetric two-sided variant: the one-sided kernel plus its mirror
    /// image, scaled by `1/sqrt(2)`.
    pub fn mirrored(&self) -> Result<Self> {
        let lo = self.start.min(-self.end());
        let hi = self.end().max(-self.start);
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let coeffs = (lo..=hi).map(|k| w * (self.at(k) + self.at(-k))).collect();
        Self::from_parts(lo, coeffs, self.target_hurst, 2.0 * self.tail_bound)
    }

    /// Kernel shifted so that `a'_k = a_{k - c}`.
    pub fn shifted(&self, c: i64) -> Self {
        let mut out = self.clone();
        out.start += c;
        out
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.coeffs.len() as i64 - 1
    }

    /// Window length `k_max - k_min`.
    pub fn span(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn target_hurst(&self) -> f64 {
        self.target_hurst
    }

    /// Declared estimate of the discarded `sum a_k^2`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    /// `a_k`, zero outside the window.
    pub fn at(&self, k: i64) -> f64 {
        if k < self.start || k > self.end() {
            0.0
        } else {
            self.coeffs[(k - self.start) as usize]
        }
    }

    /// `P(x) = sum_{j <= x} a_j`.
    pub fn prefix(&self, x: i64) -> f64 {
        if x < self.start {
            0.0
        } else if x >= self.end() {
            self.prefix[self.prefix.len() - 1]
        } else {
            self.prefix[(x - self.start) as usize]
        }
    }

    /// `a_{k+1} + ... + a_{k+n}`.
    pub fn window_sum(&self, k: i64, n: usize) -> f64 {
        self.prefix(k + n as i64) - self.prefix(k)
    }

    /// `sum_j a_j a_{j + lag}`.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        let c = &self.coeffs;
        if lag >= c.len() {
            return 0.0;
        }
        c.iter().zip(&c[lag..]).map(|(x, y)| x * y).sum()
    }

    /// Coefficients of `S_m` on the innovations: `W_m(j) = P(m - j) - P(-j)`
    /// for `j` in `[1 - k_max, m - k_min]`.
    pub fn partial_sum_coeffs(&self, m: usize) -> IndexedSeries {
        if m == 0 {
            return IndexedSeries::new(1 - self.end(), Vec::new());
        }
        let lo = 1 - self.end();
        let hi = m as i64 - self.start;
        let values = (lo..=hi).map(|j| self.prefix(m as i64 - j) - self.prefix(-j)).collect();
        IndexedSeries::new(lo, values)
    }

    /// `Var(S_n)` for unit-variance innovations.
    pub fn var_partial_sum(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let lo = 1 - self.end();
        let hi = n as i64 - self.start;
        (lo..=hi)
            .map(|j| {
                let w = self.prefix(n as i64 - j) - self.prefix(-j);
                w * w
            })
            .sum()
    }

    /// `h(n) = sqrt(Var(S_n)) / n^H`, so that `Var(S_n) = h(n)^2 n^(2H)`.
    pub fn h_of(&self, n: usize) -> Result<f64> {
        if n < 1 {
            return Err(Error::Domain("h(n) needs n >= 1".into()));
        }
        let v = self.var_partial_sum(n);
        if !(v > 0.0) {
            return Err(Error::Degenerate(format!("Var(S_{n}) = 0")));
        }
        Ok(v.sqrt() / (n as f64).powf(self.target_hurst))
    }

    /// Half the least-squares slope of `log Var(S_n)` on `log n`.
    pub fn estimate_hurst_slope(&self, n_values: &[usize]) -> Result<f64> {
        if n_values.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: n_values.len(),
            });
        }
        if n_values.iter().any(|&n| n < 2) || n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("n values must be ascending and >= 2".into()));
        }
        let pts: Vec<(f64, f64)> = n_values
            .iter()
            .map(|&n| {
                let v = self.var_partial_sum(n);
                ((n as f64).ln(), v.ln())
            })
            .collect();
        if pts.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::Degenerate("zero partial-sum variance".into()));
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx / 2.0)
    }
}
