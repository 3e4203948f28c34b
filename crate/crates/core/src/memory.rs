//! Slowly varying functions and memory functions of class R_nu.
//!
//! A memory function is `M(t) = l(t) * t^nu` with `nu >= 0` and `l` slowly
//! varying, non-negative and non-decreasing on `[0, inf)`. The convention
//! `0^0 = 1` makes `M(0) = l(0)` when `nu = 0` and `M(0) = 0` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points at which monotonicity and non-negativity are spot-checked.
const CHECK_GRID: [f64; 12] = [
    0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 100.0, 1e3, 1e4, 1e6, 1e9,
];

/// A slowly varying function drawn from a closed set of forms, each with a
/// known limit at infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// `l(t) = c`.
    Constant { c: f64 },
    /// `l(t) = log(e + t)`.
    LogShift,
    /// `l(t) = c_inf - b / (1 + t)`.
    BoundedRational { c_inf: f64, b: f64 },
    /// Piecewise-linear through `knots` (ascending `t`), equal to the first
    /// knot value before it and to `tail` after the last knot.
    Tabulated { knots: Vec<(f64, f64)>, tail: f64 },
}

impl SlowlyVarying {
    pub fn constant(c: f64) -> Self {
        SlowlyVarying::Constant { c }
    }

    pub fn bounded_rational(c_inf: f64, b: f64) -> Self {
        SlowlyVarying::BoundedRational { c_inf, b }
    }

    pub fn tabulated(knots: Vec<(f64, f64)>, tail: f64) -> Result<Self> {
        let l = SlowlyVarying::Tabulated { knots, tail };
        l.validate()?;
        Ok(l)
    }

    /// Shape checks that do not involve monotonicity.
    pub fn validate(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant { c } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::Domain(format!("constant l must be finite and >= 0, got {c}")));
                }
            }
            SlowlyVarying::LogShift => {}
            SlowlyVarying::BoundedRational { c_inf, b } => {
                if !(c_inf.is_finite() && b.is_finite()) {
                    return Err(Error::Domain("bounded_rational parameters must be finite".into()));
                }
                if c_inf - b.max(0.0) < 0.0 {
                    return Err(Error::Domain(format!(
                        "bounded_rational takes negative values: c_inf = {c_inf}, b = {b}"
                    )));
                }
            }
            SlowlyVarying::Tabulated { knots, tail } => {
                if knots.is_empty() {
                    return Err(Error::Domain("tabulated l needs at least one knot".into()));
                }
                if knots[0].0 < 0.0 {
                    return Err(Error::Domain("tabulated knots must start at t >= 0".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Domain("tabulated knots must be strictly increasing in t".into()));
                }
                let values = knots.iter().map(|k| k.1).chain(std::iter::once(*tail));
                for v in values {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::Domain(format!("tabulated value {v} is not finite and >= 0")));
                    }
                }
            }
        }
        Ok(())
    }

    /// `l(t)` for `t >= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogShift => (std::f64::consts::E + t).ln(),
            SlowlyVarying::BoundedRational { c_inf, b } => c_inf - b / (1.0 + t),
            SlowlyVarying::Tabulated { knots, tail } => {
                let last = knots[knots.len() - 1];
                if t > last.0 {
                    return *tail;
                }
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                let hi = knots.partition_point(|k| k.0 < t);
                let (t0, v0) = knots[hi - 1];
                let (t1, v1) = knots[hi];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Limit of `l(t)` as `t -> inf`; `f64::INFINITY` when unbounded.
    pub fn limit_at_infinity(&self) -> f64 {
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogShift => f64::INFINITY,
            SlowlyVarying::BoundedRational { c_inf, .. } => *c_inf,
            SlowlyVarying::Tabulated { tail, .. } => *tail,
        }
    }

    /// Non-decreasing on `[0, inf)`. Exact for the analytic forms, knot-wise
    /// for tables.
    pub fn is_non_decreasing(&self) -> bool {
        match self {
            SlowlyVarying::Constant { .. } | SlowlyVarying::LogShift => true,
            SlowlyVarying::BoundedRational { b, .. } => *b >= 0.0,
            SlowlyVarying::Tabulated { knots, tail } => {
                knots.windows(2).all(|w| w[1].1 >= w[0].1) && *tail >= knots[knots.len() - 1].1
            }
        }
    }

    /// True when `l` takes a single value on `[0, inf)`.
    pub fn is_constant(&self) -> bool {
        match self {
            SlowlyVarying::Constant { .. } => true,
            SlowlyVarying::LogShift => false,
            SlowlyVarying::BoundedRational { b, .. } => *b == 0.0,
            SlowlyVarying::Tabulated { knots, tail } => knots.iter().all(|k| k.1 == *tail),
        }
    }
}

/// `M(t) = l(t) * t^nu`, a non-constant member of R_nu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFunction {
    nu: f64,
    l: SlowlyVarying,
}

impl MemoryFunction {
    pub fn new(nu: f64, l: SlowlyVarying) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::Domain(format!("nu must be finite and >= 0, got {nu}")));
        }
        l.validate()?;
        if !l.is_non_decreasing() {
            return Err(Error::Domain("slowly varying factor must be non-decreasing".into()));
        }
        if CHECK_GRID.iter().any(|&t| l.eval(t) < 0.0) {
            return Err(Error::Domain("slowly varying factor must be non-negative".into()));
        }
        let identically_zero = l.is_constant() && l.eval(0.0) == 0.0;
        if (nu == 0.0 && l.is_constant()) || identically_zero {
            return Err(Error::Domain("memory function must not be constant".into()));
        }
        Ok(Self { nu, l })
    }

    /// `M(t) = t^nu`.
    pub fn power(nu: f64) -> Result<Self> {
        Self::new(nu, SlowlyVarying::constant(1.0))
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn slowly_varying(&self) -> &SlowlyVarying {
        &self.l
    }

    /// `M(t)`, with `0^0 = 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("memory function evaluated at t = {t} < 0")));
        }
        Ok(self.at(t))
    }

    pub(crate) fn at(&self, t: f64) -> f64 {
        // powf(0, 0) is 1, which is the convention wanted here.
        self.l.eval(t) * t.powf(self.nu)
    }

    /// `Delta M(i) = M(i + 1) - M(i)`.
    pub fn delta(&self, i: i64) -> Result<f64> {
        if i < 0 {
            return Err(Error::Domain(format!("increment index {i} < 0")));
        }
        let t = i as f64;
        Ok(self.at(t + 1.0) - self.at(t))
    }

    /// `[Delta M(0), ..., Delta M(n - 1)]`.
    pub fn increments(&self, n: usize) -> Vec<f64> {
        let mut prev = self.at(0.0);
        (1..=n)
            .map(|i| {
                let next = self.at(i as f64);
                let d = next - prev;
                prev = next;
                d
            })
            .collect()
    }

    /// `M(+inf)`: infinite when `nu > 0` or `l` is unbounded.
    pub fn at_infinity(&self) -> f64 {
        if self.nu > 0.0 {
            f64::INFINITY
        } else {
            self.l.limit_at_infinity()
        }
    }
}

/// `max_{1<=k<=n} g(k) k^eps / (g(n) n^eps)`.
pub fn sv_max_ratio(g: &SlowlyVarying, eps: f64, n: u64) -> Result<f64> {
    Ok(sv_max_ratio_profile(g, eps, &[n])?[0])
}

/// [`sv_max_ratio`] at every `n` in the ascending list `ns`, in one pass.
pub fn sv_max_ratio_profile(g: &SlowlyVarying, eps: f64, ns: &[u64]) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    if ns.first().is_none_or(|&n| n < 1) || ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("n values must be >= 1 and ascending".into()));
    }
    let weighted = |k: u64| g.eval(k as f64) * (k as f64).powf(eps);
    let mut out = Vec::with_capacity(ns.len());
    let mut running = f64::NEG_INFINITY;
    let mut k = 0u64;
    for &n in ns {
        while k < n {
            k += 1;
            running = running.max(weighted(k));
        }
        let denom = weighted(n);
        if denom == 0.0 {
            return Err(Error::Degenerate(format!("g(n) n^eps = 0 at n = {n}")));
        }
        out.push(running / denom);
    }
    Ok(out)
}
