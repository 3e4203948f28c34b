//! Linear convolution, direct or through the FFT.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Above this many multiply-adds the transform route is used.
pub const DIRECT_LIMIT: usize = 1 << 22;

/// How a convolution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    Direct,
    Fft,
}

impl Strategy {
    fn use_fft(self, a: usize, b: usize) -> bool {
        match self {
            Strategy::Direct => false,
            Strategy::Fft => true,
            Strategy::Auto => a.saturating_mul(b) > DIRECT_LIMIT,
        }
    }
}

/// Full linear convolution `out[p] = sum_k a[k] * b[p - k]`, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64], strategy: Strategy) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if strategy.use_fft(a.len(), b.len()) {
        convolve_fft(a, b)
    } else {
        convolve_direct(a, b)
    }
}

pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

pub fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa = padded(a, size);
    let mut fb = padded(b, size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..len].iter().map(|z| z.re * scale).collect()
}

fn padded(x: &[f64], size: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); size];
    for (dst, &src) in v.iter_mut().zip(x) {
        dst.re = src;
    }
    v
}

/// A fixed filter applied repeatedly to inputs of one length, keeping the
/// filter spectrum and FFT plans between calls.
pub struct FixedFilter {
    taps: Vec<f64>,
    input_len: usize,
    plan: Option<FftPlan>,
}

struct FftPlan {
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl FixedFilter {
    pub fn new(taps: Vec<f64>, input_len: usize, strategy: Strategy) -> Self {
        let plan = if strategy.use_fft(taps.len(), input_len) && !taps.is_empty() {
            let size = (taps.len() + input_len - 1).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(size);
            let inv = planner.plan_fft_inverse(size);
            let mut spectrum = padded(&taps, size);
            fwd.process(&mut spectrum);
            Some(FftPlan {
                size,
                fwd,
                inv,
                spectrum,
            })
        } else {
            None
        };
        Self {
            taps,
            input_len,
            plan,
        }
    }

    pub fn uses_fft(&self) -> bool {
        self.plan.is_some()
    }

    /// Outputs `out[p]` for `p` in `range` of the full linear convolution of
    /// the taps with `input`.
    pub fn apply(&self, input: &[f64], range: std::ops::Range<usize>) -> Vec<f64> {
        assert_eq!(input.len(), self.input_len, "filter input length");
        match &self.plan {
            None => range
                .map(|p| {
                    let k_lo = p.saturating_sub(input.len() - 1);
                    let k_hi = p.min(self.taps.len() - 1);
                    (k_lo..=k_hi).map(|k| self.taps[k] * input[p - k]).sum()
                })
                .collect(),
            Some(plan) => {
                let mut buf = padded(input, plan.size);
                plan.fwd.process(&mut buf);
                for (x, y) in buf.iter_mut().zip(&plan.spectrum) {
                    *x *= y;
                }
                plan.inv.process(&mut buf);
                let scale = 1.0 / plan.size as f64;
                buf[range].iter().map(|z| z.re * scale).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_small_example() {
        assert_eq!(convolve_direct(&[1.0, 2.0], &[1.0, 1.0, 1.0]), vec![1.0, 3.0, 3.0, 2.0]);
    }

    #[test]
    fn fft_matches_direct() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
        let b: Vec<f64> = (0..77).map(|i| ((i * 13 % 29) as f64 - 14.0) / 3.0).collect();
        let d = convolve_direct(&a, &b);
        let f = convolve_fft(&a, &b);
        let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in d.iter().zip(&f) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fixed_filter_both_routes_agree() {
        let taps: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let input: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let direct = FixedFilter::new(taps.clone(), 200, Strategy::Direct);
        let fft = FixedFilter::new(taps, 200, Strategy::Fft);
        assert!(fft.uses_fft() && !direct.uses_fft());
        let a = direct.apply(&input, 49..200);
        let b = fft.apply(&input, 49..200);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
