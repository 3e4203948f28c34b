//! The driving linear process `X_j = sum_k a_{j-k} xi_k`, its partial sums,
//! the finite-order moving average `v_k` and the walk `R_n`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::conv::{self, FixedFilter, Strategy};
use crate::error::{Error, Result};
use crate::fbm::{GaussPath, PathKind, TimeGrid};
use crate::kernel::Kernel;
use crate::memory::MemoryFunction;
use crate::series::IndexedSeries;

/// Gap between a Student-t degree of freedom and the declared moment order.
pub const STUDENT_MOMENT_MARGIN: f64 = 1e-6;

/// Relative tolerance of the reordered-summation check on `R_i`.
pub const REORDER_TOL: f64 = 1e-10;

/// Law of the i.i.d. innovations, normalized to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InnovationLaw {
    Gaussian,
    Rademacher,
    /// Student t with `df > 2`, rescaled by `sqrt((df - 2) / df)`.
    StudentT { df: f64 },
    /// All innovations zero. Debugging only; not unit variance.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationModel {
    law: InnovationLaw,
    moment_order_alpha: f64,
    student: Option<(StudentT<f64>, f64)>,
}

impl InnovationModel {
    pub fn new(law: InnovationLaw) -> Result<Self> {
        let (alpha, student) = match law {
            InnovationLaw::Gaussian | InnovationLaw::Rademacher | InnovationLaw::Zero => (f64::INFINITY, None),
            InnovationLaw::StudentT { df } => {
                if !(df > 2.0 && df.is_finite()) {
                    return Err(Error::Domain(format!(
                        "student_t needs finite df > 2 for unit variance, got {df}"
                    )));
                }
                let dist = StudentT::new(df).map_err(|e| Error::Domain(e.to_string()))?;
                (df - STUDENT_MOMENT_MARGIN, Some((dist, ((df - 2.0) / df).sqrt())))
            }
        };
        Ok(Self {
            law,
            moment_order_alpha: alpha,
            student,
        })
    }

    pub fn gaussian() -> Self {
        Self::new(InnovationLaw::Gaussian).expect("gaussian is valid")
    }

    pub fn law(&self) -> InnovationLaw {
        self.law
    }

    /// Largest moment order declared finite.
    pub fn moment_order(&self) -> f64 {
        self.moment_order_alpha
    }

    /// Require `alpha * H > 1`.
    pub fn check_hurst(&self, h: f64) -> Result<()> {
        if self.moment_order_alpha * h > 1.0 {
            Ok(())
        } else {
            Err(Error::Hypothesis(format!(
                "moment condition alpha*H>1 violated: alpha = {:.6}, H = {h}",
                self.moment_order_alpha
            )))
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            InnovationLaw::Gaussian => rng.sample(StandardNormal),
            InnovationLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationLaw::StudentT { .. } => {
                let (dist, scale) = self.student.as_ref().expect("student law carries its sampler");
                dist.sample(rng) * scale
            }
            InnovationLaw::Zero => 0.0,
        }
    }
}

/// i.i.d. innovations `xi_k` for `k` in `lo..=hi`.
pub fn sample_innovations<R: Rng + ?Sized>(model: &InnovationModel, lo: i64, hi: i64, rng: &mut R) -> Result<IndexedSeries> {
    if hi < lo {
        return Err(Error::Domain(format!("empty innovation range [{lo}, {hi}]")));
    }
    let values = (lo..=hi).map(|_| model.draw(rng)).collect();
    Ok(IndexedSeries::new(lo, values))
}

/// Innovation indices needed for `X_j`, `j` in `[j_lo, j_hi]`.
pub fn innovation_range(kernel: &Kernel, j_lo: i64, j_hi: i64) -> (i64, i64) {
    (j_lo - kernel.end(), j_hi - kernel.start())
}

/// `X_j = sum_k a_{j-k} xi_k` for `j` in `[j_lo, j_hi]`.
pub fn sample_linear_process(kernel: &Kernel, innovations: &IndexedSeries, j_lo: i64, j_hi: i64) -> Result<IndexedSeries> {
    sample_linear_process_with(kernel, innovations, j_lo, j_hi, Strategy::Auto)
}

pub fn sample_linear_process_with(
    kernel: &Kernel,
    innovations: &IndexedSeries,
    j_lo: i64,
    j_hi: i64,
    strategy: Strategy,
) -> Result<IndexedSeries> {
    if j_hi < j_lo {
        return Err(Error::Domain(format!("empty index range [{j_lo}, {j_hi}]")));
    }
    let (lo, hi) = innovation_range(kernel, j_lo, j_hi);
    if !innovations.covers(lo, hi) {
        return Err(Error::Coverage {
            need_lo: lo,
            need_hi: hi,
            have_lo: innovations.start,
            have_hi: innovations.end(),
        });
    }
    let xi = innovations.slice(lo, hi);
    let span = kernel.span();
    let len = (j_hi - j_lo + 1) as usize;
    let full = conv::convolve(kernel.coeffs(), xi, strategy);
    Ok(IndexedSeries::new(j_lo, full[span..span + len].to_vec()))
}

fn check_covers(x: &IndexedSeries, n: usize) -> Result<()> {
    if x.covers(1, n as i64) {
        Ok(())
    } else {
        Err(Error::Coverage {
            need_lo: 1,
            need_hi: n as i64,
            have_lo: x.start,
            have_hi: x.end(),
        })
    }
}

fn cumulative(xs: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}

/// `S_0..=S_n` from `X_1..X_n`.
pub fn partial_sums(x: &IndexedSeries, n: usize) -> Result<Vec<f64>> {
    check_covers(x, n)?;
    Ok(cumulative(x.slice(1, n as i64).iter().copied(), n))
}

/// `s_n(i/n) = S_i / sqrt(Var(S_n))`.
pub fn s_n_path(x: &IndexedSeries, kernel: &Kernel, n: usize) -> Result<GaussPath> {
    let grid = TimeGrid::new(n)?;
    let sums = partial_sums(x, n)?;
    let var = kernel.var_partial_sum(n);
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!("Var(S_{n}) = 0")));
    }
    let scale = 1.0 / var.sqrt();
    let values = sums.iter().map(|s| s * scale).collect();
    Ok(GaussPath {
        grid,
        values,
        hurst: kernel.target_hurst(),
        kind: PathKind::SN,
    })
}

/// `v_0 = 0`, `v_k = sum_{i=0}^{k-1} X_{k-i} Delta M(i)` for `k = 1..=n`.
pub fn v_sequence(x: &IndexedSeries, memory: &MemoryFunction, n: usize) -> Result<Vec<f64>> {
    check_covers(x, n)?;
    let w = memory.increments(n);
    let conv = conv::convolve(&w, x.slice(1, n as i64), Strategy::Auto);
    let mut v = Vec::with_capacity(n + 1);
    v.push(0.0);
    v.extend_from_slice(&conv[..n]);
    Ok(v)
}

/// Indices at which the reordered form of `R_i` is checked.
fn checkpoints(n: usize) -> Vec<usize> {
    if n <= 256 {
        return (0..=n).collect();
    }
    let mut pts: Vec<usize> = (0..=16).map(|k| k * n / 16).collect();
    pts.extend([1, 2, 3]);
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Compare `R_i` against `sum_{j=0}^{i} S_{i-j} Delta M(j)`.
fn verify_reordered(walk: &[f64], sums: &[f64], w: &[f64], points: &[usize]) -> Result<()> {
    for &i in points {
        let (mut total, mut scale) = (0.0, 0.0);
        for j in 0..i {
            let term = sums[i - j] * w[j];
            total += term;
            scale += term.abs();
        }
        let diff = (walk[i] - total).abs();
        if diff > REORDER_TOL * scale.max(f64::MIN_POSITIVE) && diff > 1e-300 {
            return Err(Error::Consistency(format!(
                "R_{i} = {} but reordered sum gives {total}",
                walk[i]
            )));
        }
    }
    Ok(())
}

/// Walk `R_i = v_0 + ... + v_i` normalized as
/// `r_n(i/n) = R_i / (h(n) n^H M(n))`. `sums` holds `S_0..=S_n` for the
/// reordered-summation check.
pub fn r_n_path(v: &[f64], sums: &[f64], kernel: &Kernel, memory: &MemoryFunction, n: usize) -> Result<GaussPath> {
    if v.len() != n + 1 || sums.len() != n + 1 {
        return Err(Error::Domain(format!(
            "expected n + 1 = {} values, got v: {}, S: {}",
            n + 1,
            v.len(),
            sums.len()
        )));
    }
    let grid = TimeGrid::new(n)?;
    let walk = cumulative(v[1..].iter().copied(), n);
    let w = memory.increments(n);
    verify_reordered(&walk, sums, &w, &checkpoints(n))?;
    let scale = r_scale(kernel, memory, n)?;
    Ok(GaussPath {
        grid,
        values: walk.iter().map(|r| r / scale).collect(),
        hurst: kernel.target_hurst(),
        kind: PathKind::RN,
    })
}

/// `h(n) n^H M(n)`.
fn r_scale(kernel: &Kernel, memory: &MemoryFunction, n: usize) -> Result<f64> {
    let m_n = memory.at(n as f64);
    if !(m_n > 0.0) {
        return Err(Error::Degenerate(format!("M({n}) = 0")));
    }
    let h = kernel.h_of(n)?;
    Ok(h * (n as f64).powf(kernel.target_hurst()) * m_n)
}

/// Coefficients of `R_i` on the innovations:
/// `c_m = sum_{j=0}^{i-1} Delta M(j) (P(i - j - m) - P(-m))`.
pub fn walk_coefficients(kernel: &Kernel, memory: &MemoryFunction, i: usize) -> IndexedSeries {
    let m_lo = 1 - kernel.end();
    if i == 0 {
        return IndexedSeries::new(m_lo, Vec::new());
    }
    let w = memory.increments(i);
    let total: f64 = w.iter().sum();
    let k_min = kernel.start();
    let x0 = k_min - (i as i64 - 1);
    let x1 = i as i64 - 1 + kernel.end();
    let prefix: Vec<f64> = (x0..=x1).map(|x| kernel.prefix(x)).collect();
    let conv = conv::convolve(&w, &prefix, Strategy::Auto);
    let m_hi = i as i64 - k_min;
    let values = (m_lo..=m_hi)
        .map(|m| {
            let q = i as i64 - m;
            conv[(q - x0) as usize] - total * kernel.prefix(-m)
        })
        .collect();
    IndexedSeries::new(m_lo, values)
}

/// `Var(R_n)` for unit-variance innovations, without sampling.
pub fn exact_var_r(kernel: &Kernel, memory: &MemoryFunction, n: usize) -> f64 {
    walk_coefficients(kernel, memory, n).values.iter().map(|c| c * c).sum()
}

/// `Cov(R_a, R_b)`.
pub fn exact_cov_r(kernel: &Kernel, memory: &MemoryFunction, a: usize, b: usize) -> f64 {
    dot_indexed(&walk_coefficients(kernel, memory, a), &walk_coefficients(kernel, memory, b))
}

/// `Cov(S_a, S_b)` from the coefficient vectors.
pub fn exact_cov_s(kernel: &Kernel, a: usize, b: usize) -> f64 {
    dot_indexed(&kernel.partial_sum_coeffs(a), &kernel.partial_sum_coeffs(b))
}

pub(crate) fn dot_indexed(x: &IndexedSeries, y: &IndexedSeries) -> f64 {
    let lo = x.start.max(y.start);
    let hi = x.end().min(y.end());
    if lo > hi {
        return 0.0;
    }
    x.slice(lo, hi).iter().zip(y.slice(lo, hi)).map(|(a, b)| a * b).sum()
}

/// Run parameters echoed into every sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkEcho {
    pub n: usize,
    pub hurst: f64,
    pub nu: f64,
    pub law: InnovationLaw,
}

/// One simulated trial: `s_n`, `r_n` and the raw sums they are built from.
#[derive(Debug, Clone)]
pub struct WalkSample {
    pub s_path: GaussPath,
    pub r_path: GaussPath,
    /// `S_0..=S_n`.
    pub partial_sums: Vec<f64>,
    /// `R_0..=R_n`.
    pub walk: Vec<f64>,
    pub innovations: Option<IndexedSeries>,
    pub echo: WalkEcho,
}

/// Precomputed state for repeated trials at one `n`: the convolution
/// filters, `Var(S_n)` and the `r_n` normalizer.
pub struct WalkSimulator {
    kernel_span: usize,
    innov_lo: i64,
    innov_hi: i64,
    model: InnovationModel,
    n: usize,
    grid: TimeGrid,
    x_filter: Option<FixedFilter>,
    v_filter: FixedFilter,
    increments: Vec<f64>,
    s_scale: f64,
    r_scale: f64,
    echo: WalkEcho,
    keep_innovations: bool,
}

impl WalkSimulator {
    pub fn new(kernel: &Kernel, memory: &MemoryFunction, model: InnovationModel, n: usize) -> Result<Self> {
        let grid = TimeGrid::new(n)?;
        let var = kernel.var_partial_sum(n);
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!("Var(S_{n}) = 0")));
        }
        let (innov_lo, innov_hi) = innovation_range(kernel, 1, n as i64);
        let iid = kernel.span() == 0 && kernel.coeffs()[0] == 1.0;
        let x_filter = (!iid).then(|| {
            FixedFilter::new(kernel.coeffs().to_vec(), (innov_hi - innov_lo + 1) as usize, Strategy::Auto)
        });
        let increments = memory.increments(n);
        let v_filter = FixedFilter::new(increments.clone(), n, Strategy::Auto);
        Ok(Self {
            kernel_span: kernel.span(),
            innov_lo,
            innov_hi,
            model,
            n,
            grid,
            x_filter,
            v_filter,
            increments,
            s_scale: var.sqrt(),
            r_scale: r_scale(kernel, memory, n)?,
            echo: WalkEcho {
                n,
                hurst: kernel.target_hurst(),
                nu: memory.nu(),
                law: model.law(),
            },
            keep_innovations: false,
        })
    }

    /// Keep the raw innovations in every sample.
    pub fn keep_innovations(mut self, keep: bool) -> Self {
        self.keep_innovations = keep;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(IndexedSeries, Vec<f64>)> {
        let xi = sample_innovations(&self.model, self.innov_lo, self.innov_hi, rng)?;
        let x = match &self.x_filter {
            None => xi.values.clone(),
            Some(f) => f.apply(&xi.values, self.kernel_span..self.kernel_span + self.n),
        };
        Ok((xi, x))
    }

    /// Only `s_n`, skipping the walk.
    pub fn simulate_s<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussPath> {
        let (_, x) = self.sample_x(rng)?;
        let values = cumulative(x.iter().copied(), self.n).iter().map(|s| s / self.s_scale).collect();
        Ok(GaussPath {
            grid: self.grid,
            values,
            hurst: self.echo.hurst,
            kind: PathKind::SN,
        })
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WalkSample> {
        let n = self.n;
        let (xi, x) = self.sample_x(rng)?;
        let sums = cumulative(x.iter().copied(), n);
        let conv = self.v_filter.apply(&x, 0..n);
        let walk = cumulative(conv.iter().copied(), n);
        verify_reordered(&walk, &sums, &self.increments, &checkpoints(n))?;
        let s_path = GaussPath {
            grid: self.grid,
            values: sums.iter().map(|s| s / self.s_scale).collect(),
            hurst: self.echo.hurst,
            kind: PathKind::SN,
        };
        let r_path = GaussPath {
            grid: self.grid,
            values: walk.iter().map(|r| r / self.r_scale).collect(),
            hurst: self.echo.hurst,
            kind: PathKind::RN,
        };
        Ok(WalkSample {
            s_path,
            r_path,
            partial_sums: sums,
            walk,
            innovations: self.keep_innovations.then_some(xi),
            echo: self.echo,
        })
    }
}


#[cfg(test)]
mod props {
    use super::{
        innovation_range, sample_innovations, sample_linear_process, v_sequence, IndexedSeries, InnovationModel,
        Kernel, MemoryFunction, WalkSimulator,
    };
    use crate::kernel::Truncation;
    use crate::memory::SlowlyVarying;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn any_kernel() -> impl Strategy<Value = Kernel> {
        prop_oneof![
            (0.05f64..0.95, 1usize..100).prop_map(|(h, k)| Kernel::fractional(h, k, Truncation::Override).unwrap()),
            (-4i64..4, prop::collection::vec(-2.0f64..2.0, 1..10))
                .prop_filter_map("non-zero", |(s, c)| Kernel::explicit(s, c, 0.5).ok()),
        ]
    }

    fn any_memory() -> impl Strategy<Value = MemoryFunction> {
        (
            prop_oneof![Just(0.0), 0.1f64..3.0],
            prop_oneof![Just(SlowlyVarying::LogShift), (0.1f64..2.0).prop_map(|b| SlowlyVarying::bounded_rational(2.0 * b, b))],
        )
            .prop_filter_map("non-constant", |(nu, l)| MemoryFunction::new(nu, l).ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sample_paths_start_at_zero_and_are_normalized(
            k in any_kernel(), m in any_memory(), n in 1usize..128, seed in any::<u64>(),
        ) {
            prop_assume!(k.var_partial_sum(n) > 1e-12);
            let sim = WalkSimulator::new(&k, &m, InnovationModel::gaussian(), n).unwrap();
            let w = sim.simulate(&mut stream(seed, "prop", 0)).unwrap();
            prop_assert_eq!(w.s_path.values[0], 0.0);
            prop_assert_eq!(w.r_path.values[0], 0.0);
            let scale = k.h_of(n).unwrap() * (n as f64).powf(k.target_hurst()) * m.eval(n as f64).unwrap();
            for i in 0..=n {
                let want = w.walk[i] / scale;
                prop_assert!((w.r_path.values[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn walk_is_linear_in_the_innovations(
            k in any_kernel(), m in any_memory(), n in 1usize..64, c in -3.0f64..3.0, seed in any::<u64>(),
        ) {
            let (lo, hi) = innovation_range(&k, 1, n as i64);
            let mut rng = stream(seed, "prop", 1);
            let a = sample_innovations(&InnovationModel::gaussian(), lo, hi, &mut rng).unwrap();
            let b = sample_innovations(&InnovationModel::gaussian(), lo, hi, &mut rng).unwrap();
            let combo = IndexedSeries::new(lo, a.values.iter().zip(&b.values).map(|(x, y)| c * x + y).collect());
            let walk = |xi: &IndexedSeries| {
                let x = sample_linear_process(&k, xi, 1, n as i64).unwrap();
                v_sequence(&x, &m, n).unwrap().iter().sum::<f64>()
            };
            let (ra, rb, rc) = (walk(&a), walk(&b), walk(&combo));
            let want = c * ra + rb;
            let scale = (c * ra).abs() + rb.abs() + 1e-12;
            prop_assert!((rc - want).abs() <= 1e-9 * scale);
        }
    }
}
