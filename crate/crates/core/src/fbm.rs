//! Fractional Brownian motion on the uniform grid `t_i = i/n`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid accepted by the Cholesky sampler.
pub const CHOLESKY_MAX_N: usize = 4096;

/// Negative embedding eigenvalues below `-EMBEDDING_TOL * max` are fatal.
pub const EMBEDDING_TOL: f64 = 1e-8;

/// Diagonal jitter tried, in order, before a Cholesky failure is reported.
const JITTER_STEPS: [f64; 4] = [0.0, 1e-12, 1e-11, 1e-10];

/// Uniform grid `t_i = i/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
}

impl TimeGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("time grid needs n >= 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.point(i))
    }

    /// `[n t]`, the grid index of the step function at time `t`.
    pub fn floor_index(&self, t: f64) -> usize {
        ((self.n as f64 * t).floor() as usize).min(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Fbm,
    ZProcess,
    SN,
    RN,
}

/// A process sampled at the points of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub hurst: f64,
    pub kind: PathKind,
}

impl GaussPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, hurst: f64, kind: PathKind) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::Domain(format!(
                "path has {} values for a grid of {} steps",
                values.len(),
                grid.n()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Domain("paths start at 0".into()));
        }
        Ok(Self {
            grid,
            values,
            hurst,
            kind,
        })
    }

    /// Value of the step-function path at `t`: `values[[n t]]`.
    pub fn step_value(&self, t: f64) -> f64 {
        self.values[self.grid.floor_index(t)]
    }

    /// Linear interpolation between grid points.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.grid.n();
        let x = (t * n as f64).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// CSV rows `t,value` with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.grid.points().zip(&self.values) {
            writeln!(w, "{},{}", crate::fmt_f64(t), crate::fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// `R(t, s) = (t^2H + s^2H - |t - s|^2H) / 2`.
pub fn fbm_cov(t: f64, s: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!("Hurst index must lie in (0, 1), got {h}")));
    }
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::Domain("fBm covariance needs t, s >= 0".into()));
    }
    Ok(cov_unchecked(t, s, h))
}

pub(crate) fn cov_unchecked(t: f64, s: f64, h: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(k: usize, h: f64) -> f64 {
    let e = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Covariance matrix of `(B(t_1), ..., B(t_n))` as CSV (no header).
pub fn write_covariance_csv<W: Write>(grid: TimeGrid, h: f64, mut w: W) -> Result<()> {
    for i in 1..=grid.n() {
        let row: Vec<String> = (1..=grid.n())
            .map(|j| fbm_cov(grid.point(i), grid.point(j), h).map(crate::fmt_f64))
            .collect::<Result<_>>()?;
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbmMethod {
    Cholesky,
    Circulant,
}

impl std::str::FromStr for FbmMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(FbmMethod::Cholesky),
            "circulant" => Ok(FbmMethod::Circulant),
            other => Err(Error::Config(format!("unknown fBm method `{other}`"))),
        }
    }
}

/// Reusable fBm sampler: the factorization is done once per (grid, H, method).
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: f64,
    engine: Engine,
}

enum Engine {
    /// Row-major lower-triangular factor, row `i` holds `i + 1` entries.
    Cholesky { rows: Vec<Vec<f64>> },
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
}

impl FbmSampler {
    pub fn new(grid: TimeGrid, hurst: f64, method: FbmMethod) -> Result<Self> {
        fbm_cov(0.0, 0.0, hurst)?;
        let engine = match method {
            FbmMethod::Cholesky => Engine::Cholesky {
                rows: cholesky_factor(grid, hurst)?,
            },
            FbmMethod::Circulant => circulant_engine(grid, hurst)?,
        };
        Ok(Self { grid, hurst, engine })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussPath {
        let n = self.grid.n();
        let mut values = vec![0.0; n + 1];
        match &self.engine {
            Engine::Cholesky { rows } => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for (i, row) in rows.iter().enumerate() {
                    values[i + 1] = row.iter().zip(&z).map(|(l, x)| l * x).sum();
                }
            }
            Engine::Circulant { sqrt_eig, fft } => {
                let size = sqrt_eig.len();
                let mut buf: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                debug_assert_eq!(buf.len(), size);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += buf[i].re;
                    values[i + 1] = acc;
                }
            }
        }
        GaussPath {
            grid: self.grid,
            values,
            hurst: self.hurst,
            kind: PathKind::Fbm,
        }
    }
}

/// One path; builds a fresh sampler. Prefer [`FbmSampler`] for repeated draws.
pub fn sample_fbm<R: Rng + ?Sized>(grid: TimeGrid, h: f64, rng: &mut R, method: FbmMethod) -> Result<GaussPath> {
    Ok(FbmSampler::new(grid, h, method)?.sample(rng))
}

fn cholesky_factor(grid: TimeGrid, h: f64) -> Result<Vec<Vec<f64>>> {
    let n = grid.n();
    if n > CHOLESKY_MAX_N {
        return Err(Error::Domain(format!(
            "cholesky sampler limited to n <= {CHOLESKY_MAX_N}, got {n}"
        )));
    }
    let cov = |i: usize, j: usize| cov_unchecked(grid.point(i + 1), grid.point(j + 1), h);
    let mut last = None;
    for jitter in JITTER_STEPS {
        match try_cholesky(n, &cov, jitter) {
            Ok(rows) => {
                if jitter > 0.0 {
                    log::warn!("fBm covariance needed diagonal jitter {jitter:e}");
                }
                return Ok(rows);
            }
            Err((index, value)) => last = Some((index, value, jitter)),
        }
    }
    let (index, value, jitter) = last.expect("at least one attempt");
    Err(Error::NotPositiveDefinite { index, value, jitter })
}

fn try_cholesky(
    n: usize,
    cov: &dyn Fn(usize, usize) -> f64,
    jitter: f64,
) -> std::result::Result<Vec<Vec<f64>>, (usize, f64)> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; i + 1];
        for j in 0..i {
            let prev = &rows[j];
            let dot: f64 = row[..j].iter().zip(&prev[..j]).map(|(a, b)| a * b).sum();
            row[j] = (cov(i, j) - dot) / prev[j];
        }
        let pivot = cov(i, i) + jitter - row[..i].iter().map(|x| x * x).sum::<f64>();
        if !(pivot > 0.0) {
            return Err((i, pivot));
        }
        row[i] = pivot.sqrt();
        rows.push(row);
    }
    Ok(rows)
}

fn circulant_engine(grid: TimeGrid, h: f64) -> Result<Engine> {
    let n = grid.n();
    let size = 2 * n;
    let scale = (1.0 / n as f64).powf(2.0 * h);
    let mut c: Vec<Complex64> = (0..size)
        .map(|k| {
            let lag = if k <= n { k } else { size - k };
            Complex64::new(fgn_autocov(lag, h) * scale, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    fft.process(&mut c);
    let eig: Vec<f64> = c.iter().map(|z| z.re).collect();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -EMBEDDING_TOL * max {
        return Err(Error::EmbeddingFailure { eigenvalue: min, max });
    }
    let sqrt_eig = eig.iter().map(|&l| (l.max(0.0) / size as f64).sqrt()).collect();
    Ok(Engine::Circulant { sqrt_eig, fft })
}
