//! The limit process `Z(t) = nu * int_0^t B_H(t - s) s^(nu - 1) ds`, its
//! variance at `t = 1`, and the limit factor of the `nu = 0` case.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fbm::{cov_unchecked, fbm_cov, GaussPath, PathKind};
use crate::memory::MemoryFunction;

/// Smallest fBm grid accepted for the time integral.
pub const MIN_QUAD_GRID: usize = 256;

/// Smallest grid accepted by [`var_z_one`].
pub const MIN_VAR_QUAD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZProcessSpec {
    nu: f64,
    hurst: f64,
    m: usize,
}

impl ZProcessSpec {
    pub fn new(nu: f64, hurst: f64, m: usize) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!(
                "Z process needs nu > 0, got {nu}; use limit_factor_nu0 for nu = 0"
            )));
        }
        fbm_cov(0.0, 0.0, hurst)?;
        if m < MIN_QUAD_GRID {
            return Err(Error::Domain(format!("quadrature grid must be >= {MIN_QUAD_GRID}, got {m}")));
        }
        Ok(Self { nu, hurst, m })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Precomputed interpolation weights of the midpoint rule, reusable across
/// fBm paths that share a grid.
#[derive(Debug, Clone)]
pub struct ZEvaluator {
    spec: ZProcessSpec,
    eval_points: Vec<f64>,
    /// Per evaluation point: step `du` and `(index, fraction)` per node.
    nodes: Vec<(f64, Vec<(usize, f64)>)>,
}

impl ZEvaluator {
    pub fn new(spec: ZProcessSpec, eval_points: &[f64]) -> Result<Self> {
        let m = spec.m;
        let inv_nu = 1.0 / spec.nu;
        let mut nodes = Vec::with_capacity(eval_points.len());
        for &t in eval_points {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Domain(format!("evaluation point {t} outside [0, 1]")));
            }
            if t == 0.0 {
                nodes.push((0.0, Vec::new()));
                continue;
            }
            let du = t.powf(spec.nu) / m as f64;
            let weights = (0..m)
                .map(|j| {
                    let u = (j as f64 + 0.5) * du;
                    let x = ((t - u.powf(inv_nu)) * m as f64).clamp(0.0, m as f64);
                    let i = (x.floor() as usize).min(m - 1);
                    (i, x - i as f64)
                })
                .collect();
            nodes.push((du, weights));
        }
        Ok(Self {
            spec,
            eval_points: eval_points.to_vec(),
            nodes,
        })
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn apply(&self, b: &GaussPath) -> Result<Vec<f64>> {
        if b.grid.n() != self.spec.m {
            return Err(Error::Config(format!(
                "fBm grid has {} steps, Z quadrature expects {}",
                b.grid.n(),
                self.spec.m
            )));
        }
        if b.hurst != self.spec.hurst {
            return Err(Error::Config(format!(
                "fBm path has H = {}, Z spec has H = {}",
                b.hurst, self.spec.hurst
            )));
        }
        let v = &b.values;
        Ok(self
            .nodes
            .iter()
            .map(|(du, weights)| {
                let sum: f64 = weights.iter().map(|&(i, f)| v[i] + f * (v[i + 1] - v[i])).sum();
                du * sum
            })
            .collect())
    }

    /// `Z` on the whole grid `t_i = i/m`, as a path.
    pub fn path(spec: ZProcessSpec, b: &GaussPath) -> Result<GaussPath> {
        let pts: Vec<f64> = b.grid.points().collect();
        let values = Self::new(spec, &pts)?.apply(b)?;
        GaussPath::new(b.grid, values, spec.hurst, PathKind::ZProcess)
    }
}

/// `Z(t)` at each evaluation point.
pub fn sample_z(b: &GaussPath, spec: ZProcessSpec, eval_points: &[f64]) -> Result<Vec<f64>> {
    ZEvaluator::new(spec, eval_points)?.apply(b)
}

/// `Var Z(1) = int_0^1 int_0^1 R(1 - u^(1/nu), 1 - w^(1/nu), H) du dw` by the
/// tensor midpoint rule on `quad_n^2` cells.
pub fn var_z_one(nu: f64, h: f64, quad_n: usize) -> Result<f64> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Domain(format!("nu must be > 0, got {nu}")));
    }
    fbm_cov(0.0, 0.0, h)?;
    if quad_n < MIN_VAR_QUAD {
        return Err(Error::Domain(format!("quad_n must be >= {MIN_VAR_QUAD}, got {quad_n}")));
    }
    let inv_nu = 1.0 / nu;
    let q = quad_n as f64;
    let x: Vec<f64> = (0..quad_n).map(|i| 1.0 - ((i as f64 + 0.5) / q).powf(inv_nu)).collect();
    let pow: Vec<f64> = x.iter().map(|v| v.powf(2.0 * h)).collect();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..quad_n {
        diag += pow[i];
        let mut row = 0.0;
        for j in i + 1..quad_n {
            row += 0.5 * (pow[i] + pow[j] - (x[i] - x[j]).abs().powf(2.0 * h));
        }
        off += row;
    }
    let value = (diag + 2.0 * off) / (q * q);
    if !value.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite variance for nu = {nu}, H = {h}, quad_n = {quad_n}"
        )));
    }
    debug_assert!(cov_unchecked(1.0, 1.0, h) == 1.0);
    Ok(value)
}

/// `1 - M(0) / M(+inf)`, or 1 when `M(+inf)` is infinite.
pub fn limit_factor_nu0(memory: &MemoryFunction) -> Result<f64> {
    if memory.nu() > 0.0 {
        return Err(Error::WrongBranch(format!(
            "nu = {} > 0; the limit is the Z process, not a multiple of fBm",
            memory.nu()
        )));
    }
    let at_inf = memory.at_infinity();
    if at_inf.is_infinite() {
        return Ok(1.0);
    }
    let factor = 1.0 - memory.at(0.0) / at_inf;
    if factor == 0.0 {
        log::warn!("limit factor is 0: M(0) equals M(+inf), the limit is degenerate");
    }
    Ok(factor)
}

/// On-disk CSV table of [`var_z_one`] values keyed by `(nu, H, quad_n)`.
#[derive(Debug)]
pub struct VarZCache {
    path: PathBuf,
    entries: HashMap<(u64, u64, usize), f64>,
    dirty: bool,
}

const CACHE_HEADER: &str = "nu,hurst,quad_n,var_z_one";

impl VarZCache {
    /// Load the table at `path`, or start empty if it does not exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            let mut lines = text.lines();
            if lines.next() != Some(CACHE_HEADER) {
                return Err(Error::Io(format!("{}: missing header {CACHE_HEADER}", path.display())));
            }
            for (no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let bad = || Error::Io(format!("{}: malformed line {}", path.display(), no + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(bad());
                }
                let nu: f64 = f[0].parse().map_err(|_| bad())?;
                let h: f64 = f[1].parse().map_err(|_| bad())?;
                let q: usize = f[2].parse().map_err(|_| bad())?;
                let v: f64 = f[3].parse().map_err(|_| bad())?;
                entries.insert((nu.to_bits(), h.to_bits(), q), v);
            }
        }
        Ok(Self {
            path,
            entries,
            dirty: false,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, nu: f64, h: f64, quad_n: usize) -> Option<f64> {
        self.entries.get(&(nu.to_bits(), h.to_bits(), quad_n)).copied()
    }

    pub fn get_or_compute(&mut self, nu: f64, h: f64, quad_n: usize) -> Result<f64> {
        if let Some(v) = self.get(nu, h, quad_n) {
            return Ok(v);
        }
        let v = var_z_one(nu, h, quad_n)?;
        self.entries.insert((nu.to_bits(), h.to_bits(), quad_n), v);
        self.dirty = true;
        Ok(v)
    }

    /// Write the table back if anything was added.
    pub fn save(&mut self) -> Result<()> {
        if !self.dirty {
            return Ok(());
        }
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_by(|a, b| {
            let ka = (f64::from_bits(a.0 .0), f64::from_bits(a.0 .1), a.0 .2);
            let kb = (f64::from_bits(b.0 .0), f64::from_bits(b.0 .1), b.0 .2);
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut out = fs::File::create(&self.path)?;
        writeln!(out, "{CACHE_HEADER}")?;
        for ((nu, h, q), v) in rows {
            writeln!(
                out,
                "{},{},{q},{}",
                crate::fmt_f64(f64::from_bits(*nu)),
                crate::fmt_f64(f64::from_bits(*h)),
                crate::fmt_f64(*v)
            )?;
        }
        self.dirty = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{FbmMethod, FbmSampler, TimeGrid};
    use crate::memory::SlowlyVarying;
    use crate::rng::stream;

    fn identity_path(m: usize, h: f64) -> GaussPath {
        let grid = TimeGrid::new(m).unwrap();
        GaussPath::new(grid, grid.points().collect(), h, PathKind::Fbm).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ZProcessSpec::new(0.0, 0.5, 256).is_err());
        assert!(ZProcessSpec::new(1.0, 1.0, 256).is_err());
        assert!(ZProcessSpec::new(1.0, 0.5, 255).is_err());
        assert!(ZProcessSpec::new(0.3, 0.5, 256).is_ok());
    }

    #[test]
    fn deterministic_anchors() {
        let b = identity_path(4096, 0.5);
        let one = sample_z(&b, ZProcessSpec::new(1.0, 0.5, 4096).unwrap(), &[0.0, 1.0]).unwrap();
        assert_eq!(one[0], 0.0);
        assert!((one[1] - 0.5).abs() < 1e-4);
        let two = sample_z(&b, ZProcessSpec::new(2.0, 0.5, 4096).unwrap(), &[1.0]).unwrap();
        assert!((two[0] - 1.0 / 3.0).abs() < 1e-4);
        // nu = 0.5: int_0^1 (1 - s) 0.5 s^(-1/2) ds = 1 - 1/3
        let half = sample_z(&b, ZProcessSpec::new(0.5, 0.5, 4096).unwrap(), &[1.0]).unwrap();
        assert!((half[0] - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn eval_errors() {
        let b = identity_path(256, 0.5);
        let spec = ZProcessSpec::new(1.0, 0.5, 256).unwrap();
        assert!(matches!(sample_z(&b, spec, &[1.5]), Err(Error::Domain(_))));
        let other = ZProcessSpec::new(1.0, 0.5, 512).unwrap();
        assert!(matches!(sample_z(&b, other, &[1.0]), Err(Error::Config(_))));
        let wrong_h = ZProcessSpec::new(1.0, 0.7, 256).unwrap();
        assert!(matches!(sample_z(&b, wrong_h, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn linear_and_scaling() {
        let grid = TimeGrid::new(256).unwrap();
        let sampler = FbmSampler::new(grid, 0.3, FbmMethod::Circulant).unwrap();
        let spec = ZProcessSpec::new(0.7, 0.3, 256).unwrap();
        let ev = ZEvaluator::new(spec, &[0.25, 0.5, 1.0]).unwrap();
        let a = sampler.sample(&mut stream(1, "za", 0));
        let b = sampler.sample(&mut stream(1, "zb", 0));
        let sum = GaussPath::new(grid, a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(), 0.3, PathKind::Fbm).unwrap();
        let scaled = GaussPath::new(grid, a.values.iter().map(|x| 4.0 * x).collect(), 0.3, PathKind::Fbm).unwrap();
        let (za, zb, zs, zl) = (ev.apply(&a).unwrap(), ev.apply(&b).unwrap(), ev.apply(&sum).unwrap(), ev.apply(&scaled).unwrap());
        for i in 0..3 {
            assert!((zs[i] - za[i] - zb[i]).abs() < 1e-12);
            assert_eq!(zl[i], 4.0 * za[i]);
        }
    }

    #[test]
    fn var_examples() {
        assert!((var_z_one(1.0, 0.5, 1024).unwrap() - 1.0 / 3.0).abs() < 1e-5);
        assert!((var_z_one(1.0, 0.7, 1024).unwrap() - 1.0 / 3.4).abs() < 1e-4);
        assert!(var_z_one(1.0, 0.5, 63).is_err());
        assert!(var_z_one(0.0, 0.5, 64).is_err());
    }

    /// nu = 1: Var Z(1) = int int R(x, y) dx dy = 1/(2H + 2).
    #[test]
    fn unit_nu_closed_form() {
        for h in [0.2, 0.3, 0.5, 0.7, 0.9] {
            let v = var_z_one(1.0, h, 2048).unwrap();
            assert!((v - 1.0 / (2.0 * h + 2.0)).abs() < 1e-5, "H={h}: {v}");
        }
    }

    #[test]
    fn quadrature_convergence() {
        for nu in [0.5, 1.0, 2.0] {
            for h in [0.3, 0.5, 0.7] {
                let v: Vec<f64> = [64, 128, 256].iter().map(|&q| var_z_one(nu, h, q).unwrap()).collect();
                let (d1, d2) = ((v[0] - v[1]).abs(), (v[1] - v[2]).abs());
                assert!(d2 <= d1 / 2.0, "nu={nu} H={h}: {d1} then {d2}");
            }
        }
    }

    #[test]
    fn sampled_variance_matches_quadrature() {
        let (nu, h, m) = (1.5, 0.7, 256);
        let grid = TimeGrid::new(m).unwrap();
        let sampler = FbmSampler::new(grid, h, FbmMethod::Cholesky).unwrap();
        let ev = ZEvaluator::new(ZProcessSpec::new(nu, h, m).unwrap(), &[1.0]).unwrap();
        let trials = 10_000;
        let z: Vec<f64> = (0..trials)
            .map(|i| ev.apply(&sampler.sample(&mut stream(2, "zvar", i))).unwrap()[0])
            .collect();
        let mean = z.iter().sum::<f64>() / trials as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let target = var_z_one(nu, h, 1024).unwrap();
        let se = target * (2.0 / (trials as f64 - 1.0)).sqrt();
        assert!((var - target).abs() < 5.0 * se, "{var} vs {target} (se {se})");
    }

    #[test]
    fn nu0_factor() {
        let rat = MemoryFunction::new(0.0, SlowlyVarying::bounded_rational(2.0, 1.0)).unwrap();
        assert_eq!(limit_factor_nu0(&rat).unwrap(), 0.5);
        let log = MemoryFunction::new(0.0, SlowlyVarying::LogShift).unwrap();
        assert_eq!(limit_factor_nu0(&log).unwrap(), 1.0);
        let rise = SlowlyVarying::tabulated(vec![(0.0, 1.0), (5.0, 4.0)], 4.0).unwrap();
        let tab = MemoryFunction::new(0.0, rise).unwrap();
        assert_eq!(limit_factor_nu0(&tab).unwrap(), 0.75);
        let pos = MemoryFunction::power(1.0).unwrap();
        assert!(matches!(limit_factor_nu0(&pos), Err(Error::WrongBranch(_))));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("var_z.csv");
        let mut cache = VarZCache::open(&file).unwrap();
        assert!(cache.is_empty());
        let v = cache.get_or_compute(2.0, 0.7, 128).unwrap();
        cache.save().unwrap();
        let text = fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("nu,hurst,quad_n,var_z_one\n"));
        let reopened = VarZCache::open(&file).unwrap();
        assert_eq!(reopened.get(2.0, 0.7, 128), Some(v));
        assert_eq!(reopened.get(2.0, 0.7, 256), None);
    }

    #[test]
    fn quadrature_matches_monte_carlo_oracle() {
        let (nu, h, m) = (2.0, 0.5, 256);
        let grid = TimeGrid::new(m).unwrap();
        let sampler = FbmSampler::new(grid, h, FbmMethod::Circulant).unwrap();
        let ev = ZEvaluator::new(ZProcessSpec::new(nu, h, m).unwrap(), &[1.0]).unwrap();
        let trials = 400_000;
        let z: Vec<f64> = (0..trials)
            .map(|i| ev.apply(&sampler.sample(&mut stream(3, "zmc", i))).unwrap()[0])
            .collect();
        let mean = z.iter().sum::<f64>() / trials as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let quad = var_z_one(nu, h, 1024).unwrap();
        assert!((var / quad - 1.0).abs() < 0.01, "{var} vs {quad}");
    }
}
