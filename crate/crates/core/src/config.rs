//! Experiment configuration: a TOML file mapping one-to-one onto
//! [`ExperimentConfig`]. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::FbmMethod;
use crate::kernel::{Kernel, Truncation};
use crate::linproc::{InnovationLaw, InnovationModel};
use crate::memory::{MemoryFunction, SlowlyVarying};

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelType {
    Fractional,
    Iid,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(rename = "type")]
    pub kind: KernelType,
    pub hurst: f64,
    /// Truncation lag of the fractional kernel; default rule when absent.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Keep an explicit `K` that fails the tail rule.
    #[serde(default)]
    pub truncation_override: bool,
    /// Symmetrize as `(a_k + a_{-k}) / sqrt(2)`.
    #[serde(default)]
    pub two_sided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub start: i64,
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        let base = match self.kind {
            KernelType::Iid => {
                if self.hurst != 0.5 {
                    return Err(Error::Config(format!("iid kernel has H = 0.5, got hurst = {}", self.hurst)));
                }
                Kernel::iid(0.5)?
            }
            KernelType::Explicit => {
                let coeffs = self
                    .coeffs
                    .clone()
                    .ok_or_else(|| Error::Config("explicit kernel needs coeffs".into()))?;
                Kernel::explicit(self.start, coeffs, self.hurst)?
            }
            KernelType::Fractional => match self.k {
                None => Kernel::fractional_default(self.hurst)?,
                Some(k) => {
                    let mode = if self.truncation_override {
                        Truncation::Override
                    } else {
                        Truncation::Enforce
                    };
                    Kernel::fractional(self.hurst, k, mode)?
                }
            },
        };
        if self.two_sided {
            base.mirrored()
        } else {
            Ok(base)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryForm {
    Constant,
    LogShift,
    BoundedRational,
    Tabulated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySpec {
    pub nu: f64,
    pub form: MemoryForm,
    #[serde(default)]
    pub params: MemoryParams,
}

impl MemorySpec {
    pub fn build(&self) -> Result<MemoryFunction> {
        let p = &self.params;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("memory form needs params.{name}")));
        let l = match self.form {
            MemoryForm::Constant => SlowlyVarying::constant(p.c.unwrap_or(1.0)),
            MemoryForm::LogShift => SlowlyVarying::LogShift,
            MemoryForm::BoundedRational => SlowlyVarying::bounded_rational(need(p.c_inf, "c_inf")?, need(p.b, "b")?),
            MemoryForm::Tabulated => {
                let knots = p
                    .knots
                    .clone()
                    .ok_or_else(|| Error::Config("memory form needs params.knots".into()))?;
                SlowlyVarying::tabulated(knots, need(p.tail, "tail")?)?
            }
        };
        MemoryFunction::new(self.nu, l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Gaussian,
    Rademacher,
    StudentT,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationSpec {
    pub law: LawName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

impl Default for InnovationSpec {
    fn default() -> Self {
        Self {
            law: LawName::Gaussian,
            df: None,
        }
    }
}

impl InnovationSpec {
    pub fn build(&self) -> Result<InnovationModel> {
        let law = match self.law {
            LawName::Gaussian => InnovationLaw::Gaussian,
            LawName::Rademacher => InnovationLaw::Rademacher,
            LawName::Zero => InnovationLaw::Zero,
            LawName::StudentT => InnovationLaw::StudentT {
                df: self.df.ok_or_else(|| Error::Config("student_t needs df".into()))?,
            },
        };
        InnovationModel::new(law)
    }
}

fn default_eval_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_cramer_wold() -> Vec<Vec<f64>> {
    vec![vec![1.0], vec![1.0, -1.0], vec![1.0, 1.0, 1.0]]
}

fn default_significance() -> f64 {
    0.01
}

fn default_replicates() -> usize {
    5
}

fn default_quad_grid() -> usize {
    4096
}

fn default_modulus_deltas() -> Vec<f64> {
    vec![1.0, 0.125, 1.0 / 64.0]
}

fn default_cov_tolerance() -> f64 {
    0.02
}

fn default_ratio_tolerance() -> f64 {
    0.10
}

fn default_fbm_method() -> FbmMethod {
    FbmMethod::Circulant
}

/// Everything one experiment needs. Cramér–Wold vectors pair with the last
/// `len(c)` evaluation times, so `(1, -1)` on times `(1/4, 1/2, 1)` is
/// `s(1/2) - s(1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub memory: MemorySpec,
    #[serde(default)]
    pub innovation: InnovationSpec,
    pub n_values: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_eval_times")]
    pub eval_times: Vec<f64>,
    #[serde(default = "default_cramer_wold")]
    pub cramer_wold: Vec<Vec<f64>>,
    pub master_seed: u64,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// fBm grid for the Z quadrature, and cell count of the variance rule.
    #[serde(default = "default_quad_grid")]
    pub quad_grid: usize,
    #[serde(default = "default_modulus_deltas")]
    pub modulus_deltas: Vec<f64>,
    /// Moment order of the increment bound; see [`ExperimentConfig::alpha`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_alpha: Option<f64>,
    #[serde(default = "default_cov_tolerance")]
    pub cov_tolerance: f64,
    #[serde(default = "default_ratio_tolerance")]
    pub ratio_tolerance: f64,
    #[serde(default = "default_fbm_method")]
    pub fbm_method: FbmMethod,
}

/// Resolved model objects of a validated config.
#[derive(Debug, Clone)]
pub struct Model {
    pub kernel: Kernel,
    pub memory: MemoryFunction,
    pub innovation: InnovationModel,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_path_with(path, MIN_TRIALS)
    }

    pub fn from_path_with(path: impl AsRef<Path>, min_trials: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str_with(&text, min_trials).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse and validate. Errors carry the line of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with(text, MIN_TRIALS)
    }

    /// As [`ExperimentConfig::from_toml_str`] with a different floor on
    /// `trials`; plain simulation runs accept any positive count.
    pub fn from_toml_str_with(text: &str, min_trials: usize) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))?;
        cfg.validate(min_trials.max(1)).map_err(|(section, key, err)| {
            let line = locate_key(text, section, key).map_or_else(String::new, |l| format!("line {l}: "));
            Error::Config(format!("{line}{}", strip_prefix(&err)))
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hurst(&self) -> f64 {
        self.kernel.hurst
    }

    pub fn n_max(&self) -> usize {
        *self.n_values.iter().max().expect("validated non-empty")
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            kernel: self.kernel.build()?,
            memory: self.memory.build()?,
            innovation: self.innovation.build()?,
        })
    }

    /// Moment order for the increment bound: the configured value, or
    /// `min(moment order, max(4, 2/H))`, which keeps `alpha * H > 1`.
    pub fn alpha(&self, innovation: &InnovationModel) -> f64 {
        self.moment_alpha
            .unwrap_or_else(|| innovation.moment_order().min(4f64.max(2.0 / self.hurst())))
    }

    /// `(c, times)` pairs with each vector aligned to the last times.
    pub fn cramer_wold_pairs(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let m = self.eval_times.len();
        self.cramer_wold
            .iter()
            .map(|c| (c.clone(), self.eval_times[m - c.len()..].to_vec()))
            .collect()
    }

    fn validate(&self, min_trials: usize) -> std::result::Result<(), (Option<&'static str>, &'static str, Error)> {
        let top = |key, err| (None, key, err);
        let cfg_err = |msg: String| Error::Config(msg);
        let kernel = self.kernel.build().map_err(|e| (Some("kernel"), "hurst", e))?;
        self.memory.build().map_err(|e| (Some("memory"), "form", e))?;
        let innovation = self.innovation.build().map_err(|e| (Some("innovation"), "law", e))?;
        innovation
            .check_hurst(kernel.target_hurst())
            .map_err(|e| (Some("innovation"), "law", e))?;
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(top("n_values", cfg_err("n_values must be non-empty and >= 1".into())));
        }
        if self.trials < min_trials {
            return Err(top("trials", cfg_err(format!("trials must be >= {min_trials}, got {}", self.trials))));
        }
        if self.eval_times.is_empty() || self.eval_times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(top("eval_times", cfg_err("eval_times must be non-empty and lie in [0, 1]".into())));
        }
        if self.cramer_wold.iter().any(|c| c.is_empty() || c.len() > self.eval_times.len()) {
            return Err(top(
                "cramer_wold",
                cfg_err(format!(
                    "each Cramér–Wold vector needs 1..={} entries",
                    self.eval_times.len()
                )),
            ));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(top("significance", cfg_err("significance must lie in (0, 1)".into())));
        }
        if self.replicates == 0 {
            return Err(top("replicates", cfg_err("replicates must be >= 1".into())));
        }
        if self.quad_grid < crate::limit::MIN_QUAD_GRID {
            return Err(top(
                "quad_grid",
                cfg_err(format!("quad_grid must be >= {}", crate::limit::MIN_QUAD_GRID)),
            ));
        }
        if self.modulus_deltas.is_empty() || self.modulus_deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(top("modulus_deltas", cfg_err("modulus_deltas must be non-empty and > 0".into())));
        }
        if let Some(alpha) = self.moment_alpha {
            if alpha * kernel.target_hurst() <= 1.0 || alpha > innovation.moment_order() {
                return Err(top(
                    "moment_alpha",
                    Error::Hypothesis(format!(
                        "moment_alpha = {alpha} needs alpha*H > 1 and alpha <= moment order {}",
                        innovation.moment_order()
                    )),
                ));
            }
        }
        if !(self.cov_tolerance > 0.0) || !(self.ratio_tolerance > 0.0) {
            return Err(top("cov_tolerance", cfg_err("tolerances must be > 0".into())));
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg.to_string(),
    }
}

/// 1-based line of `key = ...` inside `[section]` (or at top level).
fn locate_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if Some(name.as_str()) == section {
                header_line = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        let in_scope = match section {
            None => current.is_none(),
            Some(s) => current.as_deref() == Some(s),
        };
        if in_scope {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 7
n_values = [64]
trials = 100

[kernel]
type = "iid"
hurst = 0.5

[memory]
nu = 1.0
form = "constant"
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.significance, 0.01);
        assert_eq!(cfg.replicates, 5);
        assert_eq!(cfg.eval_times, vec![0.25, 0.5, 1.0]);
        assert_eq!(cfg.innovation.law, LawName::Gaussian);
        let pairs = cfg.cramer_wold_pairs();
        assert_eq!(pairs[0], (vec![1.0], vec![1.0]));
        assert_eq!(pairs[1], (vec![1.0, -1.0], vec![0.5, 1.0]));
        assert_eq!(pairs[2].1, vec![0.25, 0.5, 1.0]);
        let model = cfg.model().unwrap();
        assert_eq!(model.kernel.span(), 0);
        assert_eq!(cfg.alpha(&model.innovation), 4.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn moment_condition_is_rejected_with_line() {
        let text = MINIMAL
            .replace("type = \"iid\"\nhurst = 0.5", "type = \"fractional\"\nhurst = 0.3\nK = 64\ntruncation_override = true")
            + "\n[innovation]\nlaw = \"student_t\"\ndf = 3.0\n";
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("moment condition alpha*H>1 violated"), "{err}");
        assert!(err.contains("line 17"), "{err}");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = MINIMAL.replace("trials = 100", "trials = 100\nhurts = 0.7");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("hurts"), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_keys() {
        let err = ExperimentConfig::from_toml_str(&MINIMAL.replace("trials = 100", "trials = 10"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4") && err.contains("trials"), "{err}");
        assert!(ExperimentConfig::from_toml_str_with(&MINIMAL.replace("trials = 100", "trials = 10"), 1).is_ok());
        let err = ExperimentConfig::from_toml_str(&MINIMAL.replace("form = \"constant\"", "form = \"bounded_rational\""))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 12") && err.contains("c_inf"), "{err}");
        let err = ExperimentConfig::from_toml_str(&MINIMAL.replace("trials = 100", "trials = 100\neval_times = [0.5, 2.0]"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 5") && err.contains("eval_times"), "{err}");
    }

    #[test]
    fn constant_memory_is_rejected() {
        let text = MINIMAL.replace("nu = 1.0", "nu = 0.0");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn explicit_and_two_sided_kernels() {
        let text = MINIMAL.replace(
            "type = \"iid\"\nhurst = 0.5",
            "type = \"explicit\"\nhurst = 0.5\nstart = -1\ncoeffs = [0.5, 1.0, 0.5]\ntwo_sided = true",
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let k = cfg.model().unwrap().kernel;
        assert_eq!(k.at(1), k.at(-1));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn body(h: f64, nu: f64, n: usize, trials: usize, seed: u64) -> String {
        format!(
            "master_seed = {seed}\nn_values = [{n}]\ntrials = {trials}\n\
             [kernel]\ntype = \"fractional\"\nhurst = {h:?}\nK = 64\ntruncation_override = true\n\
             [memory]\nnu = {nu:?}\nform = \"log_shift\"\n"
        )
    }

    proptest! {
        #[test]
        fn toml_round_trip(h in 0.05f64..0.95, nu in 0.0f64..3.0, n in 1usize..5000, trials in 100usize..10_000, seed in any::<u64>()) {
            let cfg = ExperimentConfig::from_toml_str(&body(h, nu, n, trials, seed)).unwrap();
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            prop_assert_eq!(cfg, again);
        }

        #[test]
        fn eval_times_outside_unit_interval_rejected(t in prop_oneof![-10.0f64..-1e-9, 1.0f64 + 1e-9..10.0]) {
            let text = format!("eval_times = [{t:?}]\ncramer_wold = [[1.0]]\n{}", body(0.7, 1.0, 64, 100, 1));
            prop_assert!(ExperimentConfig::from_toml_str(&text).is_err());
        }

        #[test]
        fn too_few_trials_rejected(trials in 0usize..100) {
            prop_assert!(ExperimentConfig::from_toml_str(&body(0.7, 1.0, 64, trials, 1)).is_err());
        }
    }
}
