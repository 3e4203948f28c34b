//! Verification harness: deterministic and Monte Carlo checks of the limit
//! theorems, with machine- and human-readable reports.

mod checks;
mod ks;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::limit::VarZCache;

pub use checks::{
    limit_sigma2, moving_modulus, test_cov_convergence, test_fdd, test_modulus, test_moment_bound, test_nu0_proxy,
    test_var_ratio, test_var_ratio_with_cache, var_ratio_table, write_var_ratio_csv, FddTarget, Sigma2, VarRatioRow,
    MOMENT_SMOKE_BOUND, MOMENT_TIMES,
};
pub use ks::{kolmogorov_sf, ks_two_sample, KS_MIN_SAMPLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Num(x) if *x == 0.0 => "0".into(),
            Cell::Num(x) if x.is_finite() && (1e-3..1e6).contains(&x.abs()) => format!("{x:.6}"),
            Cell::Num(x) => format!("{x:.6e}"),
        }
    }
}

/// One per-trial statistic, for the optional CSV dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStat {
    pub label: String,
    pub n: usize,
    pub trial: u64,
    pub stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: String,
    pub verdict: Verdict,
    pub seed: u64,
    pub notes: Vec<String>,
    pub thresholds: BTreeMap<String, f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    #[serde(skip)]
    pub trial_stats: Vec<TrialStat>,
}

impl TestReport {
    pub(crate) fn new(test: impl Into<String>, seed: u64, columns: &[&str]) -> Self {
        Self {
            test: test.into(),
            verdict: Verdict::Pass,
            seed,
            notes: Vec::new(),
            thresholds: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            trial_stats: Vec::new(),
        }
    }

    pub(crate) fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub(crate) fn threshold(&mut self, name: &str, value: f64) {
        self.thresholds.insert(name.to_string(), value);
    }

    pub(crate) fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Fixed-width text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} [{}] seed={}", self.test, self.verdict.as_str(), self.seed);
        for n in &self.notes {
            let _ = writeln!(out, "   {n}");
        }
        for (k, v) in &self.thresholds {
            let _ = writeln!(out, "   threshold {k} = {}", Cell::Num(*v).render());
        }
        let rendered: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| rendered.iter().map(|r| r[i].len()).max().unwrap_or(0).max(c.len()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&self.columns));
        for r in &rendered {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Proposition,
    TheoremNuPos,
    TheoremNuZero,
    Corollary,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Proposition => "proposition",
            Suite::TheoremNuPos => "theorem_nu_pos",
            Suite::TheoremNuZero => "theorem_nu_zero",
            Suite::Corollary => "corollary",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "proposition" => Suite::Proposition,
            "theorem_nu_pos" => Suite::TheoremNuPos,
            "theorem_nu_zero" => Suite::TheoremNuZero,
            "corollary" => Suite::Corollary,
            "all" => Suite::All,
            other => {
                return Err(Error::Config(format!(
                    "unknown suite '{other}' (proposition, theorem_nu_pos, theorem_nu_zero, corollary, all)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub verdict: Verdict,
    pub config: ExperimentConfig,
    pub reports: Vec<TestReport>,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("suite {}: {}\n\n", self.suite.as_str(), self.verdict.as_str());
        for r in &self.reports {
            out.push_str(&r.to_text());
            out.push('\n');
        }
        out
    }

    /// CSV rows `test,n,trial,stat` of every per-trial statistic.
    pub fn write_trial_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "test,n,trial,stat")?;
        for r in &self.reports {
            for t in &r.trial_stats {
                writeln!(w, "{},{},{},{}", t.label, t.n, t.trial, crate::fmt_f64(t.stat))?;
            }
        }
        Ok(())
    }
}

/// Run the tests of a suite. Branch mismatches (e.g. the `nu = 0` theorem on
/// a `nu > 0` config) are [`Error::WrongBranch`].
pub fn run_suite(cfg: &ExperimentConfig, suite: Suite, cache: Option<&mut VarZCache>) -> Result<SuiteReport> {
    let nu = cfg.memory.nu;
    let mut reports = Vec::new();
    let wants = |s: Suite| suite == s || suite == Suite::All;
    match suite {
        Suite::TheoremNuPos if nu == 0.0 => {
            return Err(Error::WrongBranch("theorem_nu_pos needs nu > 0".into()));
        }
        Suite::TheoremNuZero if nu > 0.0 => {
            return Err(Error::WrongBranch("theorem_nu_zero needs nu = 0".into()));
        }
        _ => {}
    }
    if wants(Suite::Proposition) {
        let model = cfg.model()?;
        reports.push(test_cov_convergence(cfg)?);
        reports.push(test_fdd(cfg, FddTarget::PropositionSToFbm)?);
        reports.push(test_modulus(cfg, &cfg.modulus_deltas)?);
        reports.push(test_moment_bound(cfg, cfg.alpha(&model.innovation))?);
    }
    if wants(Suite::TheoremNuPos) && nu > 0.0 {
        reports.push(test_fdd(cfg, FddTarget::TheoremRToZ)?);
    }
    if wants(Suite::TheoremNuZero) && nu == 0.0 {
        reports.push(test_fdd(cfg, FddTarget::TheoremRToScaledFbm)?);
        reports.push(test_nu0_proxy(cfg)?);
    }
    if wants(Suite::Corollary) {
        reports.push(test_var_ratio_with_cache(cfg, cache)?);
    }
    let verdict = reports.iter().fold(Verdict::Pass, |v, r| v.combine(r.verdict));
    Ok(SuiteReport {
        suite,
        verdict,
        config: cfg.clone(),
        reports,
    })
}

/// Run `f(trial)` for every trial on the current rayon pool, keeping trial
/// order so that results do not depend on the worker count.
pub(crate) fn par_trials<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
