//! Simulation and verification toolkit for moving-average walks driven by a
//! regularly varying memory function, and for their Gaussian limits built
//! from fractional Brownian motion.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod config;
pub mod conv;
pub mod error;
pub mod fbm;
pub mod kernel;
pub mod limit;
pub mod linproc;
pub mod memory;
pub mod rng;
pub mod series;
pub mod verify;

pub use config::{ExperimentConfig, InnovationSpec, KernelSpec, MemorySpec, Model};
pub use error::{Error, Result};
pub use fbm::{fbm_cov, sample_fbm, FbmMethod, FbmSampler, GaussPath, PathKind, TimeGrid};
pub use kernel::{default_truncation, make_fractional_kernel, Kernel, Truncation};
pub use limit::{limit_factor_nu0, sample_z, var_z_one, VarZCache, ZEvaluator, ZProcessSpec};
pub use linproc::{
    exact_var_r, partial_sums, r_n_path, s_n_path, sample_innovations, sample_linear_process, v_sequence,
    InnovationLaw, InnovationModel, WalkSample, WalkSimulator,
};
pub use memory::{sv_max_ratio, MemoryFunction, SlowlyVarying};
pub use series::IndexedSeries;
pub use verify::{ks_two_sample, run_suite, FddTarget, Suite, SuiteReport, TestReport, Verdict};

/// Text form used in every CSV: 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
