use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use memwalk::verify::Suite;
use memwalk::{ExperimentConfig, FbmMethod};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Simulate {
        keep_innovations: bool,
    },
    Verify {
        suite: String,
        trial_csv: bool,
    },
    Fbm {
        n: usize,
        hurst: f64,
        trials: usize,
        method: FbmMethod,
        seed: u64,
    },
}

impl Job {
    pub fn suite(&self) -> Option<Suite> {
        match self {
            Job::Verify { suite, .. } => suite.parse().ok(),
            _ => None,
        }
    }
}

/// Everything needed to re-run a command: the resolved config (seed
/// overrides applied) and the job parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub config_path: Option<PathBuf>,
    pub config: Option<ExperimentConfig>,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Wall-clock seconds per stage; filled in as stages finish.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(job: Job, config_path: Option<PathBuf>, config: Option<ExperimentConfig>, out_dir: &Path, workers: usize) -> Self {
        Self {
            tool: "memwalk".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
            config_path,
            config,
            out_dir: out_dir.to_path_buf(),
            workers,
            timings: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Run `f` as a named stage and record its wall-clock time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        log::info!("stage {name}");
        let start = Instant::now();
        let out = f();
        self.timings.insert(name.to_string(), start.elapsed().as_secs_f64());
        out
    }
}
