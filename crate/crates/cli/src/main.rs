mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use memwalk::fmt_f64 as f;
use memwalk::rng::stream;
use memwalk::verify::{run_suite, var_ratio_table, write_var_ratio_csv, Suite, Verdict};
use memwalk::{Error, ExperimentConfig, FbmMethod, FbmSampler, TimeGrid, VarZCache, WalkSimulator};

use manifest::{Job, RunManifest, MANIFEST_FILE};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "memwalk", version, about = "Simulate and verify moving-average walks and their Gaussian limits")]
struct Cli {
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample s_n and r_n paths and write paths.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the raw innovations to innovations.csv.
        #[arg(long)]
        keep_innovations: bool,
    },
    /// Run a verification suite and write report.json and report.txt.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// proposition, theorem_nu_pos, theorem_nu_zero, corollary or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-trial statistics to trials.csv.
        #[arg(long)]
        trial_csv: bool,
    },
    /// Sample fractional Brownian motion paths and write fbm.csv.
    Fbm {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// cholesky or circulant.
        #[arg(long, default_value = "circulant")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::WrongBranch(_) | Error::Hypothesis(_)) => EXIT_CONFIG,
            _ => EXIT_FAIL,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn config_failure(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let workers = cli.workers.max(1);
    let manifest = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            keep_innovations,
        } => {
            let cfg = load_config(&config, seed, 1)?;
            RunManifest::new(Job::Simulate { keep_innovations }, Some(config), Some(cfg), &out, workers)
        }
        Command::Verify {
            config,
            out,
            suite,
            seed,
            trial_csv,
        } => {
            suite.parse::<Suite>().map_err(|e| config_failure(e.into()))?;
            let cfg = load_config(&config, seed, memwalk::config::MIN_TRIALS)?;
            RunManifest::new(Job::Verify { suite, trial_csv }, Some(config), Some(cfg), &out, workers)
        }
        Command::Fbm {
            n,
            hurst,
            trials,
            method,
            seed,
            out,
        } => {
            let method: FbmMethod = method.parse().map_err(|e: Error| config_failure(e.into()))?;
            if n == 0 || trials == 0 || !(hurst > 0.0 && hurst < 1.0) {
                return Err(config_failure(anyhow!("fbm needs n >= 1, trials >= 1 and 0 < hurst < 1")));
            }
            RunManifest::new(
                Job::Fbm {
                    n,
                    hurst,
                    trials,
                    method,
                    seed,
                },
                None,
                None,
                &out,
                workers,
            )
        }
        Command::Replay { manifest, out } => {
            let mut m = RunManifest::load(&manifest).map_err(config_failure)?;
            if let Some(dir) = out {
                m.out_dir = dir;
            }
            m.workers = workers;
            m.timings.clear();
            m
        }
    };
    execute(manifest)
}

fn load_config(path: &Path, seed: Option<u64>, min_trials: usize) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_path_with(path, min_trials).map_err(|e| config_failure(e.into()))?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn execute(mut manifest: RunManifest) -> Result<u8, Failure> {
    manifest.write()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers)
        .build()
        .context("building worker pool")?;
    let code = pool.install(|| -> Result<u8, Failure> {
        match manifest.job.clone() {
            Job::Simulate { keep_innovations } => simulate(&mut manifest, keep_innovations),
            Job::Verify { trial_csv, .. } => verify(&mut manifest, trial_csv),
            Job::Fbm {
                n,
                hurst,
                trials,
                method,
                seed,
            } => fbm(&mut manifest, n, hurst, trials, method, seed),
        }
    })?;
    manifest.write()?;
    Ok(code)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn config_of(manifest: &RunManifest) -> Result<ExperimentConfig, Failure> {
    manifest
        .config
        .clone()
        .ok_or_else(|| config_failure(anyhow!("{MANIFEST_FILE} has no config for this command")))
}

fn simulate(manifest: &mut RunManifest, keep_innovations: bool) -> Result<u8, Failure> {
    let cfg = config_of(manifest)?;
    let model = cfg.model()?;
    model.innovation.check_hurst(model.kernel.target_hurst())?;
    let dir = manifest.out_dir.clone();
    let mut paths = create(&dir, "paths.csv")?;
    writeln!(paths, "n,trial,t,s_n,r_n").context("writing paths.csv")?;
    let mut innov = if keep_innovations {
        let mut w = create(&dir, "innovations.csv")?;
        writeln!(w, "n,trial,k,xi").context("writing innovations.csv")?;
        Some(w)
    } else {
        None
    };
    for &n in &cfg.n_values {
        let samples = manifest.stage(&format!("simulate n={n}"), || {
            let sim = WalkSimulator::new(&model.kernel, &model.memory, model.innovation, n)?.keep_innovations(keep_innovations);
            let label = format!("simulate/{n}");
            use rayon::prelude::*;
            (0..cfg.trials as u64)
                .into_par_iter()
                .map(|i| sim.simulate(&mut stream(cfg.master_seed, &label, i)))
                .collect::<memwalk::Result<Vec<_>>>()
        })?;
        for (trial, s) in samples.iter().enumerate() {
            for (i, t) in s.s_path.grid.points().enumerate() {
                writeln!(paths, "{n},{trial},{},{},{}", f(t), f(s.s_path.values[i]), f(s.r_path.values[i]))
                    .context("writing paths.csv")?;
            }
            if let (Some(w), Some(xi)) = (innov.as_mut(), s.innovations.as_ref()) {
                for (j, v) in xi.values.iter().enumerate() {
                    writeln!(w, "{n},{trial},{},{}", xi.start + j as i64, f(*v)).context("writing innovations.csv")?;
                }
            }
        }
    }
    paths.flush().context("writing paths.csv")?;
    if let Some(mut w) = innov {
        w.flush().context("writing innovations.csv")?;
    }
    Ok(0)
}

fn verify(manifest: &mut RunManifest, trial_csv: bool) -> Result<u8, Failure> {
    let cfg = config_of(manifest)?;
    let suite = manifest
        .job
        .suite()
        .ok_or_else(|| config_failure(anyhow!("unknown suite in manifest")))?;
    let dir = manifest.out_dir.clone();
    let mut cache = VarZCache::open(dir.join("var_z_cache.csv"))?;
    let report = manifest.stage("verify", || run_suite(&cfg, suite, Some(&mut cache)))?;
    cache.save()?;
    if matches!(suite, Suite::Corollary | Suite::All) {
        let (rows, _) = var_ratio_table(&cfg, Some(&mut cache))?;
        write_var_ratio_csv(&rows, create(&dir, "var_ratio.csv")?)?;
    }
    std::fs::write(dir.join("report.json"), report.to_json()).context("writing report.json")?;
    std::fs::write(dir.join("report.txt"), report.to_text()).context("writing report.txt")?;
    if trial_csv {
        report.write_trial_csv(create(&dir, "trials.csv")?)?;
    }
    println!("{}", report.to_text().trim_end());
    Ok(match report.verdict {
        Verdict::Pass => 0,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn fbm(manifest: &mut RunManifest, n: usize, hurst: f64, trials: usize, method: FbmMethod, seed: u64) -> Result<u8, Failure> {
    let dir = manifest.out_dir.clone();
    let grid = TimeGrid::new(n)?;
    let sampler = manifest.stage("fbm setup", || FbmSampler::new(grid, hurst, method))?;
    let paths = manifest.stage("fbm sample", || {
        use rayon::prelude::*;
        (0..trials as u64)
            .into_par_iter()
            .map(|i| sampler.sample(&mut stream(seed, "fbm", i)))
            .collect::<Vec<_>>()
    });
    let mut w = create(&dir, "fbm.csv")?;
    writeln!(w, "trial,t,value").context("writing fbm.csv")?;
    for (trial, p) in paths.iter().enumerate() {
        for (t, v) in grid.points().zip(&p.values) {
            writeln!(w, "{trial},{},{}", f(t), f(*v)).context("writing fbm.csv")?;
        }
    }
    w.flush().context("writing fbm.csv")?;
    Ok(0)
}
