//! Monte-Carlo sweeps over noise level, outlier count, missing fraction and
//! outlier budget.
//!
//! Every `(cell, run)` pair is an independent job. Run `r` always uses the
//! trial seed `derive_seed(seed, r)`, so all cells of a sweep share the same
//! scenes and standard-normal draws and differ only in the corruption
//! parameters. Per-run outcomes are collected in job order and reduced
//! sequentially, which makes the output independent of the thread count.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completion::{Completer, SolveMode};
use crate::denoise::denoise_closed_form;
use crate::error::{Result, TdoaError};
use crate::localize::localize;
use crate::matrix::TdoaMatrix;
use crate::metrics::{position_error, snr_db};
use crate::robust::{robust_denoise, RobustParams, StopRule, DEFAULT_EPS, DEFAULT_MAX_ITER};
use crate::sim::{
    derive_seed, missing_count, random_scene, CorruptionSpec, Scene, Trial, DEFAULT_OUTLIER_SIGMA,
    DEFAULT_SENSOR_SIDE, DEFAULT_SOURCE_SIDE, DEFAULT_SPEED,
};

/// Estimation pipeline evaluated in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Measured non-redundant set, missing entries set to zero.
    Raw,
    /// Gauss-Markov projection of the zero-filled matrix.
    Denoise,
    RobustDenoise,
    Complete,
    RobustComplete,
}

impl Pipeline {
    pub const ALL: [Pipeline; 5] = [
        Pipeline::Raw,
        Pipeline::Denoise,
        Pipeline::RobustDenoise,
        Pipeline::Complete,
        Pipeline::RobustComplete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Raw => "raw",
            Pipeline::Denoise => "denoise",
            Pipeline::RobustDenoise => "robust_denoise",
            Pipeline::Complete => "complete",
            Pipeline::RobustComplete => "robust_complete",
        }
    }

    pub fn uses_k(self) -> bool {
        matches!(self, Pipeline::RobustDenoise | Pipeline::RobustComplete)
    }

    fn needs_mask(self) -> bool {
        matches!(self, Pipeline::Complete | Pipeline::RobustComplete)
    }
}

fn default_outliers() -> Vec<usize> {
    vec![0]
}
fn default_missing() -> Vec<f64> {
    vec![0.0]
}
fn default_k() -> Vec<usize> {
    vec![8]
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_pipelines() -> Vec<Pipeline> {
    Pipeline::ALL.to_vec()
}
fn default_sensor_side() -> f64 {
    DEFAULT_SENSOR_SIDE
}
fn default_source_side() -> f64 {
    DEFAULT_SOURCE_SIDE
}
fn default_speed() -> f64 {
    DEFAULT_SPEED
}
fn default_outlier_sigma() -> f64 {
    DEFAULT_OUTLIER_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub runs: usize,
    /// Seconds.
    pub noise_sigmas: Vec<f64>,
    #[serde(default = "default_outliers")]
    pub outlier_counts: Vec<usize>,
    #[serde(default = "default_missing")]
    pub missing_fractions: Vec<f64>,
    #[serde(default = "default_k")]
    pub k_values: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<Pipeline>,
    #[serde(default = "default_sensor_side")]
    pub sensor_side: f64,
    #[serde(default = "default_source_side")]
    pub source_side: f64,
    #[serde(default = "default_speed")]
    pub c: f64,
    #[serde(default = "default_outlier_sigma")]
    pub outlier_sigma: f64,
}

impl SweepConfig {
    /// A config with the default grids and the given core parameters.
    pub fn new(n: usize, runs: usize, noise_sigmas: Vec<f64>) -> Self {
        Self {
            n,
            runs,
            noise_sigmas,
            outlier_counts: default_outliers(),
            missing_fractions: default_missing(),
            k_values: default_k(),
            eps: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            stop: StopRule::default(),
            seed: 0,
            pipelines: default_pipelines(),
            sensor_side: DEFAULT_SENSOR_SIDE,
            source_side: DEFAULT_SOURCE_SIDE,
            c: DEFAULT_SPEED,
            outlier_sigma: DEFAULT_OUTLIER_SIGMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TdoaError::InvalidInput(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.noise_sigmas.is_empty()
            || self.outlier_counts.is_empty()
            || self.missing_fractions.is_empty()
        {
            return bad(
                "noise_sigmas, outlier_counts and missing_fractions must be non-empty".into(),
            );
        }
        if self.pipelines.is_empty() {
            return bad("no pipelines selected".into());
        }
        if self.pipelines.iter().any(|p| p.uses_k()) && self.k_values.is_empty() {
            return bad("k_values must be non-empty for robust pipelines".into());
        }
        if self
            .noise_sigmas
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad("noise sigmas must be finite and nonnegative".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.max_iter == 0 {
            return bad("eps must be positive and max_iter at least 1".into());
        }
        let pairs = self.n * (self.n - 1) / 2;
        for &f in &self.missing_fractions {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("missing fraction {f} outside [0, 1)"));
            }
            for &o in &self.outlier_counts {
                if o + missing_count(f, pairs) > pairs {
                    return bad(format!(
                        "{o} outliers with missing fraction {f} exceed {pairs} pairs"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Reads JSON, or TOML when the file ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| TdoaError::Parse(e.to_string()))?,
            _ => serde_json::from_str(&text).map_err(|e| TdoaError::Parse(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &noise_sigma in &self.noise_sigmas {
            for &outlier_count in &self.outlier_counts {
                for &missing_fraction in &self.missing_fractions {
                    out.push(Cell {
                        noise_sigma,
                        outlier_count,
                        missing_fraction,
                    });
                }
            }
        }
        out
    }

    /// `(pipeline, k)` combinations in output order.
    fn slots(&self) -> Vec<(Pipeline, Option<usize>)> {
        let mut out = Vec::new();
        for &p in &self.pipelines {
            if p.uses_k() {
                out.extend(self.k_values.iter().map(|&k| (p, Some(k))));
            } else {
                out.push((p, None));
            }
        }
        out
    }

    fn params(&self, k: usize) -> RobustParams {
        RobustParams {
            k,
            eps: self.eps,
            max_iter: self.max_iter,
            stop: self.stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    noise_sigma: f64,
    outlier_count: usize,
    missing_fraction: f64,
}

/// Result of one pipeline on one trial. `None` marks a failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub snr_db: Option<f64>,
    pub loc_error_mm: Option<f64>,
    pub converged: bool,
}

impl RunOutcome {
    const FAILED: Self = Self {
        snr_db: None,
        loc_error_mm: None,
        converged: true,
    };
}

/// Mean over the successful runs of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStat {
    /// NaN when every run failed.
    pub mean: f64,
    pub failures: usize,
}

impl CellStat {
    fn reduce(values: impl Iterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut count, mut failures) = (0.0, 0usize, 0usize);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    count += 1;
                }
                None => failures += 1,
            }
        }
        Self {
            mean: if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            },
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub pipeline: Pipeline,
    pub k: Option<usize>,
    pub noise_sigma: f64,
    pub outlier_count: usize,
    pub missing_fraction: f64,
    pub missing_pairs: usize,
    pub runs: usize,
    pub seed: u64,
    pub snr_db: CellStat,
    pub loc_error_mm: CellStat,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(
        &self,
        pipeline: Pipeline,
        k: Option<usize>,
        noise_sigma: f64,
        outlier_count: usize,
        missing_fraction: f64,
    ) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.pipeline == pipeline
                && r.k == k
                && r.noise_sigma == noise_sigma
                && r.outlier_count == outlier_count
                && r.missing_fraction == missing_fraction
        })
    }

    pub fn nonconverged(&self) -> usize {
        self.rows.iter().map(|r| r.nonconverged).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SnrDb,
    LocErrorMm,
}

impl Metric {
    pub fn file_name(self) -> &'static str {
        match self {
            Metric::SnrDb => "snr_db.csv",
            Metric::LocErrorMm => "loc_error_mm.csv",
        }
    }
}

/// How sweep jobs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon with the given thread count (`None` = global pool). Falls back
    /// to sequential execution without the `parallel` feature.
    Parallel(Option<usize>),
}

impl Execution {
    /// `--jobs` semantics: 1 is sequential, 0 lets rayon decide.
    pub fn from_jobs(jobs: usize) -> Self {
        match jobs {
            1 => Execution::Sequential,
            0 => Execution::Parallel(None),
            n => Execution::Parallel(Some(n)),
        }
    }
}

fn map_jobs<T: Send>(
    count: usize,
    exec: Execution,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>> {
    match exec {
        Execution::Sequential => Ok((0..count).map(f).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel(threads) => {
            use rayon::prelude::*;
            let run = || (0..count).into_par_iter().map(&f).collect();
            match threads {
                None => Ok(run()),
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map(|pool| pool.install(run))
                    .map_err(|e| TdoaError::InvalidInput(e.to_string())),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel(_) => Ok((0..count).map(f).collect()),
    }
}

/// Generates the trial of run `run` for one corruption setting.
pub fn sweep_trial(cfg: &SweepConfig, spec: &CorruptionSpec) -> Result<Trial> {
    let mut scene = random_scene(cfg.n, cfg.sensor_side, cfg.source_side, spec.rng_seed)?;
    scene.c = cfg.c;
    Trial::new(scene, spec)
}

fn evaluate_estimate(trial: &Trial, estimate: &TdoaMatrix, converged: bool) -> RunOutcome {
    let snr = snr_db(&trial.ground_truth, estimate).ok();
    let loc = locate(estimate, &trial.scene)
        .ok()
        .map(|p| 1e3 * position_error(&p, &trial.scene.source));
    RunOutcome {
        snr_db: snr,
        loc_error_mm: loc,
        converged,
    }
}

fn locate(estimate: &TdoaMatrix, scene: &Scene) -> Result<[f64; 3]> {
    let column: Vec<f64> = (1..estimate.n()).map(|i| estimate.get(i, 0)).collect();
    localize(&column, &scene.sensors, scene.c)
}

/// Runs every `(pipeline, k)` slot on one trial.
pub fn evaluate_trial(cfg: &SweepConfig, trial: &Trial) -> Vec<RunOutcome> {
    let zero_filled = trial.mask.apply(&trial.corrupted);
    let completer = if cfg.pipelines.iter().any(|p| p.needs_mask()) {
        Completer::new(&trial.mask, SolveMode::Unique).ok()
    } else {
        None
    };
    cfg.slots()
        .into_iter()
        .map(|(pipeline, k)| {
            let k = k.unwrap_or(0);
            match pipeline {
                Pipeline::Raw => evaluate_estimate(trial, &zero_filled, true),
                Pipeline::Denoise => {
                    evaluate_estimate(trial, &denoise_closed_form(&zero_filled), true)
                }
                Pipeline::RobustDenoise => match robust_denoise(&zero_filled, &cfg.params(k)) {
                    Ok(r) => evaluate_estimate(trial, &r.m_star, r.converged),
                    Err(_) => RunOutcome::FAILED,
                },
                Pipeline::Complete => match &completer {
                    Some(c) => evaluate_estimate(trial, &c.complete(&trial.corrupted), true),
                    None => RunOutcome::FAILED,
                },
                Pipeline::RobustComplete => match &completer {
                    Some(c) => {
                        let r = crate::robust::alternate(
                            &zero_filled,
                            &cfg.params(k),
                            Some(&trial.mask),
                            |m| c.complete(m),
                        );
                        evaluate_estimate(trial, &r.m_star, r.converged)
                    }
                    None => RunOutcome::FAILED,
                },
            }
        })
        .collect()
}

pub fn run_sweep(cfg: &SweepConfig, exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    let cells = cfg.cells();
    let slots = cfg.slots();
    let runs = cfg.runs;

    let outcomes: Vec<Result<Vec<RunOutcome>>> = map_jobs(cells.len() * runs, exec, |job| {
        let cell = cells[job / runs];
        let run = job % runs;
        let spec = CorruptionSpec {
            noise_sigma: cell.noise_sigma,
            outlier_count: cell.outlier_count,
            outlier_sigma: cfg.outlier_sigma,
            missing_fraction: cell.missing_fraction,
            rng_seed: derive_seed(cfg.seed, run as u64),
        };
        let trial = sweep_trial(cfg, &spec)?;
        Ok(evaluate_trial(cfg, &trial))
    })?;
    let outcomes: Vec<Vec<RunOutcome>> = outcomes.into_iter().collect::<Result<_>>()?;

    let pairs = cfg.n * (cfg.n - 1) / 2;
    let mut rows = Vec::with_capacity(cells.len() * slots.len());
    for (ci, cell) in cells.iter().enumerate() {
        let block = &outcomes[ci * runs..(ci + 1) * runs];
        for (si, &(pipeline, k)) in slots.iter().enumerate() {
            rows.push(SweepRow {
                pipeline,
                k,
                noise_sigma: cell.noise_sigma,
                outlier_count: cell.outlier_count,
                missing_fraction: cell.missing_fraction,
                missing_pairs: missing_count(cell.missing_fraction, pairs),
                runs,
                seed: cfg.seed,
                snr_db: CellStat::reduce(block.iter().map(|o| o[si].snr_db)),
                loc_error_mm: CellStat::reduce(block.iter().map(|o| o[si].loc_error_mm)),
                nonconverged: block.iter().filter(|o| !o[si].converged).count(),
            });
        }
    }
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
    })
}

const CSV_HEADER: [&str; 11] = [
    "pipeline",
    "k",
    "noise_sigma_s",
    "outlier_count",
    "missing_fraction",
    "missing_pairs",
    "runs",
    "seed",
    "mean",
    "failures",
    "nonconverged",
];

/// One row per `(cell, pipeline, k)`; `k` is empty for pipelines without an
/// outlier budget.
pub fn write_metric_csv<W: Write>(result: &SweepResult, metric: Metric, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| TdoaError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &result.rows {
        let stat = match metric {
            Metric::SnrDb => r.snr_db,
            Metric::LocErrorMm => r.loc_error_mm,
        };
        w.write_record([
            r.pipeline.name().to_string(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            format!("{:e}", r.noise_sigma),
            r.outlier_count.to_string(),
            r.missing_fraction.to_string(),
            r.missing_pairs.to_string(),
            r.runs.to_string(),
            r.seed.to_string(),
            stat.mean.to_string(),
            stat.failures.to_string(),
            r.nonconverged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `snr_db.csv` and `loc_error_mm.csv` (and `sweep.json` when asked)
/// into `dir`.
pub fn write_outputs(result: &SweepResult, dir: &Path, json: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for metric in [Metric::SnrDb, Metric::LocErrorMm] {
        let file = fs::File::create(dir.join(metric.file_name()))?;
        write_metric_csv(result, metric, std::io::BufWriter::new(file))?;
    }
    if json {
        let text =
            serde_json::to_string_pretty(result).map_err(|e| TdoaError::Parse(e.to_string()))?;
        fs::write(dir.join("sweep.json"), text + "\n")?;
    }
    Ok(())
}
