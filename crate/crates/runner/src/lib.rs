//! Command-line front end for `tdoa-core`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tdoa_core::io::{self, Format, ParseOptions};
use tdoa_core::sim::{self, CorruptionSpec};
use tdoa_core::sweep::{self, Execution, SweepConfig};
use tdoa_core::{
    complete_with, is_consistent, robust::DEFAULT_EPS, robust::DEFAULT_MAX_ITER,
    robust_complete_with, robust_denoise, DenoiseMethod, Mask, RobustParams, RobustResult,
    SolveMode, StopRule, TdoaError, TdoaMatrix,
};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NOT_RECOVERABLE: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tdoa",
    version,
    about = "Denoising, completion and simulation of TDOA matrices"
)]
struct Cli {
    /// Base seed for simulation and sweeps (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps; 1 runs sequentially and is bit-reproducible, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output matrix format; defaults to the extension of the output path.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Accept asymmetric input by keeping its skew-symmetric part.
    #[arg(long, global = true)]
    symmetrize: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Least-squares projection onto consistent TDOA matrices.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "closed")]
        method: DenoiseMethod,
    },
    /// Denoising with a sparse outlier matrix of at most k pairs.
    RobustDenoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        robust: RobustArgs,
    },
    /// Least-squares completion under a mask of missing pairs.
    Complete {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the pseudo-inverse when the mask does not determine a unique solution.
        #[arg(long)]
        pseudo: bool,
    },
    /// Completion combined with outlier rejection.
    RobustComplete {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        pseudo: bool,
        #[command(flatten)]
        robust: RobustArgs,
    },
    /// Generate a random scene and a corrupted measurement of it.
    Simulate(SimulateArgs),
    /// Monte-Carlo sweep over noise, outliers and missing data.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the full result as sweep.json.
        #[arg(long)]
        json: bool,
        /// Exit with status 4 if any robust run hit the iteration cap.
        #[arg(long)]
        strict: bool,
    },
    /// Parse a matrix, report its consistency and optionally rewrite it.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RobustArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Stopping rule: `change` (relative objective change) or `level` (relative objective).
    #[arg(long, default_value = "change")]
    stop: StopRule,
    #[arg(long)]
    out: PathBuf,
    /// Sparse outlier estimate as `{"n", "triplets"}`.
    #[arg(long)]
    outliers_out: Option<PathBuf>,
    /// Exit with status 4 if the iteration cap is reached.
    #[arg(long)]
    strict: bool,
}

impl RobustArgs {
    fn params(&self) -> RobustParams {
        RobustParams {
            k: self.k,
            eps: self.eps,
            max_iter: self.max_iter,
            stop: self.stop,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Noise standard deviation in seconds.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    /// Standard deviation of outlier replacements in seconds.
    #[arg(long, default_value_t = sim::DEFAULT_OUTLIER_SIGMA)]
    outlier_sigma: f64,
    /// Fraction of pairs to mark missing.
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long, default_value_t = sim::DEFAULT_SENSOR_SIDE)]
    sensor_side: f64,
    #[arg(long, default_value_t = sim::DEFAULT_SOURCE_SIDE)]
    source_side: f64,
    /// Trial dump (scene, truth, corrupted matrix, mask, outliers, seed).
    #[arg(long)]
    out: PathBuf,
    /// Also write the corrupted matrix on its own.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    /// Also write the mask on its own.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

enum Failure {
    Core(TdoaError),
    NotConverged(String),
}

impl From<TdoaError> for Failure {
    fn from(e: TdoaError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                TdoaError::NotRecoverable { .. } => EXIT_NOT_RECOVERABLE,
                _ => EXIT_INVALID,
            }
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            EXIT_NOT_CONVERGED
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let opts = ParseOptions {
        symmetrize: cli.symmetrize,
        ..ParseOptions::default()
    };
    let out_format = |path: &Path| cli.format.unwrap_or_else(|| Format::from_path(path));
    let write = |path: &Path, m: &TdoaMatrix| io::write_matrix(path, m, out_format(path));

    match &cli.command {
        Command::Denoise { input, out, method } => {
            let m = io::read_matrix(input, &opts)?;
            write(out, &method.apply(&m))?;
        }
        Command::RobustDenoise { input, robust } => {
            let m = io::read_matrix(input, &opts)?;
            let result = robust_denoise(&m, &robust.params())?;
            finish_robust(&result, robust, &write)?;
        }
        Command::Complete {
            input,
            mask,
            out,
            pseudo,
        } => {
            let m = io::read_matrix(input, &opts)?;
            let mask = read_mask_for(mask, &m)?;
            write(out, &complete_with(&m, &mask, solve_mode(*pseudo))?)?;
        }
        Command::RobustComplete {
            input,
            mask,
            pseudo,
            robust,
        } => {
            let m = io::read_matrix(input, &opts)?;
            let mask = read_mask_for(mask, &m)?;
            let result = robust_complete_with(&m, &mask, &robust.params(), solve_mode(*pseudo))?;
            finish_robust(&result, robust, &write)?;
        }
        Command::Simulate(args) => simulate(args, cli.seed.unwrap_or(0), &write)?,
        Command::Sweep {
            config,
            out_dir,
            json,
            strict,
        } => {
            let mut cfg = SweepConfig::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let result = sweep::run_sweep(&cfg, Execution::from_jobs(cli.jobs))?;
            sweep::write_outputs(&result, out_dir, *json)?;
            let stalled = result.nonconverged();
            eprintln!("wrote {} rows to {}", result.rows.len(), out_dir.display());
            if *strict && stalled > 0 {
                return Err(Failure::NotConverged(format!(
                    "{stalled} robust runs reached the iteration cap"
                )));
            }
        }
        Command::Validate { input, out } => {
            let m = io::read_matrix(input, &opts)?;
            let c = is_consistent(&m, tdoa_core::matrix::CONSISTENCY_TOLERANCE);
            println!(
                "n={} consistent={} relative_residual={:e}",
                m.n(),
                c.consistent,
                c.relative_residual
            );
            if let Some(out) = out {
                write(out, &m)?;
            }
        }
    }
    Ok(())
}

fn solve_mode(pseudo: bool) -> SolveMode {
    if pseudo {
        SolveMode::Pseudo
    } else {
        SolveMode::Unique
    }
}

fn read_mask_for(path: &Path, m: &TdoaMatrix) -> Result<Mask, TdoaError> {
    let mask = io::read_mask(path)?;
    if mask.n() != m.n() {
        return Err(TdoaError::DimensionMismatch {
            expected: m.n(),
            actual: mask.n(),
        });
    }
    Ok(mask)
}

fn finish_robust(
    result: &RobustResult,
    args: &RobustArgs,
    write: &impl Fn(&Path, &TdoaMatrix) -> tdoa_core::Result<()>,
) -> Result<(), Failure> {
    write(&args.out, &result.m_star)?;
    if let Some(path) = &args.outliers_out {
        fs::write(path, io::outliers_to_json(&result.s_star))?;
    }
    eprintln!(
        "iterations={} converged={} outlier_pairs={}",
        result.iterations,
        result.converged,
        result.s_star.support().len()
    );
    if args.strict && !result.converged {
        return Err(Failure::NotConverged(format!(
            "no convergence within {} iterations",
            args.max_iter
        )));
    }
    Ok(())
}

fn simulate(
    args: &SimulateArgs,
    seed: u64,
    write: &impl Fn(&Path, &TdoaMatrix) -> tdoa_core::Result<()>,
) -> Result<(), Failure> {
    let scene = sim::random_scene(args.n, args.sensor_side, args.source_side, seed)?;
    let spec = CorruptionSpec {
        noise_sigma: args.noise_sigma,
        outlier_count: args.outliers,
        outlier_sigma: args.outlier_sigma,
        missing_fraction: args.missing,
        rng_seed: seed,
    };
    let trial = sim::Trial::new(scene, &spec)?;
    fs::write(&args.out, io::trial_to_json(&trial))?;
    if let Some(path) = &args.matrix_out {
        write(path, &trial.corrupted)?;
    }
    if let Some(path) = &args.mask_out {
        fs::write(path, io::mask_to_json(&trial.mask))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
