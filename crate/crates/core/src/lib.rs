//! TDOA matrix algebra and denoising.
//!
//! A full set of pairwise time differences of arrival between `n` sensors
//! forms a skew-symmetric rank-2 matrix. This crate exploits that structure:
//!
//! * [`matrix`]: the matrix type, its gauge parameterization and consistency check.
//! * [`denoise`]: least-squares projection onto consistent matrices.
//! * [`robust`]: alternating projection with a sparse outlier matrix.
//! * [`completion`]: completion under a known availability mask, optionally
//!   combined with outlier rejection.
//! * [`sim`], [`metrics`], [`localize`], [`sweep`]: synthetic scenes,
//!   evaluation and Monte-Carlo sweeps.
//! * [`io`]: JSON/CSV interchange.

pub mod completion;
pub mod denoise;
pub mod error;
pub mod io;
pub mod localize;
pub mod matrix;
pub mod metrics;
pub mod robust;
pub mod sim;
pub mod sweep;

pub use completion::{
    complete, complete_with, recoverability, robust_complete, robust_complete_with, Completer,
    Mask, Recoverability, SolveMode,
};
pub use denoise::{denoise_closed_form, denoise_element_form, DenoiseMethod};
pub use error::{Result, TdoaError};
pub use localize::localize;
pub use matrix::{
    compose, decompose, from_toas, is_consistent, svd_params, GaugeVector, SvdPair, TdoaMatrix,
    ToaVector,
};
pub use metrics::snr_db;
pub use robust::{
    hard_threshold_2k, robust_denoise, OutlierMatrix, RobustParams, RobustResult, StopRule,
};
pub use sim::{corrupt, ground_truth_tdoa, random_scene, CorruptionSpec, Scene, Trial};
pub use sweep::{run_sweep, Execution, Pipeline, SweepConfig, SweepResult};
