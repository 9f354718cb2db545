//! Ternary drone detection and classification.
//!
//! The crate decides between three hypotheses about a monitored region
//! (no drone, an authorized drone, an unauthorized drone) from the energy
//! of complex baseband samples collected by one or more sensors. Decision
//! thresholds are calibrated to maximize the probability of catching an
//! unauthorized drone while holding two false-alarm rates under
//! user-supplied bounds.
//!
//! Modules:
//!
//! - [`signal`]: hypotheses, power model, sensor network and reproducible
//!   sample generation.
//! - [`detect`]: genie-aided and GLRT likelihood tests, decision regions and
//!   threshold calibration.
//! - [`fusion`]: soft (likelihood-sum) and hard (vote) fusion of several
//!   sensors.
//! - [`quickest`]: CUSUM change detection on a per-sample energy stream.
//! - [`eval`]: Monte Carlo confusion matrices, parameter sweeps and CSV
//!   emission.

pub mod detect;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod quickest;
pub mod rng;
pub mod signal;
pub mod stats;

pub use detect::{
    calibrate, decide, genie_log_likelihoods, glrt_profile, CalibratedDetector, CalibrationMethod,
    CalibrationReport, CalibrationSettings, ConstraintPair, Offsets, Region, Scheme,
};
pub use error::{Error, Result};
pub use fusion::{fuse_hard, fuse_soft, FusionRule, GlobalDecision, HardFusionDetector};
pub use signal::{
    energy_statistic, generate_block, DrawRule, Hypothesis, PowerRange, SampleBlock,
    ScenarioTruth, SensorNetwork, SignalModel, UnauthorizedPower,
};
