//! Monte Carlo evaluation: confusion matrices, sweeps and their CSV files.
//!
//! Every trial draws its samples from a stream keyed by `(seed, hypothesis,
//! trial, sensor)`, and results are reduced as integer counts, so output
//! does not depend on how many threads run the trials.

pub mod check;
pub mod csv;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::surrogate::SurrogateDetector;
use crate::detect::CalibratedDetector;
use crate::error::{Error, Result};
use crate::fusion::HardFusionDetector;
use crate::rng;
use crate::signal::{fill_trial_energies, Hypothesis, SensorNetwork, SignalModel, UnauthorizedPower};
use crate::stats::binomial_half_width;

pub use sweep::{
    sweep_sensors_samples, sweep_tradeoff, GridSettings, SweepAxis, SweepPoint, SweepResult, SweepSettings,
};

/// Seed tag of evaluation trials; calibration uses a different one.
pub const EVALUATION_TAG: &str = "evaluation";

/// Anything that maps one trial's per-sensor energies to a decision.
pub trait Decider: Sync {
    fn sensor_count(&self) -> usize;
    /// `energies` has `sensor_count()` finite, non-negative entries.
    fn decide_trial(&self, energies: &[f64]) -> Hypothesis;
}

impl Decider for CalibratedDetector {
    fn sensor_count(&self) -> usize {
        self.network().sensor_count()
    }

    fn decide_trial(&self, energies: &[f64]) -> Hypothesis {
        self.decide_unchecked(energies)
    }
}

impl Decider for HardFusionDetector {
    fn sensor_count(&self) -> usize {
        self.network().sensor_count()
    }

    fn decide_trial(&self, energies: &[f64]) -> Hypothesis {
        self.decide_unchecked(energies)
    }
}

impl Decider for SurrogateDetector {
    fn sensor_count(&self) -> usize {
        1
    }

    fn decide_trial(&self, energies: &[f64]) -> Hypothesis {
        self.decide(energies[0])
    }
}

/// Returns the same hypothesis for every trial.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDecider {
    pub hypothesis: Hypothesis,
    pub sensors: usize,
}

impl Decider for ConstantDecider {
    fn sensor_count(&self) -> usize {
        self.sensors
    }

    fn decide_trial(&self, _: &[f64]) -> Hypothesis {
        self.hypothesis
    }
}

/// Trials per true hypothesis, and the unauthorized power law under H2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthMix {
    pub trials: [u64; 3],
    pub unauthorized: UnauthorizedPower,
}

impl TruthMix {
    pub fn balanced(trials: u64, unauthorized: UnauthorizedPower) -> Self {
        Self { trials: [trials; 3], unauthorized }
    }
}

/// `entry[i][j] = Pr(decide Hj | true Hi)` estimated from counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
    trial_counts: [u64; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts, trial_counts: counts.map(|r| r.iter().sum()) }
    }

    pub fn counts(&self) -> [[u64; 3]; 3] {
        self.counts
    }

    pub fn trial_counts(&self) -> [u64; 3] {
        self.trial_counts
    }

    /// `None` for rows that were not simulated.
    pub fn row(&self, truth: Hypothesis) -> Option<[f64; 3]> {
        let i = truth.index();
        let n = self.trial_counts[i];
        (n > 0).then(|| self.counts[i].map(|c| c as f64 / n as f64))
    }

    pub fn entries(&self) -> [Option<[f64; 3]>; 3] {
        Hypothesis::ALL.map(|h| self.row(h))
    }

    pub fn entry(&self, truth: Hypothesis, decided: Hypothesis) -> Option<f64> {
        self.row(truth).map(|r| r[decided.index()])
    }

    pub fn half_width(&self, truth: Hypothesis, decided: Hypothesis) -> Option<f64> {
        let i = truth.index();
        let n = self.trial_counts[i];
        (n > 0).then(|| binomial_half_width(self.counts[i][decided.index()], n))
    }

    pub fn half_widths(&self) -> [Option<[f64; 3]>; 3] {
        Hypothesis::ALL.map(|t| {
            let n = self.trial_counts[t.index()];
            (n > 0).then(|| Hypothesis::ALL.map(|d| binomial_half_width(self.counts[t.index()][d.index()], n)))
        })
    }

    /// `1 - Pr(Hi|Hi)`, computed from the off-diagonal counts.
    pub fn false_alarm(&self, truth: Hypothesis) -> Option<f64> {
        let i = truth.index();
        let n = self.trial_counts[i];
        (n > 0).then(|| (n - self.counts[i][i]) as f64 / n as f64)
    }

    pub fn false_alarm_half_width(&self, truth: Hypothesis) -> Option<f64> {
        let i = truth.index();
        let n = self.trial_counts[i];
        (n > 0).then(|| binomial_half_width(n - self.counts[i][i], n))
    }
}

/// Simulates `mix.trials[i]` trials under each hypothesis `i`.
pub fn run_trials(
    model: &SignalModel,
    network: &SensorNetwork,
    decider: &(impl Decider + ?Sized),
    mix: &TruthMix,
    seed: u64,
) -> Result<ConfusionMatrix> {
    model.validate()?;
    mix.unauthorized.validate(model)?;
    let m = network.sensor_count();
    if decider.sensor_count() != m {
        return Err(Error::LengthMismatch { expected: m, got: decider.sensor_count() });
    }
    if mix.trials.iter().all(|&n| n == 0) {
        return Err(Error::invalid("trials", "at least one hypothesis needs a trial"));
    }
    let base = rng::derive_tag(seed, EVALUATION_TAG);
    let counts = Hypothesis::ALL.map(|h| {
        let row_seed = rng::derive(base, h.index() as u64);
        (0..mix.trials[h.index()])
            .into_par_iter()
            .map_init(
                || vec![0.0; m],
                |buf, t| {
                    fill_trial_energies(model, network, h, mix.unauthorized, row_seed, t, buf);
                    decider.decide_trial(buf).index()
                },
            )
            .fold(
                || [0u64; 3],
                |mut acc, j| {
                    acc[j] += 1;
                    acc
                },
            )
            .reduce(|| [0u64; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    });
    Ok(ConfusionMatrix { counts, trial_counts: mix.trials })
}

/// Run description written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub trials: u64,
    pub calibration_method: String,
    pub calibration_trials: u64,
    #[serde(default)]
    pub schemes: Vec<String>,
    #[serde(default)]
    pub fusion_rule: Option<String>,
    #[serde(default)]
    pub alpha_beta_grid: Vec<f64>,
    #[serde(default)]
    pub samples_grid: Vec<usize>,
    #[serde(default)]
    pub sensors_grid: Vec<usize>,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub constraints: Option<(f64, f64)>,
    pub files: Vec<String>,
    /// Scenario file contents, verbatim.
    pub config: String,
}
