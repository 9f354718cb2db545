//! Hypotheses, power model, sensors and sample generation.
//!
//! Received samples at sensor `k` are i.i.d. circularly-symmetric complex
//! Gaussian with per-sample power `noise_power + gain_k * P`, where `P` is 0
//! with no drone, the authorized drone's power, or the unauthorized drone's
//! (unknown) power. The per-block energy `T = (1/N) * sum |y_n|^2` is then a
//! sufficient statistic with law `Gamma(shape N, scale mu/N)`.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ground truth or decision. Ordered `NoDrone < Authorized < Unauthorized`;
/// the order is used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    NoDrone,
    Authorized,
    Unauthorized,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 3] =
        [Hypothesis::NoDrone, Hypothesis::Authorized, Hypothesis::Unauthorized];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Hypothesis::NoDrone => "H0",
            Hypothesis::Authorized => "H1",
            Hypothesis::Unauthorized => "H2",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::NoDrone => "no_drone",
            Hypothesis::Authorized => "authorized",
            Hypothesis::Unauthorized => "unauthorized",
        };
        f.write_str(s)
    }
}

/// Closed interval of linear powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRange {
    pub min: f64,
    pub max: f64,
}

impl PowerRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min < 0.0 || min > max {
            return Err(Error::invalid(
                "unauthorized_power_range",
                format!("need 0 <= min <= max, got [{min}, {max}]"),
            ));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.min && p <= self.max
    }

    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub noise_power: f64,
    pub authorized_power: f64,
    pub unauthorized_power: PowerRange,
    pub samples_per_block: usize,
}

impl SignalModel {
    pub fn new(
        noise_power: f64,
        authorized_power: f64,
        unauthorized_power: PowerRange,
        samples_per_block: usize,
    ) -> Result<Self> {
        let model = Self { noise_power, authorized_power, unauthorized_power, samples_per_block };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::invalid("noise_power", format!("must be > 0, got {}", self.noise_power)));
        }
        if !(self.authorized_power.is_finite() && self.authorized_power >= 0.0) {
            return Err(Error::invalid(
                "authorized_power",
                format!("must be >= 0, got {}", self.authorized_power),
            ));
        }
        PowerRange::new(self.unauthorized_power.min, self.unauthorized_power.max)?;
        if self.samples_per_block == 0 {
            return Err(Error::invalid("samples_per_block", "must be >= 1"));
        }
        Ok(())
    }

    pub fn with_samples(mut self, samples_per_block: usize) -> Self {
        self.samples_per_block = samples_per_block;
        self
    }

    /// Multiplies every power by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            noise_power: self.noise_power * c,
            authorized_power: self.authorized_power * c,
            unauthorized_power: PowerRange {
                min: self.unauthorized_power.min * c,
                max: self.unauthorized_power.max * c,
            },
            samples_per_block: self.samples_per_block,
        }
    }

    /// Per-sample received power at a sensor with `gain` when the drone
    /// transmits `drone_power`.
    #[inline]
    pub fn received_power(&self, gain: f64, drone_power: f64) -> f64 {
        self.noise_power + gain * drone_power
    }
}

/// Sensors and their channel gains toward the monitored airspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNetwork {
    gains: Vec<f64>,
    /// Informational only; propagation is folded into `gains`.
    pub coverage_radius_m: f64,
}

pub const DEFAULT_COVERAGE_RADIUS_M: f64 = 10_000.0;

impl SensorNetwork {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::invalid("gains", "need at least one sensor"));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid("gains", "every gain must be finite and >= 0"));
        }
        if gains.iter().all(|g| *g == 0.0) {
            return Err(Error::invalid("gains", "at least one gain must be > 0"));
        }
        Ok(Self { gains, coverage_radius_m: DEFAULT_COVERAGE_RADIUS_M })
    }

    pub fn homogeneous(sensor_count: usize, gain: f64) -> Result<Self> {
        if sensor_count == 0 {
            return Err(Error::invalid("sensor_count", "must be >= 1"));
        }
        Self::new(vec![gain; sensor_count])
    }

    pub fn single(gain: f64) -> Result<Self> {
        Self::new(vec![gain])
    }

    pub fn with_radius(mut self, coverage_radius_m: f64) -> Self {
        self.coverage_radius_m = coverage_radius_m;
        self
    }

    pub fn sensor_count(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn gain(&self, sensor: usize) -> Result<f64> {
        self.gains
            .get(sensor)
            .copied()
            .ok_or(Error::SensorIndex { index: sensor, count: self.gains.len() })
    }

    /// `Some(g)` when every sensor has gain `g`.
    pub fn common_gain(&self) -> Option<f64> {
        let g = self.gains[0];
        self.gains.iter().all(|x| *x == g).then_some(g)
    }

    /// One-sensor network for sensor `k`.
    pub fn sensor(&self, k: usize) -> Result<Self> {
        Ok(Self { gains: vec![self.gain(k)?], coverage_radius_m: self.coverage_radius_m })
    }

    /// The first `m` sensors, cycling through the gain pattern when `m`
    /// exceeds the template's size.
    pub fn resized(&self, m: usize) -> Result<Self> {
        let gains: Vec<f64> = self.gains.iter().copied().cycle().take(m).collect();
        Ok(Self::new(gains)?.with_radius(self.coverage_radius_m))
    }
}

/// How the unauthorized drone's power is set across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawRule {
    Fixed,
    UniformOverRange,
}

/// Law of the unauthorized drone's power: a known value, or uniform over
/// the model's range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnauthorizedPower {
    Fixed(f64),
    Uniform,
}

impl UnauthorizedPower {
    pub fn draw_rule(&self) -> DrawRule {
        match self {
            UnauthorizedPower::Fixed(_) => DrawRule::Fixed,
            UnauthorizedPower::Uniform => DrawRule::UniformOverRange,
        }
    }

    /// Default: fixed at the midpoint of the range.
    pub fn midpoint(model: &SignalModel) -> Self {
        UnauthorizedPower::Fixed(model.unauthorized_power.midpoint())
    }

    pub fn validate(&self, model: &SignalModel) -> Result<()> {
        match *self {
            UnauthorizedPower::Fixed(p) if !model.unauthorized_power.contains(p) => Err(Error::invalid(
                "unauthorized_power",
                format!(
                    "{p} outside range [{}, {}]",
                    model.unauthorized_power.min, model.unauthorized_power.max
                ),
            )),
            _ => Ok(()),
        }
    }

    /// The drone power for one trial. Uniform draws come from a trial-level
    /// stream so every sensor in the trial sees the same drone.
    pub fn power_for_trial(&self, model: &SignalModel, seed: u64, trial: u64) -> f64 {
        match *self {
            UnauthorizedPower::Fixed(p) => p,
            UnauthorizedPower::Uniform => {
                let range = model.unauthorized_power;
                let mut r = rng::block_stream(seed, trial, rng::TRIAL_LEVEL);
                let u: f64 = r.random();
                range.min + u * range.width()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub hypothesis: Hypothesis,
    /// Meaningful only under `Unauthorized` with a fixed draw rule.
    pub true_unauthorized_power: Option<f64>,
    pub draw_rule: DrawRule,
}

impl ScenarioTruth {
    pub fn no_drone() -> Self {
        Self { hypothesis: Hypothesis::NoDrone, true_unauthorized_power: None, draw_rule: DrawRule::Fixed }
    }

    pub fn authorized() -> Self {
        Self { hypothesis: Hypothesis::Authorized, true_unauthorized_power: None, draw_rule: DrawRule::Fixed }
    }

    pub fn unauthorized(power: UnauthorizedPower) -> Self {
        match power {
            UnauthorizedPower::Fixed(p) => Self {
                hypothesis: Hypothesis::Unauthorized,
                true_unauthorized_power: Some(p),
                draw_rule: DrawRule::Fixed,
            },
            UnauthorizedPower::Uniform => Self {
                hypothesis: Hypothesis::Unauthorized,
                true_unauthorized_power: None,
                draw_rule: DrawRule::UniformOverRange,
            },
        }
    }

    /// Truth for `hypothesis`, drawing any unauthorized power from `power`.
    pub fn for_hypothesis(hypothesis: Hypothesis, power: UnauthorizedPower) -> Self {
        match hypothesis {
            Hypothesis::NoDrone => Self::no_drone(),
            Hypothesis::Authorized => Self::authorized(),
            Hypothesis::Unauthorized => Self::unauthorized(power),
        }
    }

    fn unauthorized_law(&self, model: &SignalModel) -> Result<UnauthorizedPower> {
        match self.draw_rule {
            DrawRule::Fixed => {
                let p = self.true_unauthorized_power.ok_or(Error::MissingUnauthorizedPower)?;
                let law = UnauthorizedPower::Fixed(p);
                law.validate(model)?;
                Ok(law)
            }
            DrawRule::UniformOverRange => Ok(UnauthorizedPower::Uniform),
        }
    }

    /// Drone power present in `trial` (0 without a drone).
    pub fn drone_power(&self, model: &SignalModel, seed: u64, trial: u64) -> Result<f64> {
        Ok(match self.hypothesis {
            Hypothesis::NoDrone => 0.0,
            Hypothesis::Authorized => model.authorized_power,
            Hypothesis::Unauthorized => self.unauthorized_law(model)?.power_for_trial(model, seed, trial),
        })
    }
}

/// One sensor's block of baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub sensor_index: usize,
    pub samples: Vec<Complex64>,
    /// Cached `(1/N) * sum |y_n|^2`.
    pub energy: f64,
}

/// Draws the block for `(seed, trial_index, sensor_index)`.
pub fn generate_block(
    model: &SignalModel,
    network: &SensorNetwork,
    truth: &ScenarioTruth,
    sensor_index: usize,
    seed: u64,
    trial_index: u64,
) -> Result<SampleBlock> {
    let gain = network.gain(sensor_index)?;
    let power = model.received_power(gain, truth.drone_power(model, seed, trial_index)?);
    let mut r = rng::block_stream(seed, trial_index, sensor_index as u64);
    let amp = rng::amplitude(power);
    let samples: Vec<Complex64> =
        (0..model.samples_per_block).map(|_| rng::complex_gaussian(&mut r, amp)).collect();
    let energy = mean_energy(&samples);
    Ok(SampleBlock { sensor_index, samples, energy })
}

/// Energy of the block `generate_block` would produce, without keeping the
/// samples. Bit-identical to `generate_block(..).energy`.
pub(crate) fn block_energy(model: &SignalModel, received_power: f64, seed: u64, trial: u64, sensor: usize) -> f64 {
    let mut r = rng::block_stream(seed, trial, sensor as u64);
    let amp = rng::amplitude(received_power);
    let n = model.samples_per_block;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += rng::complex_gaussian(&mut r, amp).norm_sqr();
    }
    acc / n as f64
}

/// Per-sensor energies of one trial, as `generate_block` would produce them.
/// `law` must already be validated against `model`.
pub(crate) fn fill_trial_energies(
    model: &SignalModel,
    network: &SensorNetwork,
    hypothesis: Hypothesis,
    law: UnauthorizedPower,
    seed: u64,
    trial: u64,
    out: &mut [f64],
) {
    let drone = match hypothesis {
        Hypothesis::NoDrone => 0.0,
        Hypothesis::Authorized => model.authorized_power,
        Hypothesis::Unauthorized => law.power_for_trial(model, seed, trial),
    };
    for (k, (slot, &g)) in out.iter_mut().zip(network.gains()).enumerate() {
        *slot = block_energy(model, model.received_power(g, drone), seed, trial, k);
    }
}

fn mean_energy(samples: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for s in samples {
        acc += s.norm_sqr();
    }
    acc / samples.len() as f64
}

/// Average squared magnitude of the block's samples.
pub fn energy_statistic(block: &SampleBlock) -> f64 {
    mean_energy(&block.samples)
}
