use serde::{Deserialize, Serialize};

use super::{run_trials, ConfusionMatrix, Decider, TruthMix};
use crate::detect::{calibrate, CalibrationReport, CalibrationSettings, ConstraintPair, Scheme};
use crate::error::{Error, Result};
use crate::fusion::{FusionKind, FusionRule, HardFusionDetector};
use crate::signal::{Hypothesis, SensorNetwork, SignalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    AlphaBeta,
    Samples,
    Sensors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Evaluation trials per hypothesis and point.
    pub trials: u64,
    /// Seeds both calibration and evaluation (through different tags); the
    /// same evaluation draws are reused at every point.
    pub seed: u64,
    /// Calibration method, its trial count and the unauthorized power law
    /// (also used as the evaluation truth). Its own seed is ignored.
    pub calibration: CalibrationSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    pub constraints: ConstraintPair,
    pub scheme: Scheme,
    pub fusion: FusionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: Scheme,
    /// Rule label; for k-out-of-M it carries the chosen `k`.
    pub fusion_rule: String,
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
    pub m_sensors: usize,
    /// Out-of-sample rates; NaN when the point failed.
    pub p_h2_given_h2: f64,
    pub half_width: f64,
    pub achieved_fa_h0: f64,
    pub fa_h0_half_width: f64,
    pub achieved_fa_h1: f64,
    pub fa_h1_half_width: f64,
    pub calibration: Option<CalibrationReport>,
    pub confusion: Option<ConfusionMatrix>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    pub points: Vec<SweepPoint>,
    pub seed: u64,
    pub trials: u64,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_some())
    }
}

struct PointSpec<'a> {
    scheme: Scheme,
    rule: String,
    constraints: ConstraintPair,
    model: &'a SignalModel,
    network: &'a SensorNetwork,
}

impl PointSpec<'_> {
    fn failed(&self, err: Error) -> SweepPoint {
        self.point(None, None, Some(err.to_string()))
    }

    fn evaluate(&self, decider: &dyn Decider, report: CalibrationReport, settings: &SweepSettings) -> SweepPoint {
        let law = settings.calibration.unauthorized_law(self.model);
        let mix = TruthMix::balanced(settings.trials, law);
        match run_trials(self.model, self.network, decider, &mix, settings.seed) {
            Ok(c) => self.point(Some(report), Some(c), None),
            Err(e) => self.failed(e),
        }
    }

    fn point(&self, report: Option<CalibrationReport>, c: Option<ConfusionMatrix>, error: Option<String>) -> SweepPoint {
        use Hypothesis::*;
        let get = |f: &dyn Fn(&ConfusionMatrix) -> Option<f64>| c.as_ref().and_then(f).unwrap_or(f64::NAN);
        SweepPoint {
            scheme: self.scheme,
            fusion_rule: self.rule.clone(),
            alpha: self.constraints.alpha(),
            beta: self.constraints.beta(),
            n_samples: self.model.samples_per_block,
            m_sensors: self.network.sensor_count(),
            p_h2_given_h2: get(&|c| c.entry(Unauthorized, Unauthorized)),
            half_width: get(&|c| c.half_width(Unauthorized, Unauthorized)),
            achieved_fa_h0: get(&|c| c.false_alarm(NoDrone)),
            fa_h0_half_width: get(&|c| c.false_alarm_half_width(NoDrone)),
            achieved_fa_h1: get(&|c| c.false_alarm(Authorized)),
            fa_h1_half_width: get(&|c| c.false_alarm_half_width(Authorized)),
            calibration: report,
            confusion: c,
            error,
        }
    }
}

fn strictly_increasing<T: PartialOrd + Copy>(name: &'static str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(name, "grid must be strictly increasing"));
    }
    Ok(())
}

fn calibration_for(settings: &SweepSettings) -> CalibrationSettings {
    CalibrationSettings { seed: settings.seed, ..settings.calibration }
}

/// `Pr(H2|H2)` against `alpha = beta` for each scheme and sample count.
/// Rows are ordered by scheme, then `N`, then `alpha`. A point whose
/// calibration fails is kept with its error and NaN rates.
pub fn sweep_tradeoff(
    model: &SignalModel,
    network: &SensorNetwork,
    schemes: &[Scheme],
    alpha_beta: &[f64],
    samples: &[usize],
    settings: &SweepSettings,
) -> Result<SweepResult> {
    model.validate()?;
    if schemes.is_empty() {
        return Err(Error::invalid("schemes", "need at least one scheme"));
    }
    strictly_increasing("alpha_beta", alpha_beta)?;
    strictly_increasing("samples", samples)?;
    if let Some(&a) = alpha_beta.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::invalid("alpha_beta", format!("values must lie in (0, 1], got {a}")));
    }
    if samples[0] == 0 {
        return Err(Error::invalid("samples", "values must be >= 1"));
    }
    let cal = calibration_for(settings);
    let mut points = Vec::new();
    for &scheme in schemes {
        for &n in samples {
            let m = model.with_samples(n);
            for &ab in alpha_beta {
                let constraints = ConstraintPair::symmetric(ab)?;
                let spec = PointSpec {
                    scheme,
                    rule: FusionRule::SOFT.label(),
                    constraints,
                    model: &m,
                    network,
                };
                points.push(match calibrate(&m, network, scheme, constraints, &cal) {
                    Ok(d) => {
                        let report = *d.report().expect("calibrated");
                        spec.evaluate(&d, report, settings)
                    }
                    Err(e) => spec.failed(e),
                });
            }
        }
    }
    Ok(SweepResult { axes: vec![SweepAxis::AlphaBeta, SweepAxis::Samples], points, seed: settings.seed, trials: settings.trials })
}

/// Global `Pr(H2|H2)` over the `M x N` lattice, recalibrating at every
/// point. Rows are ordered by `M`, then `N`. Networks are built from
/// `template` with [`SensorNetwork::resized`]. For k-out-of-M the best `k`
/// is chosen at each point.
pub fn sweep_sensors_samples(
    model: &SignalModel,
    template: &SensorNetwork,
    sensors: &[usize],
    samples: &[usize],
    grid: &GridSettings,
    settings: &SweepSettings,
) -> Result<SweepResult> {
    model.validate()?;
    strictly_increasing("sensors", sensors)?;
    strictly_increasing("samples", samples)?;
    if sensors[0] == 0 || samples[0] == 0 {
        return Err(Error::invalid("grid", "sensor and sample counts must be >= 1"));
    }
    let cal = calibration_for(settings);
    let mut points = Vec::new();
    for &mm in sensors {
        let network = template.resized(mm)?;
        for &n in samples {
            let m = model.with_samples(n);
            let mut spec = PointSpec {
                scheme: grid.scheme,
                rule: FusionRule { kind: grid.fusion, k: None }.label(),
                constraints: grid.constraints,
                model: &m,
                network: &network,
            };
            let point = if grid.fusion.is_hard() {
                match HardFusionDetector::calibrate_best_k(&m, &network, grid.scheme, grid.fusion, grid.constraints, &cal) {
                    Ok(d) => {
                        spec.rule = d.rule().label();
                        spec.evaluate(&d, *d.report(), settings)
                    }
                    Err(e) => spec.failed(e),
                }
            } else {
                match calibrate(&m, &network, grid.scheme, grid.constraints, &cal) {
                    Ok(d) => {
                        let report = *d.report().expect("calibrated");
                        spec.evaluate(&d, report, settings)
                    }
                    Err(e) => spec.failed(e),
                }
            };
            points.push(point);
        }
    }
    Ok(SweepResult { axes: vec![SweepAxis::Sensors, SweepAxis::Samples], points, seed: settings.seed, trials: settings.trials })
}
