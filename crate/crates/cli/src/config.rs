//! Scenario files.
//!
//! Every value keeps its source span so validation failures can point at
//! the offending line. Unknown keys are rejected by the parser.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use dronewatch_core::detect::{CalibrationMethod, CalibrationSettings, ConstraintPair, Scheme};
use dronewatch_core::fusion::{FusionKind, FusionRule};
use dronewatch_core::quickest::ChangeTime;
use dronewatch_core::signal::{
    PowerRange, SensorNetwork, SignalModel, UnauthorizedPower, DEFAULT_COVERAGE_RADIUS_M,
};
use dronewatch_core::Error as CoreError;
use serde::Deserialize;
use toml::Spanned;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_CALIBRATION_TRIALS: u64 = 100_000;
pub const DEFAULT_STREAMS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    /// Dotted key, empty for syntax errors.
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: ", self.path, self.line, self.column)?;
        if !self.key.is_empty() {
            write!(f, "`{}`: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<Spanned<u64>>,
    trials: Option<Spanned<u64>>,
    model: Spanned<RawModel>,
    network: Option<Spanned<RawNetwork>>,
    constraints: Option<Spanned<RawConstraints>>,
    #[serde(default)]
    detector: RawDetector,
    #[serde(default)]
    fusion: RawFusion,
    #[serde(default)]
    truth: RawTruth,
    #[serde(default)]
    sweep: RawSweep,
    quickest: Option<RawQuickest>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    noise_power: Spanned<f64>,
    authorized_power: Spanned<f64>,
    unauthorized_power_min: Spanned<f64>,
    unauthorized_power_max: Spanned<f64>,
    samples_per_block: Spanned<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    sensor_count: Option<Spanned<i64>>,
    gains: Option<Spanned<Vec<f64>>>,
    coverage_radius_m: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    alpha: Spanned<f64>,
    beta: Spanned<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    scheme: Option<Spanned<String>>,
    calibration: Option<Spanned<String>>,
    calibration_trials: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFusion {
    rule: Option<Spanned<String>>,
    k: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    draw_rule: Option<Spanned<String>>,
    unauthorized_power: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    tradeoff: Option<RawTradeoff>,
    grid: Option<RawGrid>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTradeoff {
    schemes: Option<Spanned<Vec<String>>>,
    alpha_beta: Spanned<Vec<f64>>,
    samples: Spanned<Vec<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    sensors: Spanned<Vec<i64>>,
    samples: Spanned<Vec<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuickest {
    thresholds: Spanned<Vec<f64>>,
    change_time: Option<Spanned<i64>>,
    streams: Option<Spanned<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffGrid {
    pub schemes: Vec<Scheme>,
    pub alpha_beta: Vec<f64>,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    pub sensors: Vec<usize>,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuickestPlan {
    pub thresholds: Vec<f64>,
    pub change_time: ChangeTime,
    pub streams: u64,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub text: String,
    pub seed: u64,
    pub trials: u64,
    pub model: SignalModel,
    pub network: SensorNetwork,
    pub constraints: Option<ConstraintPair>,
    pub scheme: Scheme,
    pub calibration_method: CalibrationMethod,
    pub calibration_trials: u64,
    pub fusion: FusionKind,
    /// `None` with k-out-of-M means "pick the best k".
    pub k: Option<usize>,
    pub unauthorized: UnauthorizedPower,
    pub tradeoff: Option<TradeoffGrid>,
    pub grid: Option<SensorGrid>,
    pub quickest: Option<QuickestPlan>,
}

impl ScenarioConfig {
    pub fn calibration(&self, seed: u64) -> CalibrationSettings {
        let base = match self.calibration_method {
            CalibrationMethod::AnalyticGamma => CalibrationSettings::analytic(),
            CalibrationMethod::MonteCarlo => CalibrationSettings::monte_carlo(seed, self.calibration_trials as usize),
        };
        CalibrationSettings { seed, ..base }.with_unauthorized(self.unauthorized)
    }

    pub fn fusion_rule(&self) -> Option<FusionRule> {
        match (self.fusion, self.k) {
            (FusionKind::HardKOutOfM, None) => None,
            (kind, k) => Some(FusionRule { kind, k }),
        }
    }
}

struct Ctx<'a> {
    path: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    fn at(&self, span: Range<usize>, key: &str, message: impl Into<String>) -> ConfigError {
        let start = span.start.min(self.text.len());
        let before = &self.text[..start];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ConfigError { path: self.path.into(), line, column, key: key.into(), message: message.into() }
    }

    fn core<T>(&self, r: Result<T, CoreError>, keys: &[(&str, &str, Range<usize>)]) -> Result<T, ConfigError> {
        r.map_err(|e| match &e {
            CoreError::InvalidParameter { name, reason } => match keys.iter().find(|(n, _, _)| n == name) {
                Some((_, key, span)) => self.at(span.clone(), key, reason.clone()),
                None => self.at(keys[0].2.clone(), keys[0].1, e.to_string()),
            },
            _ => self.at(keys[0].2.clone(), keys[0].1, e.to_string()),
        })
    }

    fn count(&self, v: &Spanned<i64>, key: &str, min: i64) -> Result<usize, ConfigError> {
        if *v.get_ref() < min {
            return Err(self.at(v.span(), key, format!("must be >= {min}, got {}", v.get_ref())));
        }
        Ok(*v.get_ref() as usize)
    }

    fn counts(&self, v: &Spanned<Vec<i64>>, key: &str) -> Result<Vec<usize>, ConfigError> {
        if v.get_ref().is_empty() {
            return Err(self.at(v.span(), key, "must not be empty"));
        }
        if let Some(x) = v.get_ref().iter().find(|x| **x < 1) {
            return Err(self.at(v.span(), key, format!("values must be >= 1, got {x}")));
        }
        if v.get_ref().windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.at(v.span(), key, "values must be strictly increasing"));
        }
        Ok(v.get_ref().iter().map(|x| *x as usize).collect())
    }

    fn parsed<T: FromStr<Err = String>>(&self, v: &Spanned<String>, key: &str) -> Result<T, ConfigError> {
        v.get_ref().parse().map_err(|e| self.at(v.span(), key, e))
    }
}

fn method(s: &str) -> Result<CalibrationMethod, String> {
    match s {
        "analytic_gamma" => Ok(CalibrationMethod::AnalyticGamma),
        "monte_carlo" => Ok(CalibrationMethod::MonteCarlo),
        _ => Err(format!("unknown calibration method `{s}` (expected analytic_gamma or monte_carlo)")),
    }
}

/// Parses and validates scenario text; `path` only labels messages.
pub fn parse(path: &str, text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cx = Ctx { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        cx.at(span, "", e.message().to_string())
    })?;

    let m = raw.model.get_ref();
    let model_span = raw.model.span();
    let samples = cx.count(&m.samples_per_block, "model.samples_per_block", 1)?;
    let range = cx.core(
        PowerRange::new(*m.unauthorized_power_min.get_ref(), *m.unauthorized_power_max.get_ref()),
        &[
            ("unauthorized_power_range", "model.unauthorized_power_min", m.unauthorized_power_min.span()),
        ],
    )?;
    let model = cx.core(
        SignalModel::new(*m.noise_power.get_ref(), *m.authorized_power.get_ref(), range, samples),
        &[
            ("noise_power", "model.noise_power", m.noise_power.span()),
            ("authorized_power", "model.authorized_power", m.authorized_power.span()),
            ("samples_per_block", "model.samples_per_block", m.samples_per_block.span()),
            ("unauthorized_power_range", "model.unauthorized_power_min", m.unauthorized_power_min.span()),
            ("", "model", model_span),
        ],
    )?;

    let network = match &raw.network {
        None => SensorNetwork::single(1.0).expect("unit gain"),
        Some(n) => {
            let n_span = n.span();
            let n = n.get_ref();
            let count = n.sensor_count.as_ref().map(|c| cx.count(c, "network.sensor_count", 1)).transpose()?;
            let gains = match (&n.gains, count) {
                (Some(g), Some(c)) if g.get_ref().len() != c => {
                    return Err(cx.at(
                        g.span(),
                        "network.gains",
                        format!("has {} entries but network.sensor_count is {c}", g.get_ref().len()),
                    ));
                }
                (Some(g), _) => g.get_ref().clone(),
                (None, c) => vec![1.0; c.unwrap_or(1)],
            };
            let gains_span = n.gains.as_ref().map_or(n_span.clone(), |g| g.span());
            let net = cx.core(SensorNetwork::new(gains), &[("gains", "network.gains", gains_span)])?;
            match &n.coverage_radius_m {
                Some(r) if !(r.get_ref().is_finite() && *r.get_ref() > 0.0) => {
                    return Err(cx.at(r.span(), "network.coverage_radius_m", format!("must be > 0, got {}", r.get_ref())));
                }
                Some(r) => net.with_radius(*r.get_ref()),
                None => net.with_radius(DEFAULT_COVERAGE_RADIUS_M),
            }
        }
    };

    let constraints = raw
        .constraints
        .as_ref()
        .map(|c| {
            let c = c.get_ref();
            cx.core(
                ConstraintPair::new(*c.alpha.get_ref(), *c.beta.get_ref()),
                &[("alpha", "constraints.alpha", c.alpha.span()), ("beta", "constraints.beta", c.beta.span())],
            )
        })
        .transpose()?;

    let d = &raw.detector;
    let scheme = d.scheme.as_ref().map(|s| cx.parsed(s, "detector.scheme")).transpose()?.unwrap_or(Scheme::Glrt);
    let calibration_method = d
        .calibration
        .as_ref()
        .map(|s| method(s.get_ref()).map_err(|e| cx.at(s.span(), "detector.calibration", e)))
        .transpose()?
        .unwrap_or(CalibrationMethod::AnalyticGamma);
    let calibration_trials = d
        .calibration_trials
        .as_ref()
        .map(|v| cx.count(v, "detector.calibration_trials", 1))
        .transpose()?
        .map_or(DEFAULT_CALIBRATION_TRIALS, |v| v as u64);

    let f = &raw.fusion;
    let fusion =
        f.rule.as_ref().map(|s| cx.parsed(s, "fusion.rule")).transpose()?.unwrap_or(FusionKind::SoftLikelihoodSum);
    let k = match &f.k {
        None => None,
        Some(k) if fusion != FusionKind::HardKOutOfM => {
            return Err(cx.at(k.span(), "fusion.k", format!("only valid with hard_k_out_of_m, not {}", fusion.name())));
        }
        Some(k) => {
            let v = cx.count(k, "fusion.k", 1)?;
            if v > network.sensor_count() {
                return Err(cx.at(
                    k.span(),
                    "fusion.k",
                    format!("must not exceed the {} sensors of the network", network.sensor_count()),
                ));
            }
            Some(v)
        }
    };

    let t = &raw.truth;
    let rule = t.draw_rule.as_ref().map(|s| s.get_ref().as_str()).unwrap_or("uniform_over_range");
    let unauthorized = match (rule, &t.unauthorized_power) {
        ("uniform_over_range", None) => UnauthorizedPower::Uniform,
        ("uniform_over_range", Some(p)) => {
            return Err(cx.at(p.span(), "truth.unauthorized_power", "only valid with draw_rule = \"fixed\""));
        }
        ("fixed", None) => UnauthorizedPower::midpoint(&model),
        ("fixed", Some(p)) => {
            let law = UnauthorizedPower::Fixed(*p.get_ref());
            cx.core(law.validate(&model), &[("unauthorized_power", "truth.unauthorized_power", p.span())])?;
            law
        }
        (other, _) => {
            let span = t.draw_rule.as_ref().expect("rule given").span();
            return Err(cx.at(
                span,
                "truth.draw_rule",
                format!("unknown draw rule `{other}` (expected uniform_over_range or fixed)"),
            ));
        }
    };

    let tradeoff = raw
        .sweep
        .tradeoff
        .as_ref()
        .map(|g| -> Result<TradeoffGrid, ConfigError> {
            let schemes = match &g.schemes {
                None => vec![Scheme::Genie, Scheme::Glrt],
                Some(s) => {
                    if s.get_ref().is_empty() {
                        return Err(cx.at(s.span(), "sweep.tradeoff.schemes", "must not be empty"));
                    }
                    s.get_ref()
                        .iter()
                        .map(|x| x.parse().map_err(|e| cx.at(s.span(), "sweep.tradeoff.schemes", e)))
                        .collect::<Result<_, _>>()?
                }
            };
            let ab = g.alpha_beta.get_ref();
            let key = "sweep.tradeoff.alpha_beta";
            if ab.is_empty() {
                return Err(cx.at(g.alpha_beta.span(), key, "must not be empty"));
            }
            if let Some(a) = ab.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
                return Err(cx.at(g.alpha_beta.span(), key, format!("values must lie in (0, 1], got {a}")));
            }
            if ab.windows(2).any(|w| w[0] >= w[1]) {
                return Err(cx.at(g.alpha_beta.span(), key, "values must be strictly increasing"));
            }
            Ok(TradeoffGrid {
                schemes,
                alpha_beta: ab.clone(),
                samples: cx.counts(&g.samples, "sweep.tradeoff.samples")?,
            })
        })
        .transpose()?;

    let grid = raw
        .sweep
        .grid
        .as_ref()
        .map(|g| -> Result<SensorGrid, ConfigError> {
            Ok(SensorGrid {
                sensors: cx.counts(&g.sensors, "sweep.grid.sensors")?,
                samples: cx.counts(&g.samples, "sweep.grid.samples")?,
            })
        })
        .transpose()?;

    let quickest = raw
        .quickest
        .as_ref()
        .map(|q| -> Result<QuickestPlan, ConfigError> {
            let h = q.thresholds.get_ref();
            let key = "quickest.thresholds";
            if h.is_empty() {
                return Err(cx.at(q.thresholds.span(), key, "must not be empty"));
            }
            if let Some(x) = h.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(cx.at(q.thresholds.span(), key, format!("values must be finite and >= 0, got {x}")));
            }
            if h.windows(2).any(|w| w[0] >= w[1]) {
                return Err(cx.at(q.thresholds.span(), key, "values must be strictly increasing"));
            }
            let change_time = match &q.change_time {
                None => ChangeTime::At(1),
                Some(v) => ChangeTime::At(cx.count(v, "quickest.change_time", 1)? as u64),
            };
            let streams = match &q.streams {
                None => DEFAULT_STREAMS,
                Some(v) => cx.count(v, "quickest.streams", dronewatch_core::quickest::MIN_TRIALS as i64)? as u64,
            };
            Ok(QuickestPlan { thresholds: h.clone(), change_time, streams })
        })
        .transpose()?;

    let trials = match &raw.trials {
        Some(t) if *t.get_ref() == 0 => return Err(cx.at(t.span(), "trials", "must be >= 1")),
        Some(t) => *t.get_ref(),
        None => DEFAULT_TRIALS,
    };

    Ok(ScenarioConfig {
        text: text.to_string(),
        seed: raw.seed.map_or(0, |s| s.into_inner()),
        trials,
        model,
        network,
        constraints,
        scheme,
        calibration_method,
        calibration_trials,
        fusion,
        k,
        unauthorized,
        tradeoff,
        grid,
        quickest,
    })
}
