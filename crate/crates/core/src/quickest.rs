//! CUSUM monitoring of per-sample energies for the onset of a drone.
//!
//! Under the complex Gaussian model each `|y_t|^2` is exponential with mean
//! `mu0` before the change and `mu1` after it, so the log-likelihood ratio
//! increment is `ln(mu0/mu1) + e * (1/mu0 - 1/mu1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::SignalModel;
use crate::stats::mean_half_width;

/// Streams that have not alarmed after this many samples are cut off.
pub const DEFAULT_MAX_SAMPLES: u64 = 10_000_000;
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    statistic: f64,
    time_index: u64,
    alarm_time: Option<u64>,
    threshold_h: f64,
    pre_change_power: f64,
    post_change_power: f64,
}

impl CusumState {
    /// `h = 0` is allowed and alarms on the first sample.
    pub fn new(threshold_h: f64, pre_change_power: f64, post_change_power: f64) -> Result<Self> {
        if !(threshold_h >= 0.0 && threshold_h.is_finite()) {
            return Err(Error::invalid("threshold_h", format!("must be finite and >= 0, got {threshold_h}")));
        }
        if !(pre_change_power > 0.0 && pre_change_power.is_finite()) {
            return Err(Error::invalid("pre_change_power", format!("must be > 0, got {pre_change_power}")));
        }
        if !(post_change_power > pre_change_power && post_change_power.is_finite()) {
            return Err(Error::invalid(
                "post_change_power",
                format!("must exceed the pre-change power {pre_change_power}, got {post_change_power}"),
            ));
        }
        Ok(Self { statistic: 0.0, time_index: 0, alarm_time: None, threshold_h, pre_change_power, post_change_power })
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn time_index(&self) -> u64 {
        self.time_index
    }

    pub fn alarm_time(&self) -> Option<u64> {
        self.alarm_time
    }

    pub fn threshold_h(&self) -> f64 {
        self.threshold_h
    }

    pub fn pre_change_power(&self) -> f64 {
        self.pre_change_power
    }

    pub fn post_change_power(&self) -> f64 {
        self.post_change_power
    }

    /// Log-likelihood ratio of one sample energy.
    pub fn increment(&self, sample_energy: f64) -> f64 {
        let (m0, m1) = (self.pre_change_power, self.post_change_power);
        (m0 / m1).ln() + sample_energy * (1.0 / m0 - 1.0 / m1)
    }

    /// Energy at which the increment vanishes.
    pub fn neutral_energy(&self) -> f64 {
        let (m0, m1) = (self.pre_change_power, self.post_change_power);
        (m1 / m0).ln() / (1.0 / m0 - 1.0 / m1)
    }

    /// Advances one sample. After an alarm the state no longer changes.
    pub fn step(self, sample_energy: f64) -> Result<Self> {
        if !(sample_energy >= 0.0 && sample_energy.is_finite()) {
            return Err(Error::NegativeStatistic(sample_energy));
        }
        Ok(self.step_unchecked(sample_energy))
    }

    #[inline]
    fn step_unchecked(mut self, e: f64) -> Self {
        if self.alarm_time.is_some() {
            return self;
        }
        self.time_index += 1;
        self.statistic = (self.statistic + self.increment(e)).max(0.0);
        if self.statistic >= self.threshold_h {
            self.alarm_time = Some(self.time_index);
        }
        self
    }
}

pub fn cusum_step(state: CusumState, sample_energy: f64) -> Result<CusumState> {
    state.step(sample_energy)
}

/// Sample index (1-based) of the first post-change sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeTime {
    Never,
    At(u64),
}

/// Powers seen by the monitor and the power the drone actually adds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuickestSetup {
    pub pre_change_power: f64,
    /// Post-change power the recursion is tuned for.
    pub design_post_change_power: f64,
    /// Post-change power of the simulated streams.
    pub actual_post_change_power: f64,
    pub max_samples: u64,
}

impl QuickestSetup {
    /// Designs for the weakest unauthorized drone, `sigma^2 + g * P2_min`.
    pub fn from_model(model: &SignalModel, gain: f64) -> Result<Self> {
        model.validate()?;
        let mu1 = model.received_power(gain, model.unauthorized_power.min);
        Self::new(model.noise_power, mu1)
    }

    pub fn new(pre_change_power: f64, post_change_power: f64) -> Result<Self> {
        CusumState::new(0.0, pre_change_power, post_change_power)?;
        Ok(Self {
            pre_change_power,
            design_post_change_power: post_change_power,
            actual_post_change_power: post_change_power,
            max_samples: DEFAULT_MAX_SAMPLES,
        })
    }

    pub fn with_actual_post_change_power(mut self, power: f64) -> Self {
        self.actual_post_change_power = power;
        self
    }

    /// `KL(post || pre)` of the exponential per-sample laws.
    pub fn kl_divergence(&self) -> f64 {
        let r = self.design_post_change_power / self.pre_change_power;
        r - 1.0 - r.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLengthMetrics {
    pub threshold_h: f64,
    pub average_run_length: f64,
    pub arl_half_width: f64,
    pub average_detection_delay: Option<f64>,
    pub delay_half_width: Option<f64>,
    pub trials: usize,
    /// Streams cut off at `max_samples` (counted at the cap).
    pub censored: usize,
    /// Changed streams that alarmed before the change (excluded from delay).
    pub false_alarms_before_change: usize,
}

/// First alarm time of one stream, or `None` if it ran past `max_samples`.
fn alarm_time(setup: &QuickestSetup, h: f64, change: ChangeTime, key: u64) -> Option<u64> {
    let mut state = CusumState::new(h, setup.pre_change_power, setup.design_post_change_power).ok()?;
    let mut r = rng::stream(key);
    let change_at = match change {
        ChangeTime::Never => u64::MAX,
        ChangeTime::At(t) => t,
    };
    let amp0 = rng::amplitude(setup.pre_change_power);
    let amp1 = rng::amplitude(setup.actual_post_change_power);
    while state.time_index < setup.max_samples {
        let amp = if state.time_index + 1 >= change_at { amp1 } else { amp0 };
        let e = rng::complex_gaussian(&mut r, amp).norm_sqr();
        state = state.step_unchecked(e);
        if state.alarm_time.is_some() {
            return state.alarm_time;
        }
    }
    None
}

/// ARL on streams without a change; detection delay `tau - nu + 1` on
/// streams changing at `nu` (streams alarming before `nu` are excluded).
pub fn run_length_metrics_with(
    setup: &QuickestSetup,
    h: f64,
    change_time: ChangeTime,
    trials: usize,
    seed: u64,
) -> Result<RunLengthMetrics> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid("trials", format!("need at least {MIN_TRIALS}, got {trials}")));
    }
    if let ChangeTime::At(0) = change_time {
        return Err(Error::invalid("change_time", "sample indices start at 1"));
    }
    CusumState::new(h, setup.pre_change_power, setup.design_post_change_power)?;

    let run = |tag: &str, change: ChangeTime| -> Vec<Option<u64>> {
        let key = rng::derive_tag(seed, tag);
        (0..trials as u64).into_par_iter().map(|t| alarm_time(setup, h, change, rng::derive(key, t))).collect()
    };

    let null = run("no_change", ChangeTime::Never);
    let censored = null.iter().filter(|t| t.is_none()).count();
    let lengths: Vec<f64> = null.iter().map(|t| t.unwrap_or(setup.max_samples) as f64).collect();
    let arl = lengths.iter().sum::<f64>() / lengths.len() as f64;

    let (delay, delay_hw, early) = match change_time {
        ChangeTime::Never => (None, None, 0),
        ChangeTime::At(nu) => {
            let changed = run("change", change_time);
            let mut early = 0;
            let mut delays = Vec::with_capacity(trials);
            for t in changed {
                match t {
                    Some(tau) if tau < nu => early += 1,
                    Some(tau) => delays.push((tau - nu + 1) as f64),
                    None => delays.push((setup.max_samples - nu + 1) as f64),
                }
            }
            if delays.is_empty() {
                (None, None, early)
            } else {
                let mean = delays.iter().sum::<f64>() / delays.len() as f64;
                (Some(mean), Some(mean_half_width(&delays)), early)
            }
        }
    };

    Ok(RunLengthMetrics {
        threshold_h: h,
        average_run_length: arl,
        arl_half_width: mean_half_width(&lengths),
        average_detection_delay: delay,
        delay_half_width: delay_hw,
        trials,
        censored,
        false_alarms_before_change: early,
    })
}

/// [`run_length_metrics_with`] at the model's design point (unit gain).
pub fn run_length_metrics(
    model: &SignalModel,
    h: f64,
    change_time: ChangeTime,
    trials: usize,
    seed: u64,
) -> Result<RunLengthMetrics> {
    run_length_metrics_with(&QuickestSetup::from_model(model, 1.0)?, h, change_time, trials, seed)
}
