//! Ternary likelihood tests and their threshold calibration.
//!
//! A detector scores each hypothesis by its log-likelihood and decides
//! `argmax { l0 + offset_h0, l1 + offset_h1, l2 }`, ties going to the
//! smaller hypothesis. The unauthorized score `l2` is either the genie's
//! (the drone's power law is known) or the GLRT profile (supremum over the
//! power range). Calibration picks the two offsets that maximize
//! `Pr(H2|H2)` subject to `1 - Pr(H0|H0) <= alpha` and
//! `1 - Pr(H1|H1) <= beta`.

mod detector;
pub(crate) mod likelihood;
mod rates;
pub(crate) mod regions;
pub(crate) mod search;
pub mod surrogate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Hypothesis;

pub use detector::{
    calibrate, decide, CalibratedDetector, CalibrationReport, CalibrationSettings, ANALYTIC_TOLERANCE,
    DEFAULT_CALIBRATION_TRIALS, DEFAULT_MAX_OUTER_ITERATIONS,
};
pub use likelihood::{genie_log_likelihoods, glrt_profile, PRIOR_QUADRATURE_POINTS};
pub use regions::{Region, ENDPOINT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Genie,
    Glrt,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Genie => "genie",
            Scheme::Glrt => "glrt",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "genie" => Ok(Scheme::Genie),
            "glrt" => Ok(Scheme::Glrt),
            _ => Err(format!("unknown scheme `{s}` (expected genie or glrt)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Exact region probabilities from the Gamma law of the statistic.
    AnalyticGamma,
    /// Empirical rates over simulated calibration trials.
    MonteCarlo,
}

/// False-alarm bounds: `1 - Pr(H0|H0) <= alpha`, `1 - Pr(H1|H1) <= beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPair {
    alpha: f64,
    beta: f64,
}

impl ConstraintPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn symmetric(level: f64) -> Result<Self> {
        Self::new(level, level)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Additive log-likelihood offsets for H0 and H1 (H2 is the reference).
/// Infinite values are the saturating sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offsets {
    #[serde(with = "serde_extended")]
    pub h0: f64,
    #[serde(with = "serde_extended")]
    pub h1: f64,
}

impl Offsets {
    /// Never decide H0 or H1 against H2.
    pub const NEG_INF: Offsets = Offsets { h0: f64::NEG_INFINITY, h1: f64::NEG_INFINITY };
    /// Never decide H2.
    pub const POS_INF: Offsets = Offsets { h0: f64::INFINITY, h1: f64::INFINITY };

    pub fn new(h0: f64, h1: f64) -> Self {
        Self { h0, h1 }
    }
}

/// Offset argmax over reduced or full scores; ties go to the smaller
/// hypothesis.
#[inline]
pub(crate) fn pick(scores: [f64; 3], offsets: Offsets) -> Hypothesis {
    let a = scores[0] + offsets.h0;
    let b = scores[1] + offsets.h1;
    let c = scores[2];
    if a >= b && a >= c {
        Hypothesis::NoDrone
    } else if b >= c {
        Hypothesis::Authorized
    } else {
        Hypothesis::Unauthorized
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`
/// so JSON reports can carry the offset sentinels.
pub mod serde_extended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&format_extended(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => parse_extended(&t).map_err(serde::de::Error::custom),
        }
    }

    pub fn format_extended(v: f64) -> String {
        if v == f64::INFINITY {
            "inf".into()
        } else if v == f64::NEG_INFINITY {
            "-inf".into()
        } else if v.is_nan() {
            "nan".into()
        } else {
            format!("{v:?}")
        }
    }

    pub fn parse_extended(t: &str) -> Result<f64, String> {
        match t.trim() {
            "inf" | "+inf" | "max" | "MAX" => Ok(f64::INFINITY),
            "-inf" | "min" | "MIN" => Ok(f64::NEG_INFINITY),
            other => other.parse::<f64>().map_err(|e| format!("bad number `{other}`: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_smaller_hypothesis() {
        assert_eq!(pick([1.0, 1.0, 1.0], Offsets::new(0.0, 0.0)), Hypothesis::NoDrone);
        assert_eq!(pick([0.0, 1.0, 1.0], Offsets::new(0.0, 0.0)), Hypothesis::Authorized);
        assert_eq!(pick([1.0, 0.0, 1.0], Offsets::new(0.0, 0.0)), Hypothesis::NoDrone);
        assert_eq!(pick([0.0, 0.0, 1.0], Offsets::new(0.0, 0.0)), Hypothesis::Unauthorized);
    }

    #[test]
    fn sentinels_dominate() {
        for s in [[-5.0, 3.0, 10.0], [0.0, 0.0, 0.0], [1e4, -1e4, 1e5]] {
            assert_ne!(pick(s, Offsets::POS_INF), Hypothesis::Unauthorized);
            assert_eq!(pick(s, Offsets::NEG_INF), Hypothesis::Unauthorized);
        }
    }

    #[test]
    fn constraint_bounds() {
        assert!(ConstraintPair::new(-0.1, 0.5).is_err());
        assert!(ConstraintPair::new(0.1, 1.5).is_err());
        assert!(ConstraintPair::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn extended_floats_round_trip() {
        for v in [f64::NEG_INFINITY, f64::INFINITY, 1.25, -3.0e-7] {
            let text = serde_extended::format_extended(v);
            assert_eq!(serde_extended::parse_extended(&text).unwrap(), v);
        }
        assert_eq!(serde_extended::parse_extended("MAX").unwrap(), f64::INFINITY);
        assert!(serde_extended::parse_extended("abc").is_err());
    }
}
