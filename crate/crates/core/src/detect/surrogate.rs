//! Discrete surrogate: the energy statistic of one sensor quantized to a few
//! levels. Every probability is a finite sum, so decisions and rates can be
//! checked against brute-force enumeration.

use serde::Serialize;

use super::likelihood::power_law_nodes;
use super::search::{solve, RateModel};
use super::{pick, ConstraintPair, Offsets};
use crate::error::{Error, Result};
use crate::signal::{Hypothesis, SignalModel, UnauthorizedPower};
use crate::stats::EnergyLaw;

pub const DEFAULT_LEVELS: usize = 8;

/// Quantized energy statistic with genie likelihoods (level pmfs).
#[derive(Debug, Clone, Serialize)]
pub struct QuantizedSurrogate {
    model: SignalModel,
    gain: f64,
    law: UnauthorizedPower,
    edges: Vec<f64>,
    pmf: [Vec<f64>; 3],
    log_pmf: [Vec<f64>; 3],
}

impl QuantizedSurrogate {
    /// Eight levels with equally spaced edges between the H0 mean and the
    /// largest H2 mean.
    pub fn new(model: &SignalModel, gain: f64, law: UnauthorizedPower) -> Result<Self> {
        let lo = 0.75 * model.noise_power;
        let hi = 1.1 * model.received_power(gain, model.unauthorized_power.max);
        let inner = DEFAULT_LEVELS - 1;
        let edges = (0..inner).map(|i| lo + (hi - lo) * i as f64 / (inner - 1) as f64).collect();
        Self::with_edges(model, gain, law, edges)
    }

    /// Levels are `[0, e1), [e1, e2), ..., [ek, inf)`.
    pub fn with_edges(model: &SignalModel, gain: f64, law: UnauthorizedPower, edges: Vec<f64>) -> Result<Self> {
        model.validate()?;
        law.validate(model)?;
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::invalid("gain", format!("must be > 0, got {gain}")));
        }
        if edges.is_empty() || edges[0] <= 0.0 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("edges", "must be positive and strictly increasing"));
        }
        let n = model.samples_per_block as f64;
        let bins = |law: &EnergyLaw| -> Vec<f64> {
            let mut cuts = vec![0.0];
            cuts.extend_from_slice(&edges);
            cuts.push(f64::INFINITY);
            cuts.windows(2).map(|w| law.interval(w[0], w[1])).collect()
        };
        let p0 = bins(&EnergyLaw::new(n, model.noise_power));
        let p1 = bins(&EnergyLaw::new(n, model.received_power(gain, model.authorized_power)));
        let mut p2 = vec![0.0; edges.len() + 1];
        for (w, p) in power_law_nodes(model, law) {
            for (acc, v) in p2.iter_mut().zip(bins(&EnergyLaw::new(n, model.received_power(gain, p)))) {
                *acc += w * v;
            }
        }
        let pmf = [p0, p1, p2];
        let log_pmf = pmf.clone().map(|p| p.into_iter().map(f64::ln).collect());
        Ok(Self { model: *model, gain, law, edges, pmf, log_pmf })
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn law(&self) -> UnauthorizedPower {
        self.law
    }

    pub fn levels(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// `Pr(level = q | h)`.
    pub fn pmf(&self, h: Hypothesis) -> &[f64] {
        &self.pmf[h.index()]
    }

    pub fn level(&self, statistic: f64) -> usize {
        self.edges.partition_point(|&e| e <= statistic)
    }

    pub fn scores(&self, level: usize) -> [f64; 3] {
        [self.log_pmf[0][level], self.log_pmf[1][level], self.log_pmf[2][level]]
    }

    pub fn decide_level(&self, level: usize, offsets: Offsets) -> Hypothesis {
        pick(self.scores(level), offsets)
    }

    /// `Pr(decide Hj | Hi)` summed over levels.
    pub fn confusion(&self, offsets: Offsets) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for q in 0..self.levels() {
            let j = self.decide_level(q, offsets).index();
            for (i, row) in c.iter_mut().enumerate() {
                row[j] += self.pmf[i][q];
            }
        }
        c
    }

    pub fn calibrate(&self, constraints: ConstraintPair) -> Result<SurrogateDetector> {
        let sol = solve(self, constraints, super::detector::DEFAULT_MAX_OUTER_ITERATIONS)?;
        Ok(SurrogateDetector { surrogate: self.clone(), offsets: sol.offsets, constraints })
    }
}

impl RateModel for QuantizedSurrogate {
    fn correct(&self, offsets: Offsets) -> [f64; 2] {
        let c = self.confusion(offsets);
        [c[0][0], c[1][1]]
    }

    fn detection(&self, offsets: Offsets) -> f64 {
        self.confusion(offsets)[2][2]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateDetector {
    surrogate: QuantizedSurrogate,
    offsets: Offsets,
    constraints: ConstraintPair,
}

impl SurrogateDetector {
    pub fn surrogate(&self) -> &QuantizedSurrogate {
        &self.surrogate
    }

    pub fn offsets(&self) -> Offsets {
        self.offsets
    }

    pub fn constraints(&self) -> ConstraintPair {
        self.constraints
    }

    pub fn decide(&self, statistic: f64) -> Hypothesis {
        self.surrogate.decide_level(self.surrogate.level(statistic), self.offsets)
    }

    pub fn exact_confusion(&self) -> [[f64; 3]; 3] {
        self.surrogate.confusion(self.offsets)
    }
}
