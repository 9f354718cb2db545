//! Rate oracles behind calibration: exact Gamma-law region probabilities
//! for scalar detectors, and empirical rates over simulated score triples.

use rayon::prelude::*;

use super::likelihood::{power_law_nodes, Scorer};
use super::regions::{decision_regions, region_probability, Region};
use super::search::RateModel;
use super::{pick, Offsets};
use crate::rng;
use crate::signal::{fill_trial_energies, Hypothesis, SensorNetwork, UnauthorizedPower};
use crate::stats::EnergyLaw;

/// Exact rates of a scalar detector.
pub(crate) struct AnalyticRates<'a> {
    scorer: &'a Scorer,
    laws: [EnergyLaw; 2],
    unauthorized: Vec<(f64, EnergyLaw)>,
}

impl<'a> AnalyticRates<'a> {
    /// `truth` is the law of the unauthorized power used for `Pr(H2|H2)`.
    pub(crate) fn new(scorer: &'a Scorer, truth: UnauthorizedPower) -> Self {
        let (mu0, mu1, _, _) = scorer.scalar_means();
        let n = scorer.effective_samples();
        let model = scorer.model();
        let g = scorer.common_gain().expect("scalar scorer");
        let unauthorized = power_law_nodes(model, truth)
            .into_iter()
            .map(|(w, p)| (w, EnergyLaw::new(n, model.received_power(g, p))))
            .collect();
        Self { scorer, laws: [EnergyLaw::new(n, mu0), EnergyLaw::new(n, mu1)], unauthorized }
    }

    pub(crate) fn regions(&self, offsets: Offsets) -> Vec<Region> {
        decision_regions(self.scorer, offsets)
    }

    /// Row `i`: `Pr(decide Hj | Hi)`.
    pub(crate) fn confusion(&self, offsets: Offsets) -> [[f64; 3]; 3] {
        let regions = self.regions(offsets);
        let row = |law: &EnergyLaw| Hypothesis::ALL.map(|h| region_probability(&regions, law, h));
        let mut h2 = [0.0; 3];
        for (w, law) in &self.unauthorized {
            let r = row(law);
            for j in 0..3 {
                h2[j] += w * r[j];
            }
        }
        // Quadrature weights and complements can land a rounding step
        // outside [0, 1] or on -0.
        [row(&self.laws[0]), row(&self.laws[1]), h2].map(|r| r.map(|v| v.clamp(0.0, 1.0) + 0.0))
    }
}

impl RateModel for AnalyticRates<'_> {
    fn correct(&self, offsets: Offsets) -> [f64; 2] {
        let regions = self.regions(offsets);
        [
            region_probability(&regions, &self.laws[0], Hypothesis::NoDrone),
            region_probability(&regions, &self.laws[1], Hypothesis::Authorized),
        ]
    }

    fn detection(&self, offsets: Offsets) -> f64 {
        let regions = self.regions(offsets);
        self.unauthorized
            .iter()
            .map(|(w, law)| w * region_probability(&regions, law, Hypothesis::Unauthorized))
            .sum()
    }
}

/// Simulated score triples per true hypothesis.
pub(crate) struct MonteCarloRates {
    rows: [Vec<[f64; 3]>; 3],
}

impl MonteCarloRates {
    pub(crate) fn simulate(
        scorer: &Scorer,
        network: &SensorNetwork,
        truth: UnauthorizedPower,
        trials: usize,
        seed: u64,
    ) -> Self {
        let model = *scorer.model();
        let rows = Hypothesis::ALL.map(|h| {
            let row_seed = rng::derive(seed, h.index() as u64);
            (0..trials as u64)
                .into_par_iter()
                .map_init(
                    || vec![0.0; network.sensor_count()],
                    |buf, t| {
                        fill_trial_energies(&model, network, h, truth, row_seed, t, buf);
                        scorer.fused(buf)
                    },
                )
                .collect()
        });
        Self { rows }
    }

    pub(crate) fn trials(&self) -> usize {
        self.rows[0].len()
    }

    fn rate(&self, h: Hypothesis, offsets: Offsets) -> f64 {
        let row = &self.rows[h.index()];
        row.iter().filter(|s| pick(**s, offsets) == h).count() as f64 / row.len() as f64
    }

    fn count(&self, h: Hypothesis, offsets: Offsets) -> usize {
        self.rows[h.index()].iter().filter(|s| pick(**s, offsets) == h).count()
    }

    /// Smallest order statistic reaching `target`, nudged up until the
    /// direct count (with exact tie semantics) agrees.
    fn order_statistic(
        &self,
        h: Hypothesis,
        target: f64,
        lower: f64,
        threshold: impl Fn(&[f64; 3]) -> f64,
        offsets_at: impl Fn(f64) -> Offsets,
    ) -> f64 {
        let n = self.rows[h.index()].len();
        let needed = ((target * n as f64) - 1e-9).ceil().max(0.0) as usize;
        if needed == 0 {
            return lower;
        }
        if self.count(h, offsets_at(lower)) >= needed {
            return lower;
        }
        let mut t: Vec<f64> = self.rows[h.index()].iter().map(threshold).collect();
        let (_, kth, _) = t.select_nth_unstable_by(needed - 1, f64::total_cmp);
        let mut x = kth.max(lower);
        if !x.is_finite() {
            return x;
        }
        let mut eps = 1e-15 * (1.0 + x.abs());
        for _ in 0..80 {
            if self.count(h, offsets_at(x)) >= needed {
                return x;
            }
            x += eps;
            eps *= 2.0;
        }
        x
    }
}

impl RateModel for MonteCarloRates {
    fn correct(&self, offsets: Offsets) -> [f64; 2] {
        [self.rate(Hypothesis::NoDrone, offsets), self.rate(Hypothesis::Authorized, offsets)]
    }

    fn detection(&self, offsets: Offsets) -> f64 {
        self.rate(Hypothesis::Unauthorized, offsets)
    }

    fn min_offset_h0(&self, h1: f64, target: f64, lower: f64) -> f64 {
        // H0 wins iff h0 >= max(s1 + h1, s2) - s0
        self.order_statistic(
            Hypothesis::NoDrone,
            target,
            lower,
            |s| (s[1] + h1).max(s[2]) - s[0],
            |x| Offsets::new(x, h1),
        )
    }

    fn min_offset_h1(&self, h0: f64, target: f64, lower: f64) -> f64 {
        // H1 wins iff h1 > s0 + h0 - s1 and h1 >= s2 - s1
        self.order_statistic(
            Hypothesis::Authorized,
            target,
            lower,
            |s| (s[0] + h0 - s[1]).max(s[2] - s[1]),
            |x| Offsets::new(h0, x),
        )
    }
}
