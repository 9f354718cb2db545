//! Combining per-sensor evidence into one global decision.
//!
//! Soft fusion sums per-sensor log-likelihoods (the unknown unauthorized
//! power is shared by all sensors); hard fusion counts local votes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::likelihood::{power_law_nodes, sorted_mean, Scorer};
use crate::detect::search::{solve, RateModel};
use crate::detect::{
    pick, regions::decision_regions, regions::region_probability, CalibratedDetector, CalibrationMethod,
    CalibrationReport, CalibrationSettings, ConstraintPair, Offsets, Region, Scheme,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{fill_trial_energies, Hypothesis, SampleBlock, SensorNetwork, SignalModel, UnauthorizedPower};
use crate::stats::{binomial_half_width, binomial_std_error, EnergyLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    SoftLikelihoodSum,
    HardMajorityH2Priority,
    HardKOutOfM,
}

impl FusionKind {
    pub fn name(self) -> &'static str {
        match self {
            FusionKind::SoftLikelihoodSum => "soft_likelihood_sum",
            FusionKind::HardMajorityH2Priority => "hard_majority_h2_priority",
            FusionKind::HardKOutOfM => "hard_k_out_of_m",
        }
    }

    pub fn is_hard(self) -> bool {
        self != FusionKind::SoftLikelihoodSum
    }
}

impl std::str::FromStr for FusionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [FusionKind::SoftLikelihoodSum, FusionKind::HardMajorityH2Priority, FusionKind::HardKOutOfM]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!("unknown fusion rule `{s}` (expected soft_likelihood_sum, hard_majority_h2_priority or hard_k_out_of_m)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FusionRule {
    pub kind: FusionKind,
    /// Unauthorized-vote quota; only for `HardKOutOfM`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl FusionRule {
    pub const SOFT: FusionRule = FusionRule { kind: FusionKind::SoftLikelihoodSum, k: None };
    pub const MAJORITY: FusionRule = FusionRule { kind: FusionKind::HardMajorityH2Priority, k: None };

    pub fn k_out_of_m(k: usize) -> Self {
        Self { kind: FusionKind::HardKOutOfM, k: Some(k) }
    }

    /// Checks `k` against a network of `m` sensors.
    pub fn validate(&self, m: usize) -> Result<()> {
        match (self.kind, self.k) {
            (FusionKind::HardKOutOfM, Some(k)) if (1..=m).contains(&k) => Ok(()),
            (FusionKind::HardKOutOfM, Some(k)) => {
                Err(Error::invalid("k", format!("must lie in 1..={m}, got {k}")))
            }
            (FusionKind::HardKOutOfM, None) => Err(Error::invalid("k", "required for hard_k_out_of_m")),
            (_, Some(_)) => Err(Error::invalid("k", format!("only valid for hard_k_out_of_m, not {}", self.kind.name()))),
            (_, None) => Ok(()),
        }
    }

    /// Label used in output files, e.g. `hard_k_out_of_m:2`.
    pub fn label(&self) -> String {
        match self.k {
            Some(k) => format!("{}:{k}", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }
}

impl std::fmt::Display for FusionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDecision {
    pub hypothesis: Hypothesis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused_statistic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_votes: Option<Vec<Hypothesis>>,
}

/// Soft fusion of one block per sensor.
///
/// Blocks may arrive in any order; each is placed by its `sensor_index`.
/// The fused statistic is the mean energy over sensors, which is the
/// sufficient statistic when all gains are equal.
pub fn fuse_soft(
    blocks: &[SampleBlock],
    model: &SignalModel,
    network: &SensorNetwork,
    detector: &CalibratedDetector,
    genie_p2: Option<f64>,
) -> Result<GlobalDecision> {
    let m = network.sensor_count();
    if blocks.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: blocks.len() });
    }
    if detector.model() != model || detector.network().gains() != network.gains() {
        return Err(Error::invalid("detector", "calibrated for a different model or network"));
    }
    let mut energies = vec![f64::NAN; m];
    for b in blocks {
        let slot = energies.get_mut(b.sensor_index).ok_or(Error::SensorIndex { index: b.sensor_index, count: m })?;
        if !slot.is_nan() {
            return Err(Error::invalid("blocks", format!("sensor {} appears twice", b.sensor_index)));
        }
        *slot = b.energy;
    }
    let fused = sorted_mean(&energies);
    let hypothesis = if network.common_gain().is_some() {
        detector.decide(fused, genie_p2)?
    } else {
        match (detector.scheme(), genie_p2) {
            (Scheme::Glrt, Some(_)) => return Err(Error::SchemeMismatch("GLRT does not take a genie power".into())),
            (Scheme::Genie, None) => {
                return Err(Error::SchemeMismatch("genie scheme needs the unauthorized power".into()))
            }
            (Scheme::Genie, Some(p)) => UnauthorizedPower::Fixed(p).validate(model)?,
            (Scheme::Glrt, None) => {}
        }
        detector.decide_energies(&energies)?
    };
    Ok(GlobalDecision { hypothesis, fused_statistic: Some(fused), local_votes: None })
}

/// Hard fusion of local votes.
pub fn fuse_hard(votes: &[Hypothesis], rule: FusionRule) -> Result<GlobalDecision> {
    if !rule.kind.is_hard() {
        return Err(Error::invalid("rule", "soft fusion takes sample blocks, not votes"));
    }
    if votes.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, got: 0 });
    }
    rule.validate(votes.len())?;
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    Ok(GlobalDecision { hypothesis: fuse_counts(counts, rule), fused_statistic: None, local_votes: Some(votes.to_vec()) })
}

/// Global decision from vote counts `[c0, c1, c2]`; `rule` must be hard and
/// already validated.
pub(crate) fn fuse_counts(c: [usize; 3], rule: FusionRule) -> Hypothesis {
    let alarm = match rule.kind {
        FusionKind::HardKOutOfM => c[2] >= rule.k.unwrap_or(1),
        _ => c[2] > c[0] && c[2] > c[1],
    };
    if alarm {
        Hypothesis::Unauthorized
    } else if c[0] > c[1] {
        Hypothesis::NoDrone
    } else {
        Hypothesis::Authorized
    }
}

/// Local detectors sharing one offset pair, fused by a hard rule.
#[derive(Debug, Clone, Serialize)]
pub struct HardFusionDetector {
    rule: FusionRule,
    scheme: Scheme,
    model: SignalModel,
    network: SensorNetwork,
    unauthorized: UnauthorizedPower,
    offsets: Offsets,
    report: CalibrationReport,
    /// Local decision regions, one list per sensor.
    local_regions: Vec<Vec<Region>>,
    #[serde(skip)]
    locals: Vec<Scorer>,
}

impl HardFusionDetector {
    /// Calibrates local offsets so that the *global* decision meets the
    /// constraints. For `HardKOutOfM` the given `k` is used as is.
    pub fn calibrate(
        model: &SignalModel,
        network: &SensorNetwork,
        scheme: Scheme,
        rule: FusionRule,
        constraints: ConstraintPair,
        settings: &CalibrationSettings,
    ) -> Result<Self> {
        if !rule.kind.is_hard() {
            return Err(Error::invalid("rule", "hard fusion detector needs a hard rule"));
        }
        rule.validate(network.sensor_count())?;
        let law = settings.unauthorized_law(model);
        let locals = local_scorers(model, network, scheme, law)?;
        let (alpha, beta) = (constraints.alpha(), constraints.beta());

        let (offsets, report) = match settings.method {
            CalibrationMethod::AnalyticGamma => {
                let rates = HardAnalyticRates::new(&locals, law, rule);
                let sol = solve(&rates, constraints, settings.max_outer_iterations)?;
                let c = rates.confusion(sol.offsets);
                let tol = settings.tolerance.unwrap_or(crate::detect::ANALYTIC_TOLERANCE);
                let fa = [1.0 - c[0][0], 1.0 - c[1][1]];
                let report = CalibrationReport {
                    method: settings.method,
                    achieved_fa_h0: fa[0],
                    achieved_fa_h1: fa[1],
                    p_h2_given_h2: c[2][2],
                    fa_h0_half_width: 0.0,
                    fa_h1_half_width: 0.0,
                    p_h2_half_width: 0.0,
                    tolerance: tol,
                    trials: None,
                    iterations: sol.iterations,
                    converged: sol.converged,
                    grid_fallback: sol.grid_fallback,
                    at_equality: (fa[0] - alpha).abs() <= tol && (fa[1] - beta).abs() <= tol,
                };
                (sol.offsets, report)
            }
            CalibrationMethod::MonteCarlo => {
                if settings.trials == 0 {
                    return Err(Error::invalid("trials", "need at least one calibration trial"));
                }
                let seed = rng::derive_tag(settings.seed, "calibration");
                let rates = HardMonteCarloRates::simulate(model, network, &locals, law, rule, settings.trials, seed);
                let sol = solve(&rates, constraints, settings.max_outer_iterations)?;
                let [p00, p11] = rates.correct(sol.offsets);
                let p22 = rates.detection(sol.offsets);
                let n = settings.trials as u64;
                let tol = settings
                    .tolerance
                    .unwrap_or_else(|| 3.0 * binomial_std_error(alpha, n).max(binomial_std_error(beta, n)));
                let count = |p: f64| (p * n as f64).round() as u64;
                let fa = [1.0 - p00, 1.0 - p11];
                let report = CalibrationReport {
                    method: settings.method,
                    achieved_fa_h0: fa[0],
                    achieved_fa_h1: fa[1],
                    p_h2_given_h2: p22,
                    fa_h0_half_width: binomial_half_width(count(fa[0]), n),
                    fa_h1_half_width: binomial_half_width(count(fa[1]), n),
                    p_h2_half_width: binomial_half_width(count(p22), n),
                    tolerance: tol,
                    trials: Some(settings.trials),
                    iterations: sol.iterations,
                    converged: sol.converged,
                    grid_fallback: sol.grid_fallback,
                    at_equality: (fa[0] - alpha).abs() <= tol && (fa[1] - beta).abs() <= tol,
                };
                (sol.offsets, report)
            }
        };
        let local_regions = locals.iter().map(|s| decision_regions(s, offsets)).collect();
        Ok(Self {
            rule,
            scheme,
            model: *model,
            network: network.clone(),
            unauthorized: law,
            offsets,
            report,
            local_regions,
            locals,
        })
    }

    /// For `HardKOutOfM`, tries every `k` in `1..=M` and keeps the one with
    /// the highest `Pr(H2|H2)`; other rules are calibrated directly.
    pub fn calibrate_best_k(
        model: &SignalModel,
        network: &SensorNetwork,
        scheme: Scheme,
        kind: FusionKind,
        constraints: ConstraintPair,
        settings: &CalibrationSettings,
    ) -> Result<Self> {
        if kind != FusionKind::HardKOutOfM {
            return Self::calibrate(model, network, scheme, FusionRule { kind, k: None }, constraints, settings);
        }
        let mut best: Option<Self> = None;
        let mut last_err = None;
        for k in 1..=network.sensor_count() {
            match Self::calibrate(model, network, scheme, FusionRule::k_out_of_m(k), constraints, settings) {
                Ok(d) => {
                    if best.as_ref().is_none_or(|b| d.report.p_h2_given_h2 > b.report.p_h2_given_h2) {
                        best = Some(d);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.expect("at least one sensor"))
    }

    pub fn rule(&self) -> FusionRule {
        self.rule
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn network(&self) -> &SensorNetwork {
        &self.network
    }

    pub fn offsets(&self) -> Offsets {
        self.offsets
    }

    pub fn report(&self) -> &CalibrationReport {
        &self.report
    }

    pub fn local_regions(&self) -> &[Vec<Region>] {
        &self.local_regions
    }

    pub fn local_votes(&self, energies: &[f64]) -> Result<Vec<Hypothesis>> {
        check_energies(energies, self.network.sensor_count())?;
        Ok(self.votes_unchecked(energies).collect())
    }

    pub fn decide_energies(&self, energies: &[f64]) -> Result<GlobalDecision> {
        let votes = self.local_votes(energies)?;
        fuse_hard(&votes, self.rule)
    }

    pub(crate) fn decide_unchecked(&self, energies: &[f64]) -> Hypothesis {
        let mut counts = [0usize; 3];
        for v in self.votes_unchecked(energies) {
            counts[v.index()] += 1;
        }
        fuse_counts(counts, self.rule)
    }

    fn votes_unchecked<'a>(&'a self, energies: &'a [f64]) -> impl Iterator<Item = Hypothesis> + 'a {
        energies.iter().zip(&self.locals).map(|(&e, s)| pick(s.scalar(e), self.offsets))
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    pub fn unauthorized(&self) -> UnauthorizedPower {
        self.unauthorized
    }
}

pub(crate) fn check_energies(energies: &[f64], m: usize) -> Result<()> {
    if energies.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: energies.len() });
    }
    if let Some(&bad) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::NegativeStatistic(bad));
    }
    Ok(())
}

fn local_scorers(model: &SignalModel, network: &SensorNetwork, scheme: Scheme, law: UnauthorizedPower) -> Result<Vec<Scorer>> {
    (0..network.sensor_count()).map(|k| Scorer::new(model, &network.sensor(k)?, scheme, law)).collect()
}

/// Exact global rates: local region probabilities per sensor, then the
/// distribution of vote counts by dynamic programming. Under H2 the votes
/// are conditionally independent given the shared power, so the count
/// distribution is mixed over the power law's nodes.
struct HardAnalyticRates<'a> {
    locals: &'a [Scorer],
    rule: FusionRule,
    /// Per sensor: laws under H0, H1.
    laws: Vec<[EnergyLaw; 2]>,
    /// Per power node: weight, and per-sensor law under H2.
    unauthorized: Vec<(f64, Vec<EnergyLaw>)>,
}

impl<'a> HardAnalyticRates<'a> {
    fn new(locals: &'a [Scorer], law: UnauthorizedPower, rule: FusionRule) -> Self {
        let model = *locals[0].model();
        let n = model.samples_per_block as f64;
        let gains: Vec<f64> = locals.iter().map(|s| s.common_gain().expect("single sensor")).collect();
        let laws = gains
            .iter()
            .map(|&g| {
                [EnergyLaw::new(n, model.noise_power), EnergyLaw::new(n, model.received_power(g, model.authorized_power))]
            })
            .collect();
        let unauthorized = power_law_nodes(&model, law)
            .into_iter()
            .map(|(w, p)| (w, gains.iter().map(|&g| EnergyLaw::new(n, model.received_power(g, p))).collect()))
            .collect();
        Self { locals, rule, laws, unauthorized }
    }

    fn global_row(&self, local_rows: &[[f64; 3]]) -> [f64; 3] {
        let m = local_rows.len();
        // dp[c0][c1] after each sensor; c2 is implied
        let mut dp = vec![vec![0.0; m + 1]; m + 1];
        dp[0][0] = 1.0;
        for (k, row) in local_rows.iter().enumerate() {
            let mut next = vec![vec![0.0; m + 1]; m + 1];
            for c0 in 0..=k {
                for c1 in 0..=(k - c0) {
                    let p = dp[c0][c1];
                    if p == 0.0 {
                        continue;
                    }
                    next[c0 + 1][c1] += p * row[0];
                    next[c0][c1 + 1] += p * row[1];
                    next[c0][c1] += p * row[2];
                }
            }
            dp = next;
        }
        let mut out = [0.0; 3];
        for c0 in 0..=m {
            for c1 in 0..=(m - c0) {
                out[fuse_counts([c0, c1, m - c0 - c1], self.rule).index()] += dp[c0][c1];
            }
        }
        out
    }

    fn confusion(&self, offsets: Offsets) -> [[f64; 3]; 3] {
        let regions: Vec<Vec<Region>> = self.locals.iter().map(|s| decision_regions(s, offsets)).collect();
        let local = |r: &[Region], law: &EnergyLaw| Hypothesis::ALL.map(|h| region_probability(r, law, h));
        let rows01 = [0, 1].map(|i| {
            let rows: Vec<[f64; 3]> = regions.iter().zip(&self.laws).map(|(r, l)| local(r, &l[i])).collect();
            self.global_row(&rows)
        });
        let mut h2 = [0.0; 3];
        for (w, laws) in &self.unauthorized {
            let rows: Vec<[f64; 3]> = regions.iter().zip(laws).map(|(r, l)| local(r, l)).collect();
            for (acc, v) in h2.iter_mut().zip(self.global_row(&rows)) {
                *acc += w * v;
            }
        }
        [rows01[0], rows01[1], h2]
    }
}

impl RateModel for HardAnalyticRates<'_> {
    fn correct(&self, offsets: Offsets) -> [f64; 2] {
        let c = self.confusion(offsets);
        [c[0][0], c[1][1]]
    }

    fn detection(&self, offsets: Offsets) -> f64 {
        self.confusion(offsets)[2][2]
    }
}

/// Simulated local score triples, `M` per trial.
struct HardMonteCarloRates {
    m: usize,
    rule: FusionRule,
    rows: [Vec<[f64; 3]>; 3],
}

impl HardMonteCarloRates {
    fn simulate(
        model: &SignalModel,
        network: &SensorNetwork,
        locals: &[Scorer],
        law: UnauthorizedPower,
        rule: FusionRule,
        trials: usize,
        seed: u64,
    ) -> Self {
        let m = network.sensor_count();
        let rows = Hypothesis::ALL.map(|h| {
            let row_seed = rng::derive(seed, h.index() as u64);
            let per_trial: Vec<Vec<[f64; 3]>> = (0..trials as u64)
                .into_par_iter()
                .map_init(
                    || vec![0.0; m],
                    |buf, t| {
                        fill_trial_energies(model, network, h, law, row_seed, t, buf);
                        buf.iter().zip(locals).map(|(&e, s)| s.scalar(e)).collect()
                    },
                )
                .collect();
            per_trial.into_iter().flatten().collect()
        });
        Self { m, rule, rows }
    }

    fn rate(&self, h: Hypothesis, offsets: Offsets) -> f64 {
        let row = &self.rows[h.index()];
        let hits = row
            .chunks_exact(self.m)
            .filter(|trial| {
                let mut c = [0usize; 3];
                for s in *trial {
                    c[pick(*s, offsets).index()] += 1;
                }
                fuse_counts(c, self.rule) == h
            })
            .count();
        hits as f64 / (row.len() / self.m) as f64
    }
}

impl RateModel for HardMonteCarloRates {
    fn correct(&self, offsets: Offsets) -> [f64; 2] {
        [self.rate(Hypothesis::NoDrone, offsets), self.rate(Hypothesis::Authorized, offsets)]
    }

    fn detection(&self, offsets: Offsets) -> f64 {
        self.rate(Hypothesis::Unauthorized, offsets)
    }
}
