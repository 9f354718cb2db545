use serde::{Deserialize, Serialize};

use super::likelihood::Scorer;
use super::rates::{AnalyticRates, MonteCarloRates};
use super::regions::{decision_regions, Region};
use super::search::{solve, RateModel};
use super::{pick, CalibrationMethod, ConstraintPair, Offsets, Scheme};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{Hypothesis, SensorNetwork, SignalModel, UnauthorizedPower};
use crate::stats::{binomial_half_width, binomial_std_error};

/// Default rate tolerance for analytic calibration.
pub const ANALYTIC_TOLERANCE: f64 = 1e-3;
/// Default number of calibration trials per hypothesis for Monte Carlo.
pub const DEFAULT_CALIBRATION_TRIALS: usize = 100_000;
pub const DEFAULT_MAX_OUTER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub method: CalibrationMethod,
    pub seed: u64,
    /// Rate tolerance; `None` picks 1e-3 (analytic) or three binomial
    /// standard errors (Monte Carlo).
    pub tolerance: Option<f64>,
    /// Monte Carlo calibration trials per hypothesis.
    pub trials: usize,
    pub max_outer_iterations: usize,
    /// Law of the unauthorized power: what the genie knows, and the truth
    /// under which `Pr(H2|H2)` is reported. `None` is the range midpoint.
    pub unauthorized: Option<UnauthorizedPower>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            method: CalibrationMethod::AnalyticGamma,
            seed: 0,
            tolerance: None,
            trials: DEFAULT_CALIBRATION_TRIALS,
            max_outer_iterations: DEFAULT_MAX_OUTER_ITERATIONS,
            unauthorized: None,
        }
    }
}

impl CalibrationSettings {
    pub fn analytic() -> Self {
        Self::default()
    }

    pub fn monte_carlo(seed: u64, trials: usize) -> Self {
        Self { method: CalibrationMethod::MonteCarlo, seed, trials, ..Self::default() }
    }

    pub fn with_unauthorized(mut self, law: UnauthorizedPower) -> Self {
        self.unauthorized = Some(law);
        self
    }

    pub(crate) fn unauthorized_law(&self, model: &SignalModel) -> UnauthorizedPower {
        self.unauthorized.unwrap_or_else(|| UnauthorizedPower::midpoint(model))
    }
}

/// Rates achieved at the calibrated offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: CalibrationMethod,
    pub achieved_fa_h0: f64,
    pub achieved_fa_h1: f64,
    pub p_h2_given_h2: f64,
    /// 95% half-widths; zero for exact (analytic) rates.
    pub fa_h0_half_width: f64,
    pub fa_h1_half_width: f64,
    pub p_h2_half_width: f64,
    pub tolerance: f64,
    pub trials: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub grid_fallback: bool,
    /// Both false-alarm rates sit within `tolerance` of their bounds, or
    /// the offset is saturated at a sentinel.
    pub at_equality: bool,
}

/// Ternary detector with fixed offsets.
#[derive(Debug, Clone, Serialize)]
pub struct CalibratedDetector {
    scheme: Scheme,
    model: SignalModel,
    network: SensorNetwork,
    unauthorized: UnauthorizedPower,
    offsets: Offsets,
    constraints: Option<ConstraintPair>,
    regions: Option<Vec<Region>>,
    report: Option<CalibrationReport>,
    #[serde(skip)]
    scorer: Scorer,
}

impl CalibratedDetector {
    /// Detector with the given offsets. When the network has a scalar
    /// statistic, the report holds the exact rates at those offsets.
    pub fn from_offsets(
        model: &SignalModel,
        network: &SensorNetwork,
        scheme: Scheme,
        unauthorized: UnauthorizedPower,
        offsets: Offsets,
    ) -> Result<Self> {
        let scorer = Scorer::new(model, network, scheme, unauthorized)?;
        let (regions, report) = if scorer.is_scalar() {
            let rates = AnalyticRates::new(&scorer, unauthorized);
            let c = rates.confusion(offsets);
            let report = CalibrationReport {
                method: CalibrationMethod::AnalyticGamma,
                achieved_fa_h0: 1.0 - c[0][0],
                achieved_fa_h1: 1.0 - c[1][1],
                p_h2_given_h2: c[2][2],
                fa_h0_half_width: 0.0,
                fa_h1_half_width: 0.0,
                p_h2_half_width: 0.0,
                tolerance: ANALYTIC_TOLERANCE,
                trials: None,
                iterations: 0,
                converged: true,
                grid_fallback: false,
                at_equality: false,
            };
            (Some(rates.regions(offsets)), Some(report))
        } else {
            (None, None)
        };
        Ok(Self {
            scheme,
            model: *model,
            network: network.clone(),
            unauthorized,
            offsets,
            constraints: None,
            regions,
            report,
            scorer,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    pub fn network(&self) -> &SensorNetwork {
        &self.network
    }

    pub fn unauthorized(&self) -> UnauthorizedPower {
        self.unauthorized
    }

    pub fn offsets(&self) -> Offsets {
        self.offsets
    }

    pub fn constraints(&self) -> Option<ConstraintPair> {
        self.constraints
    }

    /// Partition of `[0, inf)` by decision, for detectors whose statistic is
    /// a scalar (one sensor, or equal gains).
    pub fn regions(&self) -> Option<&[Region]> {
        self.regions.as_deref()
    }

    pub fn report(&self) -> Option<&CalibrationReport> {
        self.report.as_ref()
    }

    /// Exact `Pr(decide Hj | Hi)` for scalar detectors.
    pub fn exact_confusion(&self) -> Option<[[f64; 3]; 3]> {
        self.scorer
            .is_scalar()
            .then(|| AnalyticRates::new(&self.scorer, self.unauthorized).confusion(self.offsets))
    }

    /// Decision on a scalar statistic (the mean energy over all sensors).
    ///
    /// The genie scheme needs `genie_p2`, the unauthorized power it is told;
    /// with a uniform prior the genie knows only the law, so the value is
    /// range-checked and the marginal likelihood is used. GLRT takes `None`.
    pub fn decide(&self, statistic: f64, genie_p2: Option<f64>) -> Result<Hypothesis> {
        if statistic.is_nan() || statistic < 0.0 || statistic.is_infinite() {
            return Err(Error::NegativeStatistic(statistic));
        }
        if !self.scorer.is_scalar() {
            return Err(Error::NotScalar);
        }
        let scores = match (self.scheme, genie_p2) {
            (Scheme::Glrt, None) => self.scorer.scalar(statistic),
            (Scheme::Glrt, Some(_)) => {
                return Err(Error::SchemeMismatch("GLRT does not take a genie power".into()))
            }
            (Scheme::Genie, None) => {
                return Err(Error::SchemeMismatch("genie scheme needs the unauthorized power".into()))
            }
            (Scheme::Genie, Some(p)) => {
                UnauthorizedPower::Fixed(p).validate(&self.model)?;
                match self.unauthorized {
                    UnauthorizedPower::Fixed(_) => self.scorer.scalar_known(statistic, p),
                    UnauthorizedPower::Uniform => self.scorer.scalar(statistic),
                }
            }
        };
        Ok(pick(scores, self.offsets))
    }

    /// The genie argument matching this detector's own knowledge.
    pub fn genie_hint(&self) -> Option<f64> {
        match (self.scheme, self.unauthorized) {
            (Scheme::Glrt, _) => None,
            (Scheme::Genie, UnauthorizedPower::Fixed(p)) => Some(p),
            (Scheme::Genie, UnauthorizedPower::Uniform) => Some(self.model.unauthorized_power.midpoint()),
        }
    }

    /// Decision on per-sensor energies (likelihoods summed over sensors).
    pub fn decide_energies(&self, energies: &[f64]) -> Result<Hypothesis> {
        if energies.len() != self.network.sensor_count() {
            return Err(Error::LengthMismatch { expected: self.network.sensor_count(), got: energies.len() });
        }
        if let Some(&bad) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::NegativeStatistic(bad));
        }
        Ok(self.decide_unchecked(energies))
    }

    pub(crate) fn decide_unchecked(&self, energies: &[f64]) -> Hypothesis {
        pick(self.scorer.fused(energies), self.offsets)
    }
}

/// Free-function form of [`CalibratedDetector::decide`].
pub fn decide(statistic: f64, detector: &CalibratedDetector, genie_p2: Option<f64>) -> Result<Hypothesis> {
    detector.decide(statistic, genie_p2)
}

/// Finds offsets that maximize `Pr(H2|H2)` under the false-alarm bounds.
///
/// For networks with more than one sensor the constraints apply to the
/// fused (likelihood-sum) decision.
pub fn calibrate(
    model: &SignalModel,
    network: &SensorNetwork,
    scheme: Scheme,
    constraints: ConstraintPair,
    settings: &CalibrationSettings,
) -> Result<CalibratedDetector> {
    if let Some(t) = settings.tolerance {
        if !(t > 0.0) {
            return Err(Error::invalid("tolerance", format!("must be > 0, got {t}")));
        }
    }
    let law = settings.unauthorized_law(model);
    let scorer = Scorer::new(model, network, scheme, law)?;
    let (alpha, beta) = (constraints.alpha(), constraints.beta());

    let (offsets, report) = match settings.method {
        CalibrationMethod::AnalyticGamma => {
            if !scorer.is_scalar() {
                return Err(Error::Unsupported(
                    "analytic calibration needs equal sensor gains; use monte_carlo".into(),
                ));
            }
            let rates = AnalyticRates::new(&scorer, law);
            let sol = solve(&rates, constraints, settings.max_outer_iterations)?;
            let c = rates.confusion(sol.offsets);
            let tol = settings.tolerance.unwrap_or(ANALYTIC_TOLERANCE);
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
                at_equality: at_equality(sol.offsets, fa, constraints, [tol, tol]),
            };
            (sol.offsets, report)
        }
        CalibrationMethod::MonteCarlo => {
            if settings.trials == 0 {
                return Err(Error::invalid("trials", "need at least one calibration trial"));
            }
            let seed = rng::derive_tag(settings.seed, "calibration");
            let rates = MonteCarloRates::simulate(&scorer, network, law, settings.trials, seed);
            let sol = solve(&rates, constraints, settings.max_outer_iterations)?;
            let [p00, p11] = rates.correct(sol.offsets);
            let p22 = rates.detection(sol.offsets);
            let n = rates.trials() as u64;
            let tols = match settings.tolerance {
                Some(t) => [t, t],
                None => [3.0 * binomial_std_error(alpha, n), 3.0 * binomial_std_error(beta, n)],
            };
            let fa = [1.0 - p00, 1.0 - p11];
            let count = |p: f64| (p * n as f64).round() as u64;
            let report = CalibrationReport {
                method: settings.method,
                achieved_fa_h0: fa[0],
                achieved_fa_h1: fa[1],
                p_h2_given_h2: p22,
                fa_h0_half_width: binomial_half_width(count(fa[0]), n),
                fa_h1_half_width: binomial_half_width(count(fa[1]), n),
                p_h2_half_width: binomial_half_width(count(p22), n),
                tolerance: tols[0].max(tols[1]),
                trials: Some(settings.trials),
                iterations: sol.iterations,
                converged: sol.converged,
                grid_fallback: sol.grid_fallback,
                at_equality: at_equality(sol.offsets, fa, constraints, tols),
            };
            (sol.offsets, report)
        }
    };

    let regions = scorer.is_scalar().then(|| decision_regions(&scorer, offsets));
    Ok(CalibratedDetector {
        scheme,
        model: *model,
        network: network.clone(),
        unauthorized: law,
        offsets,
        constraints: Some(constraints),
        regions,
        report: Some(report),
        scorer,
    })
}

fn at_equality(offsets: Offsets, fa: [f64; 2], c: ConstraintPair, tol: [f64; 2]) -> bool {
    let active = |off: f64, rate: f64, bound: f64, tol: f64| !off.is_finite() || (rate - bound).abs() <= tol;
    active(offsets.h0, fa[0], c.alpha(), tol[0]) && active(offsets.h1, fa[1], c.beta(), tol[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::PowerRange;

    fn model(n: usize) -> SignalModel {
        SignalModel::new(1.0, 3.0, PowerRange::new(6.0, 18.0).unwrap(), n).unwrap()
    }

    fn single() -> SensorNetwork {
        SensorNetwork::single(1.0).unwrap()
    }

    #[test]
    fn unconstrained_gives_sentinels() {
        for scheme in [Scheme::Genie, Scheme::Glrt] {
            let d = calibrate(&model(16), &single(), scheme, ConstraintPair::new(1.0, 1.0).unwrap(), &CalibrationSettings::analytic())
                .unwrap();
            assert_eq!(d.offsets(), Offsets::NEG_INF);
            assert_eq!(d.report().unwrap().p_h2_given_h2, 1.0);
            assert_eq!(d.regions().unwrap().len(), 1);
        }
    }

    #[test]
    fn analytic_calibration_meets_constraints_with_equality() {
        for scheme in [Scheme::Genie, Scheme::Glrt] {
            for level in [0.02, 0.1, 0.3] {
                let c = ConstraintPair::symmetric(level).unwrap();
                let d = calibrate(&model(16), &single(), scheme, c, &CalibrationSettings::analytic()).unwrap();
                let r = d.report().unwrap();
                assert!(r.converged, "{scheme:?} {level}: {r:?}");
                assert!((r.achieved_fa_h0 - level).abs() < 1e-6, "{r:?}");
                assert!((r.achieved_fa_h1 - level).abs() < 1e-6, "{r:?}");
                assert!(r.at_equality);
            }
        }
    }

    #[test]
    fn zero_alpha_is_infeasible() {
        let c = ConstraintPair::new(0.0, 0.1).unwrap();
        let err = calibrate(&model(16), &single(), Scheme::Glrt, c, &CalibrationSettings::analytic()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        let c = ConstraintPair::new(0.0, 1.0).unwrap();
        let d = calibrate(&model(16), &single(), Scheme::Glrt, c, &CalibrationSettings::analytic()).unwrap();
        assert_eq!(d.report().unwrap().achieved_fa_h0, 0.0);
    }

    #[test]
    fn indistinguishable_hypotheses_are_infeasible() {
        // H1 barely differs from H0: both can't be 99% correct
        let m = SignalModel::new(1.0, 0.01, PowerRange::new(1.0, 3.0).unwrap(), 8).unwrap();
        let c = ConstraintPair::symmetric(0.01).unwrap();
        for method in [CalibrationSettings::analytic(), CalibrationSettings::monte_carlo(1, 20_000)] {
            let err = calibrate(&m, &single(), Scheme::Genie, c, &method).unwrap_err();
            assert!(matches!(err, Error::Infeasible { .. }), "{err:?}");
        }
    }

    #[test]
    fn decide_checks_scheme_arguments() {
        let c = ConstraintPair::symmetric(0.1).unwrap();
        let glrt = calibrate(&model(16), &single(), Scheme::Glrt, c, &CalibrationSettings::analytic()).unwrap();
        assert!(matches!(glrt.decide(1.0, Some(2.0)), Err(Error::SchemeMismatch(_))));
        assert!(glrt.decide(-1.0, None).is_err());
        let genie = calibrate(&model(16), &single(), Scheme::Genie, c, &CalibrationSettings::analytic()).unwrap();
        assert!(matches!(genie.decide(1.0, None), Err(Error::SchemeMismatch(_))));
        assert!(genie.decide(1.0, Some(30.0)).is_err());
        assert!(genie.decide(1.0, Some(10.0)).is_ok());
    }

    #[test]
    fn saturated_offsets_never_or_always_alarm() {
        let m = model(16);
        for scheme in [Scheme::Genie, Scheme::Glrt] {
            let hi = CalibratedDetector::from_offsets(&m, &single(), scheme, UnauthorizedPower::midpoint(&m), Offsets::POS_INF).unwrap();
            let lo = CalibratedDetector::from_offsets(&m, &single(), scheme, UnauthorizedPower::midpoint(&m), Offsets::NEG_INF).unwrap();
            for i in 0..200 {
                let t = i as f64 * 0.05;
                assert_ne!(hi.decide(t, hi.genie_hint()).unwrap(), Hypothesis::Unauthorized);
                assert_eq!(lo.decide(t, lo.genie_hint()).unwrap(), Hypothesis::Unauthorized);
            }
        }
    }

    #[test]
    fn heterogeneous_network_needs_monte_carlo() {
        let net = SensorNetwork::new(vec![1.0, 0.5]).unwrap();
        let c = ConstraintPair::symmetric(0.1).unwrap();
        let err = calibrate(&model(8), &net, Scheme::Glrt, c, &CalibrationSettings::analytic()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let d = calibrate(&model(8), &net, Scheme::Glrt, c, &CalibrationSettings::monte_carlo(3, 20_000)).unwrap();
        let r = d.report().unwrap();
        assert!(r.achieved_fa_h0 <= 0.1 && r.achieved_fa_h1 <= 0.1);
        assert!(d.regions().is_none());
        assert!(matches!(d.decide(1.0, None), Err(Error::NotScalar)));
        assert!(d.decide_energies(&[1.0, 2.0]).is_ok());
        assert!(matches!(d.decide_energies(&[1.0]), Err(Error::LengthMismatch { .. })));
    }
}
