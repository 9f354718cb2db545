//! Log-likelihoods of the energy statistic under the three hypotheses.
//!
//! Internally the detectors work with *reduced* scores
//! `n * (-t/mu - ln mu)`, the Gamma log-density with every term that does
//! not depend on the hypothesis dropped. Differences of reduced scores equal
//! differences of full log-likelihoods, so argmax decisions are unchanged.

use gauss_quad::legendre::GaussLegendre;

use crate::detect::Scheme;
use crate::error::{Error, Result};
use crate::signal::{SensorNetwork, SignalModel, UnauthorizedPower};
use crate::stats::EnergyLaw;

/// Nodes used to marginalize a uniform unauthorized power.
pub const PRIOR_QUADRATURE_POINTS: usize = 64;

fn check_statistic(statistic: f64) -> Result<()> {
    if statistic.is_nan() || statistic < 0.0 || statistic.is_infinite() {
        return Err(Error::NegativeStatistic(statistic));
    }
    Ok(())
}

/// Full log-densities `(l0, l1, l2)` of the energy statistic at a sensor
/// with `gain`, when the unauthorized drone's power `true_p2` is known.
pub fn genie_log_likelihoods(
    statistic: f64,
    model: &SignalModel,
    gain: f64,
    true_p2: f64,
) -> Result<[f64; 3]> {
    check_statistic(statistic)?;
    UnauthorizedPower::Fixed(true_p2).validate(model)?;
    let n = model.samples_per_block as f64;
    let law = |p: f64| EnergyLaw::new(n, model.received_power(gain, p)).ln_pdf(statistic);
    Ok([law(0.0), law(model.authorized_power), law(true_p2)])
}

/// Maximum-likelihood unauthorized power at `statistic` and the profile
/// log-likelihood it attains.
pub fn glrt_profile(statistic: f64, model: &SignalModel, gain: f64) -> Result<(f64, f64)> {
    check_statistic(statistic)?;
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::invalid("gain", format!("GLRT needs a positive gain, got {gain}")));
    }
    let p2 = model.unauthorized_power.clamp((statistic - model.noise_power) / gain);
    let n = model.samples_per_block as f64;
    let l2 = EnergyLaw::new(n, model.received_power(gain, p2)).ln_pdf(statistic);
    Ok((p2, l2))
}

/// Uniform law on `[min, max]` as `(ln weight, power)` pairs.
pub(crate) fn uniform_prior_nodes(min: f64, max: f64) -> Vec<(f64, f64)> {
    if max <= min {
        return vec![(0.0, min)];
    }
    let rule = GaussLegendre::new(PRIOR_QUADRATURE_POINTS).expect("degree >= 2");
    let half = 0.5 * (max - min);
    let mid = 0.5 * (max + min);
    // weights on [-1, 1] sum to 2; halve them to get a probability measure
    rule.iter().map(|(x, w)| ((0.5 * w).ln(), mid + half * x)).collect()
}

/// `(weight, power)` pairs representing the law of the unauthorized power.
pub(crate) fn power_law_nodes(model: &SignalModel, law: UnauthorizedPower) -> Vec<(f64, f64)> {
    match law {
        UnauthorizedPower::Fixed(p) => vec![(1.0, p)],
        UnauthorizedPower::Uniform => {
            let r = model.unauthorized_power;
            uniform_prior_nodes(r.min, r.max).into_iter().map(|(lw, p)| (lw.exp(), p)).collect()
        }
    }
}

#[inline]
fn reduced(n: f64, t: f64, mu: f64) -> f64 {
    n * (-t / mu - mu.ln())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// How the unauthorized hypothesis is scored.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum UnauthorizedTerm {
    /// Supremum over the power range (GLRT).
    Profile,
    /// Genie with a known power.
    Known(f64),
    /// Genie with a uniform power law, marginalized by quadrature.
    Marginal(Vec<(f64, f64)>),
}

/// Reduced log-likelihood scores for one detector configuration.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Scorer {
    model: SignalModel,
    gains: Vec<f64>,
    common_gain: Option<f64>,
    term: UnauthorizedTerm,
}

impl Scorer {
    pub(crate) fn new(
        model: &SignalModel,
        network: &SensorNetwork,
        scheme: Scheme,
        prior: UnauthorizedPower,
    ) -> Result<Self> {
        model.validate()?;
        prior.validate(model)?;
        let range = model.unauthorized_power;
        let term = match (scheme, prior) {
            (Scheme::Glrt, _) => UnauthorizedTerm::Profile,
            (Scheme::Genie, UnauthorizedPower::Fixed(p)) => UnauthorizedTerm::Known(p),
            (Scheme::Genie, UnauthorizedPower::Uniform) => {
                if range.width() == 0.0 {
                    UnauthorizedTerm::Known(range.min)
                } else {
                    UnauthorizedTerm::Marginal(uniform_prior_nodes(range.min, range.max))
                }
            }
        };
        Ok(Self {
            model: *model,
            gains: network.gains().to_vec(),
            common_gain: network.common_gain(),
            term,
        })
    }

    pub(crate) fn model(&self) -> &SignalModel {
        &self.model
    }

    pub(crate) fn common_gain(&self) -> Option<f64> {
        self.common_gain
    }

    pub(crate) fn is_scalar(&self) -> bool {
        self.common_gain.is_some()
    }

    /// Shape of the scalar statistic's Gamma law (`N * M`).
    pub(crate) fn effective_samples(&self) -> f64 {
        (self.model.samples_per_block * self.gains.len()) as f64
    }

    /// Means of the scalar statistic under H0 and H1 and the range of means
    /// under H2. Requires a common gain.
    pub(crate) fn scalar_means(&self) -> (f64, f64, f64, f64) {
        let g = self.common_gain.expect("scalar scorer");
        let m = &self.model;
        (
            m.noise_power,
            m.received_power(g, m.authorized_power),
            m.received_power(g, m.unauthorized_power.min),
            m.received_power(g, m.unauthorized_power.max),
        )
    }

    /// Scores of the scalar statistic (mean energy over all sensors).
    pub(crate) fn scalar(&self, t: f64) -> [f64; 3] {
        let g = self.common_gain.expect("scalar scorer");
        self.scalar_with(t, g, &self.term)
    }

    pub(crate) fn scalar_with(&self, t: f64, g: f64, term: &UnauthorizedTerm) -> [f64; 3] {
        let n = self.effective_samples();
        let m = &self.model;
        let s0 = reduced(n, t, m.noise_power);
        let s1 = reduced(n, t, m.received_power(g, m.authorized_power));
        let s2 = match term {
            UnauthorizedTerm::Known(p) => reduced(n, t, m.received_power(g, *p)),
            UnauthorizedTerm::Profile => {
                let lo = m.received_power(g, m.unauthorized_power.min);
                let hi = m.received_power(g, m.unauthorized_power.max);
                reduced(n, t, t.clamp(lo, hi))
            }
            UnauthorizedTerm::Marginal(nodes) => log_sum_exp(
                nodes.iter().map(|&(lw, p)| lw + reduced(n, t, m.received_power(g, p))),
            ),
        };
        [s0, s1, s2]
    }

    /// Scores with the unauthorized term replaced by a supplied known power.
    pub(crate) fn scalar_known(&self, t: f64, p2: f64) -> [f64; 3] {
        let g = self.common_gain.expect("scalar scorer");
        self.scalar_with(t, g, &UnauthorizedTerm::Known(p2))
    }

    /// Summed scores over sensors with per-sensor energies.
    pub(crate) fn fused(&self, energies: &[f64]) -> [f64; 3] {
        if self.common_gain.is_some() {
            return self.scalar(sorted_mean(energies));
        }
        let n = self.model.samples_per_block as f64;
        let m = &self.model;
        let sum_at = |p: f64| -> f64 {
            energies.iter().zip(&self.gains).map(|(&t, &g)| reduced(n, t, m.received_power(g, p))).sum()
        };
        let s0 = sum_at(0.0);
        let s1 = sum_at(m.authorized_power);
        let s2 = match &self.term {
            UnauthorizedTerm::Known(p) => sum_at(*p),
            UnauthorizedTerm::Profile => profile_max(sum_at, m.unauthorized_power.min, m.unauthorized_power.max),
            UnauthorizedTerm::Marginal(nodes) => log_sum_exp(nodes.iter().map(|&(lw, p)| lw + sum_at(p))),
        };
        [s0, s1, s2]
    }
}

/// Mean of `xs`, summed in sorted order so that the result does not depend
/// on the order sensors report in.
pub(crate) fn sorted_mean(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Maximizes `f` over `[lo, hi]`: coarse grid, then golden-section search
/// in the bracket around the best grid point.
pub(crate) fn profile_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return f(lo);
    }
    const GRID: usize = 64;
    let step = (hi - lo) / GRID as f64;
    let (best_i, best) = (0..=GRID)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let (_, v) = golden_max(&f, a, b, 1e-12);
    v.max(best)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub(crate) fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a) <= rel_tol * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)].into_iter().fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc })
}
