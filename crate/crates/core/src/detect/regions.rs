//! Decision regions of a scalar detector.
//!
//! With the unauthorized score convex in the statistic (a supremum or a
//! log-sum-exp of linear functions) and the other two scores linear, every
//! pairwise score difference involving H2 is concave and the H0-H1
//! difference is linear. Each pairwise "i beats j" set is therefore a single
//! interval, so the argmax can only change at the (at most five) endpoints
//! of those intervals.

use serde::{Deserialize, Serialize};

use super::likelihood::{golden_max, Scorer};
use super::{pick, Offsets};
use crate::signal::Hypothesis;
use crate::stats::EnergyLaw;

/// Bracketing tolerance for region endpoints, in units of the statistic.
pub const ENDPOINT_TOLERANCE: f64 = 1e-10;

/// Half-open statistic interval `[lower, upper)` with its decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: f64,
    #[serde(with = "crate::detect::serde_extended")]
    pub upper: f64,
    pub label: Hypothesis,
}

impl Region {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t < self.upper
    }
}

/// Endpoints of `{t >= 0 : d(t) >= 0}` for concave `d`.
fn superlevel_endpoints(d: &impl Fn(f64) -> f64, scale: f64) -> Vec<f64> {
    let mut upper = scale;
    let (mut t_max, mut d_max) = golden_max(d, 0.0, upper, 1e-13);
    for _ in 0..40 {
        if t_max < 0.95 * upper {
            break;
        }
        upper *= 8.0;
        (t_max, d_max) = golden_max(d, 0.0, upper, 1e-13);
    }
    if d_max < 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2);
    if d(0.0) < 0.0 {
        out.push(bisect(d, 0.0, t_max));
    }
    let mut right = (2.0 * t_max).max(upper);
    for _ in 0..60 {
        if d(right) < 0.0 {
            out.push(bisect(d, t_max, right));
            break;
        }
        right *= 8.0;
    }
    out
}

/// Sign change of `d` between `a` and `b` (`d(a)` and `d(b)` on opposite
/// sides of zero, with `>= 0` counted as non-negative).
fn bisect(d: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let a_nonneg = d(a) >= 0.0;
    while b - a > ENDPOINT_TOLERANCE {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (d(mid) >= 0.0) == a_nonneg {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

pub(crate) fn decision_regions(scorer: &Scorer, offsets: Offsets) -> Vec<Region> {
    let (_, _, _, mu_max) = scorer.scalar_means();
    let scale = 2.0 * mu_max;
    let off = [offsets.h0, offsets.h1, 0.0];

    let mut cuts = Vec::new();
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        if !(off[i].is_finite() && off[j].is_finite()) {
            continue;
        }
        let d = |t: f64| {
            let s = scorer.scalar(t);
            (s[i] + off[i]) - (s[j] + off[j])
        };
        cuts.extend(superlevel_endpoints(&d, scale));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= ENDPOINT_TOLERANCE);

    let label_at = |t: f64| pick(scorer.scalar(t), offsets);
    let mut regions: Vec<Region> = Vec::with_capacity(cuts.len() + 1);
    let mut lower = 0.0;
    for (k, &cut) in cuts.iter().chain(std::iter::once(&f64::INFINITY)).enumerate() {
        let probe = if cut.is_finite() {
            0.5 * (lower + cut)
        } else if k == 0 {
            scale
        } else {
            2.0 * lower + scale
        };
        let label = label_at(probe);
        match regions.last_mut() {
            Some(last) if last.label == label => last.upper = cut,
            _ => regions.push(Region { lower, upper: cut, label }),
        }
        lower = cut;
    }
    regions
}

/// `Pr(decision = label)` when the statistic follows `law`.
pub(crate) fn region_probability(regions: &[Region], law: &EnergyLaw, label: Hypothesis) -> f64 {
    regions.iter().filter(|r| r.label == label).map(|r| law.interval(r.lower, r.upper)).sum()
}
