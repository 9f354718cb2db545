//! Property checks over emitted results, used by the `check` command and
//! the test suites.

use std::collections::BTreeMap;

use serde::Serialize;

use super::csv::{ConfusionRow, GridRow, QuickestRow, TradeoffRow};
use super::ConfusionMatrix;
use crate::signal::Hypothesis;
use crate::stats::binomial_half_width;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Finding {
    fn new(check: &str, failures: Vec<String>, checked: usize) -> Self {
        let passed = failures.is_empty();
        let detail = if passed { format!("{checked} comparisons") } else { failures.join("; ") };
        Self { check: check.into(), passed, detail }
    }

    fn skipped(check: &str, why: &str) -> Self {
        Self { check: check.into(), passed: true, detail: format!("skipped: {why}") }
    }
}

pub fn all_passed(findings: &[Finding]) -> bool {
    findings.iter().all(|f| f.passed)
}

/// `(label, value, half-width)` steps that must not decrease by more than
/// twice the larger half-width.
fn non_decreasing(points: &[(String, f64, f64)], failures: &mut Vec<String>) -> usize {
    for w in points.windows(2) {
        let (ref a, pa, ha) = w[0];
        let (ref b, pb, hb) = w[1];
        if pb < pa - 2.0 * ha.max(hb) {
            failures.push(format!("{b} ({pb}) below {a} ({pa})"));
        }
    }
    points.len().saturating_sub(1)
}

fn range_check(name: &str, values: impl Iterator<Item = (String, f64)>) -> Finding {
    let mut failures = Vec::new();
    let mut n = 0;
    for (label, v) in values {
        n += 1;
        if v.is_nan() {
            failures.push(format!("{label}: missing value (failed point)"));
        } else if !(0.0..=1.0).contains(&v) {
            failures.push(format!("{label}: {v} outside [0, 1]"));
        }
    }
    Finding::new(name, failures, n)
}

fn audit(rate: f64, bound: f64, trials: u64) -> bool {
    let hw = binomial_half_width((rate * trials as f64).round() as u64, trials);
    rate <= bound + 3.0 * hw
}

/// Probability ranges, monotonicity in `alpha = beta` and in `N`, genie
/// dominance, and (given the trial count) the constraint audit.
pub fn check_tradeoff(rows: &[TradeoffRow], trials: Option<u64>) -> Vec<Finding> {
    let finite: Vec<&TradeoffRow> = rows.iter().filter(|r| !r.p_h2_given_h2.is_nan()).collect();
    let mut out = vec![range_check(
        "probabilities",
        rows.iter().flat_map(|r| {
            let l = format!("{} a={} N={}", r.scheme, r.alpha_beta, r.n_samples);
            [(l.clone(), r.p_h2_given_h2), (l.clone(), r.achieved_fa_h0), (l, r.achieved_fa_h1)]
        }),
    )];

    let mut by_curve: BTreeMap<(String, usize), Vec<&TradeoffRow>> = BTreeMap::new();
    let mut by_alpha: BTreeMap<(String, u64), Vec<&TradeoffRow>> = BTreeMap::new();
    for r in &finite {
        by_curve.entry((r.scheme.clone(), r.n_samples)).or_default().push(r);
        by_alpha.entry((r.scheme.clone(), r.alpha_beta.to_bits())).or_default().push(r);
    }
    let (mut failures, mut n) = (Vec::new(), 0);
    for ((scheme, ns), mut curve) in by_curve {
        curve.sort_by(|a, b| a.alpha_beta.total_cmp(&b.alpha_beta));
        let pts: Vec<_> = curve
            .iter()
            .map(|r| (format!("{scheme} N={ns} a={}", r.alpha_beta), r.p_h2_given_h2, r.half_width))
            .collect();
        n += non_decreasing(&pts, &mut failures);
    }
    out.push(Finding::new("non-decreasing in alpha=beta", failures, n));

    let (mut failures, mut n) = (Vec::new(), 0);
    for ((scheme, _), mut col) in by_alpha {
        col.sort_by_key(|r| r.n_samples);
        let pts: Vec<_> = col
            .iter()
            .map(|r| (format!("{scheme} a={} N={}", r.alpha_beta, r.n_samples), r.p_h2_given_h2, r.half_width))
            .collect();
        n += non_decreasing(&pts, &mut failures);
    }
    out.push(Finding::new("non-decreasing in N", failures, n));

    let (mut failures, mut n) = (Vec::new(), 0);
    for g in finite.iter().filter(|r| r.scheme == "genie") {
        if let Some(l) = finite
            .iter()
            .find(|r| r.scheme == "glrt" && r.n_samples == g.n_samples && r.alpha_beta == g.alpha_beta)
        {
            n += 1;
            if g.p_h2_given_h2 < l.p_h2_given_h2 - 2.0 * g.half_width.max(l.half_width) {
                failures.push(format!(
                    "a={} N={}: genie {} < glrt {}",
                    g.alpha_beta, g.n_samples, g.p_h2_given_h2, l.p_h2_given_h2
                ));
            }
        }
    }
    out.push(Finding::new("genie dominates glrt", failures, n));

    out.push(match trials {
        Some(t) => {
            let mut failures = Vec::new();
            for r in &finite {
                for (name, rate) in [("fa_h0", r.achieved_fa_h0), ("fa_h1", r.achieved_fa_h1)] {
                    if !audit(rate, r.alpha_beta, t) {
                        failures.push(format!("{} a={} N={}: {name} {rate}", r.scheme, r.alpha_beta, r.n_samples));
                    }
                }
            }
            Finding::new("constraint audit", failures, 2 * finite.len())
        }
        None => Finding::skipped("constraint audit", "trial count unknown"),
    });
    out
}

/// Ranges, monotonicity in `M` and `N`, diminishing returns in `M`, and
/// (given the constraints and trial count) the constraint audit.
pub fn check_grid(rows: &[GridRow], constraints: Option<(f64, f64)>, trials: Option<u64>) -> Vec<Finding> {
    let finite: Vec<&GridRow> = rows.iter().filter(|r| !r.p_h2_given_h2.is_nan()).collect();
    let mut out = vec![range_check(
        "probabilities",
        rows.iter().flat_map(|r| {
            let l = format!("M={} N={}", r.m_sensors, r.n_samples);
            [(l.clone(), r.p_h2_given_h2), (l.clone(), r.achieved_fa_h0), (l, r.achieved_fa_h1)]
        }),
    )];
    let mut by_n: BTreeMap<usize, Vec<&GridRow>> = BTreeMap::new();
    let mut by_m: BTreeMap<usize, Vec<&GridRow>> = BTreeMap::new();
    for r in &finite {
        by_n.entry(r.n_samples).or_default().push(r);
        by_m.entry(r.m_sensors).or_default().push(r);
    }

    let (mut failures, mut n) = (Vec::new(), 0);
    let (mut dim_failures, mut dim_n) = (Vec::new(), 0);
    for (ns, mut col) in by_n {
        col.sort_by_key(|r| r.m_sensors);
        let pts: Vec<_> =
            col.iter().map(|r| (format!("N={ns} M={}", r.m_sensors), r.p_h2_given_h2, r.half_width)).collect();
        n += non_decreasing(&pts, &mut failures);
        if col.len() >= 3 {
            dim_n += 1;
            let k = col.len();
            let first = col[1].p_h2_given_h2 - col[0].p_h2_given_h2;
            let last = col[k - 1].p_h2_given_h2 - col[k - 2].p_h2_given_h2;
            let hw = [col[0], col[1], col[k - 2], col[k - 1]].iter().map(|r| r.half_width).fold(0.0, f64::max);
            if last > first + 2.0 * hw {
                dim_failures.push(format!("N={ns}: last M step gains {last}, first {first}"));
            }
        }
    }
    out.push(Finding::new("non-decreasing in M", failures, n));

    let (mut failures, mut n) = (Vec::new(), 0);
    for (m, mut row) in by_m {
        row.sort_by_key(|r| r.n_samples);
        let pts: Vec<_> =
            row.iter().map(|r| (format!("M={m} N={}", r.n_samples), r.p_h2_given_h2, r.half_width)).collect();
        n += non_decreasing(&pts, &mut failures);
    }
    out.push(Finding::new("non-decreasing in N", failures, n));
    out.push(Finding::new("diminishing returns in M", dim_failures, dim_n));

    out.push(match (constraints, trials) {
        (Some((alpha, beta)), Some(t)) => {
            let mut failures = Vec::new();
            for r in &finite {
                if !audit(r.achieved_fa_h0, alpha, t) || !audit(r.achieved_fa_h1, beta, t) {
                    failures.push(format!(
                        "M={} N={}: fa {} / {}",
                        r.m_sensors, r.n_samples, r.achieved_fa_h0, r.achieved_fa_h1
                    ));
                }
            }
            Finding::new("constraint audit", failures, finite.len())
        }
        _ => Finding::skipped("constraint audit", "constraints or trial count unknown"),
    });
    out
}

/// ARL strictly increasing in `h`; delay non-decreasing within its
/// half-width.
pub fn check_quickest(rows: &[QuickestRow]) -> Vec<Finding> {
    let mut sorted: Vec<&QuickestRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.threshold_h.total_cmp(&b.threshold_h));
    let mut arl = Vec::new();
    let mut delay = Vec::new();
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b.arl > a.arl) {
            arl.push(format!("h={}: ARL {} not above {} at h={}", b.threshold_h, b.arl, a.arl, a.threshold_h));
        }
        if !a.delay.is_nan()
            && !b.delay.is_nan()
            && b.delay < a.delay - 2.0 * a.delay_half_width.max(b.delay_half_width)
        {
            delay.push(format!("h={}: delay {} below {}", b.threshold_h, b.delay, a.delay));
        }
    }
    let n = sorted.len().saturating_sub(1);
    let mut positive = Vec::new();
    for r in rows {
        if !(r.arl >= 1.0) || (!r.delay.is_nan() && !(r.delay >= 1.0)) {
            positive.push(format!("h={}: run lengths below one sample", r.threshold_h));
        }
    }
    vec![
        Finding::new("run lengths >= 1", positive, rows.len()),
        Finding::new("ARL increasing in h", arl, n),
        Finding::new("delay non-decreasing in h", delay, n),
    ]
}

/// Rows of a written confusion file sum to one (up to print rounding).
pub fn check_confusion_rows(rows: &[ConfusionRow]) -> Vec<Finding> {
    let mut failures = Vec::new();
    for r in rows {
        let p = r.probabilities();
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-5 || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            failures.push(format!("{}: row {p:?} sums to {sum}", r.true_hypothesis));
        }
    }
    vec![Finding::new("row-stochastic", failures, rows.len())]
}

/// Row sums and the false-alarm identity on an in-memory matrix.
pub fn check_matrix(c: &ConfusionMatrix) -> Vec<Finding> {
    let mut rows = Vec::new();
    let mut identity = Vec::new();
    let mut n = 0;
    for h in Hypothesis::ALL {
        let Some(row) = c.row(h) else { continue };
        n += 1;
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            rows.push(format!("{h}: {row:?}"));
        }
        let off: f64 = Hypothesis::ALL.iter().filter(|d| **d != h).map(|d| row[d.index()]).sum();
        let fa = c.false_alarm(h).expect("simulated row");
        if (fa - off).abs() > 1e-12 {
            identity.push(format!("{h}: {fa} vs {off}"));
        }
    }
    vec![Finding::new("row-stochastic", rows, n), Finding::new("false-alarm identity", identity, n)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, a: f64, n: usize, p: f64) -> TradeoffRow {
        TradeoffRow {
            scheme: scheme.into(),
            alpha_beta: a,
            n_samples: n,
            p_h2_given_h2: p,
            half_width: 0.01,
            achieved_fa_h0: a,
            achieved_fa_h1: a,
        }
    }

    #[test]
    fn tradeoff_violations_are_found() {
        let good = vec![row("glrt", 0.1, 16, 0.5), row("glrt", 0.2, 16, 0.6), row("glrt", 0.1, 64, 0.7)];
        assert!(all_passed(&check_tradeoff(&good, Some(1000))));
        let bad = vec![row("glrt", 0.1, 16, 0.5), row("glrt", 0.2, 16, 0.3)];
        let f = check_tradeoff(&bad, None);
        assert!(!f.iter().find(|f| f.check == "non-decreasing in alpha=beta").unwrap().passed);
        let mut over = row("glrt", 0.1, 16, 0.5);
        over.achieved_fa_h0 = 0.2;
        assert!(!all_passed(&check_tradeoff(&[over], Some(10_000))));
    }

    #[test]
    fn quickest_checks() {
        let q = |h: f64, arl: f64| QuickestRow { threshold_h: h, arl, arl_half_width: 1.0, delay: h, delay_half_width: 0.1 };
        assert!(all_passed(&check_quickest(&[q(3.0, 20.0), q(5.0, 100.0)])));
        assert!(!all_passed(&check_quickest(&[q(3.0, 20.0), q(5.0, 20.0)])));
    }

    #[test]
    fn matrix_identity_holds() {
        let c = ConfusionMatrix::from_counts([[97, 2, 1], [3, 90, 7], [0, 0, 0]]);
        assert!(all_passed(&check_matrix(&c)));
    }
}
