//! Constrained offset search.
//!
//! Raising the H0 offset grows the H0 region and shrinks both others; raising
//! the H1 offset does the same for H1. Both moves can only shrink the H2
//! region, so the best feasible pair is the componentwise-least one
//! satisfying `Pr(H0|H0) >= 1 - alpha` and `Pr(H1|H1) >= 1 - beta`.
//! Starting from `(-inf, -inf)` and alternately raising each offset to the
//! least value meeting its own constraint yields a non-decreasing sequence
//! that stays below every feasible pair and converges to that least pair.
//! On discrete statistics the least pair can sit on an open boundary; the
//! search then steps along the diagonal to the nearest feasible point.
//! When the alternation converges slowly it is finished by bisection on
//! its fixed point (see `bisect_fixed_point`).

use super::{ConstraintPair, Offsets};
use crate::error::{Error, Result};

/// Offsets larger than this in magnitude are treated as infinite.
const OFFSET_LIMIT: f64 = 1e12;
/// Common shift that makes the unauthorized score irrelevant when probing
/// the two-way H0/H1 test.
const BINARY_SHIFT: f64 = 1e9;
/// Alternating steps before switching to bisection on the fixed point.
const ALTERNATING_STEPS: usize = 8;
/// Relative margin that keeps an H0/H1 tie on the H0 side after rounding.
const TIE_GUARD: f64 = 1e-9;

pub(crate) trait RateModel {
    /// `[Pr(H0|H0), Pr(H1|H1)]`.
    fn correct(&self, offsets: Offsets) -> [f64; 2];

    /// `Pr(H2|H2)`.
    fn detection(&self, offsets: Offsets) -> f64;

    /// Least H0 offset `>= lower` with `Pr(H0|H0) >= target` at H1 offset `h1`.
    fn min_offset_h0(&self, h1: f64, target: f64, lower: f64) -> f64 {
        least_offset(|x| self.correct(Offsets::new(x, h1))[0], target, lower)
    }

    /// Least H1 offset `>= lower` with `Pr(H1|H1) >= target` at H0 offset `h0`.
    fn min_offset_h1(&self, h0: f64, target: f64, lower: f64) -> f64 {
        least_offset(|x| self.correct(Offsets::new(h0, x))[1], target, lower)
    }
}

/// Least `x >= lower` with non-decreasing `f(x) >= target`, by bracketing and
/// bisection. Returns `+inf` when no finite offset reaches the target.
pub(crate) fn least_offset(f: impl Fn(f64) -> f64, target: f64, lower: f64) -> f64 {
    if target <= 0.0 || f(lower) >= target {
        return lower;
    }
    let (mut lo, mut hi);
    let mut step = 1.0;
    if lower.is_finite() {
        lo = lower;
        hi = lower + step;
    } else {
        lo = f64::NEG_INFINITY;
        hi = 0.0;
    }
    while f(hi) < target {
        lo = hi;
        step *= 2.0;
        hi += step;
        if hi > OFFSET_LIMIT {
            return f64::INFINITY;
        }
    }
    if lo == f64::NEG_INFINITY {
        step = 1.0;
        loop {
            let probe = hi - step;
            if f(probe) < target {
                lo = probe;
                break;
            }
            hi = probe;
            step *= 2.0;
            if hi < -OFFSET_LIMIT {
                return f64::NEG_INFINITY;
            }
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Solution {
    pub offsets: Offsets,
    pub iterations: usize,
    pub converged: bool,
    pub grid_fallback: bool,
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())))
}

pub(crate) fn solve(model: &impl RateModel, c: ConstraintPair, max_outer: usize) -> Result<Solution> {
    let (alpha, beta) = (c.alpha(), c.beta());
    let done = |offsets| Ok(Solution { offsets, iterations: 0, converged: true, grid_fallback: false });
    let infeasible = |best_p11| Err(Error::Infeasible { alpha, beta, best_p11 });

    // Exact-one targets need an infinite offset on a continuous statistic.
    if alpha == 0.0 {
        return if beta >= 1.0 { done(Offsets::new(f64::INFINITY, f64::NEG_INFINITY)) } else { infeasible(0.0) };
    }
    if beta == 0.0 {
        let p11 = model.correct(Offsets::new(f64::NEG_INFINITY, f64::INFINITY))[1];
        return if alpha >= 1.0 { done(Offsets::new(f64::NEG_INFINITY, f64::INFINITY)) } else { infeasible(p11) };
    }

    // Feasibility: the H0/H1 test alone (H2 never chosen) is the most
    // favourable case for both constraints.
    if alpha < 1.0 && beta < 1.0 {
        let binary = |delta: f64| model.correct(Offsets::new(BINARY_SHIFT + delta, BINARY_SHIFT));
        let delta = least_offset(|d| binary(d)[0], 1.0 - alpha, f64::NEG_INFINITY);
        let best_p11 = if delta.is_finite() { binary(delta)[1] } else { 0.0 };
        if best_p11 < 1.0 - beta - 1e-12 {
            return infeasible(best_p11);
        }
    }

    let mut h0 = f64::NEG_INFINITY;
    let mut h1 = f64::NEG_INFINITY;
    let steps = max_outer.min(ALTERNATING_STEPS);
    for it in 1..=steps {
        let n0 = model.min_offset_h0(h1, 1.0 - alpha, h0);
        let n1 = model.min_offset_h1(n0, 1.0 - beta, h1);
        if n0 == f64::INFINITY || n1 == f64::INFINITY {
            let p11 = model.correct(Offsets::new(n0, n1))[1];
            return infeasible(p11);
        }
        let settled = close(n0, h0) && close(n1, h1);
        let prev_h1 = h1;
        h0 = n0;
        h1 = n1;
        if !settled {
            continue;
        }
        if feasible(model.correct(Offsets::new(h0, h1)), c) {
            return Ok(Solution { offsets: Offsets::new(h0, h1), iterations: it, converged: true, grid_fallback: false });
        }
        // Tie chase: on a discrete statistic H0 wins an H0/H1 tie but H1
        // needs a strict lead, so the two offsets creep up together. Keep
        // the difference at which H0 holds its ties (plus a rounding guard)
        // and jump to the least feasible point on that diagonal.
        let base = Offsets::new(n0 + TIE_GUARD * (1.0 + n0.abs()), prev_h1.max(n0 - OFFSET_LIMIT.sqrt()));
        return match diagonal_feasible(model, c, base) {
            Some(o) => Ok(Solution { offsets: o, iterations: it, converged: true, grid_fallback: false }),
            None => infeasible(model.correct(Offsets::new(h0, h1))[1]),
        };
    }
    if steps < max_outer && h0.is_finite() && h1.is_finite() {
        if let Some(sol) = bisect_fixed_point(model, c, Offsets::new(h0, h1), steps, max_outer)? {
            return Ok(sol);
        }
    }
    grid_refine(model, c, Offsets::new(h0, h1), max_outer)
}

/// Finishes a slowly converging alternation.
///
/// Write `g(x)` for the least H0 offset at H1 offset `x` and `psi(x)` for
/// the least H1 offset at H0 offset `g(x)`. The alternation is `x <- psi(x)`
/// and the optimal H1 offset is its least fixed point `x*`. Every `x` from
/// the current iterate up to `x*` has `psi(x) > x`, so `psi(x) <= x` proves
/// `x >= x*`, and then `(g(x), psi(x))` is feasible. Bisection on that test
/// locates `x*`.
fn bisect_fixed_point(
    model: &impl RateModel,
    c: ConstraintPair,
    lower: Offsets,
    mut iterations: usize,
    max_outer: usize,
) -> Result<Option<Solution>> {
    let psi = |x: f64| {
        let a = model.min_offset_h0(x, 1.0 - c.alpha(), lower.h0);
        (a, model.min_offset_h1(a, 1.0 - c.beta(), lower.h1))
    };
    let accept = |x: f64| {
        let (a, b) = psi(x);
        (b <= x).then_some(Offsets::new(a, b))
    };

    let mut lo = lower.h1;
    let mut step = 1e-6 * (1.0 + lo.abs());
    let mut best = loop {
        let hi = lo + step;
        iterations += 1;
        if let Some(o) = accept(hi) {
            break (hi, o);
        }
        if hi > OFFSET_LIMIT || iterations >= max_outer {
            return Ok(None);
        }
        lo = hi;
        step *= 4.0;
    };
    while best.0 - lo > 1e-12 * best.0.abs().max(1.0) && iterations < max_outer {
        let mid = 0.5 * (lo + best.0);
        if mid <= lo || mid >= best.0 {
            break;
        }
        iterations += 1;
        match accept(mid) {
            Some(o) => best = (mid, o),
            None => lo = mid,
        }
    }
    let (hi, offsets) = best;
    if !feasible(model.correct(offsets), c) {
        return Ok(None);
    }
    let converged = hi - lo <= 1e-12 * hi.abs().max(1.0) || close(lo, hi);
    Ok(Some(Solution { offsets, iterations, converged, grid_fallback: false }))
}

/// Least feasible point `start + t * (1, 1)` with `t >= 0`. With the offset
/// difference fixed both correct rates are non-decreasing in `t`.
fn diagonal_feasible(model: &impl RateModel, c: ConstraintPair, start: Offsets) -> Option<Offsets> {
    let t = least_offset(
        |t| if feasible(model.correct(Offsets::new(start.h0 + t, start.h1 + t)), c) { 1.0 } else { 0.0 },
        0.5,
        0.0,
    );
    t.is_finite().then(|| Offsets::new(start.h0 + t, start.h1 + t))
}

fn feasible(rates: [f64; 2], c: ConstraintPair) -> bool {
    rates[0] >= 1.0 - c.alpha() - 1e-12 && rates[1] >= 1.0 - c.beta() - 1e-12
}

/// Fallback after the alternating search hits its cap: a shrinking 2-D grid
/// above the last iterate, which is a lower bound on the optimum.
fn grid_refine(model: &impl RateModel, c: ConstraintPair, start: Offsets, iterations: usize) -> Result<Solution> {
    const SIDE: usize = 21;
    let base = Offsets::new(
        if start.h0.is_finite() { start.h0 } else { -OFFSET_LIMIT.sqrt() },
        if start.h1.is_finite() { start.h1 } else { -OFFSET_LIMIT.sqrt() },
    );
    let scan = |origin: Offsets, width: f64| -> Option<(Offsets, f64)> {
        let mut best: Option<(Offsets, f64)> = None;
        for i in 0..SIDE {
            for j in 0..SIDE {
                let o = Offsets::new(
                    origin.h0 + width * i as f64 / (SIDE - 1) as f64,
                    origin.h1 + width * j as f64 / (SIDE - 1) as f64,
                );
                if !feasible(model.correct(o), c) {
                    continue;
                }
                let p = model.detection(o);
                if best.is_none_or(|b| p > b.1) {
                    best = Some((o, p));
                }
            }
        }
        best
    };

    let mut width = 1.0;
    let mut best = None;
    while width <= 1e6 {
        best = scan(base, width);
        if best.is_some() {
            break;
        }
        width *= 2.0;
    }
    let Some((mut point, _)) = best else {
        return Err(Error::NonConvergence { iterations });
    };
    for _ in 0..30 {
        width /= 5.0;
        let origin = Offsets::new((point.h0 - width / 2.0).max(base.h0), (point.h1 - width / 2.0).max(base.h1));
        if let Some((p, _)) = scan(origin, width) {
            point = p;
        }
    }
    Ok(Solution { offsets: point, iterations, converged: false, grid_fallback: true })
}
