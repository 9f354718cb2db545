//! Binomial intervals, Gamma-law helpers and the Kolmogorov-Smirnov check.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// 95% normal-approximation half-width for a proportion `successes/trials`.
///
/// At 0 or 1 successes the variance is evaluated at `0.5/trials` away from
/// the boundary so an all-or-nothing estimate never reports zero width.
pub fn binomial_half_width(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let n = trials as f64;
    let guard = 0.5 / n;
    let p = (successes as f64 / n).clamp(guard, 1.0 - guard);
    Z95 * (p * (1.0 - p) / n).sqrt()
}

/// Binomial standard error at proportion `p` for `trials` draws.
pub fn binomial_std_error(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// 95% half-width of a sample mean.
pub fn mean_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Z95 * (var / n as f64).sqrt()
}

/// Law of the mean of `shape` i.i.d. exponentials with mean `mean`:
/// `Gamma(shape, scale = mean/shape)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLaw {
    pub shape: f64,
    pub mean: f64,
}

impl EnergyLaw {
    pub fn new(shape: f64, mean: f64) -> Self {
        Self { shape, mean }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.shape;
        let rate = k / self.mean;
        let log_t_term = if k == 1.0 { 0.0 } else { (k - 1.0) * t.ln() };
        k * rate.ln() + log_t_term - rate * t - ln_gamma(k)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t.is_infinite() {
            1.0
        } else {
            gamma_lr(self.shape, t * self.shape / self.mean)
        }
    }

    pub fn sf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else if t.is_infinite() {
            0.0
        } else {
            gamma_ur(self.shape, t * self.shape / self.mean)
        }
    }

    /// `Pr(lo < T <= hi)`, using whichever tail keeps precision.
    pub fn interval(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let p = if lo >= self.mean { self.sf(lo) - self.sf(hi) } else { self.cdf(hi) - self.cdf(lo) };
        p.max(0.0)
    }
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` from `n` draws, with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_guard() {
        assert!(binomial_half_width(0, 100) > 0.0);
        assert!((binomial_half_width(0, 100) - binomial_half_width(100, 100)).abs() < 1e-15);
        let hw = binomial_half_width(5_000, 10_000);
        assert!((hw - Z95 * 0.005).abs() < 1e-12);
    }

    #[test]
    fn energy_law_integer_shape_matches_closed_form() {
        // shape 3: Erlang CDF 1 - e^{-x}(1 + x + x^2/2) with x = 3t/mean
        let law = EnergyLaw::new(3.0, 2.0);
        for t in [0.1, 0.8, 2.0, 5.0, 11.0] {
            let x: f64 = 1.5 * t;
            let erlang = 1.0 - (-x).exp() * (1.0 + x + 0.5 * x * x);
            assert!((law.cdf(t) - erlang).abs() < 1e-12);
            assert!((law.sf(t) - (1.0 - erlang)).abs() < 1e-12);
        }
        assert!((law.interval(0.5, 3.0) - (law.cdf(3.0) - law.cdf(0.5))).abs() < 1e-13);
        assert_eq!(law.interval(3.0, f64::INFINITY), law.sf(3.0));
    }

    #[test]
    fn ks_detects_wrong_law() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks_p_value(d, xs.len()) > 0.99);
        let d = ks_statistic(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(ks_p_value(d, xs.len()) < 1e-6);
    }
}
