use dronewatch_core::quickest::{cusum_step, run_length_metrics_with, ChangeTime, CusumState, QuickestSetup};
use dronewatch_core::stats::ks_p_value;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let n = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    ks_p_value(d, n.round() as usize)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn statistic_stays_non_negative_and_alarms_once(
        energies in prop::collection::vec(0.0f64..20.0, 1..400),
        h in 0.0f64..10.0,
        mu0 in 0.1f64..5.0,
        ratio in 1.01f64..10.0,
    ) {
        let mut s = CusumState::new(h, mu0, mu0 * ratio).unwrap();
        let mut alarm = None;
        for (t, &e) in energies.iter().enumerate() {
            let before = s;
            s = cusum_step(s, e).unwrap();
            prop_assert!(s.statistic() >= 0.0);
            match alarm {
                Some(at) => {
                    prop_assert_eq!(s, before);
                    prop_assert_eq!(s.alarm_time(), Some(at));
                }
                None => {
                    let want = (before.statistic() + before.increment(e)).max(0.0);
                    prop_assert_eq!(s.statistic(), want);
                    if want >= h {
                        prop_assert_eq!(s.alarm_time(), Some(t as u64 + 1));
                        alarm = s.alarm_time();
                    } else {
                        prop_assert_eq!(s.alarm_time(), None);
                    }
                }
            }
        }
    }
}

#[test]
fn arl_agrees_across_disjoint_seeds() {
    let setup = QuickestSetup::new(1.0, 2.0).unwrap();
    for h in [2.0, 4.0] {
        let a = run_length_metrics_with(&setup, h, ChangeTime::Never, 4_000, 1).unwrap();
        let b = run_length_metrics_with(&setup, h, ChangeTime::Never, 4_000, 2).unwrap();
        assert_eq!(a.censored + b.censored, 0);
        let se = (a.arl_half_width.powi(2) + b.arl_half_width.powi(2)).sqrt() / dronewatch_core::stats::Z95;
        let gap = (a.average_run_length - b.average_run_length).abs();
        assert!(gap <= 3.0 * se, "h={h}: {} vs {}", a.average_run_length, b.average_run_length);
    }
}

/// After the statistic returns to zero the remaining run length has the law
/// of a fresh run length.
#[test]
fn return_to_zero_restarts_the_process() {
    let (h, mu0, mu1) = (3.0, 1.0, 2.0);
    let exp = Exp::new(1.0 / mu0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let mut fresh = Vec::new();
    let mut residual = Vec::new();
    for _ in 0..6_000 {
        let mut s = CusumState::new(h, mu0, mu1).unwrap();
        let mut reset_at = None;
        let mut was_positive = false;
        while s.alarm_time().is_none() {
            s = cusum_step(s, exp.sample(&mut r)).unwrap();
            if reset_at.is_none() {
                if s.statistic() > 0.0 {
                    was_positive = true;
                } else if was_positive {
                    reset_at = Some(s.time_index());
                }
            }
        }
        let tau = s.alarm_time().unwrap();
        fresh.push(tau as f64);
        if let Some(r0) = reset_at {
            residual.push((tau - r0) as f64);
        }
    }
    assert!(residual.len() > 3_000);
    let p = two_sample_ks(&fresh, &residual);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn delay_grows_with_threshold_and_shrinks_with_power_gap() {
    let setup = QuickestSetup::new(1.0, 2.0).unwrap();
    let mut last = 0.0;
    for h in [1.0, 2.0, 4.0, 8.0] {
        let m = run_length_metrics_with(&setup, h, ChangeTime::At(50), 2_000, 5).unwrap();
        let d = m.average_detection_delay.unwrap();
        assert!(d > last, "h={h}: {d} <= {last}");
        last = d;
    }
    let mut last = f64::INFINITY;
    for post in [1.5, 2.0, 3.0, 5.0] {
        let s = setup.with_actual_post_change_power(post);
        let m = run_length_metrics_with(&s, 4.0, ChangeTime::At(1), 2_000, 6).unwrap();
        let d = m.average_detection_delay.unwrap();
        assert!(d < last, "post={post}: {d} >= {last}");
        last = d;
    }
}

#[test]
fn doubling_the_threshold_raises_the_arl() {
    let setup = QuickestSetup::new(1.0, 3.0).unwrap();
    let mut last = 0.0;
    for h in [0.5, 1.0, 2.0, 4.0] {
        let arl = run_length_metrics_with(&setup, h, ChangeTime::Never, 1_000, 8).unwrap().average_run_length;
        assert!(arl > last, "h={h}: {arl} <= {last}");
        last = arl;
    }
}
