use dronewatch_core::detect::{
    calibrate, genie_log_likelihoods, glrt_profile, CalibratedDetector, CalibrationSettings, ConstraintPair, Offsets,
    Scheme,
};
use dronewatch_core::signal::{
    generate_block, Hypothesis, PowerRange, ScenarioTruth, SensorNetwork, SignalModel, UnauthorizedPower,
};
use dronewatch_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax_with_ties(l: [f64; 3], o: Offsets) -> Option<Hypothesis> {
    let s = [l[0] + o.h0, l[1] + o.h1, l[2]];
    let mut sorted = s;
    sorted.sort_by(f64::total_cmp);
    // Skip near-ties where reduced and full scores may round differently.
    if sorted[2] - sorted[1] < 1e-9 * (1.0 + sorted[2].abs()) {
        return None;
    }
    let best = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    Hypothesis::from_index(best)
}

fn full_scores(t: f64, m: &SignalModel, scheme: Scheme, p2: f64) -> [f64; 3] {
    let l = genie_log_likelihoods(t, m, 1.0, p2).unwrap();
    match scheme {
        Scheme::Genie => l,
        Scheme::Glrt => [l[0], l[1], glrt_profile(t, m, 1.0).unwrap().1],
    }
}

fn model_strategy() -> impl Strategy<Value = SignalModel> {
    (0.1f64..10.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..10.0, 1usize..128).prop_map(|(s2, p1, lo, w, n)| {
        SignalModel::new(s2, p1 * s2, PowerRange::new(lo * s2, (lo + w) * s2).unwrap(), n).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    /// 40 cases x 250 statistics = 10^4 statistics per scheme.
    #[test]
    fn decisions_and_regions_agree_with_direct_argmax(
        m in model_strategy(),
        h0 in -30.0f64..30.0,
        h1 in -30.0f64..30.0,
        u in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let o = Offsets::new(h0, h1);
        let p2 = m.unauthorized_power.min + u * m.unauthorized_power.width();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let top = 3.0 * m.received_power(1.0, m.unauthorized_power.max.max(m.authorized_power));
        let net = SensorNetwork::single(1.0).unwrap();
        for scheme in [Scheme::Genie, Scheme::Glrt] {
            let det = CalibratedDetector::from_offsets(&m, &net, scheme, UnauthorizedPower::Fixed(p2), o).unwrap();
            let regions = det.regions().unwrap().to_vec();
            prop_assert_eq!(regions[0].lower, 0.0);
            prop_assert_eq!(regions.last().unwrap().upper, f64::INFINITY);
            for w in regions.windows(2) {
                prop_assert_eq!(w[0].upper, w[1].lower);
            }
            let hint = (scheme == Scheme::Genie).then_some(p2);
            for _ in 0..250 {
                let t = r.random::<f64>() * top;
                let got = det.decide(t, hint).unwrap();
                if let Some(want) = argmax_with_ties(full_scores(t, &m, scheme, p2), o) {
                    prop_assert_eq!(got, want, "{:?} t={}", scheme, t);
                }
                let near_edge = regions.iter().any(|g| (g.upper - t).abs() < 1e-7 * (1.0 + t));
                if !near_edge {
                    let label = regions.iter().find(|g| g.contains(t)).unwrap().label;
                    prop_assert_eq!(label, got, "region label at t={}", t);
                }
            }
        }
    }

    #[test]
    fn pr_h2_is_non_decreasing_in_alpha(
        p1 in 0.5f64..4.0,
        lo in 0.0f64..8.0,
        w in 0.5f64..8.0,
        n in 4usize..64,
        a in 0.01f64..0.4,
        b in 0.01f64..0.4,
    ) {
        let m = SignalModel::new(1.0, p1, PowerRange::new(lo, lo + w).unwrap(), n).unwrap();
        let net = SensorNetwork::single(1.0).unwrap();
        let (small, large) = (a.min(b), a.max(b));
        // A known power keeps each case fast; the uniform prior is covered below.
        let cal = CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Fixed(lo + 0.5 * w));
        for scheme in [Scheme::Genie, Scheme::Glrt] {
            let run = |level: f64| calibrate(&m, &net, scheme, ConstraintPair::symmetric(level).unwrap(), &cal)
                .map(|d| d.report().unwrap().p_h2_given_h2);
            match (run(small), run(large)) {
                (Ok(ps), Ok(pl)) => prop_assert!(ps <= pl + 1e-6, "{:?}: {} > {}", scheme, ps, pl),
                (Ok(_), Err(e)) => prop_assert!(false, "looser bound infeasible: {}", e),
                (Err(Error::Infeasible { .. }), _) => {}
                (Err(e), _) => prop_assert!(false, "{}", e),
            }
        }
    }

    #[test]
    fn known_power_genie_dominates_glrt(
        p1 in 0.5f64..4.0,
        lo in 0.0f64..8.0,
        w in 0.5f64..8.0,
        u in 0.0f64..1.0,
        n in 4usize..64,
        level in 0.02f64..0.4,
    ) {
        let m = SignalModel::new(1.0, p1, PowerRange::new(lo, lo + w).unwrap(), n).unwrap();
        let net = SensorNetwork::single(1.0).unwrap();
        let law = UnauthorizedPower::Fixed(lo + u * w);
        let cal = CalibrationSettings::analytic().with_unauthorized(law);
        let c = ConstraintPair::symmetric(level).unwrap();
        if let (Ok(g), Ok(l)) = (calibrate(&m, &net, Scheme::Genie, c, &cal), calibrate(&m, &net, Scheme::Glrt, c, &cal)) {
            let (pg, pl) = (g.report().unwrap().p_h2_given_h2, l.report().unwrap().p_h2_given_h2);
            prop_assert!(pg >= pl - 1e-6, "genie {} < glrt {}", pg, pl);
        }
    }
}

#[test]
fn pr_h2_grows_with_block_length() {
    let net = SensorNetwork::single(1.0).unwrap();
    let cal = CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform);
    for scheme in [Scheme::Genie, Scheme::Glrt] {
        for level in [0.05, 0.1, 0.2] {
            let mut last = 0.0;
            for n in [8, 16, 32, 64, 128] {
                let m = SignalModel::new(1.0, 3.0, PowerRange::new(1.0, 10.0).unwrap(), n).unwrap();
                let Ok(d) = calibrate(&m, &net, scheme, ConstraintPair::symmetric(level).unwrap(), &cal) else {
                    continue;
                };
                let p = d.report().unwrap().p_h2_given_h2;
                assert!(p >= last - 1e-9, "{scheme:?} a={level} N={n}: {p} < {last}");
                last = p;
            }
            assert!(last > 0.0);
        }
    }
}

#[test]
fn scaling_all_powers_leaves_decisions_unchanged() {
    let base = SignalModel::new(1.0, 3.0, PowerRange::new(1.0, 10.0).unwrap(), 16).unwrap();
    let net = SensorNetwork::single(1.0).unwrap();
    let c = ConstraintPair::symmetric(0.1).unwrap();
    for scheme in [Scheme::Genie, Scheme::Glrt] {
        let cal = CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform);
        let d = calibrate(&base, &net, scheme, c, &cal).unwrap();
        for k in [1e-3, 0.5, 7.0, 1e4] {
            let m = base.scaled(k);
            let dk = calibrate(&m, &net, scheme, c, &cal).unwrap();
            for (a, b) in d.regions().unwrap().iter().zip(dk.regions().unwrap()) {
                assert_eq!(a.label, b.label);
                assert!((b.lower - k * a.lower).abs() <= 1e-6 * k * (1.0 + a.lower), "{} vs {}", b.lower, k * a.lower);
            }
            for h in Hypothesis::ALL {
                for trial in 0..2_000 {
                    let truth = ScenarioTruth::for_hypothesis(h, UnauthorizedPower::Uniform);
                    let t = generate_block(&base, &net, &truth, 0, 77, trial).unwrap().energy;
                    // Boundaries agree to calibration tolerance only.
                    if d.regions().unwrap().iter().any(|g| (g.upper - t).abs() < 1e-6 * (1.0 + t)) {
                        continue;
                    }
                    let tk = generate_block(&m, &net, &truth, 0, 77, trial).unwrap().energy;
                    let hint = d.genie_hint();
                    let hint_k = dk.genie_hint();
                    assert_eq!(d.decide(t, hint).unwrap(), dk.decide(tk, hint_k).unwrap(), "{scheme:?} c={k} t={t}");
                }
            }
        }
    }
}

#[test]
fn monte_carlo_calibration_validates_on_fresh_draws() {
    use dronewatch_core::eval::{run_trials, TruthMix};
    let m = SignalModel::new(1.0, 3.0, PowerRange::new(1.0, 10.0).unwrap(), 16).unwrap();
    let net = SensorNetwork::single(1.0).unwrap();
    let law = UnauthorizedPower::Uniform;
    let d = calibrate(
        &m,
        &net,
        Scheme::Glrt,
        ConstraintPair::symmetric(0.1).unwrap(),
        &CalibrationSettings::monte_carlo(3, 100_000).with_unauthorized(law),
    )
    .unwrap();
    let c = run_trials(&m, &net, &d, &TruthMix::balanced(100_000, law), 4).unwrap();
    for h in [Hypothesis::NoDrone, Hypothesis::Authorized] {
        let fa = c.false_alarm(h).unwrap();
        let se = (0.1 * 0.9 / 100_000f64).sqrt();
        assert!(fa <= 0.1 + 3.0 * se, "{h}: {fa}");
    }
}
