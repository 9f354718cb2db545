use dronewatch_core::detect::{calibrate, CalibratedDetector, CalibrationSettings, ConstraintPair, Offsets, Scheme};
use dronewatch_core::eval::{sweep_sensors_samples, sweep_tradeoff, GridSettings, SweepSettings};
use dronewatch_core::fusion::{fuse_hard, fuse_soft, FusionKind, FusionRule, HardFusionDetector};
use dronewatch_core::signal::{
    generate_block, Hypothesis, PowerRange, SampleBlock, ScenarioTruth, SensorNetwork, SignalModel,
    UnauthorizedPower,
};
use dronewatch_core::stats::{ks_p_value, ks_statistic};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Gamma};

fn model(n: usize) -> SignalModel {
    SignalModel::new(1.0, 3.0, PowerRange::new(1.0, 10.0).unwrap(), n).unwrap()
}

fn blocks(m: &SignalModel, net: &SensorNetwork, truth: &ScenarioTruth, seed: u64, trial: u64) -> Vec<SampleBlock> {
    (0..net.sensor_count()).map(|k| generate_block(m, net, truth, k, seed, trial).unwrap()).collect()
}

fn hypothesis() -> impl Strategy<Value = Hypothesis> {
    (0usize..3).prop_map(|i| Hypothesis::from_index(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn one_sensor_fusion_is_the_local_decision(
        seed in any::<u64>(),
        trial in 0u64..10_000,
        h in hypothesis(),
        h0 in -20.0f64..20.0,
        h1 in -20.0f64..20.0,
        scheme in prop_oneof![Just(Scheme::Genie), Just(Scheme::Glrt)],
    ) {
        let m = model(16);
        let net = SensorNetwork::single(0.8).unwrap();
        let law = UnauthorizedPower::Fixed(4.0);
        let det = CalibratedDetector::from_offsets(&m, &net, scheme, law, Offsets::new(h0, h1)).unwrap();
        let truth = ScenarioTruth::for_hypothesis(h, UnauthorizedPower::Uniform);
        let b = blocks(&m, &net, &truth, seed, trial);
        let g = fuse_soft(&b, &m, &net, &det, det.genie_hint()).unwrap();
        prop_assert_eq!(g.hypothesis, det.decide(b[0].energy, det.genie_hint()).unwrap());
        prop_assert_eq!(g.fused_statistic, Some(b[0].energy));
    }

    #[test]
    fn block_order_does_not_matter(
        seed in any::<u64>(),
        trial in 0u64..10_000,
        h in hypothesis(),
        h0 in -20.0f64..20.0,
        h1 in -20.0f64..20.0,
        m_sensors in 2usize..7,
        rotate in 0usize..7,
    ) {
        let m = model(8);
        for gains in [vec![1.0; m_sensors], (0..m_sensors).map(|k| 0.5 + 0.3 * k as f64).collect()] {
            let net = SensorNetwork::new(gains).unwrap();
            let det = CalibratedDetector::from_offsets(&m, &net, Scheme::Glrt, UnauthorizedPower::Uniform, Offsets::new(h0, h1))
                .unwrap();
            let truth = ScenarioTruth::for_hypothesis(h, UnauthorizedPower::Uniform);
            let b = blocks(&m, &net, &truth, seed, trial);
            let mut shuffled = b.clone();
            shuffled.rotate_left(rotate % m_sensors);
            shuffled.swap(0, m_sensors - 1);
            let a = fuse_soft(&b, &m, &net, &det, None).unwrap();
            let z = fuse_soft(&shuffled, &m, &net, &det, None).unwrap();
            prop_assert_eq!(a, z);
        }
    }

    #[test]
    fn hard_fusion_ignores_vote_order(votes in prop::collection::vec(hypothesis(), 1..9), k in 1usize..9, rotate in 0usize..9) {
        let mut other = votes.clone();
        other.rotate_left(rotate % votes.len());
        for rule in [FusionRule::MAJORITY, FusionRule::k_out_of_m(k.min(votes.len()))] {
            prop_assert_eq!(
                fuse_hard(&votes, rule).unwrap().hypothesis,
                fuse_hard(&other, rule).unwrap().hypothesis
            );
        }
    }
}

#[test]
fn homogeneous_fused_statistic_pools_samples() {
    let (m_sensors, n) = (4, 8);
    let m = model(n);
    let net = SensorNetwork::homogeneous(m_sensors, 1.0).unwrap();
    let det = CalibratedDetector::from_offsets(&m, &net, Scheme::Glrt, UnauthorizedPower::Uniform, Offsets::new(0.0, 0.0))
        .unwrap();
    let shape = (m_sensors * n) as f64;
    for (truth, mu) in [
        (ScenarioTruth::no_drone(), 1.0),
        (ScenarioTruth::authorized(), 4.0),
        (ScenarioTruth::unauthorized(UnauthorizedPower::Fixed(6.0)), 7.0),
    ] {
        let fused: Vec<f64> = (0..10_000)
            .map(|t| fuse_soft(&blocks(&m, &net, &truth, 31, t), &m, &net, &det, None).unwrap().fused_statistic.unwrap())
            .collect();
        let law = Gamma::new(shape, shape / mu).unwrap();
        let p = ks_p_value(ks_statistic(&fused, |x| law.cdf(x)), fused.len());
        assert!(p > 0.01, "{:?}: p = {p}", truth.hypothesis);
    }
}

#[test]
fn single_sensor_column_of_the_grid_matches_the_tradeoff_sweep() {
    let m = model(8);
    let settings = SweepSettings {
        trials: 20_000,
        seed: 12,
        calibration: CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform),
    };
    let grid = GridSettings {
        constraints: ConstraintPair::symmetric(0.1).unwrap(),
        scheme: Scheme::Glrt,
        fusion: FusionKind::SoftLikelihoodSum,
    };
    let g = sweep_sensors_samples(&m, &SensorNetwork::single(1.0).unwrap(), &[1, 2], &[8, 16], &grid, &settings).unwrap();
    let t = sweep_tradeoff(&m, &SensorNetwork::single(1.0).unwrap(), &[Scheme::Glrt], &[0.1], &[8, 16], &settings).unwrap();
    let column: Vec<_> = g.points.iter().filter(|p| p.m_sensors == 1).collect();
    assert_eq!(column.len(), 2);
    for (a, b) in column.iter().zip(&t.points) {
        assert_eq!(a.n_samples, b.n_samples);
        assert_eq!(a.confusion, b.confusion);
    }
}

#[test]
fn one_sensor_hard_calibration_matches_single_sensor_calibration() {
    let m = model(16);
    let net = SensorNetwork::single(1.0).unwrap();
    let cal = CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform);
    for level in [0.05, 0.1, 0.2] {
        let c = ConstraintPair::symmetric(level).unwrap();
        let soft = calibrate(&m, &net, Scheme::Glrt, c, &cal).unwrap();
        for rule in [FusionRule::MAJORITY, FusionRule::k_out_of_m(1)] {
            let hard = HardFusionDetector::calibrate(&m, &net, Scheme::Glrt, rule, c, &cal).unwrap();
            let (a, b) = (soft.report().unwrap().p_h2_given_h2, hard.report().p_h2_given_h2);
            assert!((a - b).abs() < 1e-6, "{rule}: {a} vs {b}");
        }
    }
}

/// Hard rules discard the energies, so soft fusion should not lose to them.
#[test]
fn soft_fusion_is_not_worse_than_hard_fusion() {
    let cal = CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform);
    for (m_sensors, n) in [(2, 8), (4, 8), (4, 16)] {
        let m = model(n);
        let net = SensorNetwork::homogeneous(m_sensors, 1.0).unwrap();
        let c = ConstraintPair::symmetric(0.1).unwrap();
        let soft = calibrate(&m, &net, Scheme::Glrt, c, &cal).unwrap().report().unwrap().p_h2_given_h2;
        for kind in [FusionKind::HardMajorityH2Priority, FusionKind::HardKOutOfM] {
            let hard = HardFusionDetector::calibrate_best_k(&m, &net, Scheme::Glrt, kind, c, &cal).unwrap();
            let p = hard.report().p_h2_given_h2;
            println!("M={m_sensors} N={n} soft {soft:.4} {} {p:.4}", hard.rule());
            assert!(soft >= p - 1e-6, "M={m_sensors} N={n}: soft {soft} < {} {p}", hard.rule());
        }
    }
}
