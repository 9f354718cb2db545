//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! summary is printed even when every check passes.

use std::process::ExitCode;
use std::time::Instant;

use dronewatch_core::detect::surrogate::QuantizedSurrogate;
use dronewatch_core::eval::check::{check_grid, check_tradeoff};
use dronewatch_core::eval::csv::{grid_csv, parse_grid, parse_tradeoff, tradeoff_csv};
use dronewatch_core::eval::{
    run_trials, sweep_sensors_samples, sweep_tradeoff, GridSettings, SweepResult, SweepSettings, TruthMix,
};
use dronewatch_core::fusion::FusionKind;
use dronewatch_core::quickest::{run_length_metrics_with, ChangeTime, QuickestSetup};
use dronewatch_core::stats::binomial_std_error;
use dronewatch_core::*;

const LEVELS: [f64; 4] = [0.02, 0.05, 0.1, 0.2];
const TRIALS: u64 = 100_000;
const SEED: u64 = 20_240_611;

fn model(n: usize) -> SignalModel {
    SignalModel::new(1.0, 3.0, PowerRange::new(1.0, 10.0).unwrap(), n).unwrap()
}

fn settings(trials: u64, calibration: CalibrationSettings) -> SweepSettings {
    SweepSettings { trials, seed: SEED, calibration: calibration.with_unauthorized(UnauthorizedPower::Uniform) }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, ok_detail: String) -> Outcome {
    if failures.is_empty() {
        Outcome { passed: true, detail: ok_detail }
    } else {
        Outcome { passed: false, detail: failures.join("; ") }
    }
}

fn tradeoff_sweep() -> (SweepResult, f64) {
    let start = Instant::now();
    let r = sweep_tradeoff(
        &model(16),
        &SensorNetwork::single(1.0).unwrap(),
        &[Scheme::Genie, Scheme::Glrt],
        &LEVELS,
        &[16, 64],
        &settings(TRIALS, CalibrationSettings::analytic()),
    )
    .unwrap();
    (r, start.elapsed().as_secs_f64())
}

fn criterion_1(sweep: &SweepResult, secs: f64) -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = f64::NEG_INFINITY;
    for p in &sweep.points {
        if let Some(e) = &p.error {
            failures.push(format!("{:?} a={} N={}: {e}", p.scheme, p.alpha, p.n_samples));
            continue;
        }
        for (rate, bound, hw) in
            [(p.achieved_fa_h0, p.alpha, p.fa_h0_half_width), (p.achieved_fa_h1, p.beta, p.fa_h1_half_width)]
        {
            worst = worst.max((rate - bound) / hw);
            if rate > bound + 3.0 * hw {
                failures.push(format!("{:?} a={} N={}: fa {rate} > {bound} + 3*{hw}", p.scheme, p.alpha, p.n_samples));
            }
        }
    }
    if secs > 300.0 {
        failures.push(format!("took {secs:.0} s"));
    }
    outcome(
        failures,
        format!("{} points, worst excess {worst:.2} half-widths, {secs:.1} s", sweep.points.len()),
    )
}

fn criterion_2(sweep: &SweepResult) -> Outcome {
    let rows = parse_tradeoff(&tradeoff_csv(sweep)).unwrap();
    let findings = check_tradeoff(&rows, Some(TRIALS));
    let mut failures: Vec<String> = findings
        .iter()
        .filter(|f| f.check.starts_with("non-decreasing") && !f.passed)
        .map(|f| format!("{}: {}", f.check, f.detail))
        .collect();
    // pointwise N = 64 above N = 16
    for p in sweep.points.iter().filter(|p| p.n_samples == 16) {
        let q = sweep
            .points
            .iter()
            .find(|q| q.n_samples == 64 && q.scheme == p.scheme && q.alpha == p.alpha)
            .unwrap();
        if !(q.p_h2_given_h2 > p.p_h2_given_h2 - 2.0 * p.half_width.max(q.half_width)) {
            failures.push(format!("{:?} a={}: N=64 {} vs N=16 {}", p.scheme, p.alpha, q.p_h2_given_h2, p.p_h2_given_h2));
        }
    }
    let curve: Vec<String> = sweep
        .points
        .iter()
        .filter(|p| p.scheme == Scheme::Glrt && p.n_samples == 16)
        .map(|p| format!("{:.3}", p.p_h2_given_h2))
        .collect();
    outcome(failures, format!("GLRT N=16 curve {}", curve.join(" ")))
}

fn criterion_3(tradeoff: &SweepResult) -> Outcome {
    let mut failures = Vec::new();
    let mut gap_min = f64::INFINITY;
    let mut n = 0;
    for g in tradeoff.points.iter().filter(|p| p.scheme == Scheme::Genie) {
        let l = tradeoff
            .points
            .iter()
            .find(|l| l.scheme == Scheme::Glrt && l.alpha == g.alpha && l.n_samples == g.n_samples)
            .unwrap();
        n += 1;
        let hw = g.half_width.max(l.half_width);
        gap_min = gap_min.min((g.p_h2_given_h2 - l.p_h2_given_h2) / hw);
        if g.p_h2_given_h2 < l.p_h2_given_h2 - 2.0 * hw {
            failures.push(format!("a={} N={}: genie {} < glrt {}", g.alpha, g.n_samples, g.p_h2_given_h2, l.p_h2_given_h2));
        }
    }
    outcome(failures, format!("{n} matched points, smallest genie-glrt gap {gap_min:.2} half-widths"))
}

fn grid_sweep(trials: u64) -> SweepResult {
    sweep_sensors_samples(
        &model(8),
        &SensorNetwork::single(1.0).unwrap(),
        &[1, 2, 4, 8],
        &[8, 16, 32, 64],
        &GridSettings {
            constraints: ConstraintPair::symmetric(0.1).unwrap(),
            scheme: Scheme::Glrt,
            fusion: FusionKind::SoftLikelihoodSum,
        },
        &settings(trials, CalibrationSettings::analytic()),
    )
    .unwrap()
}

fn criterion_4(grid: &SweepResult) -> Outcome {
    let rows = parse_grid(&grid_csv(grid)).unwrap();
    let findings = check_grid(&rows, Some((0.1, 0.1)), Some(TRIALS));
    let failures: Vec<String> =
        findings.iter().filter(|f| !f.passed).map(|f| format!("{}: {}", f.check, f.detail)).collect();
    let at8: Vec<String> =
        grid.points.iter().filter(|p| p.n_samples == 8).map(|p| format!("{:.3}", p.p_h2_given_h2)).collect();
    outcome(failures, format!("N=8 over M=1,2,4,8: {}", at8.join(" ")))
}

/// Best `Pr(H2|H2)` over labelings "H0 below level a, H1 on [a, b), H2 from
/// b on"; with monotone likelihood ratios these are all the rules an offset
/// pair can express.
fn threshold_pair_oracle(s: &QuantizedSurrogate, alpha: f64, beta: f64) -> f64 {
    let q = s.levels();
    let pmf = Hypothesis::ALL.map(|h| s.pmf(h).to_vec());
    let mass = |h: usize, lo: usize, hi: usize| pmf[h][lo..hi].iter().sum::<f64>();
    let mut best = f64::NEG_INFINITY;
    for a in 0..=q {
        for b in a..=q {
            let p00 = mass(0, 0, a);
            let p11 = mass(1, a, b);
            if p00 >= 1.0 - alpha - 1e-12 && p11 >= 1.0 - beta - 1e-12 {
                best = best.max(mass(2, b, q));
            }
        }
    }
    best
}

fn criterion_5() -> Outcome {
    let m = model(16);
    let law = UnauthorizedPower::midpoint(&m);
    let s = QuantizedSurrogate::new(&m, 1.0, law).unwrap();
    let mut failures = Vec::new();
    let mut max_entry_z: f64 = 0.0;
    let mut feasible = 0;
    for level in [0.02, 0.05, 0.1, 0.2, 0.3, 0.4] {
        let oracle = threshold_pair_oracle(&s, level, level);
        let d = match s.calibrate(ConstraintPair::symmetric(level).unwrap()) {
            Ok(d) => d,
            Err(e) => {
                if oracle.is_finite() {
                    failures.push(format!("a={level}: calibration failed ({e}) but oracle finds {oracle}"));
                }
                continue;
            }
        };
        feasible += 1;
        let exact = d.exact_confusion();
        if (exact[2][2] - oracle).abs() > 1e-9 {
            failures.push(format!("a={level}: calibrated {} vs oracle {oracle}", exact[2][2]));
        }
        let c = run_trials(&m, &SensorNetwork::single(1.0).unwrap(), &d, &TruthMix::balanced(TRIALS, law), SEED).unwrap();
        for t in Hypothesis::ALL {
            for j in Hypothesis::ALL {
                let p = c.entry(t, j).unwrap();
                let hw = c.half_width(t, j).unwrap();
                let e = exact[t.index()][j.index()];
                max_entry_z = max_entry_z.max((p - e).abs() / hw);
                if (p - e).abs() > 3.0 * hw {
                    failures.push(format!("a={level} [{t},{j}]: {p} vs exact {e}"));
                }
            }
        }
    }
    outcome(
        failures,
        format!("{feasible}/6 levels feasible, oracle agrees on all, largest entry deviation {max_entry_z:.2} half-widths"),
    )
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for scheme in [Scheme::Genie, Scheme::Glrt] {
        for n in [16, 64] {
            for level in LEVELS {
                let m = model(n);
                let net = SensorNetwork::single(1.0).unwrap();
                let c = ConstraintPair::symmetric(level).unwrap();
                let a = calibrate(&m, &net, scheme, c, &CalibrationSettings::analytic().with_unauthorized(UnauthorizedPower::Uniform))
                    .unwrap();
                let mc = calibrate(
                    &m,
                    &net,
                    scheme,
                    c,
                    &CalibrationSettings::monte_carlo(SEED, TRIALS as usize).with_unauthorized(UnauthorizedPower::Uniform),
                )
                .unwrap();
                let ra = a.report().unwrap();
                // exact rates at the Monte Carlo offsets
                let x = mc.exact_confusion().unwrap();
                points += 1;
                for (name, va, vm) in [
                    ("fa_h0", ra.achieved_fa_h0, 1.0 - x[0][0]),
                    ("fa_h1", ra.achieved_fa_h1, 1.0 - x[1][1]),
                    ("p_h2", ra.p_h2_given_h2, x[2][2]),
                ] {
                    let se = binomial_std_error(va, TRIALS).max(1.0 / TRIALS as f64);
                    worst = worst.max((va - vm).abs() / se);
                    if (va - vm).abs() > 3.0 * se {
                        failures.push(format!("{scheme:?} N={n} a={level} {name}: analytic {va} vs monte carlo {vm}"));
                    }
                }
            }
        }
    }
    outcome(failures, format!("{points} points, largest gap {worst:.2} standard errors"))
}

fn criterion_7() -> Outcome {
    let setup = QuickestSetup::new(1.0, 2.0).unwrap();
    let kl = setup.kl_divergence();
    let mut failures = Vec::new();
    let mut arls = Vec::new();
    let mut parts = Vec::new();
    for h in [3.0, 5.0, 8.0] {
        let r = run_length_metrics_with(&setup, h, ChangeTime::At(1), 10_000, SEED).unwrap();
        let delay = r.average_detection_delay.unwrap();
        let wald = h / kl;
        let rel = delay / wald - 1.0;
        parts.push(format!("h={h}: delay {delay:.2} vs {wald:.2} ({:+.1}%), ARL {:.0}", 100.0 * rel, r.average_run_length));
        if rel.abs() > 0.25 {
            failures.push(format!("h={h}: delay {delay} off h/KL {wald} by {:.1}%", 100.0 * rel));
        }
        arls.push(r.average_run_length);
    }
    if !arls.windows(2).all(|w| w[1] > w[0]) {
        failures.push(format!("ARL not increasing: {arls:?}"));
    }
    outcome(failures, parts.join(", "))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_8() -> Outcome {
    let tradeoff = || {
        let r = sweep_tradeoff(
            &model(16),
            &SensorNetwork::single(1.0).unwrap(),
            &[Scheme::Genie, Scheme::Glrt],
            &LEVELS,
            &[16, 64],
            &settings(5_000, CalibrationSettings::monte_carlo(0, 20_000)),
        )
        .unwrap();
        tradeoff_csv(&r)
    };
    let grid = || grid_csv(&grid_sweep(5_000));
    let runs = [in_pool(1, tradeoff), in_pool(4, tradeoff), in_pool(4, tradeoff)];
    let grids = [in_pool(1, grid), in_pool(4, grid), in_pool(4, grid)];
    let mut failures = Vec::new();
    if !(runs[0] == runs[1] && runs[1] == runs[2]) {
        failures.push("tradeoff.csv differs".into());
    }
    if !(grids[0] == grids[1] && grids[1] == grids[2]) {
        failures.push("grid.csv differs".into());
    }
    outcome(failures, format!("{} + {} bytes identical over 1/4/4 threads", runs[0].len(), grids[0].len()))
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments; a filter that does not
    // mention acceptance skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }

    let (tradeoff, secs) = tradeoff_sweep();
    let grid = grid_sweep(TRIALS);
    let results = [
        ("constraint satisfaction", criterion_1(&tradeoff, secs)),
        ("tradeoff trends in alpha and N", criterion_2(&tradeoff)),
        ("genie dominance", criterion_3(&tradeoff)),
        ("sensor/sample grid trends", criterion_4(&grid)),
        ("discrete surrogate oracle", criterion_5()),
        ("calibration backend agreement", criterion_6()),
        ("CUSUM sanity", criterion_7()),
        ("reproducibility", criterion_8()),
    ];
    let mut ok = true;
    for (i, (name, o)) in results.iter().enumerate() {
        ok &= o.passed;
        println!("criterion {}: {} - {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
