use std::io::Write;
use std::path::{Path, PathBuf};

use dronewatch_core::detect::{calibrate as calibrate_soft, CalibratedDetector, CalibrationMethod, ConstraintPair};
use dronewatch_core::eval::check::{
    check_confusion_rows, check_grid, check_quickest, check_tradeoff, Finding,
};
use dronewatch_core::eval::csv::{
    confusion_csv, grid_csv, parse_confusion, parse_grid, parse_quickest, parse_tradeoff, quickest_csv,
    tradeoff_csv, CONFUSION_HEADER, GRID_HEADER, QUICKEST_HEADER, TRADEOFF_HEADER,
};
use dronewatch_core::eval::{
    run_trials, sweep_sensors_samples, sweep_tradeoff, Decider, GridSettings, Manifest, SweepResult,
    SweepSettings, TruthMix,
};
use dronewatch_core::fusion::{FusionRule, HardFusionDetector};
use dronewatch_core::quickest::{run_length_metrics_with, QuickestSetup};
use dronewatch_core::Offsets;
use serde_json::{json, Value};

use crate::config::{self, ScenarioConfig};
use crate::output::write_atomic;
use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const QUICKEST_FILE: &str = "quickest.csv";

/// Flags shared by the file-emitting commands.
pub struct Run {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    config::parse(&path.display().to_string(), &text).map_err(|e| Failure::Validation(e.to_string()))
}

fn required<T: Copy>(v: Option<T>, path: &Path, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Validation(format!("{}: this command needs {what}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
    write_atomic(dir, name, contents).map_err(|e| Failure::Io(format!("{}: {e}", dir.join(name).display())))
}

/// Prints one line; a closed pipe is not an error.
fn stdout(line: &str) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn method_name(m: CalibrationMethod) -> &'static str {
    match m {
        CalibrationMethod::AnalyticGamma => "analytic_gamma",
        CalibrationMethod::MonteCarlo => "monte_carlo",
    }
}

fn manifest(cfg: &ScenarioConfig, command: &str, seed: u64, trials: u64, files: &[&str]) -> Manifest {
    Manifest {
        tool: "dronewatch".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        trials,
        calibration_method: method_name(cfg.calibration_method).into(),
        calibration_trials: match cfg.calibration_method {
            CalibrationMethod::AnalyticGamma => 0,
            CalibrationMethod::MonteCarlo => cfg.calibration_trials,
        },
        schemes: vec![cfg.scheme.name().into()],
        fusion_rule: Some(cfg.fusion_rule().map_or_else(|| cfg.fusion.name().into(), |r| r.label())),
        alpha_beta_grid: Vec::new(),
        samples_grid: vec![cfg.model.samples_per_block],
        sensors_grid: vec![cfg.network.sensor_count()],
        thresholds: Vec::new(),
        constraints: cfg.constraints.map(|c| (c.alpha(), c.beta())),
        files: files.iter().map(|f| f.to_string()).collect(),
        config: cfg.text.clone(),
    }
}

fn emit(dir: &Path, files: &[(&str, String)], manifest: &Manifest) -> Result<(), Failure> {
    for (name, text) in files {
        stdout(&write(dir, name, text.as_bytes())?.display().to_string())?;
    }
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    stdout(&write(dir, MANIFEST_FILE, json.as_bytes())?.display().to_string())
}

fn constraints_json(c: Option<ConstraintPair>) -> Value {
    c.map_or(Value::Null, |c| json!({ "alpha": c.alpha(), "beta": c.beta() }))
}

fn soft_report(d: &CalibratedDetector) -> Value {
    json!({
        "scheme": d.scheme().name(),
        "fusion_rule": FusionRule::SOFT.label(),
        "sensors": d.network().sensor_count(),
        "constraints": constraints_json(d.constraints()),
        "offsets": d.offsets(),
        "regions": d.regions(),
        "report": d.report(),
        "exact_confusion": d.exact_confusion(),
    })
}

fn hard_report(d: &HardFusionDetector, c: ConstraintPair) -> Value {
    json!({
        "scheme": d.scheme().name(),
        "fusion_rule": d.rule().label(),
        "sensors": d.network().sensor_count(),
        "constraints": constraints_json(Some(c)),
        "offsets": d.offsets(),
        "local_regions": d.local_regions(),
        "report": d.report(),
    })
}

fn calibrate_hard(cfg: &ScenarioConfig, c: ConstraintPair, seed: u64) -> Result<HardFusionDetector, Failure> {
    let cal = cfg.calibration(seed);
    let (m, net, s) = (&cfg.model, &cfg.network, cfg.scheme);
    Ok(match cfg.fusion_rule() {
        Some(rule) => HardFusionDetector::calibrate(m, net, s, rule, c, &cal)?,
        None => HardFusionDetector::calibrate_best_k(m, net, s, cfg.fusion, c, &cal)?,
    })
}

pub fn calibrate(path: &Path, offsets: Option<Offsets>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load(path)?;
    let seed = seed.unwrap_or(cfg.seed);
    let report = match offsets {
        Some(_) if cfg.fusion.is_hard() => {
            return Err(Failure::Validation("--offsets applies to soft fusion only".into()));
        }
        Some(o) => soft_report(&CalibratedDetector::from_offsets(
            &cfg.model,
            &cfg.network,
            cfg.scheme,
            cfg.unauthorized,
            o,
        )?),
        None => {
            let c = required(cfg.constraints, path, "a [constraints] section")?;
            if cfg.fusion.is_hard() {
                hard_report(&calibrate_hard(&cfg, c, seed)?, c)
            } else {
                soft_report(&calibrate_soft(&cfg.model, &cfg.network, cfg.scheme, c, &cfg.calibration(seed))?)
            }
        }
    };
    stdout(&serde_json::to_string_pretty(&report).expect("report serializes"))
}

pub fn simulate(run: &Run) -> Result<(), Failure> {
    let cfg = load(&run.config)?;
    let seed = run.seed.unwrap_or(cfg.seed);
    let trials = run.trials.unwrap_or(cfg.trials);
    let c = required(cfg.constraints, &run.config, "a [constraints] section")?;
    let decider: Box<dyn Decider> = if cfg.fusion.is_hard() {
        Box::new(calibrate_hard(&cfg, c, seed)?)
    } else {
        Box::new(calibrate_soft(&cfg.model, &cfg.network, cfg.scheme, c, &cfg.calibration(seed))?)
    };
    let mix = TruthMix::balanced(trials, cfg.unauthorized);
    let matrix = run_trials(&cfg.model, &cfg.network, decider.as_ref(), &mix, seed)?;
    let m = manifest(&cfg, "simulate", seed, trials, &[CONFUSION_FILE]);
    emit(&run.out, &[(CONFUSION_FILE, confusion_csv(&matrix))], &m)
}

fn warn_failures(result: &SweepResult) {
    for p in result.failures() {
        eprintln!(
            "warning: point scheme={} alpha={} N={} M={} failed: {}",
            p.scheme.name(),
            p.alpha,
            p.n_samples,
            p.m_sensors,
            p.error.as_deref().unwrap_or("unknown")
        );
    }
}

pub fn sweep(run: &Run, grid: bool) -> Result<(), Failure> {
    let cfg = load(&run.config)?;
    let seed = run.seed.unwrap_or(cfg.seed);
    let trials = run.trials.unwrap_or(cfg.trials);
    let settings = SweepSettings { trials, seed, calibration: cfg.calibration(seed) };
    let mut m = manifest(&cfg, "", seed, trials, &[]);
    let (name, text, result) = if grid {
        let g = cfg.grid.as_ref().ok_or_else(|| {
            Failure::Validation(format!("{}: --sweep grid needs a [sweep.grid] section", run.config.display()))
        })?;
        let c = required(cfg.constraints, &run.config, "a [constraints] section")?;
        let gs = GridSettings { constraints: c, scheme: cfg.scheme, fusion: cfg.fusion };
        let r = sweep_sensors_samples(&cfg.model, &cfg.network, &g.sensors, &g.samples, &gs, &settings)?;
        m.command = "sweep grid".into();
        m.fusion_rule = Some(cfg.fusion.name().into());
        m.sensors_grid = g.sensors.clone();
        m.samples_grid = g.samples.clone();
        (GRID_FILE, grid_csv(&r), r)
    } else {
        let g = cfg.tradeoff.as_ref().ok_or_else(|| {
            Failure::Validation(format!("{}: --sweep tradeoff needs a [sweep.tradeoff] section", run.config.display()))
        })?;
        let r = sweep_tradeoff(&cfg.model, &cfg.network, &g.schemes, &g.alpha_beta, &g.samples, &settings)?;
        m.command = "sweep tradeoff".into();
        m.schemes = g.schemes.iter().map(|s| s.name().to_string()).collect();
        m.fusion_rule = Some(FusionRule::SOFT.label());
        m.alpha_beta_grid = g.alpha_beta.clone();
        m.samples_grid = g.samples.clone();
        m.constraints = None;
        (TRADEOFF_FILE, tradeoff_csv(&r), r)
    };
    warn_failures(&result);
    m.files = vec![name.into()];
    emit(&run.out, &[(name, text)], &m)
}

pub fn quickest(run: &Run) -> Result<(), Failure> {
    let cfg = load(&run.config)?;
    let plan = cfg.quickest.as_ref().ok_or_else(|| {
        Failure::Validation(format!("{}: quickest needs a [quickest] section", run.config.display()))
    })?;
    let seed = run.seed.unwrap_or(cfg.seed);
    let streams = run.trials.unwrap_or(plan.streams);
    if streams < dronewatch_core::quickest::MIN_TRIALS as u64 {
        return Err(Failure::Validation(format!(
            "--trials: quickest needs at least {} streams, got {streams}",
            dronewatch_core::quickest::MIN_TRIALS
        )));
    }
    // Designed for the weakest unauthorized drone at the first sensor.
    let setup = QuickestSetup::from_model(&cfg.model, cfg.network.gains()[0])?;
    let metrics = plan
        .thresholds
        .iter()
        .map(|&h| run_length_metrics_with(&setup, h, plan.change_time, streams as usize, seed))
        .collect::<Result<Vec<_>, _>>()?;
    for r in metrics.iter().filter(|r| r.censored > 0) {
        eprintln!("warning: h={}: {} streams reached the sample cap without an alarm", r.threshold_h, r.censored);
    }
    let mut m = manifest(&cfg, "quickest", seed, streams, &[QUICKEST_FILE]);
    m.calibration_method = "none".into();
    m.calibration_trials = 0;
    m.schemes = Vec::new();
    m.fusion_rule = None;
    m.thresholds = plan.thresholds.clone();
    m.constraints = None;
    emit(&run.out, &[(QUICKEST_FILE, quickest_csv(&metrics))], &m)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn fail(check: &str, detail: String) -> Finding {
    Finding { check: check.into(), passed: false, detail }
}

fn check_csv(path: &Path, manifest: Option<&Manifest>) -> Result<Vec<Finding>, Failure> {
    let text = read(path)?;
    let header = text.lines().next().unwrap_or("");
    let trials = manifest.map(|m| m.trials);
    let parsed = if header == TRADEOFF_HEADER.join(",") {
        parse_tradeoff(&text).map(|r| check_tradeoff(&r, trials))
    } else if header == GRID_HEADER.join(",") {
        parse_grid(&text).map(|r| check_grid(&r, manifest.and_then(|m| m.constraints), trials))
    } else if header == QUICKEST_HEADER.join(",") {
        parse_quickest(&text).map(|r| check_quickest(&r))
    } else if header == CONFUSION_HEADER.join(",") {
        parse_confusion(&text).map(|r| check_confusion_rows(&r))
    } else {
        return Ok(vec![fail("format", format!("unrecognized header `{header}`"))]);
    };
    Ok(parsed.unwrap_or_else(|e| vec![fail("parse", e.to_string())]))
}

fn check_manifest(dir: &Path) -> Result<(Option<Manifest>, Vec<Finding>), Failure> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok((None, Vec::new()));
    }
    let m: Manifest = match serde_json::from_str(&read(&path)?) {
        Ok(m) => m,
        Err(e) => return Ok((None, vec![fail("manifest", e.to_string())])),
    };
    let missing: Vec<_> = m.files.iter().filter(|f| !dir.join(f).is_file()).cloned().collect();
    let finding = if missing.is_empty() {
        Finding { check: "manifest".into(), passed: true, detail: format!("{} listed files present", m.files.len()) }
    } else {
        fail("manifest", format!("missing {}", missing.join(", ")))
    };
    Ok((Some(m), vec![finding]))
}

/// Checks every known output file under the given paths. A manifest next
/// to a file supplies the trial count and constraints for the audits.
pub fn check(paths: &[PathBuf]) -> Result<(), Failure> {
    let mut failed = 0;
    let mut total = 0;
    let mut lines = Vec::new();
    let mut report = |label: &Path, findings: Vec<Finding>| {
        for f in findings {
            total += 1;
            if !f.passed {
                failed += 1;
            }
            let tag = if f.passed { "PASS" } else { "FAIL" };
            lines.push(format!("{tag} {}: {}: {}", label.display(), f.check, f.detail));
        }
    };
    for path in paths {
        if !path.exists() {
            return Err(Failure::Io(format!("{}: no such file or directory", path.display())));
        }
        let (dir, files) = if path.is_dir() {
            let files: Vec<PathBuf> = [TRADEOFF_FILE, GRID_FILE, QUICKEST_FILE, CONFUSION_FILE]
                .iter()
                .map(|f| path.join(f))
                .filter(|p| p.is_file())
                .collect();
            (path.clone(), files)
        } else {
            (path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf), vec![path.clone()])
        };
        let (manifest, findings) = check_manifest(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
        if path.is_dir() {
            report(&dir.join(MANIFEST_FILE), findings);
            if files.is_empty() {
                report(path, vec![fail("files", "no output files found".into())]);
            }
        }
        for f in files {
            let findings = check_csv(&f, manifest.as_ref())?;
            report(&f, findings);
        }
    }
    lines.iter().try_for_each(|l| stdout(l))?;
    if failed == 0 {
        stdout(&format!("{total} checks passed"))
    } else {
        Err(Failure::Validation(format!("{failed} of {total} checks failed")))
    }
}
