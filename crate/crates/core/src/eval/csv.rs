//! CSV schemas of the sweep, quickest and confusion outputs.
//!
//! Numbers are written with six significant digits in the style of C's
//! `%g`; the header of each file is fixed and checked on reading.

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, SweepResult};
use crate::error::{Error, Result};
use crate::quickest::RunLengthMetrics;
use crate::signal::Hypothesis;

pub const TRADEOFF_HEADER: [&str; 7] =
    ["scheme", "alpha_beta", "n_samples", "p_h2_given_h2", "half_width", "achieved_fa_h0", "achieved_fa_h1"];
pub const GRID_HEADER: [&str; 7] =
    ["m_sensors", "n_samples", "fusion_rule", "p_h2_given_h2", "half_width", "achieved_fa_h0", "achieved_fa_h1"];
pub const QUICKEST_HEADER: [&str; 5] = ["threshold_h", "arl", "arl_half_width", "delay", "delay_half_width"];
pub const CONFUSION_HEADER: [&str; 8] = [
    "true_hypothesis",
    "trials",
    "decide_no_drone",
    "decide_authorized",
    "decide_unauthorized",
    "half_width_no_drone",
    "half_width_authorized",
    "half_width_unauthorized",
];

/// Six significant digits, trailing zeros removed; exponent form below
/// `1e-4` and from `1e6` on. Non-finite values are `nan`, `inf`, `-inf`.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub scheme: String,
    pub alpha_beta: f64,
    pub n_samples: usize,
    pub p_h2_given_h2: f64,
    pub half_width: f64,
    pub achieved_fa_h0: f64,
    pub achieved_fa_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub m_sensors: usize,
    pub n_samples: usize,
    pub fusion_rule: String,
    pub p_h2_given_h2: f64,
    pub half_width: f64,
    pub achieved_fa_h0: f64,
    pub achieved_fa_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuickestRow {
    pub threshold_h: f64,
    pub arl: f64,
    pub arl_half_width: f64,
    pub delay: f64,
    pub delay_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub true_hypothesis: Hypothesis,
    pub trials: u64,
    pub decide_no_drone: f64,
    pub decide_authorized: f64,
    pub decide_unauthorized: f64,
    pub half_width_no_drone: f64,
    pub half_width_authorized: f64,
    pub half_width_unauthorized: f64,
}

impl ConfusionRow {
    pub fn probabilities(&self) -> [f64; 3] {
        [self.decide_no_drone, self.decide_authorized, self.decide_unauthorized]
    }
}

fn render(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = ::csv::WriterBuilder::new().terminator(::csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn tradeoff_csv(result: &SweepResult) -> String {
    render(
        &TRADEOFF_HEADER,
        result.points.iter().map(|p| {
            vec![
                p.scheme.name().to_string(),
                fmt_sig6(p.alpha),
                p.n_samples.to_string(),
                fmt_sig6(p.p_h2_given_h2),
                fmt_sig6(p.half_width),
                fmt_sig6(p.achieved_fa_h0),
                fmt_sig6(p.achieved_fa_h1),
            ]
        }),
    )
}

pub fn grid_csv(result: &SweepResult) -> String {
    render(
        &GRID_HEADER,
        result.points.iter().map(|p| {
            vec![
                p.m_sensors.to_string(),
                p.n_samples.to_string(),
                p.fusion_rule.clone(),
                fmt_sig6(p.p_h2_given_h2),
                fmt_sig6(p.half_width),
                fmt_sig6(p.achieved_fa_h0),
                fmt_sig6(p.achieved_fa_h1),
            ]
        }),
    )
}

pub fn quickest_csv(metrics: &[RunLengthMetrics]) -> String {
    let opt = |v: Option<f64>| fmt_sig6(v.unwrap_or(f64::NAN));
    render(
        &QUICKEST_HEADER,
        metrics.iter().map(|m| {
            vec![
                fmt_sig6(m.threshold_h),
                fmt_sig6(m.average_run_length),
                fmt_sig6(m.arl_half_width),
                opt(m.average_detection_delay),
                opt(m.delay_half_width),
            ]
        }),
    )
}

/// One line per simulated hypothesis; unsimulated rows are omitted.
pub fn confusion_csv(c: &ConfusionMatrix) -> String {
    render(
        &CONFUSION_HEADER,
        Hypothesis::ALL.into_iter().filter_map(|h| {
            let row = c.row(h)?;
            let hw = c.half_widths()[h.index()]?;
            let mut out = vec![h.to_string(), c.trial_counts()[h.index()].to_string()];
            out.extend(row.iter().map(|v| fmt_sig6(*v)));
            out.extend(hw.iter().map(|v| fmt_sig6(*v)));
            Some(out)
        }),
    )
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, header: &[&str]) -> Result<Vec<T>> {
    let mut r = ::csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| Error::Unsupported(format!("unreadable header: {e}")))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Unsupported(format!(
            "header is `{}`, expected `{}`",
            found.iter().collect::<Vec<_>>().join(","),
            header.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Unsupported(format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn parse_tradeoff(text: &str) -> Result<Vec<TradeoffRow>> {
    parse(text, &TRADEOFF_HEADER)
}

pub fn parse_grid(text: &str) -> Result<Vec<GridRow>> {
    parse(text, &GRID_HEADER)
}

pub fn parse_quickest(text: &str) -> Result<Vec<QuickestRow>> {
    parse(text, &QUICKEST_HEADER)
}

pub fn parse_confusion(text: &str) -> Result<Vec<ConfusionRow>> {
    parse(text, &CONFUSION_HEADER)
}
