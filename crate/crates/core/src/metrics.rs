//! Headline quantities of a run and their aggregation across seeds.
//!
//! Results CSV columns, in order:
//!
//! `scheduler,num_aps,grt_s,speed_ratio,seed,gofe,f_alloc,f_byte,norm_energy,total_bytes,gate_bytes,macro_bytes`
//!
//! One row per (sweep point, seed), followed by one row per sweep point whose
//! `seed` column reads `mean` and whose values are the per-seed means.
//! Undefined metrics (nothing generated, nothing granted) are left empty.

use std::cmp::Ordering;
use std::io::Write;

use thiserror::Error;

use crate::model::{EnergyConfig, MetricsReport, SchedulerKind};

pub const RESULT_COLUMNS: [&str; 12] = [
    "scheduler",
    "num_aps",
    "grt_s",
    "speed_ratio",
    "seed",
    "gofe",
    "f_alloc",
    "f_byte",
    "norm_energy",
    "total_bytes",
    "gate_bytes",
    "macro_bytes",
];

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "scheduler",
    "num_aps",
    "grt_s",
    "speed_ratio",
    "metric",
    "count",
    "mean",
    "std",
];

/// Significant digits used for decimal CSV output.
const SIG_DIGITS: i32 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{0} is undefined for this input")]
    Undefined(&'static str),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Jain's index `(sum x)^2 / (K sum x^2)`, in `[1/K, 1]`.
pub fn jain_index(values: &[f64]) -> Result<f64, MetricsError> {
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if values.is_empty() || sum_sq == 0.0 {
        return Err(MetricsError::Undefined("fairness index"));
    }
    let k = values.len() as f64;
    Ok((sum * sum / (k * sum_sq)).clamp(1.0 / k, 1.0))
}

/// Fairness of granted slots.
pub fn allocation_fairness(slots: &[u64]) -> Result<f64, MetricsError> {
    let v: Vec<f64> = slots.iter().map(|&a| a as f64).collect();
    jain_index(&v).map_err(|_| MetricsError::Undefined("allocation fairness"))
}

/// Fairness of offloaded bytes.
pub fn byte_fairness(bytes: &[u64]) -> Result<f64, MetricsError> {
    let v: Vec<f64> = bytes.iter().map(|&b| b as f64).collect();
    jain_index(&v).map_err(|_| MetricsError::Undefined("byte offloading fairness"))
}

/// Gate offloading efficiency: share of generated bytes carried by the gate.
pub fn gofe(bytes_via_gate: u64, total_generated_bytes: u64) -> Result<f64, MetricsError> {
    if total_generated_bytes == 0 {
        return Err(MetricsError::Undefined("gofe"));
    }
    Ok(bytes_via_gate as f64 / total_generated_bytes as f64)
}

/// UE energy with offloading over the energy of sending everything by macro.
/// Energy is active radio time times the module's power draw.
pub fn normalized_energy(
    gate_active_s: f64,
    macro_active_s: f64,
    total_generated_bytes: u64,
    energy: &EnergyConfig,
    macro_rate_bps: f64,
) -> Result<f64, MetricsError> {
    let all_macro_s = total_generated_bytes as f64 * 8.0 / macro_rate_bps;
    let denominator = energy.ue_power_macro_w * all_macro_s;
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(MetricsError::Undefined("normalized energy"));
    }
    Ok((energy.ue_power_mmw_w * gate_active_s + energy.ue_power_macro_w * macro_active_s) / denominator)
}

/// Identifies a sweep point; runs sharing it are aggregated together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub scheduler: SchedulerKind,
    pub num_aps: usize,
    pub grt_s: f64,
    pub speed_ratio: f64,
}

impl SweepPoint {
    pub fn of(r: &MetricsReport) -> Self {
        SweepPoint {
            scheduler: r.scheduler,
            num_aps: r.num_aps,
            grt_s: r.grt_s,
            speed_ratio: r.speed_ratio,
        }
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.scheduler
            .cmp(&other.scheduler)
            .then(self.num_aps.cmp(&other.num_aps))
            .then(self.grt_s.total_cmp(&other.grt_s))
            .then(self.speed_ratio.total_cmp(&other.speed_ratio))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stats {
            count: values.len(),
            mean,
            std,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub point: SweepPoint,
    pub runs: usize,
    pub gofe: Option<Stats>,
    pub f_alloc: Option<Stats>,
    pub f_byte: Option<Stats>,
    pub norm_energy: Option<Stats>,
    pub total_bytes: Option<Stats>,
    pub gate_bytes: Option<Stats>,
    pub macro_bytes: Option<Stats>,
}

impl Aggregate {
    fn metrics(&self) -> [(&'static str, Option<Stats>); 7] {
        [
            ("gofe", self.gofe),
            ("f_alloc", self.f_alloc),
            ("f_byte", self.f_byte),
            ("norm_energy", self.norm_energy),
            ("total_bytes", self.total_bytes),
            ("gate_bytes", self.gate_bytes),
            ("macro_bytes", self.macro_bytes),
        ]
    }
}

fn cmp_reports(a: &MetricsReport, b: &MetricsReport) -> Ordering {
    SweepPoint::of(a)
        .cmp_key(&SweepPoint::of(b))
        .then(a.seed.cmp(&b.seed))
        .then(a.total_generated_bytes.cmp(&b.total_generated_bytes))
        .then(a.bytes_via_gate.cmp(&b.bytes_via_gate))
}

/// Mean, sample std and count per metric per sweep point. Runs are put in a
/// canonical order first, so the output does not depend on input order.
pub fn summarize(runs: &[MetricsReport]) -> Vec<Aggregate> {
    let mut sorted: Vec<&MetricsReport> = runs.iter().collect();
    sorted.sort_by(|a, b| cmp_reports(a, b));

    let mut out = Vec::new();
    for group in sorted.chunk_by(|a, b| SweepPoint::of(a).cmp_key(&SweepPoint::of(b)).is_eq()) {
        let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
            Stats::of(&group.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        out.push(Aggregate {
            point: SweepPoint::of(group[0]),
            runs: group.len(),
            gofe: collect(&|r| r.gofe),
            f_alloc: collect(&|r| r.f_alloc),
            f_byte: collect(&|r| r.f_byte),
            norm_energy: collect(&|r| r.norm_energy),
            total_bytes: collect(&|r| Some(r.total_generated_bytes as f64)),
            gate_bytes: collect(&|r| Some(r.bytes_via_gate as f64)),
            macro_bytes: collect(&|r| Some(r.bytes_via_macro as f64)),
        });
    }
    out
}

/// Decimal text with at least [`SIG_DIGITS`] significant digits.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (SIG_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_decimal).unwrap_or_default()
}

fn point_fields(p: &SweepPoint) -> [String; 4] {
    [
        p.scheduler.to_string(),
        p.num_aps.to_string(),
        format_decimal(p.grt_s),
        format_decimal(p.speed_ratio),
    ]
}

/// Writes per-seed rows (sorted by sweep point, then seed) followed by one
/// mean row per aggregate.
pub fn write_results_csv<W: Write>(out: W, runs: &[MetricsReport], aggregates: &[Aggregate]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    let mut sorted: Vec<&MetricsReport> = runs.iter().collect();
    sorted.sort_by(|a, b| cmp_reports(a, b));
    for r in sorted {
        let [s, a, g, v] = point_fields(&SweepPoint::of(r));
        w.write_record([
            s,
            a,
            g,
            v,
            r.seed.to_string(),
            opt(r.gofe),
            opt(r.f_alloc),
            opt(r.f_byte),
            opt(r.norm_energy),
            r.total_generated_bytes.to_string(),
            r.bytes_via_gate.to_string(),
            r.bytes_via_macro.to_string(),
        ])?;
    }
    for agg in aggregates {
        let [s, a, g, v] = point_fields(&agg.point);
        let mean = |st: Option<Stats>| opt(st.map(|x| x.mean));
        w.write_record([
            s,
            a,
            g,
            v,
            "mean".to_string(),
            mean(agg.gofe),
            mean(agg.f_alloc),
            mean(agg.f_byte),
            mean(agg.norm_energy),
            mean(agg.total_bytes),
            mean(agg.gate_bytes),
            mean(agg.macro_bytes),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format statistics: one row per (sweep point, metric).
pub fn write_summary_csv<W: Write>(out: W, aggregates: &[Aggregate]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for agg in aggregates {
        let [s, a, g, v] = point_fields(&agg.point);
        for (name, st) in agg.metrics() {
            let (count, mean, std) = match st {
                Some(st) => (st.count.to_string(), format_decimal(st.mean), format_decimal(st.std)),
                None => ("0".to_string(), String::new(), String::new()),
            };
            w.write_record([
                s.clone(),
                a.clone(),
                g.clone(),
                v.clone(),
                name.to_string(),
                count,
                mean,
                std,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GB: u64 = 1_000_000_000;

    fn report(seed: u64, gofe: f64) -> MetricsReport {
        MetricsReport {
            scheduler: SchedulerKind::Wpf,
            num_aps: 3,
            grt_s: 3600.0,
            speed_ratio: 1.0,
            seed,
            gofe: Some(gofe),
            f_alloc: Some(0.9),
            f_byte: None,
            norm_energy: Some(1.0 - gofe),
            total_generated_bytes: 100,
            bytes_via_gate: (gofe * 100.0) as u64,
            bytes_via_macro: 100 - (gofe * 100.0) as u64,
            undelivered_bytes: 0,
            gate_active_s: 0.0,
            macro_active_s: 0.0,
            total_slots: 0,
            grants_issued: 0,
            users: Vec::new(),
        }
    }

    #[test]
    fn allocation_fairness_values() {
        assert_eq!(allocation_fairness(&[5, 5, 5]).unwrap(), 1.0);
        assert!((allocation_fairness(&[1, 3]).unwrap() - 0.8).abs() < 1e-15);
        assert!((allocation_fairness(&[1, 0, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            allocation_fairness(&[0, 0]),
            Err(MetricsError::Undefined("allocation fairness"))
        );
    }

    #[test]
    fn byte_fairness_values() {
        assert_eq!(byte_fairness(&[2 * GB, 2 * GB]).unwrap(), 1.0);
        assert!((byte_fairness(&[GB, 2 * GB, 3 * GB]).unwrap() - 6.0 / 7.0).abs() < 1e-12);
        let base = byte_fairness(&[GB, 2 * GB, 3 * GB]).unwrap();
        assert!((byte_fairness(&[7 * GB, 14 * GB, 21 * GB]).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn gofe_values() {
        assert_eq!(gofe(68, 68).unwrap(), 1.0);
        assert_eq!(gofe(0, 68).unwrap(), 0.0);
        assert!((gofe(64_600_000_000, 68_040_000_000).unwrap() - 0.9494).abs() < 1e-4);
        assert_eq!(gofe(0, 0), Err(MetricsError::Undefined("gofe")));
    }

    #[test]
    fn energy_values() {
        let e = EnergyConfig::default();
        let total = 68_040_000_000u64;
        let macro_s = total as f64 * 8.0 / 1e8;
        assert_eq!(normalized_energy(0.0, macro_s, total, &e, 1e8).unwrap(), 1.0);

        // Everything through the gate at 3 Gbps against a 100 Mbps macro.
        let gate_s = total as f64 * 8.0 / 3e9;
        let r = normalized_energy(gate_s, 0.0, total, &e, 1e8).unwrap();
        assert!((r - 1e8 / 3e9).abs() < 1e-12);

        let doubled = EnergyConfig {
            ue_power_mmw_w: 4.0,
            ue_power_macro_w: 4.0,
        };
        assert_eq!(normalized_energy(gate_s, 0.0, total, &doubled, 1e8).unwrap(), r);
        assert!(normalized_energy(1.0, 0.0, 0, &e, 1e8).is_err());
    }

    #[test]
    fn energy_falls_as_gate_share_rises() {
        let e = EnergyConfig::default();
        let total = 10 * GB;
        let mut last = f64::INFINITY;
        for pct in 0..=100u64 {
            let gate = total * pct / 100;
            let r = normalized_energy(
                gate as f64 * 8.0 / 5e9,
                (total - gate) as f64 * 8.0 / 1e8,
                total,
                &e,
                1e8,
            )
            .unwrap();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn summarize_single_and_pair() {
        let one = summarize(&[report(1, 0.9)]);
        assert_eq!(one.len(), 1);
        assert_eq!(
            one[0].gofe.unwrap(),
            Stats {
                count: 1,
                mean: 0.9,
                std: 0.0
            }
        );
        assert!(one[0].f_byte.is_none());

        let two = summarize(&[report(1, 0.9), report(2, 1.0)]);
        let g = two[0].gofe.unwrap();
        assert_eq!(g.count, 2);
        assert!((g.mean - 0.95).abs() < 1e-12);
        assert!((g.std - 0.0707106781).abs() < 1e-9);
    }

    #[test]
    fn summarize_groups_points() {
        let mut other = report(1, 0.5);
        other.num_aps = 4;
        let aggs = summarize(&[report(1, 0.9), other, report(2, 0.7)]);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].point.num_aps, 3);
        assert_eq!(aggs[0].runs, 2);
        assert_eq!(aggs[1].runs, 1);
    }

    #[test]
    fn decimal_format_keeps_precision() {
        assert_eq!(format_decimal(0.95), "0.9500000000");
        assert_eq!(format_decimal(1800.0), "1800.000000");
        assert_eq!(format_decimal(68_040_000_000.0), "68040000000");
        assert_eq!(format_decimal(0.0), "0");
        let v = 0.012345678912;
        assert!((format_decimal(v).parse::<f64>().unwrap() / v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn results_csv_layout() {
        let runs = [report(2, 1.0), report(1, 0.9)];
        let aggs = summarize(&runs);
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &runs, &aggs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULT_COLUMNS.join(","));
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("wpf,3,3600.000000,1.000000000,1,0.9000000000,"));
        assert!(lines[2].contains(",2,1.000000000,"));
        assert!(lines[3].contains(",mean,0.9500000000,"));
        // Undefined f_byte stays empty.
        assert!(lines[1].contains(",0.9000000000,,"));

        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &aggs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 7);
        assert!(text.contains("wpf,3,3600.000000,1.000000000,f_byte,0,,"));
    }

    proptest! {
        #[test]
        fn jain_bounds(values in prop::collection::vec(0u64..1_000_000, 1..30)) {
            prop_assume!(values.iter().any(|&v| v > 0));
            let f = allocation_fairness(&values).unwrap();
            let k = values.len() as f64;
            prop_assert!(f >= 1.0 / k && f <= 1.0);
        }

        #[test]
        fn jain_equal_is_one(v in 1u64..u64::MAX / 1024, k in 1usize..50) {
            prop_assert!((byte_fairness(&vec![v; k]).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn summarize_is_order_independent(
            gofes in prop::collection::vec(0.0f64..=1.0, 1..12),
            rotate in 0usize..12,
        ) {
            let runs: Vec<_> = gofes.iter().enumerate().map(|(i, &g)| report(i as u64, g)).collect();
            let mut shuffled = runs.clone();
            let n = shuffled.len();
            shuffled.rotate_left(rotate % n);
            shuffled.reverse();
            prop_assert_eq!(summarize(&runs), summarize(&shuffled));
        }
    }
}
