//! Tab-separated text tables written between stages and for plotting.
//!
//! Floats use Rust's shortest round-trip formatting, so a table read back
//! reproduces the written values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lhtrack_core::alignment::{AlignedDataset, AlignedRecord, RigidTransform, TransformFit};
use lhtrack_core::crossing_beam::EpochSolution;
use lhtrack_core::metrics::{EpochQuality, MetricsReport};
use lhtrack_core::{Mat3, Vec3};

use crate::manifest::Estimator;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{table} line {line}: {reason}")]
pub struct TableError {
    pub table: &'static str,
    pub line: usize,
    pub reason: String,
}

fn err(table: &'static str, line: usize, reason: impl Into<String>) -> TableError {
    TableError {
        table,
        line,
        reason: reason.into(),
    }
}

fn join(values: impl IntoIterator<Item = f64>, sep: &str) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn floats(table: &'static str, line: usize, s: &str, sep: char, n: usize) -> Result<Vec<f64>, TableError> {
    let v: Vec<f64> = s
        .split(sep)
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(table, line, e.to_string()))?;
    if v.len() != n {
        return Err(err(table, line, format!("expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

pub const ALIGNED_COLUMNS: &str = "cf_timestamp_us\tt\tcf_x\tcf_y\tcf_z\tmc_x\tmc_y\tmc_z";

/// Aligned dataset with a `#`-prefixed metadata header.
pub fn write_aligned(ds: &AlignedDataset, estimator: Estimator) -> String {
    let r = &ds.transform.rotation;
    let mut s = String::new();
    let fit = match ds.fit {
        TransformFit::Rigid => "rigid",
        TransformFit::TranslationOnly => "translation_only",
    };
    writeln!(s, "# estimator = {estimator}").unwrap();
    writeln!(s, "# fit = {fit}").unwrap();
    writeln!(s, "# rotation = {}", join((0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])), ",")).unwrap();
    writeln!(s, "# translation = {}", join(ds.transform.translation.iter().copied(), ",")).unwrap();
    writeln!(s, "# offsets = {},{}", ds.offsets.0, ds.offsets.1).unwrap();
    writeln!(s, "# residual = {}", ds.residual).unwrap();
    writeln!(s, "{ALIGNED_COLUMNS}").unwrap();
    for rec in &ds.records {
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            rec.cf_timestamp_us,
            rec.t,
            join(rec.cf.iter().copied(), "\t"),
            join(rec.mc.iter().copied(), "\t")
        )
        .unwrap();
    }
    s
}

pub fn read_aligned(text: &str) -> Result<(AlignedDataset, Estimator), TableError> {
    const T: &str = "aligned.tsv";
    let mut meta = BTreeMap::new();
    let mut records = Vec::new();
    let mut seen_columns = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(m) = line.strip_prefix('#') {
            let (k, v) = m.split_once('=').ok_or_else(|| err(T, n, "malformed metadata"))?;
            meta.insert(k.trim().to_string(), (n, v.trim().to_string()));
            continue;
        }
        if !seen_columns {
            if line != ALIGNED_COLUMNS {
                return Err(err(T, n, "missing column header"));
            }
            seen_columns = true;
            continue;
        }
        let (ts, rest) = line.split_once('\t').ok_or_else(|| err(T, n, "too few columns"))?;
        let cf_timestamp_us = ts.parse().map_err(|_| err(T, n, "bad timestamp"))?;
        let v = floats(T, n, rest, '\t', 7)?;
        records.push(AlignedRecord {
            cf_timestamp_us,
            t: v[0],
            cf: Vec3::new(v[1], v[2], v[3]),
            mc: Vec3::new(v[4], v[5], v[6]),
        });
    }
    let mut get = |key: &str| meta.remove(key).ok_or_else(|| err(T, 0, format!("metadata `{key}` missing")));
    let (n, est) = get("estimator")?;
    let estimator: Estimator = est.parse().map_err(|e: crate::manifest::UnknownEstimator| err(T, n, e.to_string()))?;
    let (n, fit) = get("fit")?;
    let fit = match fit.as_str() {
        "rigid" => TransformFit::Rigid,
        "translation_only" => TransformFit::TranslationOnly,
        _ => return Err(err(T, n, "fit must be rigid or translation_only")),
    };
    let (n, rot) = get("rotation")?;
    let rotation = Mat3::from_row_slice(&floats(T, n, &rot, ',', 9)?);
    let (n, tr) = get("translation")?;
    let translation = Vec3::from_vec(floats(T, n, &tr, ',', 3)?);
    let (n, off) = get("offsets")?;
    let off = floats(T, n, &off, ',', 2)?;
    let (n, res) = get("residual")?;
    let residual = floats(T, n, &res, ',', 1)?[0];
    Ok((
        AlignedDataset {
            records,
            transform: RigidTransform { rotation, translation },
            fit,
            offsets: (off[0], off[1]),
            residual,
        },
        estimator,
    ))
}

pub const EPOCH_COLUMNS: &str = "timestamp_us\tcomplete\tmax_delta\tdelta_0\tdelta_1\tdelta_2\tdelta_3\tx\ty\tz";

/// Per-epoch crossing-beam sidecar; incomplete epochs carry NaN fields.
pub fn write_epochs(solutions: &[EpochSolution]) -> String {
    let mut s = String::from(EPOCH_COLUMNS);
    s.push('\n');
    for e in solutions {
        match &e.result {
            Ok(r) => writeln!(
                s,
                "{}\t1\t{}\t{}\t{}",
                e.timestamp_us,
                r.max_delta,
                join(r.per_sensor.iter().map(|f| f.delta), "\t"),
                join(r.position.iter().copied(), "\t")
            ),
            Err(_) => writeln!(s, "{}\t0{}", e.timestamp_us, "\tNaN".repeat(8)),
        }
        .unwrap();
    }
    s
}

pub fn read_epochs(text: &str) -> Result<BTreeMap<u64, EpochQuality>, TableError> {
    const T: &str = "epochs.tsv";
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(EPOCH_COLUMNS) {
        return Err(err(T, 1, "missing column header"));
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines {
        let n = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(T, n, format!("expected 10 columns, found {}", cols.len())));
        }
        let ts = cols[0].parse().map_err(|_| err(T, n, "bad timestamp"))?;
        let complete = match cols[1] {
            "1" => true,
            "0" => false,
            _ => return Err(err(T, n, "complete must be 0 or 1")),
        };
        let max_delta = cols[2].parse::<f64>().map_err(|_| err(T, n, "bad max_delta"))?;
        let max_delta = if complete { max_delta } else { f64::INFINITY };
        out.insert(ts, EpochQuality { complete, max_delta });
    }
    Ok(out)
}

/// Machine-readable `key\tvalue` summary.
pub fn write_summary(report: &MetricsReport, ds: &AlignedDataset, estimator: Estimator) -> String {
    let a = &report.accuracy;
    let b = &a.boxplot;
    let rows: Vec<(&str, String)> = vec![
        ("estimator", estimator.to_string()),
        ("records_total", report.counts.total.to_string()),
        ("records_filtered", report.counts.filtered.to_string()),
        ("records_used", report.counts.used.to_string()),
        ("removed_no_ground_truth", report.removed.no_ground_truth.to_string()),
        ("removed_incomplete_epoch", report.removed.incomplete_epoch.to_string()),
        ("removed_delta_exceeded", report.removed.delta_exceeded.to_string()),
        ("removed_insufficient_visibility", report.removed.insufficient_visibility.to_string()),
        ("frequency_mean_hz", report.frequency.mean.to_string()),
        ("frequency_std_hz", report.frequency.std.to_string()),
        ("precision_m", report.precision.to_string()),
        ("accuracy_mean_m", a.mean.to_string()),
        ("accuracy_max_m", a.max.to_string()),
        ("accuracy_median_m", b.median.to_string()),
        ("accuracy_q1_m", b.q1.to_string()),
        ("accuracy_q3_m", b.q3.to_string()),
        ("accuracy_whisker_low_m", b.whisker_low.to_string()),
        ("accuracy_whisker_high_m", b.whisker_high.to_string()),
        ("accuracy_outliers", b.outliers.len().to_string()),
        ("offset_start_s", ds.offsets.0.to_string()),
        ("offset_end_s", ds.offsets.1.to_string()),
        ("alignment_residual_m", ds.residual.to_string()),
    ];
    rows.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
}

pub fn read_summary(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Human-readable table.
pub fn write_report(report: &MetricsReport, ds: &AlignedDataset, estimator: Estimator) -> String {
    let a = &report.accuracy;
    let b = &a.boxplot;
    let mm = |m: f64| format!("{:.3} mm", m * 1e3);
    let mut s = String::new();
    writeln!(s, "estimator          {estimator}").unwrap();
    writeln!(s, "records            {} total, {} filtered, {} used", report.counts.total, report.counts.filtered, report.counts.used).unwrap();
    writeln!(
        s,
        "  removed          {} no ground truth, {} incomplete epoch, {} delta, {} visibility",
        report.removed.no_ground_truth, report.removed.incomplete_epoch, report.removed.delta_exceeded, report.removed.insufficient_visibility
    )
    .unwrap();
    writeln!(s, "frequency          {:.2} ± {:.2} Hz", report.frequency.mean, report.frequency.std).unwrap();
    writeln!(s, "precision (P)      {}", mm(report.precision)).unwrap();
    writeln!(s, "accuracy mean (Ā)  {}", mm(a.mean)).unwrap();
    writeln!(s, "accuracy max       {}", mm(a.max)).unwrap();
    writeln!(s, "accuracy median    {}", mm(b.median)).unwrap();
    writeln!(s, "quartiles          {} .. {}", mm(b.q1), mm(b.q3)).unwrap();
    writeln!(s, "whiskers           {} .. {}", mm(b.whisker_low), mm(b.whisker_high)).unwrap();
    writeln!(s, "outliers           {}", b.outliers.len()).unwrap();
    writeln!(s, "time offsets       {:+.1} ms / {:+.1} ms", ds.offsets.0 * 1e3, ds.offsets.1 * 1e3).unwrap();
    writeln!(s, "fit residual       {}", mm(ds.residual)).unwrap();
    s
}

pub const BOXPLOT_COLUMNS: &str = "estimator\tn\tq1\tmedian\tq3\twhisker_low\twhisker_high\tmean\tmax";

/// One box-plot row plus the outliers, one per line, for plotting.
pub fn write_boxplot(report: &MetricsReport, estimator: Estimator) -> String {
    let a = &report.accuracy;
    let b = &a.boxplot;
    let mut s = format!("{BOXPLOT_COLUMNS}\n");
    writeln!(
        s,
        "{estimator}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        a.errors.len(),
        b.q1,
        b.median,
        b.q3,
        b.whisker_low,
        b.whisker_high,
        a.mean,
        a.max
    )
    .unwrap();
    s.push_str("# outliers\n");
    for o in &b.outliers {
        writeln!(s, "{o}").unwrap();
    }
    s
}

/// Per-record `A_i` for the records that survived filtering.
pub fn write_accuracy(kept: &[AlignedRecord], errors: &[f64]) -> String {
    let mut s = String::from("cf_timestamp_us\tt\terror_m\n");
    for (r, e) in kept.iter().zip(errors) {
        writeln!(s, "{}\t{}\t{e}", r.cf_timestamp_us, r.t).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use lhtrack_core::crossing_beam::{CrossingBeamResult, SensorFix};
    use lhtrack_core::Error;

    #[test]
    fn aligned_round_trip_bit_exact() {
        let ds = AlignedDataset {
            records: vec![
                AlignedRecord {
                    cf_timestamp_us: 5,
                    t: 0.1 + 0.2,
                    cf: Vec3::new(1.0 / 3.0, -2.5e-17, 7.0),
                    mc: Vec3::repeat(f64::NAN),
                },
                AlignedRecord {
                    cf_timestamp_us: 9,
                    t: 1.0,
                    cf: Vec3::zeros(),
                    mc: Vec3::new(std::f64::consts::PI, 0.0, -1.0),
                },
            ],
            transform: RigidTransform::from_axis_angle(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 3.0)),
            fit: TransformFit::TranslationOnly,
            offsets: (0.041, -0.002),
            residual: 1.5e-9,
        };
        let text = write_aligned(&ds, Estimator::Ekf);
        let (back, est) = read_aligned(&text).unwrap();
        assert_eq!(est, Estimator::Ekf);
        assert_eq!(write_aligned(&back, est), text);
        assert_eq!(back.records[0].t.to_bits(), ds.records[0].t.to_bits());
        assert!(back.records[0].mc.x.is_nan());
        assert_eq!(back.transform, ds.transform);
    }

    #[test]
    fn aligned_missing_metadata() {
        let text = format!("# fit = rigid\n{ALIGNED_COLUMNS}\n");
        assert!(read_aligned(&text).unwrap_err().reason.contains("estimator"));
    }

    #[test]
    fn epochs_round_trip() {
        let fix = SensorFix {
            position: Vec3::zeros(),
            delta: 0.02,
            used: true,
        };
        let sols = vec![
            EpochSolution {
                timestamp_us: 100,
                result: Ok(CrossingBeamResult {
                    position: Vec3::new(1.0, 2.0, 3.0),
                    per_sensor: [fix; 4],
                    max_delta: 0.02,
                    timestamp_us: 100,
                }),
            },
            EpochSolution {
                timestamp_us: 200,
                result: Err(Error::ParallelRays),
            },
        ];
        let q = read_epochs(&write_epochs(&sols)).unwrap();
        assert_eq!(q[&100], EpochQuality { complete: true, max_delta: 0.02 });
        assert!(!q[&200].complete);
    }
}
