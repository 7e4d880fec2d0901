//! Data filtering and precision/accuracy statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::alignment::{AlignedDataset, AlignedRecord};
use crate::crossing_beam::EpochSolution;
use crate::geometry::SweepAngle;
use crate::{Error, Result};

/// Default crossing-beam δ threshold.
pub const DEFAULT_DELTA_MAX: f64 = 0.1;

/// Default look-back window for the EKF visibility rule, seconds.
pub const DEFAULT_VISIBILITY_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPolicy {
    /// Crossing beam: drop records whose epoch lacked any angle.
    pub require_full_epoch: bool,
    /// Crossing beam: drop records with δ above this.
    pub delta_max: f64,
    /// EKF: keep a record only if every station contributed a sweep within
    /// the preceding `visibility_window`.
    pub ekf_min_visibility: bool,
    pub visibility_window: f64,
    /// Always true: rows without ground truth are never usable.
    pub drop_nan_mocap: bool,
}

impl FilterPolicy {
    pub fn crossing_beam() -> Self {
        FilterPolicy {
            require_full_epoch: true,
            delta_max: DEFAULT_DELTA_MAX,
            ekf_min_visibility: false,
            visibility_window: DEFAULT_VISIBILITY_WINDOW,
            drop_nan_mocap: true,
        }
    }

    pub fn ekf() -> Self {
        FilterPolicy {
            require_full_epoch: false,
            delta_max: f64::INFINITY,
            ekf_min_visibility: true,
            ..Self::crossing_beam()
        }
    }

    /// Only the ground-truth rule.
    pub fn ground_truth_only() -> Self {
        FilterPolicy {
            require_full_epoch: false,
            delta_max: f64::INFINITY,
            ekf_min_visibility: false,
            ..Self::crossing_beam()
        }
    }
}

/// Per-epoch crossing-beam bookkeeping, keyed by estimate timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochQuality {
    pub complete: bool,
    pub max_delta: f64,
}

/// Raw-stream facts the filters need beyond the aligned records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochInfo {
    pub epochs: BTreeMap<u64, EpochQuality>,
    /// `(timestamp_us, station id)` of every sweep, time-ordered.
    pub sweeps: Vec<(u64, u8)>,
    pub stations: Vec<u8>,
}

impl EpochInfo {
    /// Collects epoch quality from crossing-beam solutions and the sweep
    /// timeline from the raw stream.
    pub fn from_stream(solutions: &[EpochSolution], sweeps: &[SweepAngle], stations: &[u8]) -> Self {
        let epochs = solutions
            .iter()
            .map(|s| {
                let quality = match &s.result {
                    Ok(r) => EpochQuality {
                        complete: true,
                        max_delta: r.max_delta,
                    },
                    Err(_) => EpochQuality {
                        complete: false,
                        max_delta: f64::INFINITY,
                    },
                };
                (s.timestamp_us, quality)
            })
            .collect();
        EpochInfo {
            epochs,
            sweeps: sweeps.iter().map(|s| (s.timestamp_us, s.base_station)).collect(),
            stations: stations.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemovalCounts {
    pub no_ground_truth: usize,
    pub incomplete_epoch: usize,
    pub delta_exceeded: usize,
    pub insufficient_visibility: usize,
}

impl RemovalCounts {
    pub fn total(&self) -> usize {
        self.no_ground_truth + self.incomplete_epoch + self.delta_exceeded + self.insufficient_visibility
    }
}

/// Applies `policy`; each removed record is counted under the first rule
/// it fails, in the order ground truth, epoch completeness, δ, visibility.
pub fn apply_filters(dataset: &AlignedDataset, policy: &FilterPolicy, info: &EpochInfo) -> (AlignedDataset, RemovalCounts) {
    let mut counts = RemovalCounts::default();
    let window_us = (policy.visibility_window * 1e6).round() as u64;
    let records = dataset
        .records
        .iter()
        .filter(|r| {
            if policy.drop_nan_mocap && !r.has_ground_truth() {
                counts.no_ground_truth += 1;
                return false;
            }
            let quality = info.epochs.get(&r.cf_timestamp_us);
            if policy.require_full_epoch && !quality.is_some_and(|q| q.complete) {
                counts.incomplete_epoch += 1;
                return false;
            }
            if let Some(q) = quality {
                if q.max_delta > policy.delta_max {
                    counts.delta_exceeded += 1;
                    return false;
                }
            }
            if policy.ekf_min_visibility && !all_stations_seen(info, r.cf_timestamp_us, window_us) {
                counts.insufficient_visibility += 1;
                return false;
            }
            true
        })
        .copied()
        .collect();
    (
        AlignedDataset {
            records,
            ..dataset.clone()
        },
        counts,
    )
}

fn all_stations_seen(info: &EpochInfo, t_us: u64, window_us: u64) -> bool {
    let from = t_us.saturating_sub(window_us);
    let lo = info.sweeps.partition_point(|&(t, _)| t < from);
    let hi = info.sweeps.partition_point(|&(t, _)| t <= t_us);
    let recent = &info.sweeps[lo..hi];
    info.stations.iter().all(|st| recent.iter().any(|&(_, s)| s == *st))
}

/// RMS of consecutive position differences, normalized by the record count:
/// `P = √( Σ_{i<n} ‖p_i − p_{i+1}‖² / n )`.
pub fn precision(records: &[AlignedRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: records.len(),
        });
    }
    let sum: f64 = records.windows(2).map(|w| (w[0].cf - w[1].cf).norm_squared()).sum();
    Ok((sum / records.len() as f64).sqrt())
}

/// Tukey box-plot summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme data within 1.5·IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let median = quantile_sorted(&v, 0.5);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        // A whisker never reaches inside the box.
        let whisker_low = v.iter().copied().find(|&x| x >= lo).map_or(q1, |x| x.min(q1));
        let whisker_high = v.iter().rev().copied().find(|&x| x <= hi).map_or(q3, |x| x.max(q3));
        let outliers = v.iter().copied().filter(|&x| x < lo || x > hi).collect();
        Ok(BoxStats {
            q1,
            median,
            q3,
            whisker_low,
            whisker_high,
            outliers,
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    /// `A_i` per record.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub boxplot: BoxStats,
}

/// Per-record Euclidean error between the aligned estimate and ground truth.
/// Expects filtered records; a missing ground truth yields NaN errors.
pub fn accuracy(records: &[AlignedRecord]) -> Result<Accuracy> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let errors: Vec<f64> = records.iter().map(|r| (r.cf - r.mc).norm()).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let boxplot = BoxStats::from_values(&errors)?;
    Ok(Accuracy {
        errors,
        mean,
        max,
        boxplot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency {
    pub mean: f64,
    pub std: f64,
}

/// Mean ± (population) standard deviation of the instantaneous rate
/// `1 / (t_{i+1} − t_i)`, timestamps in seconds.
pub fn sample_frequency(timestamps: &[f64]) -> Result<Frequency> {
    if timestamps.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: timestamps.len(),
        });
    }
    let rates: Vec<f64> = timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&dt| dt > 0.0)
        .map(|dt| 1.0 / dt)
        .collect();
    if rates.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: rates.len() + 1,
        });
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(Frequency { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub total: usize,
    pub filtered: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Jitter `P`, meters.
    pub precision: f64,
    pub accuracy: Accuracy,
    pub frequency: Frequency,
    pub counts: Counts,
    pub removed: RemovalCounts,
}

impl MetricsReport {
    /// Filters `dataset` and computes every statistic on what remains.
    pub fn compute(dataset: &AlignedDataset, policy: &FilterPolicy, info: &EpochInfo) -> Result<Self> {
        let (kept, removed) = apply_filters(dataset, policy, info);
        if kept.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let times: Vec<f64> = kept.records.iter().map(|r| r.t).collect();
        Ok(MetricsReport {
            precision: precision(&kept.records)?,
            accuracy: accuracy(&kept.records)?,
            frequency: sample_frequency(&times)?,
            counts: Counts {
                total: dataset.records.len(),
                filtered: removed.total(),
                used: kept.records.len(),
            },
            removed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{RigidTransform, TransformFit};
    use crate::Vec3;
    use alloc::vec;

    fn rec(t_us: u64, cf: Vec3, mc: Vec3) -> AlignedRecord {
        AlignedRecord {
            cf_timestamp_us: t_us,
            t: t_us as f64 * 1e-6,
            cf,
            mc,
        }
    }

    fn dataset(records: Vec<AlignedRecord>) -> AlignedDataset {
        AlignedDataset {
            records,
            transform: RigidTransform::identity(),
            fit: TransformFit::Rigid,
            offsets: (0.0, 0.0),
            residual: 0.0,
        }
    }

    #[test]
    fn precision_cases() {
        let same: Vec<_> = (0..5).map(|i| rec(i, Vec3::new(1.0, 2.0, 3.0), Vec3::zeros())).collect();
        assert_eq!(precision(&same).unwrap(), 0.0);
        let d = 0.3;
        let two = [rec(0, Vec3::zeros(), Vec3::zeros()), rec(1, Vec3::new(0.0, d, 0.0), Vec3::zeros())];
        assert!((precision(&two).unwrap() - d / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(precision(&two[..1]), Err(Error::TooFewSamples { needed: 2, got: 1 }));
    }

    #[test]
    fn accuracy_cases() {
        let p = Vec3::new(0.5, 0.1, 1.0);
        let same: Vec<_> = (0..4).map(|i| rec(i, p, p)).collect();
        let a = accuracy(&same).unwrap();
        assert_eq!((a.mean, a.max), (0.0, 0.0));
        let shifted: Vec<_> = (0..4).map(|i| rec(i, p + Vec3::new(0.0, 0.03, 0.0), p)).collect();
        let a = accuracy(&shifted).unwrap();
        assert!((a.mean - 0.03).abs() < 1e-15 && (a.max - 0.03).abs() < 1e-15);
        assert_eq!(accuracy(&[]), Err(Error::EmptyDataset));
    }

    #[test]
    fn box_stats() {
        let b = BoxStats::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
    }

    #[test]
    fn frequency() {
        let uniform: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let f = sample_frequency(&uniform).unwrap();
        assert!((f.mean - 10.0).abs() < 1e-9 && f.std < 1e-9);
        let gappy: Vec<f64> = (0..50).filter(|i| i % 10 != 5).map(|i| i as f64 * 0.1).collect();
        assert!(sample_frequency(&gappy).unwrap().std > 1.0);
        assert!(sample_frequency(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn ground_truth_filter() {
        let nan = Vec3::repeat(f64::NAN);
        let recs: Vec<_> = (0..10).map(|i| rec(i, Vec3::zeros(), if i % 3 == 0 && i > 0 { nan } else { Vec3::zeros() })).collect();
        let (kept, counts) = apply_filters(&dataset(recs.clone()), &FilterPolicy::ground_truth_only(), &EpochInfo::default());
        assert_eq!(counts.no_ground_truth, 3);
        assert_eq!(kept.records.len(), 7);
        let all_valid: Vec<_> = recs.into_iter().filter(|r| r.has_ground_truth()).collect();
        let (again, counts) = apply_filters(&dataset(all_valid.clone()), &FilterPolicy::ground_truth_only(), &EpochInfo::default());
        assert_eq!(again.records, all_valid);
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn delta_and_epoch_rules() {
        let recs: Vec<_> = (0..3).map(|i| rec(i, Vec3::zeros(), Vec3::zeros())).collect();
        let mut info = EpochInfo::default();
        info.epochs.insert(0, EpochQuality { complete: true, max_delta: 0.05 });
        info.epochs.insert(1, EpochQuality { complete: true, max_delta: 0.11 });
        info.epochs.insert(2, EpochQuality { complete: false, max_delta: 0.0 });
        let (kept, counts) = apply_filters(&dataset(recs), &FilterPolicy::crossing_beam(), &info);
        assert_eq!(kept.records.len(), 1);
        assert_eq!(counts.delta_exceeded, 1);
        assert_eq!(counts.incomplete_epoch, 1);
    }

    #[test]
    fn visibility_rule() {
        let recs: Vec<_> = [50_000u64, 300_000].iter().map(|&t| rec(t, Vec3::zeros(), Vec3::zeros())).collect();
        let info = EpochInfo {
            epochs: BTreeMap::new(),
            sweeps: vec![(10_000, 0), (40_000, 1), (250_000, 0)],
            stations: vec![0, 1],
        };
        let (kept, counts) = apply_filters(&dataset(recs), &FilterPolicy::ekf(), &info);
        assert_eq!(kept.records.len(), 1);
        assert_eq!(kept.records[0].cf_timestamp_us, 50_000);
        assert_eq!(counts.insufficient_visibility, 1);
    }

    #[test]
    fn report_counts_add_up() {
        let nan = Vec3::repeat(f64::NAN);
        let recs: Vec<_> = (0..20u64).map(|i| rec(i * 33_000, Vec3::new(0.001 * i as f64, 0.0, 0.0), if i == 7 { nan } else { Vec3::zeros() })).collect();
        let r = MetricsReport::compute(&dataset(recs), &FilterPolicy::ground_truth_only(), &EpochInfo::default()).unwrap();
        assert_eq!(r.counts.used + r.counts.filtered, r.counts.total);
        assert_eq!(r.counts.filtered, 1);
        let empty: Vec<_> = (0..3).map(|i| rec(i, Vec3::zeros(), nan)).collect();
        assert_eq!(MetricsReport::compute(&dataset(empty), &FilterPolicy::ground_truth_only(), &EpochInfo::default()), Err(Error::EmptyDataset));
    }
}
