//! Spatiotemporal alignment of onboard estimates with motion-capture ground
//! truth: clock rescaling between the LED sync anchors, linear interpolation
//! of the mocap stream, SVD rigid registration, and a grid search over start
//! and end latency offsets.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::{Matrix3, Rotation3, SVD};

use crate::{Error, Mat3, Result, Vec3};

/// Rigid fits fail when the second singular value of the centred
/// cross-covariance is below this.
pub const DEGENERATE_SINGULAR_VALUE: f64 = 1e-12;

/// Rotation plus translation, mapping the LH frame into the mocap frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// From a rotation vector (axis × angle, radians) and a translation.
    pub fn from_axis_angle(rotation_vector: Vec3, translation: Vec3) -> Self {
        RigidTransform {
            rotation: *Rotation3::new(rotation_vector).matrix(),
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle of `self.rotation · other.rotationᵀ`, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let d = self.rotation * other.rotation.transpose();
        ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Least-squares rigid transform with `R · p + t ≈ q` for pairs `(p, q)`.
///
/// Pairs containing NaN are skipped. A reflection in the SVD solution is
/// corrected by flipping the direction of the smallest singular value.
pub fn fit_rigid_transform(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform> {
    let finite: Vec<&(Vec3, Vec3)> = pairs.iter().filter(|(p, q)| is_finite(p) && is_finite(q)).collect();
    if finite.len() < 3 {
        return Err(Error::DegenerateGeometry);
    }
    let n = finite.len() as f64;
    let cp = finite.iter().map(|(p, _)| p).sum::<Vec3>() / n;
    let cq = finite.iter().map(|(_, q)| q).sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in &finite {
        h += (p - cp) * (q - cq).transpose();
    }
    let svd = SVD::new(h, true, true);
    let mut sv: [f64; 3] = svd.singular_values.into();
    let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(2);
    sv.sort_by(f64::total_cmp);
    if sv[1] < DEGENERATE_SINGULAR_VALUE {
        return Err(Error::DegenerateGeometry);
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry),
    };
    let v = v_t.transpose();
    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cq - rotation * cp,
    })
}

/// Translation-only fit (`R = I`), for point sets too degenerate for
/// [`fit_rigid_transform`] such as stationary sessions.
pub fn fit_translation(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform> {
    let mut sum = Vec3::zeros();
    let mut n = 0usize;
    for (p, q) in pairs.iter().filter(|(p, q)| is_finite(p) && is_finite(q)) {
        sum += q - p;
        n += 1;
    }
    if n == 0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(RigidTransform {
        rotation: Mat3::identity(),
        translation: sum / n as f64,
    })
}

fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Linear clock map `t̂ = (t − t_s^CF) · (t_f^MC − t_s^MC) / (t_f^CF − t_s^CF)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockRescale {
    cf_start_us: u64,
    scale: f64,
}

impl ClockRescale {
    /// Onboard anchors in microseconds, mocap anchors in seconds.
    pub fn new(cf_start_us: u64, cf_end_us: u64, mc_start: f64, mc_end: f64) -> Result<Self> {
        if cf_end_us <= cf_start_us || !(mc_end > mc_start) {
            return Err(Error::InvalidAnchors);
        }
        let cf_span = (cf_end_us - cf_start_us) as f64 * 1e-6;
        Ok(ClockRescale {
            cf_start_us,
            scale: (mc_end - mc_start) / cf_span,
        })
    }

    /// Seconds since the start anchor, on the mocap time scale.
    pub fn apply(&self, t_us: u64) -> f64 {
        let dt = if t_us >= self.cf_start_us {
            (t_us - self.cf_start_us) as f64
        } else {
            -((self.cf_start_us - t_us) as f64)
        };
        dt * 1e-6 * self.scale
    }
}

/// Rescales a batch of onboard timestamps; see [`ClockRescale`].
pub fn rescale_clock(timestamps_us: &[u64], cf_start_us: u64, cf_end_us: u64, mc_start: f64, mc_end: f64) -> Result<Vec<f64>> {
    let c = ClockRescale::new(cf_start_us, cf_end_us, mc_start, mc_end)?;
    Ok(timestamps_us.iter().map(|&t| c.apply(t)).collect())
}

/// Motion-capture series on its own clock. NaN positions mark frames
/// without a full marker set.
#[derive(Debug, Clone, PartialEq)]
pub struct MocapSeries {
    /// Nominal rate, Hz.
    pub rate: f64,
    /// Timestamps, seconds.
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
}

impl MocapSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First and last timestamps with a valid position.
    pub fn visible_span(&self) -> Option<(f64, f64)> {
        let first = self.positions.iter().position(is_finite)?;
        let last = self.positions.iter().rposition(is_finite)?;
        Some((self.times[first], self.times[last]))
    }

    fn max_gap(&self) -> f64 {
        2.0 / self.rate
    }

    /// Linear interpolation at absolute mocap time `t`; NaN when a bracket is
    /// missing, NaN, or more than two nominal periods wide.
    pub fn interpolate(&self, t: f64) -> Vec3 {
        let nan = Vec3::repeat(f64::NAN);
        let hi = self.times.partition_point(|&x| x < t);
        if hi < self.times.len() && self.times[hi] == t {
            return self.positions[hi];
        }
        if hi == 0 || hi >= self.times.len() {
            return nan;
        }
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        if t1 - t0 > self.max_gap() {
            return nan;
        }
        let (p0, p1) = (self.positions[lo], self.positions[hi]);
        let w = (t - t0) / (t1 - t0);
        p0 + (p1 - p0) * w
    }

    /// True when interpolation is valid everywhere in `[t_lo, t_hi]`.
    fn valid_over(&self, t_lo: f64, t_hi: f64) -> bool {
        let start = self.times.partition_point(|&x| x <= t_lo);
        let end = self.times.partition_point(|&x| x < t_hi);
        if start == 0 || end >= self.times.len() {
            return false;
        }
        let (a, b) = (start - 1, end);
        (a..=b).all(|i| is_finite(&self.positions[i]))
            && (a..b).all(|i| self.times[i + 1] - self.times[i] <= self.max_gap())
    }
}

/// Stand-alone form of [`MocapSeries::interpolate`].
pub fn interpolate_mocap(t: f64, mocap: &MocapSeries) -> Vec3 {
    mocap.interpolate(t)
}

/// One onboard position estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfSample {
    pub timestamp_us: u64,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    /// Offsets are searched over `[−range, +range]`, seconds.
    pub range: f64,
    /// Coarse grid step, seconds.
    pub coarse_step: f64,
    /// The refinement grid uses `coarse_step / refine_divisions`.
    pub refine_divisions: u32,
    pub min_pairs: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            range: 0.100,
            coarse_step: 0.005,
            refine_divisions: 5,
            min_pairs: 10,
        }
    }
}

impl AlignConfig {
    pub fn fine_step(&self) -> f64 {
        self.coarse_step / self.refine_divisions as f64
    }
}

/// How the transform of an [`AlignedDataset`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformFit {
    Rigid,
    /// Points were degenerate (e.g. stationary); rotation fixed to identity.
    TranslationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedRecord {
    /// Original onboard timestamp.
    pub cf_timestamp_us: u64,
    /// `t̂`, seconds since the (offset) start anchor.
    pub t: f64,
    /// Onboard position mapped into the mocap frame.
    pub cf: Vec3,
    /// Interpolated ground truth, NaN when unavailable.
    pub mc: Vec3,
}

impl AlignedRecord {
    pub fn has_ground_truth(&self) -> bool {
        is_finite(&self.mc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub records: Vec<AlignedRecord>,
    pub transform: RigidTransform,
    pub fit: TransformFit,
    /// `(t_s^o, t_f^o)`, seconds.
    pub offsets: (f64, f64),
    /// Mean Euclidean error over the pairs used in the search, meters.
    pub residual: f64,
}

/// Sync anchors: LED on/off on the onboard clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedAnchors {
    pub on_us: u64,
    pub off_us: u64,
}

struct Cell {
    offsets: (f64, f64),
    objective: f64,
    transform: RigidTransform,
    fit: TransformFit,
}

/// Runs the offset search and returns the best aligned dataset.
pub fn align(samples: &[CfSample], anchors: LedAnchors, mocap: &MocapSeries, config: &AlignConfig) -> Result<AlignedDataset> {
    let (mc_start, mc_end) = mocap.visible_span().ok_or(Error::MissingStream("motion capture samples"))?;
    let cf_span = anchors.off_us.checked_sub(anchors.on_us).filter(|&d| d > 0).ok_or(Error::InvalidAnchors)?;
    let cf_span = cf_span as f64 * 1e-6;
    let mc_span = mc_end - mc_start;
    if !(mc_span > 0.0) {
        return Err(Error::InvalidAnchors);
    }

    // Common mask: records whose interpolation is valid for every offset pair
    // in the search box. The mocap time is affine in (t_s^o, t_f^o), so the
    // extremes are at the box corners.
    let r = config.range;
    let mask: Vec<usize> = (0..samples.len())
        .filter(|&i| {
            let u = signed_seconds(samples[i].timestamp_us, anchors.on_us) / cf_span;
            let corners = [(-r, -r), (-r, r), (r, -r), (r, r)].map(|(os, of)| mc_start + os + u * (mc_span + of - os));
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            is_finite(&samples[i].position) && mocap.valid_over(lo, hi)
        })
        .collect();
    if mask.len() < config.min_pairs {
        return Err(Error::InsufficientOverlap {
            pairs: mask.len(),
            needed: config.min_pairs,
        });
    }

    let eval = |offsets: (f64, f64)| -> Result<Cell> {
        let pairs: Vec<(Vec3, Vec3)> = mask
            .iter()
            .map(|&i| {
                let s = &samples[i];
                (s.position, mocap.interpolate(mocap_time(s.timestamp_us, anchors, cf_span, mc_start, mc_span, offsets)))
            })
            .collect();
        let (transform, fit) = match fit_rigid_transform(&pairs) {
            Ok(t) => (t, TransformFit::Rigid),
            Err(Error::DegenerateGeometry) => (fit_translation(&pairs)?, TransformFit::TranslationOnly),
            Err(e) => return Err(e),
        };
        let objective = pairs.iter().map(|(p, q)| (transform.apply(p) - q).norm()).sum();
        Ok(Cell {
            offsets,
            objective,
            transform,
            fit,
        })
    };

    let coarse_n = (r / config.coarse_step).round() as i64;
    let coarse: Vec<f64> = (-coarse_n..=coarse_n).map(|k| k as f64 * config.coarse_step).collect();
    let mut best = search(&coarse, &coarse, &eval)?;

    let fine = config.fine_step();
    let m = config.refine_divisions as i64;
    let around = |c: f64| -> Vec<f64> {
        (-m..=m)
            .map(|k| c + k as f64 * fine)
            .filter(|&x| x.abs() <= r + 1e-12)
            .collect()
    };
    let refined = search(&around(best.offsets.0), &around(best.offsets.1), &eval)?;
    if better(&refined, &best) {
        best = refined;
    }

    let records = samples
        .iter()
        .map(|s| {
            let t_mc = mocap_time(s.timestamp_us, anchors, cf_span, mc_start, mc_span, best.offsets);
            AlignedRecord {
                cf_timestamp_us: s.timestamp_us,
                t: t_mc - (mc_start + best.offsets.0),
                cf: best.transform.apply(&s.position),
                mc: mocap.interpolate(t_mc),
            }
        })
        .collect();
    Ok(AlignedDataset {
        records,
        transform: best.transform,
        fit: best.fit,
        offsets: best.offsets,
        residual: best.objective / mask.len() as f64,
    })
}

fn signed_seconds(t_us: u64, origin_us: u64) -> f64 {
    if t_us >= origin_us {
        (t_us - origin_us) as f64 * 1e-6
    } else {
        -((origin_us - t_us) as f64 * 1e-6)
    }
}

/// Absolute mocap time of an onboard timestamp for the given anchor offsets.
fn mocap_time(t_us: u64, anchors: LedAnchors, cf_span: f64, mc_start: f64, mc_span: f64, (os, of): (f64, f64)) -> f64 {
    let scale = (mc_span + of - os) / cf_span;
    mc_start + os + signed_seconds(t_us, anchors.on_us) * scale
}

fn search<F>(starts: &[f64], ends: &[f64], eval: &F) -> Result<Cell>
where
    F: Fn((f64, f64)) -> Result<Cell>,
{
    let mut best: Option<Cell> = None;
    for &os in starts {
        for &of in ends {
            let cell = eval((os, of))?;
            if best.as_ref().map_or(true, |b| better(&cell, b)) {
                best = Some(cell);
            }
        }
    }
    best.ok_or(Error::InsufficientOverlap { pairs: 0, needed: 1 })
}

/// Lower objective wins; near-ties go to the smaller `|t_s^o| + |t_f^o|`.
fn better(a: &Cell, b: &Cell) -> bool {
    let tol = 1e-12 + 1e-9 * b.objective.abs();
    if a.objective < b.objective - tol {
        return true;
    }
    if a.objective > b.objective + tol {
        return false;
    }
    let na = a.offsets.0.abs() + a.offsets.1.abs();
    let nb = b.offsets.0.abs() + b.offsets.1.abs();
    na < nb - 1e-12
}
