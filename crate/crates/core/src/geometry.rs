//! Base-station and sensor-deck geometry, and the sweep-angle model.
//!
//! Conventions: a station's forward axis is `+x` of its own frame. A point
//! `p` in the global frame maps into the station frame as `R_bᵀ (p − t_b)`,
//! and into the frame of a sweep plane by additionally applying that plane's
//! drum rotation `R_d`. In the plane frame the drum spins about `z`.

use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::crossing_beam::Ray;
use crate::{Error, Mat3, Result, Vec3};

/// Orthonormality tolerance on `‖RᵀR − I‖`.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Plane normals closer to parallel than this cannot define a ray.
pub const PARALLEL_NORMAL_TOL: f64 = 1e-12;

/// Tilt of the LH2 planes, radians (first plane is `-LH2_TILT`).
pub const LH2_TILT: f64 = PI / 6.0;

/// Hardware generation of a base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LhVersion {
    /// Two drums, two untilted perpendicular planes.
    Lh1,
    /// One drum, two planes tilted by ∓π/6.
    Lh2,
}

impl LhVersion {
    /// Half-angles (horizontal, vertical) of the usable field of view, radians.
    pub fn field_of_view(self) -> (f64, f64) {
        match self {
            LhVersion::Lh1 => (PI / 3.0, PI / 3.0),
            LhVersion::Lh2 => (80f64.to_radians(), 57.5f64.to_radians()),
        }
    }

    pub fn planes(self) -> [SweepPlane; 2] {
        match self {
            LhVersion::Lh1 => [SweepPlane::untilted(), SweepPlane::lh1_vertical()],
            LhVersion::Lh2 => [SweepPlane::tilted(-LH2_TILT), SweepPlane::tilted(LH2_TILT)],
        }
    }
}

/// Which of a station's two sweep planes. The first plane sweeps first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    First,
    Second,
}

impl Plane {
    pub const BOTH: [Plane; 2] = [Plane::First, Plane::Second];

    pub fn index(self) -> usize {
        match self {
            Plane::First => 0,
            Plane::Second => 1,
        }
    }

    /// 1-based plane number, as used in logs.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Plane> {
        match n {
            1 => Some(Plane::First),
            2 => Some(Plane::Second),
            _ => None,
        }
    }
}

/// A rotating light plane: tilt `t_p` and drum rotation `R_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPlane {
    pub tilt: f64,
    pub drum_rotation: Mat3,
}

impl SweepPlane {
    pub fn untilted() -> Self {
        Self::tilted(0.0)
    }

    pub fn tilted(tilt: f64) -> Self {
        SweepPlane {
            tilt,
            drum_rotation: Mat3::identity(),
        }
    }

    /// Second LH1 plane, whose drum is turned so that it sweeps vertically.
    pub fn lh1_vertical() -> Self {
        SweepPlane {
            tilt: 0.0,
            drum_rotation: Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0),
        }
    }

    /// Unit normal, in the station frame, of this plane when it sits at
    /// sweep angle `angle`.
    ///
    /// In the plane frame the swept surface is `x sin α − y cos α − z tan t = 0`:
    /// the zero-angle normal `(0, −1, −tan t)` rotated by `α` about the drum axis.
    pub fn normal_at(&self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        let n = Vec3::new(s, -c, -self.tilt.tan());
        self.drum_rotation.transpose() * n.normalize()
    }
}

/// Sweep angle `α_p` for a position already expressed in the plane frame.
///
/// `α = atan2(y, x) + asin(z tan t / r)` with `r = √(x² + y²)`, wrapped to
/// `(−π, π]`.
pub fn sweep_angle_forward(p: &Vec3, plane: &SweepPlane) -> Result<f64> {
    let r = p.x.hypot(p.y);
    if r == 0.0 {
        return Err(Error::Domain("sensor on drum axis"));
    }
    let arg = p.z * plane.tilt.tan() / r;
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::Domain("arcsine argument outside [-1, 1]"));
    }
    Ok(wrap_to_pi(p.y.atan2(p.x) + arg.asin()))
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let two_pi = 2.0 * PI;
    let mut a = angle % two_pi;
    if a <= -PI {
        a += two_pi;
    } else if a > PI {
        a -= two_pi;
    }
    a
}

/// Returns `true` when `m` is orthonormal with determinant +1.
pub fn is_rotation(m: &Mat3) -> bool {
    (m.transpose() * m - Mat3::identity()).norm() < ORTHONORMAL_TOL && m.determinant() > 0.0
}

/// A Lighthouse base station with its pose in the tracking (LH) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseStation {
    pub id: u8,
    pub version: LhVersion,
    /// `R_b`, station frame to global frame.
    pub rotation: Mat3,
    /// `t_b`, station origin in the global frame, meters.
    pub translation: Vec3,
    pub planes: [SweepPlane; 2],
}

impl BaseStation {
    pub fn new(id: u8, version: LhVersion, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation) {
            return Err(Error::NotOrthonormal);
        }
        Ok(BaseStation {
            id,
            version,
            rotation,
            translation,
            planes: version.planes(),
        })
    }

    /// A station at `position` whose forward axis points at `target`, with
    /// its `z` axis as close to global up as possible.
    pub fn looking_at(id: u8, version: LhVersion, position: Vec3, target: Vec3) -> Self {
        let forward = (target - position).normalize();
        let up = Vec3::z();
        let mut left = up.cross(&forward);
        if left.norm() < 1e-9 {
            left = Vec3::y();
        }
        let left = left.normalize();
        let top = forward.cross(&left);
        BaseStation {
            id,
            version,
            rotation: Mat3::from_columns(&[forward, left, top]),
            translation: position,
            planes: version.planes(),
        }
    }

    pub fn plane(&self, plane: Plane) -> &SweepPlane {
        &self.planes[plane.index()]
    }

    pub fn to_station_frame(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Position in the rotated frame of one sweep plane (`R_d · R_b⁻¹` applied).
    pub fn to_plane_frame(&self, plane: Plane, p: &Vec3) -> Vec3 {
        self.plane(plane).drum_rotation * self.to_station_frame(p)
    }

    /// Sweep angle this station's `plane` reports for a sensor at global `p`.
    pub fn sweep_angle(&self, plane: Plane, p: &Vec3) -> Result<f64> {
        sweep_angle_forward(&self.to_plane_frame(plane, p), self.plane(plane))
    }

    /// Whether a global point is in front of the station and inside its
    /// horizontal/vertical field of view.
    pub fn in_field_of_view(&self, p: &Vec3) -> bool {
        let s = self.to_station_frame(p);
        if s.x <= 0.0 {
            return false;
        }
        let (h, v) = self.version.field_of_view();
        s.y.atan2(s.x).abs() <= h && s.z.atan2(s.x).abs() <= v
    }

    /// Ray from the station towards the sensor that saw the two planes at
    /// `first` and `second`, in the global frame.
    pub fn ray_from_sweep_pair(&self, first: f64, second: f64) -> Result<Ray> {
        let n1 = self.planes[0].normal_at(first);
        let n2 = self.planes[1].normal_at(second);
        let d = n1.cross(&n2);
        if d.norm() <= PARALLEL_NORMAL_TOL {
            return Err(Error::DegenerateRay);
        }
        let mut d = d.normalize();
        if d.x < 0.0 {
            d = -d;
        }
        Ok(Ray {
            origin: self.translation,
            direction: self.rotation * d,
        })
    }
}

/// The four-receiver sensor board. Offsets are in the body frame and centred
/// on the body origin, so the mean sensor position is the tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorDeck {
    pub offsets: [Vec3; 4],
}

impl SensorDeck {
    pub fn new(offsets: [Vec3; 4]) -> Result<Self> {
        let mean = offsets.iter().sum::<Vec3>() / 4.0;
        if mean.norm() > 1e-12 {
            return Err(Error::OffCentreDeck);
        }
        Ok(SensorDeck { offsets })
    }

    /// Sensor positions in the global frame for a body at `position` with
    /// orientation `rotation` (body to global).
    pub fn sensor_positions(&self, position: &Vec3, rotation: &Mat3) -> [Vec3; 4] {
        self.offsets.map(|o| position + rotation * o)
    }
}

impl Default for SensorDeck {
    /// Receiver layout of the Crazyflie Lighthouse deck.
    fn default() -> Self {
        SensorDeck {
            offsets: [
                Vec3::new(-0.0225, 0.0155, 0.0),
                Vec3::new(-0.0225, -0.0155, 0.0),
                Vec3::new(0.0225, 0.0155, 0.0),
                Vec3::new(0.0225, -0.0155, 0.0),
            ],
        }
    }
}

/// A measured sweep angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepAngle {
    pub base_station: u8,
    /// Receiver index, `0..4`.
    pub sensor: u8,
    pub plane: Plane,
    /// `α_p`, radians in `(−π, π]`.
    pub angle: f64,
    /// Onboard clock, microseconds.
    pub timestamp_us: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;

    fn rot(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
        *Rotation3::from_euler_angles(roll, pitch, yaw).matrix()
    }

    #[test]
    fn on_axis_zero_tilt_is_zero() {
        let a = sweep_angle_forward(&Vec3::new(1.0, 0.0, 0.0), &SweepPlane::untilted()).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn z_zero_removes_tilt_term() {
        let a = sweep_angle_forward(&Vec3::new(1.0, 1.0, 0.0), &SweepPlane::tilted(PI / 6.0)).unwrap();
        assert_abs_diff_eq!(a, PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn tilted_plane_matches_high_precision_value() {
        // atan2(0.5, 2) + asin(0.3 tan(π/6) / √4.25), evaluated at 40 digits.
        let expected = 0.329_094_626_767_013_343_518_420_474_539_154_5;
        let a = sweep_angle_forward(&Vec3::new(2.0, 0.5, 0.3), &SweepPlane::tilted(PI / 6.0)).unwrap();
        assert_abs_diff_eq!(a, expected, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        let p = SweepPlane::tilted(PI / 6.0);
        assert!(matches!(sweep_angle_forward(&Vec3::new(0.0, 0.0, 1.0), &p), Err(Error::Domain(_))));
        // z tan t / r = 3 tan(π/6) > 1
        assert!(matches!(sweep_angle_forward(&Vec3::new(1.0, 0.0, 3.0), &p), Err(Error::Domain(_))));
    }

    #[test]
    fn lh1_is_plain_azimuth() {
        let st = BaseStation::new(0, LhVersion::Lh1, Mat3::identity(), Vec3::zeros()).unwrap();
        let p = Vec3::new(2.0, -0.7, 0.4);
        assert_eq!(st.sweep_angle(Plane::First, &p).unwrap(), p.y.atan2(p.x));
        assert_eq!(st.sweep_angle(Plane::Second, &p).unwrap(), p.z.atan2(p.x));
    }

    #[test]
    fn lh1_zero_angles_give_forward_ray() {
        let r = rot(0.1, -0.2, 0.7);
        let t = Vec3::new(1.0, 2.0, 3.0);
        let st = BaseStation::new(3, LhVersion::Lh1, r, t).unwrap();
        let ray = st.ray_from_sweep_pair(0.0, 0.0).unwrap();
        assert_eq!(ray.origin, t);
        assert_abs_diff_eq!(ray.direction, r * Vec3::x(), epsilon = 1e-15);
    }

    #[test]
    fn lh2_round_trip_through_ray() {
        let st = BaseStation::looking_at(1, LhVersion::Lh2, Vec3::new(-1.5, -1.0, 1.8), Vec3::new(0.0, 0.0, 1.0));
        let p = Vec3::new(0.3, -0.2, 1.1);
        let a1 = st.sweep_angle(Plane::First, &p).unwrap();
        let a2 = st.sweep_angle(Plane::Second, &p).unwrap();
        let ray = st.ray_from_sweep_pair(a1, a2).unwrap();
        assert!(ray.distance_to(&p) < 1e-9);
    }

    #[test]
    fn identical_planes_are_degenerate() {
        let mut st = BaseStation::new(0, LhVersion::Lh2, Mat3::identity(), Vec3::zeros()).unwrap();
        st.planes[1] = st.planes[0];
        assert_eq!(st.ray_from_sweep_pair(0.3, 0.3), Err(Error::DegenerateRay));
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert_eq!(BaseStation::new(0, LhVersion::Lh1, m, Vec3::zeros()), Err(Error::NotOrthonormal));
        assert!(is_rotation(&BaseStation::looking_at(0, LhVersion::Lh1, Vec3::new(3.0, 1.0, 2.0), Vec3::zeros()).rotation));
    }

    #[test]
    fn field_of_view() {
        let st = BaseStation::new(0, LhVersion::Lh1, Mat3::identity(), Vec3::zeros()).unwrap();
        assert!(st.in_field_of_view(&Vec3::new(2.0, 0.5, 0.5)));
        assert!(!st.in_field_of_view(&Vec3::new(-2.0, 0.0, 0.0)));
        assert!(!st.in_field_of_view(&Vec3::new(0.5, 2.0, 0.0)));
    }

    #[test]
    fn deck_must_be_centred() {
        assert!(SensorDeck::new(SensorDeck::default().offsets).is_ok());
        let mut off = SensorDeck::default().offsets;
        off[0].x += 0.01;
        assert_eq!(SensorDeck::new(off), Err(Error::OffCentreDeck));
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert_abs_diff_eq!(wrap_to_pi(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_to_pi(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_to_pi(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-15);
    }

    #[test]
    fn plane_numbers() {
        for p in Plane::BOTH {
            assert_eq!(Plane::from_number(p.number()), Some(p));
        }
        assert_eq!(Plane::from_number(0), None);
    }
}
