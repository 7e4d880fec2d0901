//! Crossing-beam triangulation: each sensor is placed at the midpoint of the
//! closest points between the rays from two base stations, and the deck
//! position is the mean over sensors.

use alloc::vec::Vec;


use crate::geometry::{BaseStation, Plane, SweepAngle};
use crate::{Error, Result, Vec3};

/// Rays whose direction cross product is at most this are parallel.
pub const PARALLEL_TOL: f64 = 1e-12;

/// Default δ gate for averaging sensors, meters².
pub const DEFAULT_DELTA_GATE: f64 = 0.1;

/// Default epoch grouping window, microseconds.
pub const DEFAULT_EPOCH_WINDOW_US: u64 = 10_000;

/// A half-line from a base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + self.direction * s
    }

    /// Distance from `p` to the infinite line carrying this ray.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        (p - self.origin).cross(&self.direction).norm() / self.direction.norm()
    }
}

/// Closest points between two rays, parameters restricted to `s, t ≥ 0`.
pub fn closest_points(ray_1: &Ray, ray_2: &Ray) -> Result<(Vec3, Vec3)> {
    let (d1, d2) = (ray_1.direction, ray_2.direction);
    if d1.cross(&d2).norm() <= PARALLEL_TOL {
        return Err(Error::ParallelRays);
    }
    let w = ray_1.origin - ray_2.origin;
    let a = d1.dot(&d1);
    let b = d1.dot(&d2);
    let c = d2.dot(&d2);
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let denom = a * c - b * b;
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    if s >= 0.0 && t >= 0.0 {
        return Ok((ray_1.at(s), ray_2.at(t)));
    }

    // The objective is convex, so the constrained optimum lies on an edge of
    // the feasible quadrant.
    let on_s0 = (0.0, (e / c).max(0.0));
    let on_t0 = ((-d / a).max(0.0), 0.0);
    let gap = |(s, t): (f64, f64)| (ray_1.at(s) - ray_2.at(t)).norm_squared();
    let (s, t) = if gap(on_s0) <= gap(on_t0) { on_s0 } else { on_t0 };
    Ok((ray_1.at(s), ray_2.at(t)))
}

/// Triangulated position of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFix {
    pub position: Vec3,
    /// Squared distance between the two closest ray points, meters².
    pub delta: f64,
    /// Whether this sensor passed the δ gate and entered the average.
    pub used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingBeamResult {
    /// Deck centre estimate.
    pub position: Vec3,
    pub per_sensor: [SensorFix; 4],
    pub max_delta: f64,
    pub timestamp_us: u64,
}

/// A bundle of sweep angles treated as simultaneous.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Epoch {
    pub sweeps: Vec<SweepAngle>,
}

impl Epoch {
    /// Mean timestamp of the member sweeps.
    pub fn timestamp_us(&self) -> u64 {
        if self.sweeps.is_empty() {
            return 0;
        }
        let sum: u128 = self.sweeps.iter().map(|s| s.timestamp_us as u128).sum();
        let n = self.sweeps.len() as u128;
        ((sum + n / 2) / n) as u64
    }

    pub fn get(&self, station: u8, sensor: u8, plane: Plane) -> Option<f64> {
        self.sweeps
            .iter()
            .rev()
            .find(|s| s.base_station == station && s.sensor == sensor && s.plane == plane)
            .map(|s| s.angle)
    }

    /// True when every sensor has both planes from every listed station.
    pub fn is_complete(&self, stations: &[u8]) -> bool {
        stations.iter().all(|&st| {
            (0..4).all(|s| Plane::BOTH.iter().all(|&p| self.get(st, s, p).is_some()))
        })
    }
}

/// Groups a time-ordered sweep stream into epochs.
///
/// A new epoch starts when a sweep lies more than `window_us` after the
/// first sweep of the current epoch, or repeats a (station, sensor, plane)
/// already present in it.
pub fn assemble_epochs(sweeps: &[SweepAngle], window_us: u64) -> Vec<Epoch> {
    let mut epochs: Vec<Epoch> = Vec::new();
    let mut current = Epoch::default();
    for sw in sweeps {
        let start_new = match current.sweeps.first() {
            None => false,
            Some(first) => {
                sw.timestamp_us.saturating_sub(first.timestamp_us) > window_us
                    || current.sweeps.iter().any(|s| {
                        s.base_station == sw.base_station && s.sensor == sw.sensor && s.plane == sw.plane
                    })
            }
        };
        if start_new {
            epochs.push(core::mem::take(&mut current));
        }
        current.sweeps.push(*sw);
    }
    if !current.sweeps.is_empty() {
        epochs.push(current);
    }
    epochs
}

/// Crossing-beam solver for a pair of base stations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingBeam {
    /// Sensors with δ above this are left out of the average.
    pub delta_gate: f64,
}

impl Default for CrossingBeam {
    fn default() -> Self {
        CrossingBeam {
            delta_gate: DEFAULT_DELTA_GATE,
        }
    }
}

impl CrossingBeam {
    pub fn solve(&self, bs_1: &BaseStation, bs_2: &BaseStation, epoch: &Epoch) -> Result<CrossingBeamResult> {
        let mut fixes = [SensorFix {
            position: Vec3::zeros(),
            delta: 0.0,
            used: false,
        }; 4];
        for (sensor, fix) in (0u8..).zip(fixes.iter_mut()) {
            let ray_1 = sensor_ray(bs_1, sensor, epoch)?;
            let ray_2 = sensor_ray(bs_2, sensor, epoch)?;
            let (p1, p2) = closest_points(&ray_1, &ray_2)?;
            fix.position = (p1 + p2) / 2.0;
            fix.delta = (p1 - p2).norm_squared();
            fix.used = fix.delta <= self.delta_gate;
        }
        if !fixes.iter().any(|f| f.used) {
            // Nothing passes: average everything and let max_delta flag it.
            fixes.iter_mut().for_each(|f| f.used = true);
        }
        let used = fixes.iter().filter(|f| f.used).count() as f64;
        let position = fixes.iter().filter(|f| f.used).map(|f| f.position).sum::<Vec3>() / used;
        let max_delta = fixes.iter().map(|f| f.delta).fold(0.0, f64::max);
        Ok(CrossingBeamResult {
            position,
            per_sensor: fixes,
            max_delta,
            timestamp_us: epoch.timestamp_us(),
        })
    }
}

/// [`CrossingBeam::solve`] with the default δ gate.
pub fn solve(bs_1: &BaseStation, bs_2: &BaseStation, epoch: &Epoch) -> Result<CrossingBeamResult> {
    CrossingBeam::default().solve(bs_1, bs_2, epoch)
}

/// Outcome for one assembled epoch of a sweep stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSolution {
    pub timestamp_us: u64,
    pub result: Result<CrossingBeamResult>,
}

impl CrossingBeam {
    /// Groups a time-ordered sweep stream into epochs and solves each one.
    /// Sweeps from stations other than the pair are ignored.
    pub fn solve_stream(&self, bs_1: &BaseStation, bs_2: &BaseStation, sweeps: &[SweepAngle], window_us: u64) -> Vec<EpochSolution> {
        let relevant: Vec<SweepAngle> = sweeps
            .iter()
            .filter(|s| s.base_station == bs_1.id || s.base_station == bs_2.id)
            .copied()
            .collect();
        assemble_epochs(&relevant, window_us)
            .iter()
            .map(|e| EpochSolution {
                timestamp_us: e.timestamp_us(),
                result: self.solve(bs_1, bs_2, e),
            })
            .collect()
    }
}

fn sensor_ray(bs: &BaseStation, sensor: u8, epoch: &Epoch) -> Result<Ray> {
    let angle = |plane| {
        epoch.get(bs.id, sensor, plane).ok_or(Error::IncompleteEpoch {
            station: bs.id,
            sensor,
            plane,
        })
    };
    bs.ray_from_sweep_pair(angle(Plane::First)?, angle(Plane::Second)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LhVersion, SensorDeck};
    use crate::Mat3;
    use approx::assert_abs_diff_eq;

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray {
        Ray {
            origin: Vec3::from(o),
            direction: Vec3::from(d).normalize(),
        }
    }

    #[test]
    fn intersecting_rays_meet() {
        let q = Vec3::new(1.0, 2.0, 0.5);
        let r1 = ray([0.0, 0.0, 0.0], [1.0, 2.0, 0.5]);
        let r2 = Ray {
            origin: Vec3::new(3.0, 0.0, 1.0),
            direction: (q - Vec3::new(3.0, 0.0, 1.0)).normalize(),
        };
        let (p1, p2) = closest_points(&r1, &r2).unwrap();
        assert_abs_diff_eq!(p1, q, epsilon = 1e-12);
        assert_abs_diff_eq!(p2, q, epsilon = 1e-12);
    }

    #[test]
    fn skew_perpendicular() {
        let (p1, p2) = closest_points(&ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), &ray([0.0, 0.0, 1.0], [0.0, 1.0, 0.0])).unwrap();
        assert_eq!(p1, Vec3::zeros());
        assert_eq!(p2, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn clamps_behind_origin() {
        // Lines cross at (-1, 0, 0), behind the first ray.
        let r1 = ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let r2 = ray([-1.0, -1.0, 0.0], [0.0, 1.0, 0.0]);
        let (p1, p2) = closest_points(&r1, &r2).unwrap();
        assert_eq!(p1, Vec3::zeros());
        assert_abs_diff_eq!(p2, Vec3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn parallel_rays_rejected() {
        let r = closest_points(&ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), &ray([0.0, 1.0, 0.0], [1.0, 0.0, 0.0]));
        assert_eq!(r, Err(Error::ParallelRays));
    }

    fn stations() -> (BaseStation, BaseStation) {
        let c = Vec3::new(0.0, 0.0, 1.0);
        (
            BaseStation::looking_at(0, LhVersion::Lh2, c + Vec3::new(-1.5, -1.0, 0.8), c),
            BaseStation::looking_at(1, LhVersion::Lh2, c + Vec3::new(1.5, -1.0, 0.8), c),
        )
    }

    fn epoch_for(stations: &[&BaseStation], centre: Vec3) -> Epoch {
        let sensors = SensorDeck::default().sensor_positions(&centre, &Mat3::identity());
        let mut sweeps = Vec::new();
        for st in stations {
            for (s, p) in sensors.iter().enumerate() {
                for plane in Plane::BOTH {
                    sweeps.push(SweepAngle {
                        base_station: st.id,
                        sensor: s as u8,
                        plane,
                        angle: st.sweep_angle(plane, p).unwrap(),
                        timestamp_us: 1000 + sweeps.len() as u64,
                    });
                }
            }
        }
        Epoch { sweeps }
    }

    #[test]
    fn noiseless_epoch_recovers_centre() {
        let (a, b) = stations();
        let centre = Vec3::new(0.2, -0.3, 1.1);
        let res = solve(&a, &b, &epoch_for(&[&a, &b], centre)).unwrap();
        assert!((res.position - centre).norm() < 1e-8);
        assert!(res.max_delta < 1e-16);
        let mean = res.per_sensor.iter().map(|f| f.position).sum::<Vec3>() / 4.0;
        assert_eq!(res.position, mean);
    }

    #[test]
    fn missing_plane_is_incomplete() {
        let (a, b) = stations();
        let mut ep = epoch_for(&[&a, &b], Vec3::new(0.0, 0.0, 1.0));
        ep.sweeps.retain(|s| !(s.base_station == 1 && s.sensor == 2 && s.plane == Plane::Second));
        assert!(!ep.is_complete(&[0, 1]));
        assert_eq!(
            solve(&a, &b, &ep),
            Err(Error::IncompleteEpoch {
                station: 1,
                sensor: 2,
                plane: Plane::Second
            })
        );
    }

    #[test]
    fn swapping_stations_is_symmetric() {
        let (a, b) = stations();
        let mut ep = epoch_for(&[&a, &b], Vec3::new(0.1, 0.2, 0.9));
        for (i, s) in ep.sweeps.iter_mut().enumerate() {
            s.angle += 1e-3 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
        }
        let r1 = solve(&a, &b, &ep).unwrap();
        let r2 = solve(&b, &a, &ep).unwrap();
        for (x, y) in r1.per_sensor.iter().zip(&r2.per_sensor) {
            assert!((x.position - y.position).norm() < 1e-12);
            assert!((x.delta - y.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_gate_excludes_bad_sensor() {
        let (a, b) = stations();
        let mut ep = epoch_for(&[&a, &b], Vec3::new(0.0, 0.0, 1.0));
        for s in ep.sweeps.iter_mut().filter(|s| s.sensor == 0 && s.base_station == 0) {
            s.angle += 0.2;
        }
        let res = CrossingBeam { delta_gate: 1e-4 }.solve(&a, &b, &ep).unwrap();
        assert!(!res.per_sensor[0].used);
        assert!(res.per_sensor[1..].iter().all(|f| f.used));
        let mean = res.per_sensor[1..].iter().map(|f| f.position).sum::<Vec3>() / 3.0;
        assert_eq!(res.position, mean);
        assert_eq!(res.max_delta, res.per_sensor[0].delta);
    }

    fn sw(bs: u8, sensor: u8, plane: Plane, t: u64) -> SweepAngle {
        SweepAngle {
            base_station: bs,
            sensor,
            plane,
            angle: 0.0,
            timestamp_us: t,
        }
    }

    #[test]
    fn epochs_split_on_window_and_repeats() {
        let sweeps = [
            sw(0, 0, Plane::First, 0),
            sw(0, 0, Plane::Second, 2000),
            sw(0, 0, Plane::First, 3000), // repeat
            sw(1, 0, Plane::First, 4000),
            sw(1, 0, Plane::Second, 20_000), // beyond window of epoch starting at 3000
        ];
        let epochs = assemble_epochs(&sweeps, DEFAULT_EPOCH_WINDOW_US);
        let sizes: Vec<usize> = epochs.iter().map(|e| e.sweeps.len()).collect();
        assert_eq!(sizes, [2, 2, 1]);
        assert_eq!(epochs[0].timestamp_us(), 1000);
    }
}
