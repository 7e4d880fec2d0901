//! Synthetic sessions: a ground-truth trajectory, the onboard event stream
//! (sweep angles, IMU, LED sync markers) on a drifting onboard clock, and a
//! motion-capture stream with latency and dropouts.
//!
//! Everything is driven by one seed; equal configs give bit-identical output.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::alignment::{CfSample, LedAnchors, MocapSeries, RigidTransform};
use crate::geometry::{wrap_to_pi, BaseStation, LhVersion, Plane, SensorDeck, SweepAngle};
use crate::{Error, Mat3, Result, Vec3};

/// Spacing between the four plane sweeps of one epoch, seconds. Sweeps go
/// station 0 plane 1, station 0 plane 2, station 1 plane 1, station 1 plane 2.
pub const SWEEP_SLOT: f64 = 0.002;

/// Edge length of the cube trajectories stay in, meters.
pub const FLIGHT_CUBE: f64 = 1.5;

/// Peak speed of the external-motion pattern, m/s.
pub const EXTERNAL_MOTION_PEAK_SPEED: f64 = 2.0;

pub const GRAVITY: f64 = 9.81;

/// Centre of the flight volume in the LH frame.
pub fn volume_centre() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Stationary,
    ExternalMotion,
    Flight,
}

/// Onboard clock relative to true time, plus the mocap reporting delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    /// Onboard clock reading at true time 0, seconds.
    pub offset: f64,
    pub drift_ppm: f64,
    /// Mocap frames stamped `t` show the body at `t − mocap_latency`.
    pub mocap_latency: f64,
}

impl ClockModel {
    fn factor(&self) -> f64 {
        1.0 + self.drift_ppm * 1e-6
    }

    /// Onboard reading, seconds, at true time `t`.
    pub fn warp(&self, t: f64) -> f64 {
        (t + self.offset) * self.factor()
    }

    pub fn warp_us(&self, t: f64) -> u64 {
        (self.warp(t) * 1e6).round() as u64
    }

    /// True time at which the onboard clock reads `t_us`.
    pub fn unwarp_us(&self, t_us: u64) -> f64 {
        t_us as f64 * 1e-6 / self.factor() - self.offset
    }
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            offset: 5.0,
            drift_ppm: 0.0,
            mocap_latency: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Seconds.
    pub duration: f64,
    pub lh_version: LhVersion,
    pub stations: [BaseStation; 2],
    /// Sweep angle noise σ_α, radians.
    pub angle_noise: f64,
    /// Probability that one station's epoch is lost.
    pub dropout_rate: f64,
    /// LH2 only: every `interference_period` seconds both stations are lost
    /// for `interference_window` seconds. A zero period disables it.
    pub interference_period: f64,
    pub interference_window: f64,
    pub mocap_rate: f64,
    /// Sweep epochs per second per station.
    pub sweep_rate: f64,
    pub imu_rate: f64,
    pub clock: ClockModel,
    /// Mocap timestamp of the first frame, seconds.
    pub mocap_start: f64,
    /// Mocap outages `[start, end)` in true seconds.
    pub mocap_gaps: Vec<(f64, f64)>,
    /// LH frame into mocap frame.
    pub mocap_frame: RigidTransform,
    /// Flight setpoint speed, m/s.
    pub flight_speed: f64,
    /// Stationary pose; drawn inside the flight cube when `None`.
    pub stationary_position: Option<Vec3>,
    pub deck: SensorDeck,
    pub seed: u64,
}

/// Default station placement: two stations ~2 m from the volume centre.
pub fn default_stations(version: LhVersion) -> [BaseStation; 2] {
    let c = volume_centre();
    [
        BaseStation::looking_at(0, version, c + Vec3::new(-1.5, -1.0, 0.8), c),
        BaseStation::looking_at(1, version, c + Vec3::new(1.5, -1.0, 0.8), c),
    ]
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, lh_version: LhVersion, duration: f64, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            duration,
            lh_version,
            stations: default_stations(lh_version),
            angle_noise: 0.0,
            dropout_rate: 0.0,
            interference_period: 0.0,
            interference_window: 0.1,
            mocap_rate: 300.0,
            sweep_rate: 30.0,
            imu_rate: 100.0,
            clock: ClockModel::default(),
            mocap_start: 0.0,
            mocap_gaps: Vec::new(),
            mocap_frame: RigidTransform::identity(),
            flight_speed: 0.5,
            stationary_position: None,
            deck: SensorDeck::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.mocap_rate > 0.0 && self.sweep_rate > 0.0 && self.imu_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.clock.drift_ppm.abs() <= 5000.0) {
            return bad("drift_ppm must lie within ±5000");
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1]");
        }
        if !(self.angle_noise >= 0.0) || !(self.interference_period >= 0.0) || !(self.interference_window >= 0.0) {
            return bad("noise and interference parameters must be non-negative");
        }
        if !(self.flight_speed > 0.0) {
            return bad("flight_speed must be positive");
        }
        if !(self.clock.offset >= 0.0) {
            return bad("clock offset must be non-negative");
        }
        if self.stations[0].id == self.stations[1].id {
            return bad("station ids must differ");
        }
        let last = self.mocap_last_time();
        for &(a, b) in &self.mocap_gaps {
            if !(a > 0.0 && b > a && b < last) {
                return Err(Error::InvalidConfig(format!("mocap gap {a}-{b} must lie inside (0, {last})")));
            }
        }
        Ok(())
    }

    pub fn mocap_count(&self) -> usize {
        (self.duration * self.mocap_rate).ceil() as usize
    }

    /// True time of the last mocap frame.
    pub fn mocap_last_time(&self) -> f64 {
        (self.mocap_count().max(1) - 1) as f64 / self.mocap_rate
    }
}

/// Body state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// Body to global.
    pub orientation: Mat3,
    /// Body-frame angular rate, rad/s.
    pub angular_velocity: Vec3,
}

/// Smoothstep move between two setpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_time: f64,
    pub duration: f64,
    pub from: Vec3,
    pub to: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
enum Motion {
    Stationary(Vec3),
    Flight(Vec<Segment>),
    /// Per-axis sinusoids around the volume centre with small body tilts.
    Sweeping { amplitude: Vec3, omega: Vec3, phase: Vec3, tilt_phase: Vec3 },
}

/// Analytic ground-truth trajectory on `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub duration: f64,
    motion: Motion,
}

const TILT_AMPLITUDE: [f64; 3] = [0.15, 0.10, 0.30];
const TILT_RATE: [f64; 3] = [0.7, 0.5, 0.3];

impl Trajectory {
    /// Body state at true time `t`, clamped to the trajectory span.
    pub fn state_at(&self, t: f64) -> TrajectoryPoint {
        let t = t.clamp(0.0, self.duration);
        let level = |position, velocity, acceleration| TrajectoryPoint {
            t,
            position,
            velocity,
            acceleration,
            orientation: Mat3::identity(),
            angular_velocity: Vec3::zeros(),
        };
        match &self.motion {
            Motion::Stationary(p) => level(*p, Vec3::zeros(), Vec3::zeros()),
            Motion::Flight(segments) => {
                let i = segments.partition_point(|s| s.start_time <= t).saturating_sub(1);
                let s = &segments[i];
                let tau = ((t - s.start_time) / s.duration).clamp(0.0, 1.0);
                let d = s.to - s.from;
                let pos = s.from + d * (tau * tau * (3.0 - 2.0 * tau));
                let vel = d * (6.0 * tau * (1.0 - tau) / s.duration);
                let acc = d * ((6.0 - 12.0 * tau) / (s.duration * s.duration));
                level(pos, vel, acc)
            }
            Motion::Sweeping {
                amplitude,
                omega,
                phase,
                tilt_phase,
            } => {
                let mut pos = volume_centre();
                let mut vel = Vec3::zeros();
                let mut acc = Vec3::zeros();
                for i in 0..3 {
                    let (s, c) = (omega[i] * t + phase[i]).sin_cos();
                    pos[i] += amplitude[i] * s;
                    vel[i] = amplitude[i] * omega[i] * c;
                    acc[i] = -amplitude[i] * omega[i] * omega[i] * s;
                }
                let (euler, rates) = tilt(t, tilt_phase);
                let orientation = *Rotation3::from_euler_angles(euler[0], euler[1], euler[2]).matrix();
                // Body rates from a central difference of the orientation.
                let h = 1e-5;
                let (e0, _) = tilt(t - h, tilt_phase);
                let (e1, _) = tilt(t + h, tilt_phase);
                let r0 = Rotation3::from_euler_angles(e0[0], e0[1], e0[2]);
                let r1 = Rotation3::from_euler_angles(e1[0], e1[1], e1[2]);
                let angular_velocity = if rates.norm() > 0.0 {
                    (r0.inverse() * r1).scaled_axis() / (2.0 * h)
                } else {
                    Vec3::zeros()
                };
                TrajectoryPoint {
                    t,
                    position: pos,
                    velocity: vel,
                    acceleration: acc,
                    orientation,
                    angular_velocity,
                }
            }
        }
    }

    /// Samples at `rate` Hz over `[0, duration]`.
    pub fn dense(&self, rate: f64) -> Vec<TrajectoryPoint> {
        let n = (self.duration * rate).floor() as usize;
        (0..=n).map(|k| self.state_at(k as f64 / rate)).collect()
    }
}

fn tilt(t: f64, phase: &Vec3) -> (Vec3, Vec3) {
    let mut e = Vec3::zeros();
    let mut r = Vec3::zeros();
    for i in 0..3 {
        e[i] = TILT_AMPLITUDE[i] * (TILT_RATE[i] * t + phase[i]).sin();
        r[i] = TILT_AMPLITUDE[i] * TILT_RATE[i];
    }
    (e, r)
}

fn random_in_cube(rng: &mut ChaCha8Rng) -> Vec3 {
    let half = FLIGHT_CUBE / 2.0;
    volume_centre() + Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

/// Ground truth for a scenario.
///
/// Flight moves between uniformly drawn setpoints with smoothstep profiles
/// whose peak speed is exactly `flight_speed`. External motion is a
/// superposition of per-axis sinusoids with peak speed below
/// [`EXTERNAL_MOTION_PEAK_SPEED`], wide enough to leave the stations' view.
pub fn generate_trajectory(config: &ScenarioConfig) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_616a);
    let motion = match config.scenario {
        Scenario::Stationary => Motion::Stationary(config.stationary_position.unwrap_or_else(|| random_in_cube(&mut rng))),
        Scenario::Flight => {
            let mut segments = Vec::new();
            let mut t = 0.0;
            let mut from = random_in_cube(&mut rng);
            while t < config.duration {
                let to = random_in_cube(&mut rng);
                let len = (to - from).norm();
                if len < 0.05 {
                    continue;
                }
                // Smoothstep peaks at 1.5 × the mean speed.
                let duration = 1.5 * len / config.flight_speed;
                segments.push(Segment {
                    start_time: t,
                    duration,
                    from,
                    to,
                });
                t += duration;
                from = to;
            }
            Motion::Flight(segments)
        }
        Scenario::ExternalMotion => {
            let amplitude = Vec3::new(1.6, 1.2, 0.5);
            let omega = Vec3::new(0.8, 1.0, 1.2);
            let phase = Vec3::from_fn(|_, _| rng.random_range(0.0..2.0 * PI));
            let tilt_phase = Vec3::from_fn(|_, _| rng.random_range(0.0..2.0 * PI));
            Motion::Sweeping {
                amplitude,
                omega,
                phase,
                tilt_phase,
            }
        }
    };
    Trajectory {
        duration: config.duration,
        motion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp_us: u64,
    /// Specific force, body frame, m/s².
    pub accel: [f32; 3],
    /// Angular rate, body frame, rad/s.
    pub gyro: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedMarker {
    pub timestamp_us: u64,
    pub on: bool,
}

/// One record of the onboard log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfEvent {
    Sweep(SweepAngle),
    Position(CfSample),
    Imu(ImuSample),
    Led(LedMarker),
}

impl CfEvent {
    pub fn timestamp_us(&self) -> u64 {
        match self {
            CfEvent::Sweep(s) => s.timestamp_us,
            CfEvent::Position(p) => p.timestamp_us,
            CfEvent::Imu(i) => i.timestamp_us,
            CfEvent::Led(l) => l.timestamp_us,
        }
    }
}

/// The two recorded streams of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBundle {
    pub cf_events: Vec<CfEvent>,
    /// Mocap frames; NaN positions are frames without all markers.
    pub mocap: MocapSeries,
    /// Mocap timestamp of frame 0, seconds.
    pub mocap_start: f64,
}

impl SessionBundle {
    pub fn sweeps(&self) -> impl Iterator<Item = &SweepAngle> {
        self.cf_events.iter().filter_map(|e| match e {
            CfEvent::Sweep(s) => Some(s),
            _ => None,
        })
    }

    pub fn positions(&self) -> impl Iterator<Item = &CfSample> {
        self.cf_events.iter().filter_map(|e| match e {
            CfEvent::Position(p) => Some(p),
            _ => None,
        })
    }

    pub fn imu(&self) -> impl Iterator<Item = &ImuSample> {
        self.cf_events.iter().filter_map(|e| match e {
            CfEvent::Imu(i) => Some(i),
            _ => None,
        })
    }

    pub fn led_anchors(&self) -> Option<LedAnchors> {
        led_anchors(&self.cf_events)
    }
}

/// First LED-on and last LED-off marker of an onboard log.
pub fn led_anchors(events: &[CfEvent]) -> Option<LedAnchors> {
    let mut on = None;
    let mut off = None;
    for e in events {
        if let CfEvent::Led(l) = e {
            if l.on && on.is_none() {
                on = Some(l.timestamp_us);
            } else if !l.on {
                off = Some(l.timestamp_us);
            }
        }
    }
    Some(LedAnchors { on_us: on?, off_us: off? })
}

/// Simulator output: the recorded bundle plus oracle-only truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub bundle: SessionBundle,
    pub truth: Trajectory,
    pub config: ScenarioConfig,
}

impl SimulatedSession {
    /// Ground truth (LH frame) at the true time of an onboard timestamp.
    pub fn truth_at_cf(&self, t_us: u64) -> TrajectoryPoint {
        self.truth.state_at(self.config.clock.unwarp_us(t_us))
    }
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Led(bool),
    Sweep { station: usize, plane: Plane, sensor: u8 },
    Imu,
}

/// Builds the onboard and mocap streams for `trajectory`.
pub fn synthesize_session(config: &ScenarioConfig, trajectory: &Trajectory) -> Result<SimulatedSession> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t_end = config.mocap_last_time();

    // Nominal event schedule in true time; stable-sorted so ties keep
    // insertion order (LED first).
    let mut schedule: Vec<(f64, Pending)> = Vec::new();
    schedule.push((0.0, Pending::Led(true)));
    let period = 1.0 / config.sweep_rate;
    let phase = rng.random_range(0.25..0.75) * period;
    let mut n = 0u64;
    loop {
        let epoch = phase + n as f64 * period;
        if epoch + 3.0 * SWEEP_SLOT >= t_end {
            break;
        }
        n += 1;
        let dropped = [rng.random::<f64>() < config.dropout_rate, rng.random::<f64>() < config.dropout_rate];
        if interfered(config, epoch) {
            continue;
        }
        for (k, lost) in dropped.iter().enumerate() {
            if *lost {
                continue;
            }
            for plane in Plane::BOTH {
                let t = epoch + (2 * k + plane.index()) as f64 * SWEEP_SLOT;
                for sensor in 0..4u8 {
                    schedule.push((t, Pending::Sweep { station: k, plane, sensor }));
                }
            }
        }
    }
    let imu_period = 1.0 / config.imu_rate;
    let mut k = 0u64;
    while (k as f64 + 0.5) * imu_period < t_end {
        schedule.push(((k as f64 + 0.5) * imu_period, Pending::Imu));
        k += 1;
    }
    schedule.push((t_end, Pending::Led(false)));
    schedule.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cf_events = Vec::with_capacity(schedule.len());
    let mut last_us: Option<u64> = None;
    for (t_nominal, what) in schedule {
        let mut t_us = config.clock.warp_us(t_nominal);
        if let Some(prev) = last_us {
            t_us = t_us.max(prev + 1);
        }
        last_us = Some(t_us);
        let t = config.clock.unwarp_us(t_us);
        match what {
            Pending::Led(on) => cf_events.push(CfEvent::Led(LedMarker { timestamp_us: t_us, on })),
            Pending::Imu => {
                let s = trajectory.state_at(t);
                let f = s.orientation.transpose() * (s.acceleration + Vec3::new(0.0, 0.0, GRAVITY));
                cf_events.push(CfEvent::Imu(ImuSample {
                    timestamp_us: t_us,
                    accel: [f.x as f32, f.y as f32, f.z as f32],
                    gyro: [
                        s.angular_velocity.x as f32,
                        s.angular_velocity.y as f32,
                        s.angular_velocity.z as f32,
                    ],
                }));
            }
            Pending::Sweep { station, plane, sensor } => {
                let noise: f64 = rng.sample(StandardNormal);
                let bs = &config.stations[station];
                let s = trajectory.state_at(t);
                let p = s.position + s.orientation * config.deck.offsets[sensor as usize];
                if !bs.in_field_of_view(&p) {
                    continue;
                }
                let Ok(angle) = bs.sweep_angle(plane, &p) else {
                    continue;
                };
                let angle = if config.angle_noise > 0.0 {
                    wrap_to_pi(angle + config.angle_noise * noise)
                } else {
                    angle
                };
                cf_events.push(CfEvent::Sweep(SweepAngle {
                    base_station: bs.id,
                    sensor,
                    plane,
                    angle,
                    timestamp_us: t_us,
                }));
            }
        }
    }

    let count = config.mocap_count();
    let mut times = Vec::with_capacity(count);
    let mut positions = Vec::with_capacity(count);
    for k in 0..count {
        let t = k as f64 / config.mocap_rate;
        times.push(config.mocap_start + t);
        let missing = config.mocap_gaps.iter().any(|&(a, b)| t >= a && t < b);
        positions.push(if missing {
            Vec3::repeat(f64::NAN)
        } else {
            config.mocap_frame.apply(&trajectory.state_at(t - config.clock.mocap_latency).position)
        });
    }

    Ok(SimulatedSession {
        bundle: SessionBundle {
            cf_events,
            mocap: MocapSeries {
                rate: config.mocap_rate,
                times,
                positions,
            },
            mocap_start: config.mocap_start,
        },
        truth: trajectory.clone(),
        config: config.clone(),
    })
}

fn interfered(config: &ScenarioConfig, t: f64) -> bool {
    config.lh_version == LhVersion::Lh2
        && config.interference_period > 0.0
        && t % config.interference_period < config.interference_window
}

/// [`generate_trajectory`] followed by [`synthesize_session`].
pub fn simulate(config: &ScenarioConfig) -> Result<SimulatedSession> {
    let trajectory = generate_trajectory(config);
    synthesize_session(config, &trajectory)
}
