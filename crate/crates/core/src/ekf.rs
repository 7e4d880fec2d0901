//! Point-mass extended Kalman filter fed with individual sweep angles.
//!
//! The state is position and velocity in the tracking frame. Each sweep
//! plane crossing a sensor is one scalar measurement whose model is the
//! sweep-angle forward model evaluated at the sensor position; its gradient
//! with respect to the body position is the plane-frame Jacobian rotated back
//! by `R_b · R_d⁻¹`.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::vec::Vec;

use crate::crossing_beam::assemble_epochs;
use crate::geometry::{sweep_angle_forward, wrap_to_pi, BaseStation, Plane, SensorDeck, SweepAngle};
use crate::{Error, Mat3, Result, Vec3};

/// Smallest eigenvalue kept in the covariance.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig {
    /// Sweep angle noise σ_α, radians.
    pub angle_noise: f64,
    /// Velocity random-walk spectral density, m²/s³.
    pub process_noise: f64,
    /// Innovations beyond this many standard deviations are rejected.
    pub gate_sigmas: f64,
    /// Relinearizations per update; 1 is the plain EKF update.
    pub iterations: usize,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            angle_noise: 1e-3,
            process_noise: 0.01,
            gate_sigmas: 5.0,
            iterations: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Covariance of `(position, velocity)`.
    pub covariance: Matrix6<f64>,
}

impl EkfState {
    /// State at rest at `position`, with isotropic standard deviations.
    pub fn at_rest(position: Vec3, position_std: f64, velocity_std: f64) -> Self {
        let p = position_std * position_std;
        let v = velocity_std * velocity_std;
        EkfState {
            position,
            velocity: Vec3::zeros(),
            covariance: Matrix6::from_diagonal(&Vector6::new(p, p, p, v, v, v)),
        }
    }

    fn vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    fn from_vector(x: &Vector6<f64>, covariance: Matrix6<f64>) -> Self {
        EkfState {
            position: x.fixed_rows::<3>(0).into_owned(),
            velocity: x.fixed_rows::<3>(3).into_owned(),
            covariance,
        }
    }
}

/// Constant-velocity propagation, optionally driven by a known acceleration.
pub fn predict(state: &EkfState, dt: f64, accel: Option<Vec3>, process_noise: f64) -> EkfState {
    debug_assert!(dt >= 0.0);
    if dt == 0.0 {
        return *state;
    }
    let a = accel.unwrap_or_else(Vec3::zeros);
    let position = state.position + state.velocity * dt + a * (0.5 * dt * dt);
    let velocity = state.velocity + a * dt;

    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * dt));
    let q_pp = process_noise * dt * dt * dt / 3.0;
    let q_pv = process_noise * dt * dt / 2.0;
    let q_vv = process_noise * dt;
    let mut q = Matrix6::zeros();
    for i in 0..3 {
        q[(i, i)] = q_pp;
        q[(i, i + 3)] = q_pv;
        q[(i + 3, i)] = q_pv;
        q[(i + 3, i + 3)] = q_vv;
    }
    let covariance = f * state.covariance * f.transpose() + q;
    EkfState {
        position,
        velocity,
        covariance: (covariance + covariance.transpose()) * 0.5,
    }
}

/// Predicted sweep angle for a sensor at global `sensor_pos`, and its
/// gradient with respect to that position.
pub fn measurement_jacobian(sensor_pos: &Vec3, bs: &BaseStation, plane: Plane) -> Result<(f64, Vec3)> {
    let sp = bs.plane(plane);
    let p = bs.to_plane_frame(plane, sensor_pos);
    let angle = sweep_angle_forward(&p, sp)?;

    let tan_t = sp.tilt.tan();
    let r2 = p.x * p.x + p.y * p.y;
    let zt = p.z * tan_t;
    let q = tan_t / (r2 - zt * zt).sqrt();
    let g = Vec3::new(
        (-p.y - p.x * p.z * q) / r2,
        (p.x - p.y * p.z * q) / r2,
        q,
    );
    // R_d is orthonormal, so its inverse is its transpose.
    Ok((angle, bs.rotation * sp.drum_rotation.transpose() * g))
}

/// One sweep angle together with what is needed to predict it.
#[derive(Debug, Clone, Copy)]
pub struct SweepMeasurement<'a> {
    pub sweep: SweepAngle,
    pub station: &'a BaseStation,
    /// Sensor offset in the body frame.
    pub sensor_offset: Vec3,
    /// Body orientation, body to global.
    pub body_rotation: Mat3,
}

/// Scalar EKF update with Joseph-form covariance.
///
/// The gate uses the prior linearization. With `iterations > 1` the
/// measurement is relinearized about the updated estimate (iterated EKF).
pub fn update(state: &EkfState, m: &SweepMeasurement<'_>, config: &EkfConfig) -> Result<EkfState> {
    let offset = m.body_rotation * m.sensor_offset;
    let (predicted, g) = measurement_jacobian(&(state.position + offset), m.station, m.sweep.plane)?;
    let innovation = wrap_to_pi(m.sweep.angle - predicted);

    let r = config.angle_noise * config.angle_noise;
    let prior = state.vector();
    let mut h = Vector6::new(g.x, g.y, g.z, 0.0, 0.0, 0.0);
    let mut ph = state.covariance * h;
    let mut s = h.dot(&ph) + r;
    let gate = config.gate_sigmas * s.sqrt();
    if innovation.abs() > gate {
        return Err(Error::MeasurementRejected { innovation, gate });
    }
    let mut k = ph / s;
    let mut x = prior + k * innovation;
    for _ in 1..config.iterations {
        let position = Vec3::new(x[0], x[1], x[2]);
        let Ok((predicted, g)) = measurement_jacobian(&(position + offset), m.station, m.sweep.plane) else {
            break;
        };
        h = Vector6::new(g.x, g.y, g.z, 0.0, 0.0, 0.0);
        ph = state.covariance * h;
        s = h.dot(&ph) + r;
        k = ph / s;
        let residual = wrap_to_pi(m.sweep.angle - predicted) - h.dot(&(prior - x));
        let next = prior + k * residual;
        let step = (next - x).norm();
        x = next;
        if step < 1e-12 {
            break;
        }
    }

    let i_kh = Matrix6::identity() - k * h.transpose();
    let p = i_kh * state.covariance * i_kh.transpose() + k * k.transpose() * r;
    Ok(EkfState::from_vector(&x, condition(p)))
}

/// Symmetrizes and floors the eigenvalues at [`EIGEN_FLOOR`].
fn condition(p: Matrix6<f64>) -> Matrix6<f64> {
    let p = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(p);
    if eig.eigenvalues.min() >= EIGEN_FLOOR {
        return p;
    }
    let floored = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let p = eig.eigenvectors * Matrix6::from_diagonal(&floored) * eig.eigenvectors.transpose();
    (p + p.transpose()) * 0.5
}

/// Sequential filter over timestamped events.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub state: EkfState,
    pub config: EkfConfig,
    /// Time of `state`, seconds.
    pub time: f64,
    pub accel: Option<Vec3>,
    pub rejected: usize,
}

impl Ekf {
    pub fn new(state: EkfState, time: f64, config: EkfConfig) -> Self {
        Ekf {
            state,
            config,
            time,
            accel: None,
            rejected: 0,
        }
    }

    /// Propagates to `time` (no-op for times in the past).
    pub fn advance(&mut self, time: f64) {
        if time > self.time {
            self.state = predict(&self.state, time - self.time, self.accel, self.config.process_noise);
            self.time = time;
        }
    }

    /// Propagates to the sweep time and applies it. Measurements that fail
    /// (gated out or outside the model domain) are counted and leave the
    /// state untouched.
    pub fn process(&mut self, m: &SweepMeasurement<'_>) -> Result<()> {
        self.advance(m.sweep.timestamp_us as f64 * 1e-6);
        let s = update(&self.state, m, &self.config).inspect_err(|_| self.rejected += 1)?;
        self.state = s;
        Ok(())
    }
}

/// Position estimate emitted after an epoch of sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfOutput {
    pub timestamp_us: u64,
    pub state: EkfState,
}

impl Ekf {
    /// Runs the filter over a time-ordered sweep stream, emitting one
    /// estimate per epoch at the time of its last sweep. Sweeps from
    /// stations not in `stations` are skipped; the body is assumed level.
    pub fn run_stream(&mut self, sweeps: &[SweepAngle], stations: &[BaseStation], deck: &SensorDeck, window_us: u64) -> Vec<EkfOutput> {
        let relevant: Vec<SweepAngle> = sweeps
            .iter()
            .filter(|s| stations.iter().any(|b| b.id == s.base_station))
            .copied()
            .collect();
        let mut out = Vec::new();
        for epoch in assemble_epochs(&relevant, window_us) {
            let mut last = None;
            for sweep in &epoch.sweeps {
                let Some(station) = stations.iter().find(|b| b.id == sweep.base_station) else {
                    continue;
                };
                let Some(sensor_offset) = deck.offsets.get(sweep.sensor as usize) else {
                    continue;
                };
                let m = SweepMeasurement {
                    sweep: *sweep,
                    station,
                    sensor_offset: *sensor_offset,
                    body_rotation: Mat3::identity(),
                };
                let _ = self.process(&m);
                last = Some(sweep.timestamp_us);
            }
            if let Some(timestamp_us) = last {
                out.push(EkfOutput {
                    timestamp_us,
                    state: self.state,
                });
            }
        }
        out
    }
}
