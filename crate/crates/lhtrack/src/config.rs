//! Flat `key = value` files: scenario configs and run manifests.
//!
//! Blank lines and lines starting with `#` are ignored. Vectors are written
//! as comma-separated numbers, gap lists as `start-end` pairs separated by
//! commas.

use std::collections::BTreeMap;
use std::str::FromStr;

use lhtrack_core::geometry::{BaseStation, LhVersion};
use lhtrack_core::simulator::{Scenario, ScenarioConfig};
use lhtrack_core::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Value { key: String, value: String, expected: &'static str },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Parsed `key = value` pairs that remember which keys were consumed.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.into(),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn require(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        self.take(key).map(|v| parse_value(key, &v, expected)).transpose()
    }

    pub fn require_parsed<T: FromStr>(&mut self, key: &str, expected: &'static str) -> Result<T, ConfigError> {
        let v = self.require(key)?;
        parse_value(key, &v, expected)
    }

    pub fn take_vec3(&mut self, key: &str) -> Result<Option<Vec3>, ConfigError> {
        self.take(key).map(|v| parse_vec3(key, &v)).transpose()
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_keys().next() {
            Some(k) => Err(ConfigError::Unknown(k)),
            None => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3, ConfigError> {
    let bad = || ConfigError::Value {
        key: key.into(),
        value: value.into(),
        expected: "three comma-separated numbers",
    };
    let parts: Vec<f64> = value.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(bad()),
    }
}

fn parse_gaps(key: &str, value: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let bad = || ConfigError::Value {
        key: key.into(),
        value: value.into(),
        expected: "comma-separated start-end pairs",
    };
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|pair| {
            let (a, b) = pair.trim().split_once('-').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn parse_scenario(s: &str) -> Option<Scenario> {
    match s {
        "stationary" => Some(Scenario::Stationary),
        "external_motion" => Some(Scenario::ExternalMotion),
        "flight" => Some(Scenario::Flight),
        _ => None,
    }
}

pub fn parse_lh_version(s: &str) -> Option<LhVersion> {
    match s {
        "lh1" | "1" => Some(LhVersion::Lh1),
        "lh2" | "2" => Some(LhVersion::Lh2),
        _ => None,
    }
}

/// Parses a scenario config file.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut kv = KeyValues::parse(text)?;
    let scenario_s = kv.require("scenario")?;
    let scenario = parse_scenario(&scenario_s).ok_or_else(|| ConfigError::Value {
        key: "scenario".into(),
        value: scenario_s,
        expected: "stationary, external_motion or flight",
    })?;
    let duration: f64 = kv.require_parsed("duration", "seconds")?;
    let version_s = kv.require("lh_version")?;
    let version = parse_lh_version(&version_s).ok_or_else(|| ConfigError::Value {
        key: "lh_version".into(),
        value: version_s,
        expected: "lh1 or lh2",
    })?;
    let seed: u64 = kv.require_parsed("seed", "an unsigned integer")?;

    let mut c = ScenarioConfig::new(scenario, version, duration, seed);
    macro_rules! opt {
        ($key:literal, $field:expr, $what:literal) => {
            if let Some(v) = kv.take_parsed($key, $what)? {
                $field = v;
            }
        };
    }
    opt!("noise_sigma", c.angle_noise, "radians");
    opt!("dropout_rate", c.dropout_rate, "a probability");
    opt!("interference_period", c.interference_period, "seconds");
    opt!("interference_window", c.interference_window, "seconds");
    opt!("mocap_rate", c.mocap_rate, "Hz");
    opt!("sweep_rate", c.sweep_rate, "Hz");
    opt!("imu_rate", c.imu_rate, "Hz");
    opt!("clock_offset", c.clock.offset, "seconds");
    opt!("clock_drift_ppm", c.clock.drift_ppm, "ppm");
    opt!("mocap_latency", c.clock.mocap_latency, "seconds");
    opt!("mocap_start", c.mocap_start, "seconds");
    opt!("flight_speed", c.flight_speed, "m/s");
    if let Some(g) = kv.take("mocap_gaps") {
        c.mocap_gaps = parse_gaps("mocap_gaps", &g)?;
    }
    let rotation = kv.take_vec3("mocap_frame_rotation")?.unwrap_or_else(Vec3::zeros);
    let translation = kv.take_vec3("mocap_frame_translation")?.unwrap_or_else(Vec3::zeros);
    c.mocap_frame = RigidTransform::from_axis_angle(rotation, translation);
    c.stationary_position = kv.take_vec3("stationary_position")?;
    for k in 0..2 {
        let position = kv.take_vec3(&format!("station{k}_position"))?;
        let target = kv.take_vec3(&format!("station{k}_target"))?;
        if position.is_some() || target.is_some() {
            let old = &c.stations[k];
            let position = position.unwrap_or(old.translation);
            let target = target.unwrap_or(old.translation + old.rotation * Vec3::x());
            if (target - position).norm() < 1e-6 {
                return Err(ConfigError::Invalid(format!("station{k} target coincides with its position")));
            }
            c.stations[k] = BaseStation::looking_at(k as u8, version, position, target);
        }
    }
    kv.finish()?;
    c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}
