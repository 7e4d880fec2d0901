//! Binary session files: the onboard event log (`.lhk`) and the mocap
//! sample file (`.lhm`). Layouts are described in FORMAT.md.

use std::fs;
use std::path::Path;

use lhtrack_core::alignment::{CfSample, MocapSeries};
use lhtrack_core::geometry::{Plane, SweepAngle};
use lhtrack_core::simulator::{CfEvent, ImuSample, LedMarker, SessionBundle};
use lhtrack_core::Vec3;

pub const CF_MAGIC: [u8; 4] = *b"LHK1";
pub const MOCAP_MAGIC: [u8; 4] = *b"LHM1";
pub const VERSION: u16 = 1;
pub const CF_HEADER_LEN: u16 = 16;
pub const MOCAP_HEADER_LEN: u16 = 32;

/// Quiet NaN written for every NaN, whatever its payload.
pub const CANONICAL_NAN: u64 = 0x7ff8_0000_0000_0000;
pub const CANONICAL_NAN_F32: u32 = 0x7fc0_0000;

/// Largest allowed deviation of a mocap timestamp from its rate grid.
pub const GRID_TOL: f64 = 1e-9;

pub const TAG_SWEEP: u8 = 0;
pub const TAG_POSITION: u8 = 1;
pub const TAG_IMU: u8 = 2;
pub const TAG_LED: u8 = 3;

pub const CF_LOG_FILE: &str = "cf.lhk";
pub const MOCAP_FILE: &str = "mocap.lhm";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed data at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("unsupported format version {found} (this build reads version {VERSION})")]
    Version { found: u16 },
    #[error("cannot encode: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn f64_bits(x: f64) -> u64 {
    if x.is_nan() {
        CANONICAL_NAN
    } else {
        x.to_bits()
    }
}

fn f32_bits(x: f32) -> u32 {
    if x.is_nan() {
        CANONICAL_NAN_F32
    } else {
        x.to_bits()
    }
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&f64_bits(x).to_le_bytes());
}

fn put_vec3(out: &mut Vec<u8>, v: &Vec3) {
    for x in v.iter() {
        put_f64(out, *x);
    }
}

/// Bounds-checked little-endian cursor; errors carry absolute offsets.
struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let Some(bytes) = self.data.get(self.pos..self.pos + N) else {
            return Err(FormatError::Corrupt {
                offset: self.data.len() as u64,
                reason: format!("truncated: needed {N} bytes at offset {}", self.pos),
            });
        };
        self.pos += N;
        Ok(bytes.try_into().expect("slice length is N"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn vec3(&mut self) -> Result<Vec3, FormatError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn corrupt(&self, offset: usize, reason: impl Into<String>) -> FormatError {
        FormatError::Corrupt {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn header(&mut self, magic: [u8; 4], header_len: u16) -> Result<u64, FormatError> {
        if self.take::<4>()? != magic {
            return Err(self.corrupt(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(&magic))));
        }
        let version = self.u16()?;
        if version != VERSION {
            return Err(FormatError::Version { found: version });
        }
        let len = self.u16()?;
        if len != header_len {
            return Err(self.corrupt(6, format!("header length {len}, expected {header_len}")));
        }
        self.u64()
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.data.len() {
            return Err(self.corrupt(self.pos, format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

/// Encodes an onboard event log. Timestamps must be non-decreasing.
pub fn encode_cf_log(events: &[CfEvent]) -> Result<Vec<u8>, FormatError> {
    if let Some(i) = events.windows(2).position(|w| w[1].timestamp_us() < w[0].timestamp_us()) {
        return Err(FormatError::Invalid(format!("event {} is earlier than its predecessor", i + 1)));
    }
    let mut out = Vec::with_capacity(16 + events.len() * 33);
    out.extend_from_slice(&CF_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&CF_HEADER_LEN.to_le_bytes());
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    for e in events {
        let tag = match e {
            CfEvent::Sweep(_) => TAG_SWEEP,
            CfEvent::Position(_) => TAG_POSITION,
            CfEvent::Imu(_) => TAG_IMU,
            CfEvent::Led(_) => TAG_LED,
        };
        out.push(tag);
        out.extend_from_slice(&e.timestamp_us().to_le_bytes());
        match e {
            CfEvent::Sweep(s) => {
                out.extend_from_slice(&[s.base_station, s.sensor, s.plane.number()]);
                put_f64(&mut out, s.angle);
            }
            CfEvent::Position(p) => put_vec3(&mut out, &p.position),
            CfEvent::Imu(i) => {
                for x in i.accel.iter().chain(&i.gyro) {
                    out.extend_from_slice(&f32_bits(*x).to_le_bytes());
                }
            }
            CfEvent::Led(l) => out.push(l.on as u8),
        }
    }
    Ok(out)
}

pub fn decode_cf_log(data: &[u8]) -> Result<Vec<CfEvent>, FormatError> {
    let mut c = Cursor::new(data);
    let count = c.header(CF_MAGIC, CF_HEADER_LEN)?;
    // Smallest record is 10 bytes; a corrupt count must not drive allocation.
    let mut events = Vec::with_capacity(count.min(data.len() as u64 / 10) as usize);
    let mut last = 0u64;
    for _ in 0..count {
        let start = c.pos;
        let tag = c.u8()?;
        let timestamp_us = c.u64()?;
        if timestamp_us < last {
            return Err(c.corrupt(start + 1, "timestamp earlier than previous record"));
        }
        last = timestamp_us;
        let event = match tag {
            TAG_SWEEP => {
                let base_station = c.u8()?;
                let sensor = c.u8()?;
                let plane_at = c.pos;
                let plane = Plane::from_number(c.u8()?).ok_or_else(|| c.corrupt(plane_at, "plane must be 1 or 2"))?;
                CfEvent::Sweep(SweepAngle {
                    base_station,
                    sensor,
                    plane,
                    angle: c.f64()?,
                    timestamp_us,
                })
            }
            TAG_POSITION => CfEvent::Position(CfSample {
                timestamp_us,
                position: c.vec3()?,
            }),
            TAG_IMU => {
                let mut v = [0f32; 6];
                for x in &mut v {
                    *x = c.f32()?;
                }
                CfEvent::Imu(ImuSample {
                    timestamp_us,
                    accel: [v[0], v[1], v[2]],
                    gyro: [v[3], v[4], v[5]],
                })
            }
            TAG_LED => {
                let at = c.pos;
                let on = match c.u8()? {
                    0 => false,
                    1 => true,
                    _ => return Err(c.corrupt(at, "LED state must be 0 or 1")),
                };
                CfEvent::Led(LedMarker { timestamp_us, on })
            }
            _ => return Err(c.corrupt(start, format!("unknown record tag {tag}"))),
        };
        events.push(event);
    }
    c.finish()?;
    Ok(events)
}

/// Encodes a mocap stream; timestamps must sit on the `start + k / rate` grid.
pub fn encode_mocap(mocap: &MocapSeries, start: f64) -> Result<Vec<u8>, FormatError> {
    if mocap.times.len() != mocap.positions.len() {
        return Err(FormatError::Invalid("times and positions differ in length".into()));
    }
    if !(mocap.rate > 0.0) || !start.is_finite() {
        return Err(FormatError::Invalid("rate must be positive and start finite".into()));
    }
    if let Some(k) = off_grid(&mocap.times, mocap.rate, start) {
        return Err(FormatError::Invalid(format!("sample {k} is off the rate grid")));
    }
    let mut out = Vec::with_capacity(32 + mocap.len() * 32);
    out.extend_from_slice(&MOCAP_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&MOCAP_HEADER_LEN.to_le_bytes());
    put_f64(&mut out, mocap.rate);
    put_f64(&mut out, start);
    out.extend_from_slice(&(mocap.len() as u64).to_le_bytes());
    for (t, p) in mocap.times.iter().zip(&mocap.positions) {
        put_f64(&mut out, *t);
        put_vec3(&mut out, p);
    }
    Ok(out)
}

fn off_grid(times: &[f64], rate: f64, start: f64) -> Option<usize> {
    times.iter().enumerate().position(|(k, t)| !((t - (start + k as f64 / rate)).abs() <= GRID_TOL))
}

/// Returns the series and its start time.
pub fn decode_mocap(data: &[u8]) -> Result<(MocapSeries, f64), FormatError> {
    let mut c = Cursor::new(data);
    if c.take::<4>()? != MOCAP_MAGIC {
        return Err(c.corrupt(0, "bad magic, expected \"LHM1\""));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version });
    }
    let len = c.u16()?;
    if len != MOCAP_HEADER_LEN {
        return Err(c.corrupt(6, format!("header length {len}, expected {MOCAP_HEADER_LEN}")));
    }
    let rate = c.f64()?;
    if !(rate > 0.0) {
        return Err(c.corrupt(8, "rate must be positive"));
    }
    let start = c.f64()?;
    if !start.is_finite() {
        return Err(c.corrupt(16, "start must be finite"));
    }
    let count = c.u64()?;
    let cap = count.min(data.len() as u64 / 32) as usize;
    let mut times = Vec::with_capacity(cap);
    let mut positions = Vec::with_capacity(cap);
    for k in 0..count as usize {
        let at = c.pos;
        let t = c.f64()?;
        if !((t - (start + k as f64 / rate)).abs() <= GRID_TOL) {
            return Err(c.corrupt(at, format!("sample {k} is off the rate grid")));
        }
        times.push(t);
        positions.push(c.vec3()?);
    }
    c.finish()?;
    Ok((MocapSeries { rate, times, positions }, start))
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

pub fn read_cf_log(path: &Path) -> Result<Vec<CfEvent>, FormatError> {
    decode_cf_log(&read(path)?)
}

pub fn write_cf_log(path: &Path, events: &[CfEvent]) -> Result<(), FormatError> {
    write(path, &encode_cf_log(events)?)
}

pub fn read_mocap(path: &Path) -> Result<(MocapSeries, f64), FormatError> {
    decode_mocap(&read(path)?)
}

pub fn write_mocap(path: &Path, mocap: &MocapSeries, start: f64) -> Result<(), FormatError> {
    write(path, &encode_mocap(mocap, start)?)
}

/// Writes `cf.lhk` and `mocap.lhm` into `dir`.
pub fn write_session(dir: &Path, bundle: &SessionBundle) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    write_cf_log(&dir.join(CF_LOG_FILE), &bundle.cf_events)?;
    write_mocap(&dir.join(MOCAP_FILE), &bundle.mocap, bundle.mocap_start)
}

pub fn read_session(dir: &Path) -> Result<SessionBundle, FormatError> {
    let cf_events = read_cf_log(&dir.join(CF_LOG_FILE))?;
    let (mocap, mocap_start) = read_mocap(&dir.join(MOCAP_FILE))?;
    Ok(SessionBundle {
        cf_events,
        mocap,
        mocap_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_events() -> Vec<CfEvent> {
        vec![
            CfEvent::Led(LedMarker { timestamp_us: 10, on: true }),
            CfEvent::Sweep(SweepAngle {
                base_station: 1,
                sensor: 3,
                plane: Plane::Second,
                angle: -0.25,
                timestamp_us: 12,
            }),
            CfEvent::Position(CfSample {
                timestamp_us: 12,
                position: Vec3::new(1.0, f64::NAN, -3.0),
            }),
            CfEvent::Imu(ImuSample {
                timestamp_us: 20,
                accel: [0.0, 0.1, 9.81],
                gyro: [f32::NAN, 0.0, -0.5],
            }),
            CfEvent::Led(LedMarker { timestamp_us: 99, on: false }),
        ]
    }

    #[test]
    fn empty_log_is_header_only() {
        let bytes = encode_cf_log(&[]).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..4], b"LHK1");
        assert!(decode_cf_log(&bytes).unwrap().is_empty());
    }

    #[test]
    fn record_sizes() {
        let bytes = encode_cf_log(&sample_events()).unwrap();
        // led 10, sweep 20, position 33, imu 33, led 10
        assert_eq!(bytes.len(), 16 + 10 + 20 + 33 + 33 + 10);
    }

    #[test]
    fn nan_is_canonical() {
        let weird = f64::from_bits(0x7ff0_0000_dead_beef);
        let e = [CfEvent::Position(CfSample {
            timestamp_us: 0,
            position: Vec3::new(weird, 0.0, 0.0),
        })];
        let bytes = encode_cf_log(&e).unwrap();
        assert_eq!(u64::from_le_bytes(bytes[25..33].try_into().unwrap()), CANONICAL_NAN);
    }

    #[test]
    fn truncation_reports_file_length() {
        let bytes = encode_cf_log(&sample_events()).unwrap();
        for cut in [3, 15, 20, 40, bytes.len() - 1] {
            match decode_cf_log(&bytes[..cut]) {
                Err(FormatError::Corrupt { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_version() {
        let mut bytes = encode_cf_log(&sample_events()).unwrap();
        bytes[4] = 7;
        assert!(matches!(decode_cf_log(&bytes), Err(FormatError::Version { found: 7 })));
    }

    #[test]
    fn bad_tag_and_plane_offsets() {
        let mut bytes = encode_cf_log(&sample_events()).unwrap();
        bytes[26] = 9;
        assert!(matches!(decode_cf_log(&bytes), Err(FormatError::Corrupt { offset: 26, .. })));
        let mut bytes = encode_cf_log(&sample_events()).unwrap();
        bytes[26 + 11] = 0;
        assert!(matches!(decode_cf_log(&bytes), Err(FormatError::Corrupt { offset: 37, .. })));
    }

    #[test]
    fn unsorted_rejected() {
        let mut e = sample_events();
        e.swap(0, 4);
        assert!(matches!(encode_cf_log(&e), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_cf_log(&sample_events()).unwrap();
        let n = bytes.len();
        bytes.push(0);
        assert!(matches!(decode_cf_log(&bytes), Err(FormatError::Corrupt { offset, .. }) if offset == n as u64));
    }

    #[test]
    fn mocap_round_trip_and_grid() {
        let m = MocapSeries {
            rate: 300.0,
            times: (0..5).map(|k| 2.5 + k as f64 / 300.0).collect(),
            positions: vec![Vec3::new(1.0, 2.0, 3.0), Vec3::repeat(f64::NAN), Vec3::zeros(), Vec3::x(), Vec3::y()],
        };
        let bytes = encode_mocap(&m, 2.5).unwrap();
        assert_eq!(bytes.len(), 32 + 5 * 32);
        let (back, start) = decode_mocap(&bytes).unwrap();
        assert_eq!(start, 2.5);
        assert_eq!(encode_mocap(&back, start).unwrap(), bytes);

        let mut skewed = m.clone();
        skewed.times[3] += 1e-6;
        assert!(encode_mocap(&skewed, 2.5).is_err());
        let mut bytes = bytes;
        bytes[32 + 3 * 32..32 + 3 * 32 + 8].copy_from_slice(&(skewed.times[3]).to_le_bytes());
        assert!(matches!(decode_mocap(&bytes), Err(FormatError::Corrupt { offset: 128, .. })));
    }

    #[test]
    fn empty_mocap() {
        let m = MocapSeries {
            rate: 100.0,
            times: vec![],
            positions: vec![],
        };
        let bytes = encode_mocap(&m, 0.0).unwrap();
        assert_eq!(bytes.len(), 32);
        assert!(decode_mocap(&bytes).unwrap().0.is_empty());
    }
}
