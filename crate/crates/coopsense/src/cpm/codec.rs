//! Binary wire layout for CPM-style messages.
//!
//! All multi-byte fields are little-endian:
//!
//! ```text
//! magic "CPM1" | version u8 (=1) | station_id u32 | station_type u8 |
//! generation_time_ms u64 |
//! ref_x_mm i64 | ref_y_mm i64 | ref_heading_centideg u16 |
//! ref_sigma_x u16 | ref_sigma_y u16 | ref_rho_xy i16 | ref_sigma_theta u16 |
//! station_data_present u8
//!   [ heading_centideg u16 | speed_mm_s u16 | length_cm u16 | width_cm u16 ]
//! sensor_count u8 (≤ 10)
//!   per sensor: id u8 | type u8 | range_cm u32 | fov_start_centideg u16 |
//!               fov_end_centideg u16
//! object_count u8 (≤ 255)
//!   per object: id u16 | class u8 | x_mm i32 | y_mm i32 |
//!               heading_centideg u16 | sigma_x u16 | sigma_y u16 |
//!               rho_xy i16 | sigma_theta u16 | speed_mm_s u16 |
//!               speed_sigma_mm_s u16 | length_cm u16 | width_cm u16
//! ```
//!
//! Encoding quantizes every float to its wire grid; `decode(encode(x))`
//! equals [`quantize`]`(x)` exactly because both run the same value → code →
//! value helpers.

use super::{
    quantize_confidence, confidence_value, ConfidenceKind, Cpm, CpmError, CpmManagement,
    ObjectClass, PerceivedObject, SensorInformation, SensorType, StationData, StationType,
    MAX_SENSORS,
};
use crate::geometry::{normalize_angle, GaussianPose2, Pose2};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CPM1";
pub const VERSION: u8 = 1;
/// Byte length of a message with no station data, sensors, or objects.
pub const MIN_MESSAGE_LEN: usize = 47;

const STATION_DATA_LEN: usize = 8;
const SENSOR_LEN: usize = 10;
const OBJECT_LEN: usize = 29;

/// Errors raised while decoding, each carrying the byte offset at which the
/// problem was detected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {found} at offset {offset}")]
    UnsupportedVersion { offset: usize, found: u8 },
    #[error("buffer truncated at offset {offset}: {needed} more byte(s) required")]
    Truncated { offset: usize, needed: usize },
    #[error("sensor count {count} exceeds limit {MAX_SENSORS} at offset {offset}")]
    TooManySensors { offset: usize, count: u8 },
    #[error("invalid {what} value {value} at offset {offset}")]
    InvalidEnum {
        offset: usize,
        what: &'static str,
        value: u8,
    },
    #[error("{extra} trailing byte(s) after message end at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

// Value <-> wire-grid helpers. decode() and quantize() must go through the
// same functions so their float results are bit-identical.

fn mm_i64(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}
fn mm_i64_value(v: i64) -> f64 {
    v as f64 / 1000.0
}
fn mm_i32(v: f64) -> i32 {
    (v * 1000.0).round() as i32
}
fn mm_i32_value(v: i32) -> f64 {
    v as f64 / 1000.0
}
fn heading_centideg(theta: f64) -> u16 {
    let deg = theta.to_degrees().rem_euclid(360.0);
    ((deg * 100.0).round() as u32 % 36000) as u16
}
fn heading_value(centideg: u16) -> f64 {
    normalize_angle((centideg as f64 / 100.0).to_radians())
}
fn rho_i16(rho: f64) -> i16 {
    (rho * 32767.0).round().clamp(-32767.0, 32767.0) as i16
}
fn rho_value(v: i16) -> f64 {
    v as f64 / 32767.0
}
fn speed_mm_s(v: f64) -> u16 {
    (v * 1000.0).round().clamp(0.0, 65535.0) as u16
}
fn speed_value(v: u16) -> f64 {
    v as f64 / 1000.0
}
fn cm_u16(v: f64) -> u16 {
    (v * 100.0).round().clamp(0.0, 65535.0) as u16
}
fn cm_u16_value(v: u16) -> f64 {
    v as f64 / 100.0
}
fn cm_u32(v: f64) -> u32 {
    (v * 100.0).round().clamp(0.0, u32::MAX as f64) as u32
}
fn cm_u32_value(v: u32) -> f64 {
    v as f64 / 100.0
}

/// Wire parameters of a Gaussian pose: quantized mean plus the
/// (σx, σy, ρxy, σθ) confidence description. Position-heading cross terms
/// do not survive this representation.
struct WireGaussian {
    x_sigma: u16,
    y_sigma: u16,
    rho: i16,
    theta_sigma: u16,
}

impl WireGaussian {
    fn from_gaussian(g: &GaussianPose2) -> Self {
        let cov = g.cov();
        let sx = cov[(0, 0)].max(0.0).sqrt();
        let sy = cov[(1, 1)].max(0.0).sqrt();
        let st = cov[(2, 2)].max(0.0).sqrt();
        let rho = if sx > 0.0 && sy > 0.0 {
            (cov[(0, 1)] / (sx * sy)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Self {
            x_sigma: quantize_confidence(sx, ConfidenceKind::Position),
            y_sigma: quantize_confidence(sy, ConfidenceKind::Position),
            rho: rho_i16(rho),
            theta_sigma: quantize_confidence(st, ConfidenceKind::Heading),
        }
    }

    fn to_gaussian(&self, mean: Pose2) -> GaussianPose2 {
        GaussianPose2::from_wire_std(
            mean,
            confidence_value(self.x_sigma, ConfidenceKind::Position),
            confidence_value(self.y_sigma, ConfidenceKind::Position),
            rho_value(self.rho),
            confidence_value(self.theta_sigma, ConfidenceKind::Heading),
        )
    }
}

fn check_finite(cpm: &Cpm) -> Result<(), CpmError> {
    let mgmt_pose = cpm.management.reference_position.mean();
    if !mgmt_pose.is_finite()
        || cpm
            .management
            .reference_position
            .cov()
            .iter()
            .any(|v| !v.is_finite())
    {
        return Err(CpmError::NonFinite("management reference position"));
    }
    if let Some(sd) = &cpm.station_data {
        if ![sd.heading, sd.speed, sd.length, sd.width]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(CpmError::NonFinite("station data"));
        }
    }
    for s in &cpm.sensors {
        if ![s.range, s.fov_start, s.fov_end].iter().all(|v| v.is_finite()) {
            return Err(CpmError::NonFinite("sensor information"));
        }
    }
    for o in &cpm.objects {
        let p = o.pose_in_station_frame.mean();
        if !p.is_finite()
            || o.pose_in_station_frame.cov().iter().any(|v| !v.is_finite())
            || ![o.speed, o.speed_std, o.length, o.width]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(CpmError::NonFinite("perceived object"));
        }
    }
    Ok(())
}

/// Exact byte length `encode` will produce for this message.
pub fn encoded_len(cpm: &Cpm) -> usize {
    MIN_MESSAGE_LEN
        + if cpm.station_data.is_some() { STATION_DATA_LEN } else { 0 }
        + cpm.sensors.len() * SENSOR_LEN
        + cpm.objects.len() * OBJECT_LEN
}

/// Encodes a message to its wire bytes. Deterministic: identical input
/// yields identical bytes.
pub fn encode(cpm: &Cpm) -> Result<Vec<u8>, CpmError> {
    cpm.validate()?;
    check_finite(cpm)?;

    let mut out = Vec::with_capacity(encoded_len(cpm));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&cpm.management.station_id.to_le_bytes());
    out.push(match cpm.management.station_type {
        StationType::Irsu => 0,
        StationType::Vehicle => 1,
    });
    out.extend_from_slice(&cpm.management.generation_time_ms.to_le_bytes());

    let ref_pose = cpm.management.reference_position.mean();
    let ref_wire = WireGaussian::from_gaussian(&cpm.management.reference_position);
    out.extend_from_slice(&mm_i64(ref_pose.x).to_le_bytes());
    out.extend_from_slice(&mm_i64(ref_pose.y).to_le_bytes());
    out.extend_from_slice(&heading_centideg(ref_pose.theta).to_le_bytes());
    out.extend_from_slice(&ref_wire.x_sigma.to_le_bytes());
    out.extend_from_slice(&ref_wire.y_sigma.to_le_bytes());
    out.extend_from_slice(&ref_wire.rho.to_le_bytes());
    out.extend_from_slice(&ref_wire.theta_sigma.to_le_bytes());

    match &cpm.station_data {
        None => out.push(0),
        Some(sd) => {
            out.push(1);
            out.extend_from_slice(&heading_centideg(sd.heading).to_le_bytes());
            out.extend_from_slice(&speed_mm_s(sd.speed).to_le_bytes());
            out.extend_from_slice(&cm_u16(sd.length).to_le_bytes());
            out.extend_from_slice(&cm_u16(sd.width).to_le_bytes());
        }
    }

    out.push(cpm.sensors.len() as u8);
    for s in &cpm.sensors {
        out.push(s.sensor_id);
        out.push(match s.sensor_type {
            SensorType::Camera => 0,
            SensorType::Lidar => 1,
            SensorType::Fused => 2,
        });
        out.extend_from_slice(&cm_u32(s.range).to_le_bytes());
        out.extend_from_slice(&heading_centideg(s.fov_start).to_le_bytes());
        out.extend_from_slice(&heading_centideg(s.fov_end).to_le_bytes());
    }

    out.push(cpm.objects.len() as u8);
    for o in &cpm.objects {
        let pose = o.pose_in_station_frame.mean();
        let wire = WireGaussian::from_gaussian(&o.pose_in_station_frame);
        out.extend_from_slice(&o.object_id.to_le_bytes());
        out.push(match o.object_class {
            ObjectClass::Pedestrian => 0,
            ObjectClass::Car => 1,
            ObjectClass::Cyclist => 2,
            ObjectClass::Unknown => 3,
        });
        out.extend_from_slice(&mm_i32(pose.x).to_le_bytes());
        out.extend_from_slice(&mm_i32(pose.y).to_le_bytes());
        out.extend_from_slice(&heading_centideg(pose.theta).to_le_bytes());
        out.extend_from_slice(&wire.x_sigma.to_le_bytes());
        out.extend_from_slice(&wire.y_sigma.to_le_bytes());
        out.extend_from_slice(&wire.rho.to_le_bytes());
        out.extend_from_slice(&wire.theta_sigma.to_le_bytes());
        out.extend_from_slice(&speed_mm_s(o.speed).to_le_bytes());
        out.extend_from_slice(&speed_mm_s(o.speed_std).to_le_bytes());
        out.extend_from_slice(&cm_u16(o.length).to_le_bytes());
        out.extend_from_slice(&cm_u16(o.width).to_le_bytes());
    }

    Ok(out)
}

/// Applies the same quantization the wire roundtrip applies, without
/// serializing: `decode(encode(x)) == quantize(x)` exactly.
pub fn quantize(cpm: &Cpm) -> Result<Cpm, CpmError> {
    cpm.validate()?;
    check_finite(cpm)?;

    let ref_pose = cpm.management.reference_position.mean();
    let ref_wire = WireGaussian::from_gaussian(&cpm.management.reference_position);
    let ref_mean = Pose2::new(
        mm_i64_value(mm_i64(ref_pose.x)),
        mm_i64_value(mm_i64(ref_pose.y)),
        heading_value(heading_centideg(ref_pose.theta)),
    );

    Ok(Cpm {
        management: CpmManagement {
            station_id: cpm.management.station_id,
            station_type: cpm.management.station_type,
            generation_time_ms: cpm.management.generation_time_ms,
            reference_position: ref_wire.to_gaussian(ref_mean),
        },
        station_data: cpm.station_data.as_ref().map(|sd| StationData {
            heading: heading_value(heading_centideg(sd.heading)),
            speed: speed_value(speed_mm_s(sd.speed)),
            length: cm_u16_value(cm_u16(sd.length)),
            width: cm_u16_value(cm_u16(sd.width)),
        }),
        sensors: cpm
            .sensors
            .iter()
            .map(|s| SensorInformation {
                sensor_id: s.sensor_id,
                sensor_type: s.sensor_type,
                range: cm_u32_value(cm_u32(s.range)),
                fov_start: heading_value(heading_centideg(s.fov_start)),
                fov_end: heading_value(heading_centideg(s.fov_end)),
            })
            .collect(),
        objects: cpm
            .objects
            .iter()
            .map(|o| {
                let pose = o.pose_in_station_frame.mean();
                let wire = WireGaussian::from_gaussian(&o.pose_in_station_frame);
                let mean = Pose2::new(
                    mm_i32_value(mm_i32(pose.x)),
                    mm_i32_value(mm_i32(pose.y)),
                    heading_value(heading_centideg(pose.theta)),
                );
                PerceivedObject {
                    object_id: o.object_id,
                    object_class: o.object_class,
                    pose_in_station_frame: wire.to_gaussian(mean),
                    speed: speed_value(speed_mm_s(o.speed)),
                    speed_std: speed_value(speed_mm_s(o.speed_std)),
                    length: cm_u16_value(cm_u16(o.length)),
                    width: cm_u16_value(cm_u16(o.width)),
                }
            })
            .collect(),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn i16(&mut self) -> Result<i16, DecodeError> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, DecodeError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes wire bytes into a message; never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<Cpm, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };

    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(DecodeError::BadMagic { offset: 0 });
    }
    let version_offset = r.pos;
    let version = r.u8()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion {
            offset: version_offset,
            found: version,
        });
    }

    let station_id = r.u32()?;
    let st_offset = r.pos;
    let station_type = match r.u8()? {
        0 => StationType::Irsu,
        1 => StationType::Vehicle,
        v => {
            return Err(DecodeError::InvalidEnum {
                offset: st_offset,
                what: "station type",
                value: v,
            })
        }
    };
    let generation_time_ms = r.u64()?;

    let ref_x = mm_i64_value(r.i64()?);
    let ref_y = mm_i64_value(r.i64()?);
    let ref_theta = heading_value(r.u16()?);
    let ref_wire = WireGaussian {
        x_sigma: r.u16()?,
        y_sigma: r.u16()?,
        rho: r.i16()?,
        theta_sigma: r.u16()?,
    };
    let management = CpmManagement {
        station_id,
        station_type,
        generation_time_ms,
        reference_position: ref_wire.to_gaussian(Pose2::new(ref_x, ref_y, ref_theta)),
    };

    let present_offset = r.pos;
    let station_data = match r.u8()? {
        0 => None,
        1 => Some(StationData {
            heading: heading_value(r.u16()?),
            speed: speed_value(r.u16()?),
            length: cm_u16_value(r.u16()?),
            width: cm_u16_value(r.u16()?),
        }),
        v => {
            return Err(DecodeError::InvalidEnum {
                offset: present_offset,
                what: "station data flag",
                value: v,
            })
        }
    };

    let count_offset = r.pos;
    let sensor_count = r.u8()?;
    if sensor_count as usize > MAX_SENSORS {
        return Err(DecodeError::TooManySensors {
            offset: count_offset,
            count: sensor_count,
        });
    }
    let mut sensors = Vec::with_capacity(sensor_count as usize);
    for _ in 0..sensor_count {
        let sensor_id = r.u8()?;
        let ty_offset = r.pos;
        let sensor_type = match r.u8()? {
            0 => SensorType::Camera,
            1 => SensorType::Lidar,
            2 => SensorType::Fused,
            v => {
                return Err(DecodeError::InvalidEnum {
                    offset: ty_offset,
                    what: "sensor type",
                    value: v,
                })
            }
        };
        sensors.push(SensorInformation {
            sensor_id,
            sensor_type,
            range: cm_u32_value(r.u32()?),
            fov_start: heading_value(r.u16()?),
            fov_end: heading_value(r.u16()?),
        });
    }

    // object_count fits u8, so the ≤ 255 limit holds by construction.
    let object_count = r.u8()?;
    let mut objects = Vec::with_capacity(object_count as usize);
    for _ in 0..object_count {
        let object_id = r.u16()?;
        let class_offset = r.pos;
        let object_class = match r.u8()? {
            0 => ObjectClass::Pedestrian,
            1 => ObjectClass::Car,
            2 => ObjectClass::Cyclist,
            3 => ObjectClass::Unknown,
            v => {
                return Err(DecodeError::InvalidEnum {
                    offset: class_offset,
                    what: "object class",
                    value: v,
                })
            }
        };
        let x = mm_i32_value(r.i32()?);
        let y = mm_i32_value(r.i32()?);
        let theta = heading_value(r.u16()?);
        let wire = WireGaussian {
            x_sigma: r.u16()?,
            y_sigma: r.u16()?,
            rho: r.i16()?,
            theta_sigma: r.u16()?,
        };
        objects.push(PerceivedObject {
            object_id,
            object_class,
            pose_in_station_frame: wire.to_gaussian(Pose2::new(x, y, theta)),
            speed: speed_value(r.u16()?),
            speed_std: speed_value(r.u16()?),
            length: cm_u16_value(r.u16()?),
            width: cm_u16_value(r.u16()?),
        });
    }

    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes {
            offset: r.pos,
            extra: bytes.len() - r.pos,
        });
    }

    Ok(Cpm {
        management,
        station_data,
        sensors,
        objects,
    })
}
