//! Data model and binary codec for CPM-style collective perception messages.
//!
//! A message mirrors the four-container ETSI structure: one management
//! container, an optional station-data container, up to ten sensor
//! information containers and up to 255 perceived-object containers. The
//! wire format is a documented little-endian layout (see [`codec`]); all
//! confidence fields are carried as quantized codes that round upward so a
//! decoded message never under-reports uncertainty.

mod codec;

pub use codec::{decode, encode, encoded_len, quantize, DecodeError, MIN_MESSAGE_LEN};

use crate::geometry::GaussianPose2;
use thiserror::Error;

/// Maximum number of sensor information containers per message.
pub const MAX_SENSORS: usize = 10;
/// Maximum number of perceived object containers per message.
pub const MAX_OBJECTS: usize = 255;

/// Smallest representable position standard deviation (one code unit).
pub const POSITION_STD_STEP_M: f64 = 0.005;
/// Smallest representable heading standard deviation (one code unit), 0.05°.
pub const HEADING_STD_STEP_RAD: f64 = 0.05 * std::f64::consts::PI / 180.0;

/// Errors raised when constructing or encoding messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpmError {
    #[error("too many sensor containers: {0} (limit {MAX_SENSORS})")]
    TooManySensors(usize),
    #[error("too many perceived object containers: {0} (limit {MAX_OBJECTS})")]
    TooManyObjects(usize),
    #[error("non-finite field: {0}")]
    NonFinite(&'static str),
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationType {
    Irsu,
    Vehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorType {
    Camera,
    Lidar,
    Fused,
}

/// Road-user class of a perceived object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Pedestrian,
    Car,
    Cyclist,
    Unknown,
}

/// Which confidence quantization table a standard deviation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceKind {
    /// Position std in meters, 0.005 m per code unit.
    Position,
    /// Heading std in radians, 0.05° per code unit.
    Heading,
}

/// Quantizes a standard deviation to its wire confidence code.
///
/// Codes count quantization steps and always round upward, clamped to
/// [1, 65535], so the decoded std is never smaller than the original
/// (within the representable range). Ratios within a few ulps of an exact
/// code are snapped to it, which makes re-encoding a decoded value
/// idempotent.
pub fn quantize_confidence(std_dev: f64, kind: ConfidenceKind) -> u16 {
    let step = match kind {
        ConfidenceKind::Position => POSITION_STD_STEP_M,
        ConfidenceKind::Heading => HEADING_STD_STEP_RAD,
    };
    let ratio = std_dev / step;
    let snap_tol = 8.0 * f64::EPSILON * ratio.max(1.0);
    let code = if (ratio - ratio.round()).abs() <= snap_tol {
        ratio.round()
    } else {
        ratio.ceil()
    };
    if code < 1.0 {
        1
    } else if code > 65535.0 {
        65535
    } else {
        code as u16
    }
}

/// The standard deviation a confidence code decodes to.
pub fn confidence_value(code: u16, kind: ConfidenceKind) -> f64 {
    let step = match kind {
        ConfidenceKind::Position => POSITION_STD_STEP_M,
        ConfidenceKind::Heading => HEADING_STD_STEP_RAD,
    };
    code as f64 * step
}

/// Management container: identity and reference position of the sender.
#[derive(Debug, Clone, PartialEq)]
pub struct CpmManagement {
    pub station_id: u32,
    pub station_type: StationType,
    /// Milliseconds since the scenario epoch.
    pub generation_time_ms: u64,
    /// Self-localisation estimate of the sending station in the global frame.
    pub reference_position: GaussianPose2,
}

/// Optional originating-vehicle data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationData {
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

/// Description of one sensor of the sending station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorInformation {
    pub sensor_id: u8,
    pub sensor_type: SensorType,
    pub range: f64,
    pub fov_start: f64,
    pub fov_end: f64,
}

/// One perceived road user, expressed in the sending station's frame.
///
/// The pose covariance travels on the wire as (σx, σy, ρxy, σθ); any
/// position-heading cross terms are dropped at encode time.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedObject {
    pub object_id: u16,
    pub object_class: ObjectClass,
    pub pose_in_station_frame: GaussianPose2,
    pub speed: f64,
    pub speed_std: f64,
    pub length: f64,
    pub width: f64,
}

/// A full CPM-style message.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpm {
    pub management: CpmManagement,
    pub station_data: Option<StationData>,
    pub sensors: Vec<SensorInformation>,
    pub objects: Vec<PerceivedObject>,
}

impl Cpm {
    /// Validates container count limits.
    pub fn new(
        management: CpmManagement,
        station_data: Option<StationData>,
        sensors: Vec<SensorInformation>,
        objects: Vec<PerceivedObject>,
    ) -> Result<Self, CpmError> {
        let cpm = Self {
            management,
            station_data,
            sensors,
            objects,
        };
        cpm.validate()?;
        Ok(cpm)
    }

    pub fn validate(&self) -> Result<(), CpmError> {
        if self.sensors.len() > MAX_SENSORS {
            return Err(CpmError::TooManySensors(self.sensors.len()));
        }
        if self.objects.len() > MAX_OBJECTS {
            return Err(CpmError::TooManyObjects(self.objects.len()));
        }
        if let Some(sd) = &self.station_data {
            if sd.speed < 0.0 {
                return Err(CpmError::InvalidField("station speed must be non-negative"));
            }
            if sd.length <= 0.0 || sd.width <= 0.0 {
                return Err(CpmError::InvalidField(
                    "station dimensions must be positive when present",
                ));
            }
        }
        for s in &self.sensors {
            if s.range <= 0.0 {
                return Err(CpmError::InvalidField("sensor range must be positive"));
            }
        }
        Ok(())
    }
}
