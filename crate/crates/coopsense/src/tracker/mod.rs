//! GM-PHD multi-road-user tracking with persistent track identities.
//!
//! The tracker represents the intensity of the target set as a weighted
//! Gaussian mixture over (x, y, heading, speed) states. Compared with a
//! plain GM-PHD filter it initiates new tracks from unassociated
//! measurements and manages stable track identities. One tracker instance
//! is run per road-user class; instances never exchange components.

mod phd;

pub use phd::{extract_tracks, predict, prune_and_merge, self_filter, update};
pub(crate) use phd::cv_propagate;

use crate::cpm::ObjectClass;
use crate::geometry::normalize_angle;
use nalgebra::{Matrix2, Matrix4, Vector4};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("measurement class {got:?} does not match tracker class {expected:?}")]
    ClassMismatch {
        expected: ObjectClass,
        got: ObjectClass,
    },
    #[error("non-finite measurement field: {0}")]
    NonFinite(&'static str),
    #[error("invalid tracker parameters: {0}")]
    InvalidParams(String),
}

/// Tracked kinematic state of one road user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Non-negative; a negative filter speed is folded into a heading flip
    /// at extraction.
    pub speed: f64,
}

impl TargetState {
    pub fn from_mean(mean: &Vector4<f64>) -> Self {
        let (heading, speed) = if mean[3] < 0.0 {
            (normalize_angle(mean[2] + std::f64::consts::PI), -mean[3])
        } else {
            (normalize_angle(mean[2]), mean[3])
        };
        Self {
            x: mean[0],
            y: mean[1],
            heading,
            speed,
        }
    }
}

/// One weighted Gaussian of the PHD intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    /// State mean ordered (x, y, heading, speed).
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    /// Assigned once the component is confirmed; never reused within a
    /// tracker instance.
    pub track_id: Option<u64>,
}

/// A frame-transformed perceived object ready for fusion.
///
/// Heading and speed are fused only when their variances are finite; an
/// infinite variance flags the channel as unobserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub position: (f64, f64),
    pub heading: f64,
    pub position_cov: Matrix2<f64>,
    pub heading_var: f64,
    pub speed: f64,
    pub speed_var: f64,
    pub class: ObjectClass,
    pub timestamp: f64,
}

/// Tuning of the PHD recursion. All values are per tracker instance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub p_survival: f64,
    pub p_detect: f64,
    /// Expected clutter intensity per m² of surveillance area.
    pub clutter_density: f64,
    /// Weight given to a measurement-driven birth component.
    pub birth_weight: f64,
    pub prune_threshold: f64,
    /// Mahalanobis distance below which components merge.
    pub merge_distance: f64,
    /// Components at or above this weight are confirmed tracks.
    pub confirm_weight: f64,
    pub max_components: usize,
    /// Speed diffusion, m/s per √s.
    pub process_noise_speed: f64,
    /// Heading diffusion, rad per √s.
    pub process_noise_heading: f64,
    /// Prior speed std used for measurement-driven births.
    pub birth_speed_std: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            p_survival: 0.99,
            p_detect: 0.9,
            clutter_density: 1e-4,
            birth_weight: 0.25,
            prune_threshold: 1e-5,
            merge_distance: 2.0,
            confirm_weight: 0.5,
            max_components: 200,
            process_noise_speed: 0.5,
            process_noise_heading: 0.2,
            birth_speed_std: 2.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let prob = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(TrackerError::InvalidParams(format!(
                    "{name} must be in (0, 1], got {v}"
                )))
            }
        };
        prob("p_survival", self.p_survival)?;
        prob("p_detect", self.p_detect)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(TrackerError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("birth_weight", self.birth_weight)?;
        positive("prune_threshold", self.prune_threshold)?;
        positive("merge_distance", self.merge_distance)?;
        positive("confirm_weight", self.confirm_weight)?;
        positive("process_noise_speed", self.process_noise_speed)?;
        positive("process_noise_heading", self.process_noise_heading)?;
        positive("birth_speed_std", self.birth_speed_std)?;
        if self.clutter_density < 0.0 || !self.clutter_density.is_finite() {
            return Err(TrackerError::InvalidParams(format!(
                "clutter_density must be non-negative, got {}",
                self.clutter_density
            )));
        }
        if self.max_components == 0 {
            return Err(TrackerError::InvalidParams(
                "max_components must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A confirmed track extracted from the intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub state: TargetState,
    pub cov: Matrix4<f64>,
}

/// A per-class GM-PHD tracker instance stepped at message arrival times.
///
/// Single-threaded mutable state; distinct instances may live on distinct
/// threads.
#[derive(Debug, Clone)]
pub struct PhdTracker {
    class: ObjectClass,
    params: TrackerParams,
    components: Vec<GaussianComponent>,
    next_track_id: u64,
    last_time: Option<f64>,
    out_of_order_dropped: u64,
}

impl PhdTracker {
    pub fn new(class: ObjectClass, params: TrackerParams) -> Self {
        params.validate().expect("tracker parameters out of range");
        Self {
            class,
            params,
            components: Vec::new(),
            next_track_id: 1,
            last_time: None,
            out_of_order_dropped: 0,
        }
    }

    pub fn class(&self) -> ObjectClass {
        self.class
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Messages older than the filter time that were dropped.
    pub fn out_of_order_dropped(&self) -> u64 {
        self.out_of_order_dropped
    }

    /// Advances the filter to `timestamp` and fuses the measurements,
    /// returning the confirmed tracks. A timestamp older than the filter
    /// time drops the batch (counted) and leaves the state untouched.
    pub fn step(
        &mut self,
        timestamp: f64,
        measurements: &[Measurement],
    ) -> Result<Vec<Track>, TrackerError> {
        let dt = match self.last_time {
            Some(t) if timestamp < t => {
                self.out_of_order_dropped += 1;
                return Ok(self.confirmed_tracks());
            }
            Some(t) => timestamp - t,
            None => 0.0,
        };
        let predicted = predict(&self.components, dt, &self.params);
        let updated = update(&predicted, measurements, self.class, &self.params)?;
        self.components = prune_and_merge(updated, &self.params);
        self.last_time = Some(timestamp);
        Ok(extract_tracks(
            &mut self.components,
            &mut self.next_track_id,
            &self.params,
        ))
    }

    /// Extracts the currently confirmed tracks without advancing time.
    pub fn confirmed_tracks(&mut self) -> Vec<Track> {
        extract_tracks(
            &mut self.components,
            &mut self.next_track_id,
            &self.params,
        )
    }
}
