//! Deterministic scenario engine and uncertainty sweeps.
//!
//! [`run_scenario`] drives the full 10 Hz pipeline — perceive → encode →
//! channel → decode → transform → self-filter → track → predict → plan →
//! decide — from a declarative scenario description. [`run_sweep`]
//! evaluates how self-localisation uncertainty bloats transformed object
//! estimates: a grid of receiver noise levels, V2I vs V2V sensing, and evaluation offsets,
//! each combination validated against a seeded Monte-Carlo reference
//! ([`monte_carlo_reference`]).
//!
//! Everything is seeded: the same (scenario, seed) pair produces
//! bit-identical logs.

mod mc;
mod scenario;
mod sweep;

pub use mc::{monte_carlo_reference, McResult};
pub use scenario::{
    run_scenario, RoadUserLog, ScenarioLog, StationLog, TickLog, TrackLog,
};
pub use sweep::{run_sweep, SweepMode, SweepRecord, SweepResult, SweepSpec, VariedParam};

use crate::cpm::{CpmError, DecodeError, ObjectClass};
use crate::geometry::{GeometryError, Pose2, UtParams};
use crate::planner::{
    CostMapConfig, LaneMap, PlannerError, Polygon, PredictionConfig, VehicleParams,
};
use crate::tracker::{TrackerError, TrackerParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cpm(#[from] CpmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Close-to-zero heading std assigned to an IRSU's self-localisation
/// estimate (radians), preventing numerical degeneracy while staying far
/// below the smallest representable confidence step.
pub const IRSU_HEADING_STD_RAD: f64 = 1e-4;
/// Position std of a surveyed IRSU, m.
pub const IRSU_POSITION_STD_M: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationRole {
    Sensing,
    Receiving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Irsu,
    Cav,
}

/// One ITS station participating in a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: u32,
    pub role: StationRole,
    pub kind: StationKind,
    pub pose: Pose2,
    /// Forward speed along the initial heading, m/s.
    #[serde(default)]
    pub velocity: f64,
    /// Self-localisation position std, m. Defaults to 0.25 m for a CAV and
    /// the survey accuracy for an IRSU.
    #[serde(default)]
    pub sigma_pos: Option<f64>,
    /// Self-localisation heading std, degrees. Defaults to 0.5° for a CAV
    /// and the close-to-zero ε for an IRSU.
    #[serde(default)]
    pub sigma_theta_deg: Option<f64>,
    /// Detection range when sensing, m.
    #[serde(default = "default_sensor_range")]
    pub sensor_range: f64,
    /// Navigation goal; enables planning for the receiving CAV.
    #[serde(default)]
    pub goal: Option<Pose2>,
    /// Speed cap override for the receiving CAV, m/s.
    #[serde(default)]
    pub max_speed: Option<f64>,
}

fn default_sensor_range() -> f64 {
    50.0
}

impl StationSpec {
    pub fn resolved_sigma_pos(&self) -> f64 {
        self.sigma_pos.unwrap_or(match self.kind {
            StationKind::Irsu => IRSU_POSITION_STD_M,
            StationKind::Cav => 0.25,
        })
    }

    pub fn resolved_sigma_theta_rad(&self) -> f64 {
        match self.sigma_theta_deg {
            Some(deg) => deg.to_radians(),
            None => match self.kind {
                StationKind::Irsu => IRSU_HEADING_STD_RAD,
                StationKind::Cav => 0.5f64.to_radians(),
            },
        }
    }
}

/// Motion of a simulated road user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrajectorySpec {
    /// Stays put.
    Static { pose: Pose2 },
    /// Constant speed along the start heading.
    Line { start: Pose2, speed: f64 },
    /// Piecewise-linear waypoints at constant speed; stops at the last one.
    Waypoints { points: Vec<(f64, f64)>, speed: f64 },
}

impl TrajectorySpec {
    /// True pose and speed at time `t`.
    pub fn state_at(&self, t: f64) -> (Pose2, f64) {
        match self {
            TrajectorySpec::Static { pose } => (*pose, 0.0),
            TrajectorySpec::Line { start, speed } => (
                Pose2::new(
                    start.x + speed * t * start.theta.cos(),
                    start.y + speed * t * start.theta.sin(),
                    start.theta,
                ),
                *speed,
            ),
            TrajectorySpec::Waypoints { points, speed } => {
                if points.is_empty() {
                    return (Pose2::new(0.0, 0.0, 0.0), 0.0);
                }
                let mut remaining = speed * t;
                for w in points.windows(2) {
                    let dx = w[1].0 - w[0].0;
                    let dy = w[1].1 - w[0].1;
                    let seg = (dx * dx + dy * dy).sqrt();
                    let heading = dy.atan2(dx);
                    if remaining <= seg {
                        let f = if seg > 0.0 { remaining / seg } else { 0.0 };
                        return (
                            Pose2::new(w[0].0 + f * dx, w[0].1 + f * dy, heading),
                            *speed,
                        );
                    }
                    remaining -= seg;
                }
                let last = *points.last().unwrap();
                let heading = if points.len() >= 2 {
                    let a = points[points.len() - 2];
                    (last.1 - a.1).atan2(last.0 - a.0)
                } else {
                    0.0
                };
                (Pose2::new(last.0, last.1, heading), 0.0)
            }
        }
    }
}

/// A simulated road user with the sensing station's measurement noise for
/// it (position/heading/speed standard deviations).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadUserSpec {
    pub class: ObjectClass,
    pub trajectory: TrajectorySpec,
    /// Perception position std, m.
    #[serde(default = "default_user_sigma_pos")]
    pub sigma_pos: f64,
    /// Perception heading std, degrees.
    #[serde(default = "default_user_sigma_theta_deg")]
    pub sigma_theta_deg: f64,
    /// Perception speed std, m/s.
    #[serde(default = "default_user_sigma_speed")]
    pub sigma_speed: f64,
    #[serde(default = "default_user_length")]
    pub length: f64,
    #[serde(default = "default_user_width")]
    pub width: f64,
}

fn default_user_sigma_pos() -> f64 {
    0.5
}
fn default_user_sigma_theta_deg() -> f64 {
    6.0
}
fn default_user_sigma_speed() -> f64 {
    0.2
}
fn default_user_length() -> f64 {
    0.6
}
fn default_user_width() -> f64 {
    0.6
}

/// Bernoulli loss plus fixed latency, applied per message.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub loss_probability: f64,
    pub latency_ticks: usize,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            loss_probability: 0.0,
            latency_ticks: 0,
        }
    }
}

/// A complete scenario description (the TOML file schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    pub stations: Vec<StationSpec>,
    #[serde(default)]
    pub road_users: Vec<RoadUserSpec>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub lane_map: Option<LaneMap>,
    /// Polygons blocking line of sight (buildings).
    #[serde(default)]
    pub occluders: Vec<Polygon>,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub cost_map: CostMapConfig,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub ut: UtParams,
    /// Self-tracking exclusion radius around the receiving CAV, m.
    #[serde(default = "default_exclusion_radius")]
    pub exclusion_radius: f64,
}

fn default_tick() -> f64 {
    0.1
}
fn default_exclusion_radius() -> f64 {
    2.0
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let receivers = self
            .stations
            .iter()
            .filter(|s| s.role == StationRole::Receiving)
            .count();
        if receivers != 1 {
            return Err(SimError::Schema(format!(
                "scenario must have exactly one receiving station, found {receivers}"
            )));
        }
        if !(self.tick_s > 0.0) {
            return Err(SimError::Schema(format!(
                "tick_s must be positive, got {}",
                self.tick_s
            )));
        }
        if self.duration_s < 0.0 {
            return Err(SimError::Schema("duration_s must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.channel.loss_probability) {
            return Err(SimError::Schema(format!(
                "channel.loss_probability must be in [0,1], got {}",
                self.channel.loss_probability
            )));
        }
        if let Some(lm) = &self.lane_map {
            lm.validate()?;
        }
        self.tracker
            .validate()
            .map_err(|e| SimError::Schema(e.to_string()))?;
        self.ut.validate()?;
        Ok(())
    }
}

/// Parses and validates a scenario TOML document.
pub fn load_scenario(text: &str) -> Result<Scenario, SimError> {
    let scenario: Scenario =
        toml::from_str(text).map_err(|e| SimError::Schema(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Sweep file schema: like [`SweepSpec`] but naming one or more modes and
/// degree-valued noise levels for readability.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default = "default_modes")]
    pub modes: Vec<SweepMode>,
    pub varied: VariedParam,
    /// Values of the varied parameter: degrees for heading, meters for
    /// position.
    pub values: Vec<f64>,
    #[serde(default = "default_fixed_pos")]
    pub fixed_sigma_pos: f64,
    #[serde(default = "default_fixed_theta")]
    pub fixed_sigma_theta_deg: f64,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<f64>,
    #[serde(default = "default_object_count")]
    pub object_count: usize,
    #[serde(default = "default_object_spacing")]
    pub object_spacing: f64,
    #[serde(default = "default_user_sigma_pos")]
    pub object_sigma_pos: f64,
    #[serde(default = "default_user_sigma_theta_deg")]
    pub object_sigma_theta_deg: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ut: UtParams,
    #[serde(default = "default_mass")]
    pub ellipse_mass: f64,
}

fn default_modes() -> Vec<SweepMode> {
    vec![SweepMode::V2I, SweepMode::V2V]
}
fn default_fixed_pos() -> f64 {
    0.25
}
fn default_fixed_theta() -> f64 {
    0.5
}
fn default_offsets() -> Vec<f64> {
    vec![50.0, -50.0, -150.0]
}
fn default_object_count() -> usize {
    20
}
fn default_object_spacing() -> f64 {
    5.0
}
fn default_mc_samples() -> usize {
    10_000
}
fn default_mass() -> f64 {
    0.95
}

impl SweepFile {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.values.is_empty() {
            return Err(SimError::Schema("sweep values list is empty".into()));
        }
        if self.offsets.is_empty() {
            return Err(SimError::Schema("sweep offsets list is empty".into()));
        }
        if self.object_count == 0 {
            return Err(SimError::Schema("object_count must be positive".into()));
        }
        if self.mc_samples == 0 {
            return Err(SimError::Schema("mc_samples must be positive".into()));
        }
        if !(self.ellipse_mass > 0.0 && self.ellipse_mass < 1.0) {
            return Err(SimError::Schema(format!(
                "ellipse_mass must be in (0,1), got {}",
                self.ellipse_mass
            )));
        }
        self.ut.validate()?;
        Ok(())
    }

    /// Expands the file into one spec per mode, converting degrees to
    /// radians where the varied parameter is the heading std.
    pub fn to_specs(&self) -> Vec<SweepSpec> {
        self.modes
            .iter()
            .map(|&mode| SweepSpec {
                mode,
                varied: self.varied,
                values: self
                    .values
                    .iter()
                    .map(|v| match self.varied {
                        VariedParam::HeadingStd => v.to_radians(),
                        VariedParam::PositionStd => *v,
                    })
                    .collect(),
                fixed_position_std: self.fixed_sigma_pos,
                fixed_heading_std: self.fixed_sigma_theta_deg.to_radians(),
                offsets: self.offsets.clone(),
                object_count: self.object_count,
                object_spacing: self.object_spacing,
                object_position_std: self.object_sigma_pos,
                object_heading_std: self.object_sigma_theta_deg.to_radians(),
                mc_samples: self.mc_samples,
                seed: self.seed,
                ut: self.ut,
                ellipse_mass: self.ellipse_mass,
            })
            .collect()
    }
}

/// Parses and validates a sweep TOML document.
pub fn load_sweep(text: &str) -> Result<SweepFile, SimError> {
    let file: SweepFile = toml::from_str(text).map_err(|e| SimError::Schema(e.to_string()))?;
    file.validate()?;
    Ok(file)
}
