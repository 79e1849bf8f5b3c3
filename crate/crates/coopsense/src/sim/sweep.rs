//! Uncertainty sweeps over receiver self-localisation noise.
//!
//! The sweep layout: a static sensing ITS-S at
//! (100, 100) facing east, a receiving CAV on the y = 75 line evaluated at
//! several longitudinal offsets (positive offset = receiver west of the
//! sender), and a line of static road users spaced along the sender's
//! x-axis. Every (mode, value, offset, object) combination yields the UT
//! transform, its confidence ellipse, and a seeded Monte-Carlo reference.

use super::mc::{monte_carlo_reference, McResult};
use super::{IRSU_HEADING_STD_RAD, IRSU_POSITION_STD_M};
use crate::geometry::{
    confidence_ellipse, transform_with_uncertainty, ConfidenceEllipse, GaussianPose2, Pose2,
    UtParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sender pose of the sweep layout.
pub const SENDER_POSE: (f64, f64, f64) = (100.0, 100.0, 0.0);
/// Lateral line the receiver moves along.
pub const RECEIVER_Y: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Sensing station is an IRSU with survey-grade self-localisation.
    V2I,
    /// Sensing station is a CAV with the same covariance as the receiver.
    V2V,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::V2I => "v2i",
            SweepMode::V2V => "v2v",
        }
    }
}

/// Which receiver noise component the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariedParam {
    #[serde(rename = "heading")]
    HeadingStd,
    #[serde(rename = "position")]
    PositionStd,
}

/// One fully-resolved sweep (single mode; SI units).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub varied: VariedParam,
    /// Values of the varied parameter (rad or m).
    pub values: Vec<f64>,
    /// Receiver position std when varying the heading, m.
    pub fixed_position_std: f64,
    /// Receiver heading std when varying the position, rad.
    pub fixed_heading_std: f64,
    /// Receiver-to-sender longitudinal offsets, m (positive = west of the
    /// sender, approaching).
    pub offsets: Vec<f64>,
    pub object_count: usize,
    /// Spacing of the static road users ahead of the sender, m.
    pub object_spacing: f64,
    pub object_position_std: f64,
    /// rad.
    pub object_heading_std: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub ut: UtParams,
    pub ellipse_mass: f64,
}

impl SweepSpec {
    /// Receiver noise (position std, heading std) for one varied value.
    pub fn receiver_stds(&self, value: f64) -> (f64, f64) {
        match self.varied {
            VariedParam::HeadingStd => (self.fixed_position_std, value),
            VariedParam::PositionStd => (value, self.fixed_heading_std),
        }
    }

    pub fn receiver_pose(&self, offset: f64) -> Pose2 {
        Pose2::new(SENDER_POSE.0 - offset, RECEIVER_Y, 0.0)
    }

    pub fn sender_pose(&self) -> Pose2 {
        Pose2::new(SENDER_POSE.0, SENDER_POSE.1, SENDER_POSE.2)
    }

    /// Object pose in the sender frame: `spacing·(index+1)` meters ahead.
    pub fn object_pose(&self, index: usize) -> Pose2 {
        Pose2::new(self.object_spacing * (index + 1) as f64, 0.0, 0.0)
    }
}

/// One (mode, value, offset, object) result.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub mode: SweepMode,
    pub varied: VariedParam,
    pub value: f64,
    pub offset: f64,
    pub object_index: usize,
    /// Distance of the object from the sensing station, m.
    pub range_from_sender: f64,
    /// Distance of the object from the receiver, m.
    pub range_from_receiver: f64,
    pub transformed: GaussianPose2,
    pub ellipse: ConfidenceEllipse,
    pub mc: McResult,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    /// Records for one (value, offset) cell, in object order.
    pub fn slice(&self, value: f64, offset: f64) -> Vec<&SweepRecord> {
        self.records
            .iter()
            .filter(|r| r.value == value && r.offset == offset)
            .collect()
    }
}

fn mix_seed(seed: u64, combo: u64) -> u64 {
    // splitmix64 step keeps per-combination streams independent.
    let mut z = seed ^ combo.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the sweep. Combinations execute in parallel and are merged by
/// combination key, so the result does not depend on thread scheduling.
pub fn run_sweep(spec: &SweepSpec) -> SweepResult {
    assert!(!spec.values.is_empty(), "sweep needs at least one value");
    assert!(spec.mc_samples >= 1);

    let combos: Vec<(usize, usize, usize)> = (0..spec.values.len())
        .flat_map(|vi| {
            (0..spec.offsets.len()).flat_map(move |oi| {
                (0..spec.object_count).map(move |k| (vi, oi, k))
            })
        })
        .collect();

    let mut records: Vec<(u64, SweepRecord)> = combos
        .par_iter()
        .map(|&(vi, oi, k)| {
            let value = spec.values[vi];
            let offset = spec.offsets[oi];
            let combo_index =
                ((vi * spec.offsets.len() + oi) * spec.object_count + k) as u64;

            let (rx_pos_std, rx_heading_std) = spec.receiver_stds(value);
            let receiver = GaussianPose2::from_std(
                spec.receiver_pose(offset),
                rx_pos_std,
                rx_pos_std,
                rx_heading_std,
            );
            let sender = match spec.mode {
                SweepMode::V2I => GaussianPose2::from_std(
                    spec.sender_pose(),
                    IRSU_POSITION_STD_M,
                    IRSU_POSITION_STD_M,
                    IRSU_HEADING_STD_RAD,
                ),
                SweepMode::V2V => GaussianPose2::from_std(
                    spec.sender_pose(),
                    rx_pos_std,
                    rx_pos_std,
                    rx_heading_std,
                ),
            };
            let object = GaussianPose2::from_std(
                spec.object_pose(k),
                spec.object_position_std,
                spec.object_position_std,
                spec.object_heading_std,
            );

            let transformed = transform_with_uncertainty(&receiver, &sender, &object, spec.ut)
                .expect("sweep covariances are valid by construction");
            let mean = transformed.mean();
            let ellipse = confidence_ellipse(
                &transformed.position_cov(),
                (mean.x, mean.y),
                spec.ellipse_mass,
            )
            .expect("transformed covariance is PSD");
            let mc = monte_carlo_reference(
                &receiver,
                &sender,
                &object,
                spec.mc_samples,
                mix_seed(spec.seed, combo_index),
            );

            let obj = spec.object_pose(k);
            let rx = spec.receiver_pose(offset);
            let obj_global = (SENDER_POSE.0 + obj.x, SENDER_POSE.1 + obj.y);
            let range_from_receiver =
                ((obj_global.0 - rx.x).powi(2) + (obj_global.1 - rx.y).powi(2)).sqrt();

            (
                combo_index,
                SweepRecord {
                    mode: spec.mode,
                    varied: spec.varied,
                    value,
                    offset,
                    object_index: k,
                    range_from_sender: obj.x,
                    range_from_receiver,
                    transformed,
                    ellipse,
                    mc,
                },
            )
        })
        .collect();

    records.sort_by_key(|(idx, _)| *idx);
    SweepResult {
        records: records.into_iter().map(|(_, r)| r).collect(),
    }
}
