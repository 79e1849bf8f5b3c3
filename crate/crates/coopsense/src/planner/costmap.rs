//! Road-user prediction and cost-map construction.

use super::{CostMap, LaneMap, VehicleParams};
use crate::cpm::ObjectClass;
use crate::geometry::{confidence_ellipse, ConfidenceEllipse, GaussianPose2, Pose2};
use crate::tracker::TargetState;
use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Constant-velocity prediction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    /// How far into the future to predict, s.
    pub horizon: f64,
    /// Prediction step, s.
    pub step: f64,
    /// Heading diffusion, rad per √s.
    pub process_noise_heading: f64,
    /// Speed diffusion, m/s per √s.
    pub process_noise_speed: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            horizon: 1.5,
            step: 0.5,
            process_noise_heading: 0.2,
            process_noise_speed: 0.5,
        }
    }
}

/// Extrapolates a track with a constant-velocity model, one pose Gaussian
/// per step over `t ∈ {step, 2·step, …, horizon}`. A zero horizon yields an
/// empty list.
pub fn predict_road_user(
    state: &TargetState,
    cov: &Matrix4<f64>,
    config: &PredictionConfig,
) -> Vec<GaussianPose2> {
    assert!(config.step > 0.0, "prediction step must be positive");
    assert!(config.horizon >= 0.0, "prediction horizon must be non-negative");
    let steps = (config.horizon / config.step + 1e-9).floor() as usize;
    let mut mean = Vector4::new(state.x, state.y, state.heading, state.speed);
    let mut cov4 = *cov;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (m, c) = crate::tracker::cv_propagate(
            &mean,
            &cov4,
            config.step,
            config.process_noise_heading,
            config.process_noise_speed,
        );
        mean = m;
        cov4 = c;
        let pose = Pose2::new(mean[0], mean[1], mean[2]);
        let pose_cov = Matrix3::from_fn(|i, j| cov4[(i, j)]);
        // cv_propagate keeps the covariance symmetric PSD.
        out.push(
            GaussianPose2::new(pose, pose_cov)
                .expect("propagated covariance is symmetric PSD"),
        );
    }
    out
}

/// Cost-map construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostMapConfig {
    /// Side length of the square local map, m.
    pub extent: f64,
    /// Cell size, m.
    pub resolution: f64,
    /// Cells at or above this cost are untraversable.
    pub occupied_threshold: f64,
    /// Probability mass of road-user ellipses.
    pub ellipse_mass: f64,
    /// Gaussian cost falloff width outside an ellipse, in cells.
    pub falloff_cells: f64,
}

impl Default for CostMapConfig {
    fn default() -> Self {
        Self {
            extent: 60.0,
            resolution: 0.5,
            occupied_threshold: 0.8,
            ellipse_mass: 0.95,
            falloff_cells: 2.0,
        }
    }
}

/// A current track to be rendered into the cost map.
pub type TrackedUser = (ObjectClass, TargetState, Matrix4<f64>);
/// A predicted future pose of a road user.
pub type PredictedUser = (ObjectClass, GaussianPose2);

/// Builds the local cost map around the ego pose.
///
/// Off-drivable cells and non-crossable dividing lines cost 1.0. Tracked
/// and predicted road users stamp their confidence ellipses, bloated by the
/// vehicle's envelope radius, at cost 1.0 with a sub-threshold Gaussian
/// falloff outside so the planner prefers clearance. A crossing zone turns
/// fully blocked while any current or predicted pedestrian ellipse
/// intersects it.
pub fn build_cost_map(
    lane_map: &LaneMap,
    tracks: &[TrackedUser],
    predictions: &[PredictedUser],
    ego: Pose2,
    vehicle: &VehicleParams,
    config: &CostMapConfig,
) -> CostMap {
    let cells = (config.extent / config.resolution).ceil().max(1.0) as usize;
    let origin = (
        ego.x - config.extent / 2.0,
        ego.y - config.extent / 2.0,
    );
    let mut map = CostMap::new(
        origin,
        config.resolution,
        cells,
        cells,
        config.occupied_threshold,
    );

    // Structure: drivable area and uncrossable dividing lines.
    if !lane_map.drivable.is_empty() {
        for j in 0..map.height {
            for i in 0..map.width {
                if !lane_map.is_drivable(map.cell_center(i, j)) {
                    map.raise_cost(i, j, 1.0);
                }
            }
        }
    }
    for line in &lane_map.dividing_lines {
        if line.crossable {
            continue;
        }
        for j in 0..map.height {
            for i in 0..map.width {
                let c = map.cell_center(i, j);
                if super::polyline_distance(c, &line.polyline) <= config.resolution * 0.5 {
                    map.raise_cost(i, j, 1.0);
                }
            }
        }
    }

    // Road users: current estimates and their predictions.
    let mut pedestrian_ellipses: Vec<ConfidenceEllipse> = Vec::new();
    let mut stamp = |map: &mut CostMap, class: ObjectClass, center: (f64, f64), cov2| {
        let Ok(ellipse) = confidence_ellipse(&cov2, center, config.ellipse_mass) else {
            return;
        };
        stamp_ellipse(map, &ellipse, vehicle.envelope_radius(), config);
        if class == ObjectClass::Pedestrian {
            pedestrian_ellipses.push(ellipse);
        }
    };
    for (class, state, cov) in tracks {
        let cov2 = nalgebra::Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
        stamp(&mut map, *class, (state.x, state.y), cov2);
    }
    for (class, gp) in predictions {
        let m = gp.mean();
        stamp(&mut map, *class, (m.x, m.y), gp.position_cov());
    }

    // Crossing zones block entirely while a pedestrian (estimate or
    // prediction) overlaps them.
    for zone in &lane_map.crossing_zones {
        let active = pedestrian_ellipses
            .iter()
            .any(|e| ellipse_intersects_zone(e, zone));
        if !active {
            continue;
        }
        for j in 0..map.height {
            for i in 0..map.width {
                if zone.contains(map.cell_center(i, j)) {
                    map.raise_cost(i, j, 1.0);
                }
            }
        }
    }

    map
}

/// Stamps one inflated ellipse: cost 1.0 inside, Gaussian falloff outside
/// capped just below the occupied threshold so the halo stays traversable.
fn stamp_ellipse(
    map: &mut CostMap,
    ellipse: &ConfidenceEllipse,
    inflation: f64,
    config: &CostMapConfig,
) {
    let a = ellipse.semi_major + inflation;
    let b = ellipse.semi_minor + inflation;
    if a <= 0.0 || b <= 0.0 {
        return;
    }
    let falloff = config.falloff_cells * map.resolution;
    let reach = a.max(b) + 4.0 * falloff;
    let (cx, cy) = ellipse.center;
    let (sin_o, cos_o) = ellipse.orientation.sin_cos();
    let halo_peak = config.occupied_threshold - 0.05;

    let min_i = ((cx - reach - map.origin.0) / map.resolution).floor().max(0.0) as usize;
    let max_i = (((cx + reach - map.origin.0) / map.resolution).ceil() as i64)
        .clamp(0, map.width as i64) as usize;
    let min_j = ((cy - reach - map.origin.1) / map.resolution).floor().max(0.0) as usize;
    let max_j = (((cy + reach - map.origin.1) / map.resolution).ceil() as i64)
        .clamp(0, map.height as i64) as usize;

    for j in min_j..max_j {
        for i in min_i..max_i {
            let (px, py) = map.cell_center(i, j);
            let dx = px - cx;
            let dy = py - cy;
            // Into the ellipse frame.
            let u = cos_o * dx + sin_o * dy;
            let v = -sin_o * dx + cos_o * dy;
            let rho = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
            if rho <= 1.0 {
                map.raise_cost(i, j, 1.0);
            } else {
                // Radial distance beyond the boundary along the ray.
                let d_out = (dx * dx + dy * dy).sqrt() * (1.0 - 1.0 / rho);
                let cost = halo_peak * (-0.5 * (d_out / falloff).powi(2)).exp();
                if cost > 1e-3 {
                    map.raise_cost(i, j, cost);
                }
            }
        }
    }
}

fn ellipse_intersects_zone(e: &ConfidenceEllipse, zone: &super::CrossingZone) -> bool {
    if zone.contains(e.center) {
        return true;
    }
    let (sin_o, cos_o) = e.orientation.sin_cos();
    // Corners inside the ellipse.
    let inside = |p: (f64, f64)| {
        let dx = p.0 - e.center.0;
        let dy = p.1 - e.center.1;
        let u = cos_o * dx + sin_o * dy;
        let v = -sin_o * dx + cos_o * dy;
        if e.semi_major == 0.0 || e.semi_minor == 0.0 {
            return false;
        }
        (u / e.semi_major).powi(2) + (v / e.semi_minor).powi(2) <= 1.0
    };
    if zone.corners().iter().any(|c| inside(*c)) {
        return true;
    }
    // Boundary samples inside the zone.
    const SAMPLES: usize = 64;
    (0..SAMPLES).any(|k| {
        let phi = k as f64 / SAMPLES as f64 * std::f64::consts::TAU;
        let u = e.semi_major * phi.cos();
        let v = e.semi_minor * phi.sin();
        let p = (
            e.center.0 + cos_o * u - sin_o * v,
            e.center.1 + sin_o * u + cos_o * v,
        );
        zone.contains(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{CrossingZone, DividingLine, Lane};
    use approx::assert_abs_diff_eq;

    fn straight_road() -> LaneMap {
        LaneMap {
            drivable: vec![vec![(0.0, -3.5), (60.0, -3.5), (60.0, 3.5), (0.0, 3.5)]],
            lanes: vec![
                Lane { centerline: vec![(0.0, -1.75), (60.0, -1.75)], speed_limit: 5.0 },
                Lane { centerline: vec![(0.0, 1.75), (60.0, 1.75)], speed_limit: 5.0 },
            ],
            dividing_lines: vec![DividingLine {
                polyline: vec![(0.0, 0.0), (60.0, 0.0)],
                crossable: true,
            }],
            crossing_zones: vec![],
        }
    }

    fn ped_state(x: f64, y: f64) -> TargetState {
        TargetState { x, y, heading: 0.0, speed: 0.0 }
    }

    #[test]
    fn predict_stationary_user_grows_covariance() {
        let cov = Matrix4::identity() * 0.01;
        let out = predict_road_user(
            &ped_state(3.0, 4.0),
            &cov,
            &PredictionConfig::default(),
        );
        assert_eq!(out.len(), 3);
        for g in &out {
            assert_abs_diff_eq!(g.mean().x, 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.mean().y, 4.0, epsilon = 1e-12);
        }
        // Uncertainty grows monotonically.
        assert!(out[2].cov()[(3 - 1, 3 - 1)] > out[0].cov()[(2, 2)]);
    }

    #[test]
    fn predict_cv_offsets() {
        // Hand-evaluated CV model: speed 2 m/s, heading 0, steps at
        // 0.5 s over 1.5 s give x offsets 1, 2, 3 m.
        let state = TargetState { x: 0.0, y: 0.0, heading: 0.0, speed: 2.0 };
        let out = predict_road_user(&state, &Matrix4::zeros(), &PredictionConfig::default());
        let xs: Vec<f64> = out.iter().map(|g| g.mean().x).collect();
        assert_eq!(out.len(), 3);
        assert_abs_diff_eq!(xs[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_horizon_empty() {
        let config = PredictionConfig { horizon: 0.0, ..Default::default() };
        let out = predict_road_user(&ped_state(0.0, 0.0), &Matrix4::identity(), &config);
        assert!(out.is_empty());
    }

    #[test]
    fn costmap_structure_only() {
        let map = build_cost_map(
            &straight_road(),
            &[],
            &[],
            Pose2::new(30.0, 0.0, 0.0),
            &VehicleParams::default(),
            &CostMapConfig::default(),
        );
        // On-road cell free, off-road cell blocked.
        assert!(map.cost_at(30.0, -1.75).unwrap() < map.occupied_threshold);
        assert!(map.cost_at(30.0, 10.0).unwrap() >= map.occupied_threshold);
    }

    #[test]
    fn pedestrian_in_opposite_lane_leaves_ego_lane_free() {
        let config = CostMapConfig::default();
        let vehicle = VehicleParams { length: 2.0, width: 1.0, ..Default::default() };
        let ego = Pose2::new(20.0, -1.75, 0.0);
        let cov = Matrix4::identity() * 0.01;
        let clear = build_cost_map(&straight_road(), &[], &[], ego, &vehicle, &config);
        let with_ped = build_cost_map(
            &straight_road(),
            &[(ObjectClass::Pedestrian, ped_state(30.0, 2.5), cov)],
            &[],
            ego,
            &vehicle,
            &config,
        );
        // Ego-lane row unchanged along the approach.
        for step in 0..40 {
            let x = 10.0 + step as f64 * 0.5;
            assert_eq!(
                with_ped.is_occupied(x, -1.9),
                clear.is_occupied(x, -1.9),
                "ego lane changed at x={x}"
            );
        }
        // The pedestrian cell itself is blocked.
        assert!(with_ped.is_occupied(30.0, 2.5));
    }

    #[test]
    fn predicted_pedestrian_blocks_crossing_zone() {
        let mut lane_map = straight_road();
        lane_map.crossing_zones.push(CrossingZone {
            x: 40.0,
            y: -3.5,
            width: 3.0,
            height: 7.0,
            speed_limit: None,
        });
        let ego = Pose2::new(30.0, -1.75, 0.0);
        let vehicle = VehicleParams::default();
        let config = CostMapConfig::default();

        // Pedestrian south of the road predicted to reach the zone.
        let pred = GaussianPose2::from_std(Pose2::new(41.5, -3.0, 1.57), 0.4, 0.4, 0.1);
        let map = build_cost_map(
            &lane_map,
            &[],
            &[(ObjectClass::Pedestrian, pred)],
            ego,
            &vehicle,
            &config,
        );
        // Entire zone is blocked, including the far lane.
        assert!(map.is_occupied(41.5, -1.75));
        assert!(map.is_occupied(41.5, 1.75));
        assert!(map.is_occupied(42.9, 3.0));

        // A car prediction at the same place does not trigger the zone rule.
        let map_car = build_cost_map(
            &lane_map,
            &[],
            &[(ObjectClass::Car, pred)],
            ego,
            &vehicle,
            &config,
        );
        assert!(!map_car.is_occupied(41.5, 1.75));
    }
}
