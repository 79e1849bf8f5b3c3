//! Cost-map construction and hybrid A* path planning.
//!
//! The planner maintains a moving grid-based local cost map fed by three
//! sources: road structure (drivable area, non-crossable dividing lines),
//! current tracked road users, and their constant-velocity predictions.
//! Paths are searched over forward motion primitives in (x, y, θ), so every
//! returned path respects the vehicle's curvature limit by construction.

mod costmap;
mod hybrid_astar;

pub use costmap::{
    build_cost_map, predict_road_user, CostMapConfig, PredictedUser, PredictionConfig,
    TrackedUser,
};
pub use hybrid_astar::{astar_cost, decide, dijkstra_reference, plan, Decision};

use crate::geometry::Pose2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("start pose ({0:.2}, {1:.2}) lies outside the cost map")]
    StartOutsideMap(f64, f64),
    #[error("goal pose ({0:.2}, {1:.2}) lies outside the cost map")]
    GoalOutsideMap(f64, f64),
    #[error("start cell is occupied (cost {0:.2})")]
    InvalidStart(f64),
    #[error("lane map invalid: {0}")]
    InvalidLaneMap(String),
}

/// A closed polygon as a list of vertices.
pub type Polygon = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub centerline: Vec<(f64, f64)>,
    /// m/s.
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DividingLine {
    pub polyline: Vec<(f64, f64)>,
    /// Whether the vehicle may cross it (a broken line).
    pub crossable: bool,
}

/// Axis-aligned pedestrian crossing area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingZone {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    /// Speed rule over the crossing, if lower than the lane limit.
    pub speed_limit: Option<f64>,
}

impl CrossingZone {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x && p.0 <= self.x + self.width && p.1 >= self.y && p.1 <= self.y + self.height
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x, self.y),
            (self.x + self.width, self.y),
            (self.x + self.width, self.y + self.height),
            (self.x, self.y + self.height),
        ]
    }

    /// Entry pose on a west→east lane: just before the zone's west edge.
    pub fn stop_line(&self, approach_y: f64, margin: f64) -> Pose2 {
        Pose2::new(self.x - margin, approach_y, 0.0)
    }
}

/// Minimal structured road description for the planner.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneMap {
    /// Drivable area polygons; an empty list means everywhere is drivable.
    #[serde(default)]
    pub drivable: Vec<Polygon>,
    #[serde(default)]
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub dividing_lines: Vec<DividingLine>,
    #[serde(default)]
    pub crossing_zones: Vec<CrossingZone>,
}

impl LaneMap {
    /// Checks structural invariants; every crossing zone must intersect a
    /// drivable polygon.
    pub fn validate(&self) -> Result<(), PlannerError> {
        for (i, zone) in self.crossing_zones.iter().enumerate() {
            if !self.drivable.is_empty() {
                let touches = zone.corners().iter().any(|c| self.is_drivable(*c))
                    || self
                        .drivable
                        .iter()
                        .any(|poly| poly.iter().any(|v| zone.contains(*v)))
                    || self.is_drivable((zone.x + zone.width / 2.0, zone.y + zone.height / 2.0));
                if !touches {
                    return Err(PlannerError::InvalidLaneMap(format!(
                        "crossing zone {i} does not intersect any drivable polygon"
                    )));
                }
            }
            if zone.width <= 0.0 || zone.height <= 0.0 {
                return Err(PlannerError::InvalidLaneMap(format!(
                    "crossing zone {i} has non-positive extent"
                )));
            }
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.centerline.len() < 2 {
                return Err(PlannerError::InvalidLaneMap(format!(
                    "lane {i} centerline needs at least two points"
                )));
            }
            if lane.speed_limit <= 0.0 {
                return Err(PlannerError::InvalidLaneMap(format!(
                    "lane {i} speed limit must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn is_drivable(&self, p: (f64, f64)) -> bool {
        if self.drivable.is_empty() {
            return true;
        }
        self.drivable.iter().any(|poly| point_in_polygon(p, poly))
    }

    /// Speed limit at a point: the nearest lane's limit, further capped by
    /// any crossing zone containing the point.
    pub fn speed_limit_at(&self, p: (f64, f64)) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for lane in &self.lanes {
            let d = polyline_distance(p, &lane.centerline);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, lane.speed_limit));
            }
        }
        let mut limit = best.map(|(_, l)| l);
        for zone in &self.crossing_zones {
            if zone.contains(p) {
                if let Some(zl) = zone.speed_limit {
                    limit = Some(limit.map_or(zl, |l: f64| l.min(zl)));
                }
            }
        }
        limit
    }
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) {
            let x_cross = (xj - xi) * (p.1 - yi) / (yj - yi) + xi;
            if p.0 < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let abx = b.0 - a.0;
    let aby = b.1 - a.1;
    let len_sq = abx * abx + aby * aby;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len_sq
    }
    .clamp(0.0, 1.0);
    let cx = a.0 + t * abx;
    let cy = a.1 + t * aby;
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

pub(crate) fn polyline_distance(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    line.windows(2)
        .map(|w| segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Ego vehicle geometry and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Maximum steering angle, rad.
    pub max_steer: f64,
    pub length: f64,
    pub width: f64,
    /// Configured speed cap, m/s.
    pub max_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            max_steer: 0.6,
            length: 4.5,
            width: 1.9,
            max_speed: 5.0, // 18 km/h
        }
    }
}

impl VehicleParams {
    pub fn max_curvature(&self) -> f64 {
        self.max_steer.tan() / self.wheelbase
    }

    /// Disc radius standing in for the vehicle footprint when bloating
    /// obstacle ellipses (mean of half-length and half-width).
    pub fn envelope_radius(&self) -> f64 {
        (self.length + self.width) / 4.0
    }
}

/// A moving local grid of traversal costs in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin: (f64, f64),
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major: `cost[j * width + i]`.
    pub cost: Vec<f64>,
    pub occupied_threshold: f64,
}

impl CostMap {
    pub fn new(
        origin: (f64, f64),
        resolution: f64,
        width: usize,
        height: usize,
        occupied_threshold: f64,
    ) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            origin,
            resolution,
            width,
            height,
            cost: vec![0.0; width * height],
            occupied_threshold,
        }
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin.0) / self.resolution).floor();
        let j = ((y - self.origin.1) / self.resolution).floor();
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.resolution,
            self.origin.1 + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Cost at a world point; `None` outside the map.
    pub fn cost_at(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_at(x, y).map(|(i, j)| self.cost[j * self.width + i])
    }

    /// Outside the map counts as occupied.
    pub fn is_occupied(&self, x: f64, y: f64) -> bool {
        match self.cost_at(x, y) {
            Some(c) => c >= self.occupied_threshold,
            None => true,
        }
    }

    pub fn raise_cost(&mut self, i: usize, j: usize, cost: f64) {
        let idx = j * self.width + i;
        if cost > self.cost[idx] {
            self.cost[idx] = cost.min(1.0);
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some()
    }

    /// Visits every cell a segment passes through (grid ray traversal).
    /// Returns `None` if either endpoint is outside the map, otherwise the
    /// maximum cell cost seen.
    pub fn max_cost_on_segment(&self, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
        let (mut i, mut j) = self.cell_at(a.0, a.1)?;
        let (i_end, j_end) = self.cell_at(b.0, b.1)?;
        let mut worst = self.cost[j * self.width + i];

        let dx = b.0 - a.0;
        let dy = b.1 - a.1;
        let step_i: isize = if dx > 0.0 { 1 } else { -1 };
        let step_j: isize = if dy > 0.0 { 1 } else { -1 };
        // Parameter t at which the segment crosses the next cell boundary.
        let mut t_max_x = if dx != 0.0 {
            let edge = self.origin.0
                + (i as f64 + if dx > 0.0 { 1.0 } else { 0.0 }) * self.resolution;
            (edge - a.0) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            let edge = self.origin.1
                + (j as f64 + if dy > 0.0 { 1.0 } else { 0.0 }) * self.resolution;
            (edge - a.1) / dy
        } else {
            f64::INFINITY
        };
        let t_delta_x = if dx != 0.0 { self.resolution / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { self.resolution / dy.abs() } else { f64::INFINITY };

        let max_steps = 2 * (self.width + self.height);
        for _ in 0..max_steps {
            if i == i_end && j == j_end {
                return Some(worst);
            }
            if t_max_x.min(t_max_y) > 1.0 {
                // Numerical corner: remaining crossings lie past the end.
                return Some(worst);
            }
            if t_max_x < t_max_y {
                t_max_x += t_delta_x;
                let ni = i as isize + step_i;
                if ni < 0 || ni >= self.width as isize {
                    return Some(worst);
                }
                i = ni as usize;
            } else {
                t_max_y += t_delta_y;
                let nj = j as isize + step_j;
                if nj < 0 || nj >= self.height as isize {
                    return Some(worst);
                }
                j = nj as usize;
            }
            worst = worst.max(self.cost[j * self.width + i]);
        }
        Some(worst)
    }

    /// Whether a segment leaves the map or passes through an occupied cell.
    pub fn segment_occupied(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        match self.max_cost_on_segment(a, b) {
            Some(c) => c >= self.occupied_threshold,
            None => true,
        }
    }
}

/// A planned path: poses with per-pose speeds. `feasible == false` marks
/// the planner's "stop" signal (no path to the goal exists).
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub poses: Vec<Pose2>,
    pub speeds: Vec<f64>,
    pub feasible: bool,
}

impl PlannedPath {
    pub fn infeasible() -> Self {
        Self {
            poses: Vec::new(),
            speeds: Vec::new(),
            feasible: false,
        }
    }

    pub fn length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt())
            .sum()
    }
}
