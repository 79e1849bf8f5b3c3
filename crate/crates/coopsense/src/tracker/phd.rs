//! The GM-PHD recursion: constant-velocity prediction, measurement update
//! with measurement-driven birth, mixture housekeeping, and track
//! extraction.

use super::{
    GaussianComponent, Measurement, TargetState, Track, TrackerError, TrackerParams,
};
use crate::cpm::ObjectClass;
use crate::geometry::{normalize_angle, GaussianPose2};
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

/// Index of the heading row in the state vector.
const IDX_HEADING: usize = 2;
const IDX_SPEED: usize = 3;

/// One constant-velocity step of a (x, y, heading, speed) Gaussian:
/// linearized covariance propagation plus heading/speed diffusion.
pub(crate) fn cv_propagate(
    mean: &Vector4<f64>,
    cov: &Matrix4<f64>,
    dt: f64,
    noise_heading: f64,
    noise_speed: f64,
) -> (Vector4<f64>, Matrix4<f64>) {
    let theta = mean[IDX_HEADING];
    let v = mean[IDX_SPEED];
    let (s, cos) = theta.sin_cos();
    let new_mean = Vector4::new(
        mean[0] + v * cos * dt,
        mean[1] + v * s * dt,
        normalize_angle(theta),
        v,
    );
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, -v * s * dt,   cos * dt,
        0.0, 1.0,  v * cos * dt, s * dt,
        0.0, 0.0,  1.0,          0.0,
        0.0, 0.0,  0.0,          1.0,
    );
    let mut new_cov = f * cov * f.transpose();
    new_cov[(IDX_HEADING, IDX_HEADING)] += noise_heading * noise_heading * dt;
    new_cov[(IDX_SPEED, IDX_SPEED)] += noise_speed * noise_speed * dt;
    (new_mean, (new_cov + new_cov.transpose()) * 0.5)
}

/// Constant-velocity prediction over `dt` seconds.
///
/// Means advance along the heading, covariances are propagated through the
/// motion Jacobian and inflated by heading/speed diffusion, and weights are
/// scaled by the survival probability. `dt == 0` is a no-op.
pub fn predict(
    components: &[GaussianComponent],
    dt: f64,
    params: &TrackerParams,
) -> Vec<GaussianComponent> {
    assert!(dt >= 0.0, "predict requires dt >= 0");
    if dt == 0.0 {
        return components.to_vec();
    }
    components
        .iter()
        .map(|c| {
            let (mean, cov) = cv_propagate(
                &c.mean,
                &c.cov,
                dt,
                params.process_noise_heading,
                params.process_noise_speed,
            );
            GaussianComponent {
                weight: params.p_survival * c.weight,
                mean,
                cov,
                track_id: c.track_id,
            }
        })
        .collect()
}

/// Observed channels of one measurement: row indices into the state vector
/// plus the stacked measurement vector and noise.
struct Observation {
    rows: Vec<usize>,
    z: DVector<f64>,
    r: DMatrix<f64>,
}

impl Observation {
    fn build(m: &Measurement) -> Result<Self, TrackerError> {
        if !m.position.0.is_finite() || !m.position.1.is_finite() {
            return Err(TrackerError::NonFinite("position"));
        }
        if m.position_cov.iter().any(|v| !v.is_finite()) {
            return Err(TrackerError::NonFinite("position covariance"));
        }
        let mut rows = vec![0usize, 1];
        let mut z = vec![m.position.0, m.position.1];
        if m.heading_var.is_finite() {
            if !m.heading.is_finite() {
                return Err(TrackerError::NonFinite("heading"));
            }
            rows.push(IDX_HEADING);
            z.push(m.heading);
        }
        if m.speed_var.is_finite() {
            if !m.speed.is_finite() {
                return Err(TrackerError::NonFinite("speed"));
            }
            rows.push(IDX_SPEED);
            z.push(m.speed);
        }
        let n = rows.len();
        let mut r = DMatrix::zeros(n, n);
        r.view_mut((0, 0), (2, 2)).copy_from(&m.position_cov);
        for (i, &row) in rows.iter().enumerate().skip(2) {
            r[(i, i)] = if row == IDX_HEADING {
                m.heading_var
            } else {
                m.speed_var
            };
        }
        Ok(Self {
            rows,
            z: DVector::from_vec(z),
            r,
        })
    }

    /// Innovation z − Hx with the heading row wrapped.
    fn innovation(&self, mean: &Vector4<f64>) -> DVector<f64> {
        let mut nu = DVector::zeros(self.rows.len());
        for (i, &row) in self.rows.iter().enumerate() {
            let d = self.z[i] - mean[row];
            nu[i] = if row == IDX_HEADING { normalize_angle(d) } else { d };
        }
        nu
    }

    fn project_cov(&self, cov: &Matrix4<f64>) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = cov[(self.rows[i], self.rows[j])];
            }
        }
        s
    }

    /// Cross covariance P·Hᵀ (4×n).
    fn cross_cov(&self, cov: &Matrix4<f64>) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut pht = DMatrix::zeros(4, n);
        for i in 0..4 {
            for j in 0..n {
                pht[(i, j)] = cov[(i, self.rows[j])];
            }
        }
        pht
    }
}

/// Gaussian density of an innovation given its covariance Cholesky factor.
fn gaussian_likelihood(nu: &DVector<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let n = nu.len() as f64;
    let solved = chol.solve(nu);
    let maha = nu.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    (-0.5 * (maha + log_det + n * (2.0 * std::f64::consts::PI).ln())).exp()
}

/// GM-PHD measurement update with measurement-driven birth.
///
/// Every prior component contributes a missed-detection copy scaled by
/// (1 − p_detect) plus one Kalman-updated copy per measurement, normalized
/// against clutter density. A measurement whose posterior mass stays below
/// one half is treated as unassociated and spawns a birth component.
pub fn update(
    components: &[GaussianComponent],
    measurements: &[Measurement],
    class: ObjectClass,
    params: &TrackerParams,
) -> Result<Vec<GaussianComponent>, TrackerError> {
    for m in measurements {
        if m.class != class {
            return Err(TrackerError::ClassMismatch {
                expected: class,
                got: m.class,
            });
        }
    }

    let mut out = Vec::with_capacity(components.len() * (1 + measurements.len()));

    // Missed-detection terms.
    for c in components {
        out.push(GaussianComponent {
            weight: (1.0 - params.p_detect) * c.weight,
            ..c.clone()
        });
    }

    for m in measurements {
        let obs = Observation::build(m)?;
        let mut updated = Vec::with_capacity(components.len());
        let mut mass = 0.0;
        for c in components {
            let mut s = obs.project_cov(&c.cov) + &obs.r;
            // Tiny diagonal floor keeps S invertible when both the prior
            // and the measurement are exact in some channel.
            for i in 0..s.nrows() {
                s[(i, i)] += 1e-12;
            }
            let chol = match nalgebra::Cholesky::new(s.clone()) {
                Some(ch) => ch,
                None => continue, // numerically degenerate pairing
            };
            let nu = obs.innovation(&c.mean);
            let likelihood = gaussian_likelihood(&nu, &chol);
            let pht = obs.cross_cov(&c.cov);
            // K = P Hᵀ S⁻¹ via S Kᵀ = (P Hᵀ)ᵀ.
            let k = chol.solve(&pht.transpose()).transpose();
            let mut mean = c.mean + Vector4::from_iterator((&k * &nu).iter().copied());
            mean[IDX_HEADING] = normalize_angle(mean[IDX_HEADING]);
            // Joseph form keeps the covariance PSD.
            let mut ikh: Matrix4<f64> = Matrix4::identity();
            for (j, &row) in obs.rows.iter().enumerate() {
                for i in 0..4 {
                    ikh[(i, row)] -= k[(i, j)];
                }
            }
            let krk: Matrix4<f64> = {
                let krkt = &k * &obs.r * k.transpose();
                Matrix4::from_fn(|i, j| krkt[(i, j)])
            };
            let cov: Matrix4<f64> = ikh * c.cov * ikh.transpose() + krk;
            let cov = (cov + cov.transpose()) * 0.5;
            updated.push(GaussianComponent {
                weight: params.p_detect * c.weight * likelihood,
                mean,
                cov,
                track_id: c.track_id,
            });
            mass += params.p_detect * c.weight * likelihood;
        }
        let denom = params.clutter_density + mass;
        let mut associated = 0.0;
        if denom > 0.0 {
            for mut c in updated {
                c.weight /= denom;
                associated += c.weight;
                out.push(c);
            }
        }

        // Measurement-driven birth for measurements no existing component
        // dominantly explains.
        if associated < 0.5 {
            let heading = if m.heading_var.is_finite() { m.heading } else { 0.0 };
            let heading_var = if m.heading_var.is_finite() {
                m.heading_var
            } else {
                // Heading unknown: variance of a uniform angle.
                std::f64::consts::PI * std::f64::consts::PI / 3.0
            };
            let speed = if m.speed_var.is_finite() { m.speed } else { 0.0 };
            let speed_var = if m.speed_var.is_finite() {
                m.speed_var
            } else {
                params.birth_speed_std * params.birth_speed_std
            };
            let mut cov = Matrix4::zeros();
            cov.view_mut((0, 0), (2, 2)).copy_from(&m.position_cov);
            cov[(IDX_HEADING, IDX_HEADING)] = heading_var;
            cov[(IDX_SPEED, IDX_SPEED)] = speed_var;
            out.push(GaussianComponent {
                weight: params.birth_weight,
                mean: Vector4::new(m.position.0, m.position.1, normalize_angle(heading), speed),
                cov,
                track_id: None,
            });
        }
    }

    Ok(out)
}

fn wrapped_residual(mean: &Vector4<f64>, reference: &Vector4<f64>) -> Vector4<f64> {
    let mut r = mean - reference;
    r[IDX_HEADING] = normalize_angle(r[IDX_HEADING]);
    r
}

/// Drops negligible components, merges near-coincident ones (the merged
/// component inherits the track id of its largest-weight member), and caps
/// the mixture size keeping the largest weights. Output is sorted by
/// descending weight.
pub fn prune_and_merge(
    components: Vec<GaussianComponent>,
    params: &TrackerParams,
) -> Vec<GaussianComponent> {
    let mut alive: Vec<GaussianComponent> = components
        .into_iter()
        .filter(|c| c.weight >= params.prune_threshold && c.weight.is_finite())
        .collect();
    // Deterministic processing order: by descending weight, stable.
    alive.sort_by(|a, b| b.weight.total_cmp(&a.weight));

    let threshold_sq = params.merge_distance * params.merge_distance;
    let mut merged: Vec<GaussianComponent> = Vec::with_capacity(alive.len());
    let mut used = vec![false; alive.len()];
    for i in 0..alive.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut cluster = vec![i];
        for j in (i + 1)..alive.len() {
            if used[j] {
                continue;
            }
            let d = wrapped_residual(&alive[j].mean, &alive[i].mean);
            let dist_sq = match alive[j].cov.try_inverse() {
                Some(inv) => (d.transpose() * inv * d)[(0, 0)],
                None => f64::INFINITY,
            };
            if dist_sq <= threshold_sq {
                used[j] = true;
                cluster.push(j);
            }
        }

        let total_w: f64 = cluster.iter().map(|&k| alive[k].weight).sum();
        let dominant = cluster[0]; // largest weight: list is weight-sorted
        let ref_mean = alive[dominant].mean;
        let mut mean = Vector4::zeros();
        for &k in &cluster {
            mean += wrapped_residual(&alive[k].mean, &ref_mean) * (alive[k].weight / total_w);
        }
        let mut mean = ref_mean + mean;
        mean[IDX_HEADING] = normalize_angle(mean[IDX_HEADING]);
        let mut cov = Matrix4::zeros();
        for &k in &cluster {
            let d = wrapped_residual(&alive[k].mean, &mean);
            cov += (alive[k].cov + d * d.transpose()) * (alive[k].weight / total_w);
        }
        merged.push(GaussianComponent {
            weight: total_w,
            mean,
            cov: (cov + cov.transpose()) * 0.5,
            track_id: alive[dominant].track_id,
        });
    }

    merged.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    merged.truncate(params.max_components);
    merged
}

/// Confirms components at or above the confirmation weight as tracks.
///
/// A confirmed component without an identity receives the next fresh id
/// (ids are never reused within a tracker). When several components carry
/// the same inherited id, only the heaviest reports a track.
pub fn extract_tracks(
    components: &mut [GaussianComponent],
    next_track_id: &mut u64,
    params: &TrackerParams,
) -> Vec<Track> {
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| components[b].weight.total_cmp(&components[a].weight));

    let mut seen = std::collections::HashSet::new();
    let mut tracks = Vec::new();
    for idx in order {
        let c = &mut components[idx];
        if c.weight < params.confirm_weight {
            continue;
        }
        let id = match c.track_id {
            Some(id) => id,
            None => {
                let id = *next_track_id;
                *next_track_id += 1;
                c.track_id = Some(id);
                id
            }
        };
        if seen.insert(id) {
            tracks.push(Track {
                track_id: id,
                state: TargetState::from_mean(&c.mean),
                cov: c.cov,
            });
        }
    }
    tracks.sort_by_key(|t| t.track_id);
    tracks
}

/// Removes measurements within the closed exclusion ball around the ego
/// position, so a station does not track itself or its driver.
pub fn self_filter(
    measurements: &[Measurement],
    ego_pose: &GaussianPose2,
    exclusion_radius: f64,
) -> Vec<Measurement> {
    assert!(exclusion_radius > 0.0, "exclusion radius must be positive");
    let ego = ego_pose.mean();
    measurements
        .iter()
        .filter(|m| {
            let dx = m.position.0 - ego.x;
            let dy = m.position.1 - ego.y;
            (dx * dx + dy * dy).sqrt() > exclusion_radius
        })
        .copied()
        .collect()
}
