//! Unscented-transform propagation of pose uncertainty across frames.
//!
//! The receiver pose, sender pose, and object pose are concatenated into a
//! 9-dimensional augmented Gaussian with block-diagonal covariance. Sigma
//! points drawn from it are pushed through the deterministic frame change
//! and the transformed Gaussian is recovered from the weighted point cloud,
//! with circular handling of the heading component.

use super::{
    max_asymmetry, normalize_angle, trans_unchecked, GaussianPose2, GeometryError, Pose2,
    SYMMETRY_TOL,
};
use nalgebra::{Matrix3, SMatrix, SVector};

/// Augmented state dimension: receiver (3) + sender (3) + object (3).
pub const AUGMENTED_DIM: usize = 9;

/// Diagonal jitter added once if the covariance factorization fails.
const CHOLESKY_JITTER: f64 = 1e-12;

/// Scaling parameters of the sigma-point set.
///
/// `alpha` must lie in (0, 1] and `kappa` must be non-negative; `beta = 2`
/// is the usual choice for Gaussian priors. The defaults keep the zeroth
/// covariance weight positive for the 9-dimensional augmented state.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UtParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || self.kappa < 0.0 || !self.beta.is_finite() {
            return Err(GeometryError::InvalidUtParams {
                alpha: self.alpha,
                kappa: self.kappa,
            });
        }
        Ok(())
    }

    /// λ = α²(d + κ) − d for state dimension `d`.
    pub fn lambda(&self, d: usize) -> f64 {
        self.alpha * self.alpha * (d as f64 + self.kappa) - d as f64
    }
}

/// A sigma-point set for the 9-dimensional augmented state: 2·9 + 1 points
/// with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    pub points: Vec<SVector<f64, AUGMENTED_DIM>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
    pub params: UtParams,
}

/// Lower-triangular factor L with `L·Lᵀ = m` for a symmetric PSD matrix.
///
/// Unlike a strict Cholesky this tolerates semi-definite input: a pivot that
/// is zero (within rounding) produces a zero column, so exactly-known state
/// components factor cleanly. A significantly negative pivot is an error.
pub(crate) fn psd_cholesky<const D: usize>(
    m: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>, f64> {
    let scale = m.diagonal().amax().max(1.0);
    let neg_tol = 1e-12 * scale;
    let mut l = SMatrix::<f64, D, D>::zeros();
    for j in 0..D {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > neg_tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..D {
                let mut v = m[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / ljj;
            }
        } else if d >= -neg_tol {
            // Semi-definite direction: zero column.
        } else {
            return Err(d);
        }
    }
    Ok(l)
}

fn factor_with_jitter<const D: usize>(
    m: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>, GeometryError> {
    match psd_cholesky(m) {
        Ok(l) => Ok(l),
        Err(_) => {
            let jittered = m + SMatrix::<f64, D, D>::identity() * CHOLESKY_JITTER;
            psd_cholesky(&jittered).map_err(GeometryError::FactorizationFailed)
        }
    }
}

/// Builds the sigma-point set for a mean and covariance of the augmented
/// state, using a triangular factorization of `(d + λ)·cov`.
pub fn sigma_points(
    mean: &SVector<f64, AUGMENTED_DIM>,
    cov: &SMatrix<f64, AUGMENTED_DIM, AUGMENTED_DIM>,
    params: UtParams,
) -> Result<SigmaPointSet, GeometryError> {
    params.validate()?;
    if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("sigma point input"));
    }
    let asym = max_asymmetry(cov);
    if asym > SYMMETRY_TOL {
        return Err(GeometryError::NotSymmetric("augmented covariance", asym));
    }

    let d = AUGMENTED_DIM;
    let lambda = params.lambda(d);
    let scale = d as f64 + lambda; // = α²(d + κ), positive for valid params
    let l = factor_with_jitter(&(cov * scale))?;

    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(*mean);
    for i in 0..d {
        points.push(mean + l.column(i));
    }
    for i in 0..d {
        points.push(mean - l.column(i));
    }

    let w0_m = lambda / scale;
    let w0_c = w0_m + (1.0 - params.alpha * params.alpha + params.beta);
    let wi = 1.0 / (2.0 * scale);
    let mut mean_weights = vec![wi; 2 * d + 1];
    let mut cov_weights = vec![wi; 2 * d + 1];
    mean_weights[0] = w0_m;
    cov_weights[0] = w0_c;

    Ok(SigmaPointSet {
        points,
        mean_weights,
        cov_weights,
        params,
    })
}

/// Transforms a Gaussian object estimate from the sender frame into the
/// receiver frame, propagating the uncertainty of all three estimates.
///
/// The output heading mean is the weighted circular mean of the transformed
/// sigma headings and covariance residuals are wrapped to (−π, π], so the
/// result is well behaved near the ±π seam.
pub fn transform_with_uncertainty(
    receiver: &GaussianPose2,
    sender: &GaussianPose2,
    object_in_sender: &GaussianPose2,
    params: UtParams,
) -> Result<GaussianPose2, GeometryError> {
    let mut mean = SVector::<f64, AUGMENTED_DIM>::zeros();
    for (offset, g) in [(0, receiver), (3, sender), (6, object_in_sender)] {
        let p = g.mean();
        mean[offset] = p.x;
        mean[offset + 1] = p.y;
        mean[offset + 2] = p.theta;
    }
    let mut cov = SMatrix::<f64, AUGMENTED_DIM, AUGMENTED_DIM>::zeros();
    cov.fixed_view_mut::<3, 3>(0, 0).copy_from(receiver.cov());
    cov.fixed_view_mut::<3, 3>(3, 3).copy_from(sender.cov());
    cov.fixed_view_mut::<3, 3>(6, 6)
        .copy_from(object_in_sender.cov());

    let set = sigma_points(&mean, &cov, params)?;

    // Push every sigma point through the frame transformation.
    let transformed: Vec<Pose2> = set
        .points
        .iter()
        .map(|p| {
            trans_unchecked(
                Pose2::new(p[0], p[1], p[2]),
                Pose2::new(p[3], p[4], p[5]),
                Pose2::new(p[6], p[7], p[8]),
            )
        })
        .collect();

    // Recover the mean; heading via weighted sin/cos sums.
    let mut mx = 0.0;
    let mut my = 0.0;
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for (y, w) in transformed.iter().zip(&set.mean_weights) {
        mx += w * y.x;
        my += w * y.y;
        sin_sum += w * y.theta.sin();
        cos_sum += w * y.theta.cos();
    }
    let mtheta = sin_sum.atan2(cos_sum);

    // Covariance with wrapped heading residuals.
    let mut out = Matrix3::zeros();
    for (y, w) in transformed.iter().zip(&set.cov_weights) {
        let r = nalgebra::Vector3::new(y.x - mx, y.y - my, normalize_angle(y.theta - mtheta));
        out.syger(*w, &r, &r, 1.0);
    }
    out.fill_upper_triangle_with_lower_triangle();

    GaussianPose2::new(Pose2::new(mx, my, mtheta), out)
}
