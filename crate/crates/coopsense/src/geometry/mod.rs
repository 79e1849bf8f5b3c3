//! SE(2) pose algebra and frame transformation of perceived objects.
//!
//! Poses live in 2D with a heading angle; perceived-object and station pose
//! estimates are Gaussians over (x, y, θ). The deterministic frame change is
//! [`trans`]; the uncertainty-aware version is
//! [`transform_with_uncertainty`], which pushes the joint (receiver, sender,
//! object) estimate through `trans` with an unscented transform.

mod ellipse;
mod ut;

pub use ellipse::{chi_square_quantile_2dof, confidence_ellipse, ConfidenceEllipse};
pub use ut::{sigma_points, transform_with_uncertainty, SigmaPointSet, UtParams};
pub(crate) use ut::psd_cholesky;

use nalgebra::{Matrix2, Matrix3, Vector2};
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from geometric operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} is not symmetric (max asymmetry {1:.3e})")]
    NotSymmetric(&'static str, f64),
    #[error("{0} is not positive semi-definite (eigenvalue {1:.3e})")]
    NotPositiveSemiDefinite(&'static str, f64),
    #[error("UT parameters out of range: alpha must be in (0, 1], kappa >= 0 (got alpha={alpha}, kappa={kappa})")]
    InvalidUtParams { alpha: f64, kappa: f64 },
    #[error("covariance factorization failed even after diagonal jitter (pivot {0:.3e})")]
    FactorizationFailed(f64),
    #[error("probability mass must be in (0, 1), got {0}")]
    InvalidProbabilityMass(f64),
}

/// Absolute tolerance for symmetry checks on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalues above this (negative) floor still count as PSD.
pub const PSD_TOL: f64 = -1e-9;

/// Wraps an angle to (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = angle % two_pi;
    if a <= -PI {
        a += two_pi;
    } else if a > PI {
        a -= two_pi;
    }
    a
}

/// An SE(2) pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in (−π, π] by every operation that produces a pose.
    pub theta: f64,
}

impl Pose2 {
    /// New pose with the heading normalized to (−π, π].
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// A Gaussian estimate of an SE(2) pose.
///
/// The covariance is validated at construction: symmetric within
/// [`SYMMETRY_TOL`] and positive semi-definite within [`PSD_TOL`]. Units are
/// m² / m·rad / rad² in the obvious blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPose2 {
    mean: Pose2,
    cov: Matrix3<f64>,
}

impl GaussianPose2 {
    /// Validates and wraps a mean pose with its 3×3 covariance.
    pub fn new(mean: Pose2, cov: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !mean.is_finite() || cov.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("gaussian pose"));
        }
        let max_asym = max_asymmetry(&cov);
        if max_asym > SYMMETRY_TOL {
            return Err(GeometryError::NotSymmetric("pose covariance", max_asym));
        }
        // Work on the symmetrized matrix so eigenvalues are real.
        let sym = (cov + cov.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < PSD_TOL {
            return Err(GeometryError::NotPositiveSemiDefinite(
                "pose covariance",
                min_eig,
            ));
        }
        Ok(Self { mean, cov: sym })
    }

    /// A pose known exactly (zero covariance).
    pub fn exact(mean: Pose2) -> Self {
        Self {
            mean,
            cov: Matrix3::zeros(),
        }
    }

    /// Diagonal covariance from per-axis standard deviations.
    pub fn from_std(mean: Pose2, sigma_x: f64, sigma_y: f64, sigma_theta: f64) -> Self {
        Self {
            mean,
            cov: Matrix3::from_diagonal(&nalgebra::Vector3::new(
                sigma_x * sigma_x,
                sigma_y * sigma_y,
                sigma_theta * sigma_theta,
            )),
        }
    }

    /// Covariance from wire-style parameters: position stds with a
    /// correlation coefficient plus an independent heading std.
    pub fn from_wire_std(
        mean: Pose2,
        sigma_x: f64,
        sigma_y: f64,
        rho_xy: f64,
        sigma_theta: f64,
    ) -> Self {
        let cxy = rho_xy * sigma_x * sigma_y;
        let cov = Matrix3::new(
            sigma_x * sigma_x,
            cxy,
            0.0,
            cxy,
            sigma_y * sigma_y,
            0.0,
            0.0,
            0.0,
            sigma_theta * sigma_theta,
        );
        Self { mean, cov }
    }

    pub fn mean(&self) -> Pose2 {
        self.mean
    }

    pub fn cov(&self) -> &Matrix3<f64> {
        &self.cov
    }

    /// The 2×2 position block of the covariance.
    pub fn position_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

pub(crate) fn max_asymmetry<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> f64 {
    let mut max = 0.0f64;
    for i in 0..D {
        for j in (i + 1)..D {
            max = max.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    max
}

/// Homogeneous transformation matrix of a pose:
/// `[[cosθ, −sinθ, x], [sinθ, cosθ, y], [0, 0, 1]]`.
pub fn homogeneous(pose: Pose2) -> Result<Matrix3<f64>, GeometryError> {
    if !pose.is_finite() {
        return Err(GeometryError::NonFinite("pose"));
    }
    let (s, c) = pose.theta.sin_cos();
    Ok(Matrix3::new(c, -s, pose.x, s, c, pose.y, 0.0, 0.0, 1.0))
}

/// Transforms an object pose expressed in the sender's frame into the
/// receiver's frame, both station poses being given in the global frame.
///
/// Position follows `T(receiver)⁻¹ · T(sender) · [x, y, 1]ᵀ`; the heading is
/// `θ_obj + θ_sender − θ_receiver`, normalized.
pub fn trans(receiver: Pose2, sender: Pose2, object_in_sender: Pose2) -> Result<Pose2, GeometryError> {
    if !receiver.is_finite() || !sender.is_finite() || !object_in_sender.is_finite() {
        return Err(GeometryError::NonFinite("pose"));
    }
    Ok(trans_unchecked(receiver, sender, object_in_sender))
}

/// `trans` without the finiteness check, for hot loops over sigma points
/// and Monte-Carlo samples.
pub(crate) fn trans_unchecked(receiver: Pose2, sender: Pose2, object: Pose2) -> Pose2 {
    let (ss, cs) = sender.theta.sin_cos();
    // Object into the global frame.
    let gx = cs * object.x - ss * object.y + sender.x;
    let gy = ss * object.x + cs * object.y + sender.y;
    // Global into the receiver frame.
    let (sr, cr) = receiver.theta.sin_cos();
    let dx = gx - receiver.x;
    let dy = gy - receiver.y;
    Pose2::new(
        cr * dx + sr * dy,
        -sr * dx + cr * dy,
        object.theta + sender.theta - receiver.theta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_angle_bounds() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert_eq!(normalize_angle(PI), PI);
        // −π maps to the closed end +π.
        assert_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-2.5 * PI), -0.5 * PI, epsilon = 1e-12);
    }

    #[test]
    fn homogeneous_identity() {
        let m = homogeneous(Pose2::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn homogeneous_translation_only() {
        let m = homogeneous(Pose2::new(3.0, -2.0, 0.0)).unwrap();
        assert_eq!(m.column(2).clone_owned(), nalgebra::Vector3::new(3.0, -2.0, 1.0));
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn homogeneous_quarter_turn() {
        // Hand-computed: cos(π/2)=0, sin(π/2)=1.
        let m = homogeneous(Pose2::new(0.0, 0.0, PI / 2.0)).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 1)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn homogeneous_rejects_non_finite() {
        assert!(homogeneous(Pose2 { x: f64::NAN, y: 0.0, theta: 0.0 }).is_err());
    }

    #[test]
    fn trans_identity_frames() {
        let p = trans(
            Pose2::new(0.0, 0.0, 0.0),
            Pose2::new(0.0, 0.0, 0.0),
            Pose2::new(5.0, 1.0, 0.3),
        )
        .unwrap();
        assert_eq!(p, Pose2::new(5.0, 1.0, 0.3));
    }

    #[test]
    fn trans_offset_stations() {
        // Hand-computed homogeneous product: object 10 m ahead of a sender
        // at (100, 100) seen from a receiver at (0, 75), all heading east.
        let p = trans(
            Pose2::new(0.0, 75.0, 0.0),
            Pose2::new(100.0, 100.0, 0.0),
            Pose2::new(10.0, 0.0, 0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(p.x, 110.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trans_quarter_turn_sender() {
        // Hand-computed 90° rotation.
        let p = trans(
            Pose2::new(0.0, 0.0, 0.0),
            Pose2::new(0.0, 0.0, PI / 2.0),
            Pose2::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trans_matches_homogeneous_product() {
        let r = Pose2::new(3.0, -1.0, 0.7);
        let s = Pose2::new(-2.0, 4.0, -1.9);
        let o = Pose2::new(5.0, 2.0, 0.4);
        let got = trans(r, s, o).unwrap();
        let m = homogeneous(r).unwrap().try_inverse().unwrap() * homogeneous(s).unwrap();
        let v = m * nalgebra::Vector3::new(o.x, o.y, 1.0);
        assert_abs_diff_eq!(got.x, v[0], epsilon = 1e-12);
        assert_abs_diff_eq!(got.y, v[1], epsilon = 1e-12);
    }

    #[test]
    fn gaussian_pose_rejects_asymmetric_cov() {
        let mut cov = Matrix3::identity();
        cov[(0, 1)] = 0.5;
        assert!(matches!(
            GaussianPose2::new(Pose2::new(0.0, 0.0, 0.0), cov),
            Err(GeometryError::NotSymmetric(_, _))
        ));
    }

    #[test]
    fn gaussian_pose_rejects_indefinite_cov() {
        let cov = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -0.5, 1.0));
        assert!(matches!(
            GaussianPose2::new(Pose2::new(0.0, 0.0, 0.0), cov),
            Err(GeometryError::NotPositiveSemiDefinite(_, _))
        ));
    }

    proptest! {
        #[test]
        fn trans_with_receiver_equal_sender_is_identity(
            sx in -100.0f64..100.0, sy in -100.0f64..100.0, st in -3.1f64..3.1,
            ox in -50.0f64..50.0, oy in -50.0f64..50.0, ot in -3.1f64..3.1,
        ) {
            let station = Pose2::new(sx, sy, st);
            let object = Pose2::new(ox, oy, ot);
            let back = trans(station, station, object).unwrap();
            prop_assert!((back.x - object.x).abs() < 1e-12 * (1.0 + ox.abs() + sx.abs() + sy.abs()));
            prop_assert!((back.y - object.y).abs() < 1e-12 * (1.0 + oy.abs() + sx.abs() + sy.abs()));
            prop_assert!((normalize_angle(back.theta - object.theta)).abs() < 1e-12);
        }

        #[test]
        fn trans_output_heading_normalized(
            rt in -10.0f64..10.0, st in -10.0f64..10.0, ot in -10.0f64..10.0,
        ) {
            let p = trans(
                Pose2::new(0.0, 0.0, rt),
                Pose2::new(1.0, 1.0, st),
                Pose2::new(2.0, 0.0, ot),
            ).unwrap();
            prop_assert!(p.theta > -PI && p.theta <= PI);
        }
    }
}
