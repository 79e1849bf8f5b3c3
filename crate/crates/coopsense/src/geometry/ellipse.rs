//! Confidence ellipses for 2D position covariances.

use super::{max_asymmetry, GeometryError, PSD_TOL, SYMMETRY_TOL};
use nalgebra::Matrix2;

/// A level set of a 2D Gaussian containing `probability_mass` of the
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceEllipse {
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis direction in radians, in (−π/2, π/2].
    pub orientation: f64,
    pub probability_mass: f64,
}

impl ConfidenceEllipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_major * self.semi_minor
    }
}

/// Chi-square quantile with 2 degrees of freedom (closed form):
/// `q = −2·ln(1 − mass)`.
pub fn chi_square_quantile_2dof(mass: f64) -> Result<f64, GeometryError> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(GeometryError::InvalidProbabilityMass(mass));
    }
    Ok(-2.0 * (1.0 - mass).ln())
}

/// Builds the confidence ellipse of a 2×2 position covariance.
///
/// Semi-axes are `sqrt(q·λ)` for the eigenvalues λ of the covariance, with
/// `q` the chi-square(2) quantile at `probability_mass`.
pub fn confidence_ellipse(
    position_cov: &Matrix2<f64>,
    center: (f64, f64),
    probability_mass: f64,
) -> Result<ConfidenceEllipse, GeometryError> {
    let q = chi_square_quantile_2dof(probability_mass)?;
    if position_cov.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("position covariance"));
    }
    let asym = max_asymmetry(position_cov);
    if asym > SYMMETRY_TOL {
        return Err(GeometryError::NotSymmetric("position covariance", asym));
    }

    // Closed-form symmetric 2×2 eigendecomposition.
    let a = position_cov[(0, 0)];
    let c = position_cov[(1, 1)];
    let b = 0.5 * (position_cov[(0, 1)] + position_cov[(1, 0)]);
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lam_max = half_tr + disc;
    let lam_min = half_tr - disc;
    if lam_min < PSD_TOL {
        return Err(GeometryError::NotPositiveSemiDefinite(
            "position covariance",
            lam_min,
        ));
    }

    // Major-axis angle; atan2(2b, a−c)/2 lands in (−π/2, π/2].
    let orientation = if b == 0.0 && a >= c {
        0.0
    } else {
        0.5 * (2.0 * b).atan2(a - c)
    };

    Ok(ConfidenceEllipse {
        center,
        semi_major: (q * lam_max.max(0.0)).sqrt(),
        semi_minor: (q * lam_min.max(0.0)).sqrt(),
        orientation,
        probability_mass,
    })
}
