//! Principal-axis orientation of a planar point set.

use super::RegError;

/// Ratio of principal to minor eigenvalue below which the orientation
/// is reported as ill-defined.
const ISOTROPY_RATIO: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    /// Principal-axis angle in (-pi/2, pi/2]; 0 when ill-defined.
    pub angle: f64,
    /// False when the covariance is too isotropic to orient.
    pub well_defined: bool,
}

/// Angle of the principal eigenvector of the centered covariance.
///
/// For a 2x2 covariance the principal angle has the closed form
/// `0.5 * atan2(2*Cxy, Cxx - Cyy)`, which already lands in
/// (-pi/2, pi/2].
pub fn estimate_orientation_pca(points: &[[f64; 2]]) -> Result<OrientationEstimate, RegError> {
    if points.len() < 3 {
        return Err(RegError::DegeneratePoints { count: points.len() });
    }
    let n = points.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points {
        cx += p[0];
        cy += p[1];
    }
    cx /= n;
    cy /= n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    cxx /= n;
    cyy /= n;
    cxy /= n;
    if cxx + cyy <= 0.0 {
        return Err(RegError::DegeneratePoints { count: points.len() });
    }

    let mean = 0.5 * (cxx + cyy);
    let half_diff = 0.5 * (cxx - cyy);
    let radius = (half_diff * half_diff + cxy * cxy).sqrt();
    let lambda_major = mean + radius;
    let lambda_minor = (mean - radius).max(0.0);
    if lambda_major < ISOTROPY_RATIO * lambda_minor {
        return Ok(OrientationEstimate {
            angle: 0.0,
            well_defined: false,
        });
    }
    Ok(OrientationEstimate {
        angle: 0.5 * (2.0 * cxy).atan2(cxx - cyy),
        well_defined: true,
    })
}
