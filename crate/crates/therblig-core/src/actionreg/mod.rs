//! Registration of therblig anchors to scene objects and transfer of a
//! demonstrated trajectory onto a new object layout.
//!
//! The geometric chain: segments name the Grasp/Use/Release events,
//! anchors pin them to end-effector poses and nearby objects, matching
//! pairs demo objects with their new-scene counterparts by descriptor,
//! per-object SE(2) transforms come from centroid/orientation deltas,
//! and the warp applies piecewise-interpolated transforms to the whole
//! path, pinned to identity at both trajectory ends.

mod anchors;
mod matching;
mod pca;
mod pipeline;
mod transform;
mod warp;

pub use anchors::{extract_anchors, ASSOCIATION_RADIUS};
pub use matching::{match_objects, MatchResult, ObjectMatch, RATIO_TEST_THRESHOLD};
pub use pca::{estimate_orientation_pca, OrientationEstimate};
pub use pipeline::{
    categorize, transfer, FailureCategory, Labeling, StageTrace, TransferError, TransferOutput,
    TransferTrace,
};
pub use transform::{compute_transforms, wrap_half_pi, SceneTransform};
pub use warp::{warp_trajectory, PlanAnchor, WarpPlan};

use crate::domain::Therblig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("calibration matrix is singular (|det| = {det:e})")]
    SingularCalibration { det: f64 },
    #[error("point set has {count} points, need at least 3 with positive spread")]
    DegeneratePoints { count: usize },
    #[error("descriptor lengths differ: {demo} vs {new}")]
    DescriptorLength { demo: usize, new: usize },
    #[error("action registration failure: {0}")]
    ActionRegistration(String),
    #[error("context matching failure: {0}")]
    ContextMatching(String),
    #[error("trajectory planning failure: {0}")]
    TrajectoryPlanning(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Planar pose: position plus yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Hand-eye calibration: a 3x3 homography from robot-frame planar
/// points to scene-frame points, with its inverse cached. Serializes as
/// the bare 3x3 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    h: [[f64; 3]; 3],
    h_inv: [[f64; 3]; 3],
}

impl Calibration {
    pub fn identity() -> Calibration {
        Calibration::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).expect("identity")
    }

    pub fn new(h: [[f64; 3]; 3]) -> Result<Calibration, RegError> {
        let det = det3(&h);
        if det.abs() <= 1e-9 {
            return Err(RegError::SingularCalibration { det });
        }
        Ok(Calibration {
            h,
            h_inv: invert3(&h, det),
        })
    }

    /// Planar rigid calibration: rotation plus offset.
    pub fn rigid(angle: f64, offset: [f64; 2]) -> Calibration {
        let (sin, cos) = angle.sin_cos();
        Calibration::new([
            [cos, -sin, offset[0]],
            [sin, cos, offset[1]],
            [0.0, 0.0, 1.0],
        ])
        .expect("rigid maps are invertible")
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    /// Robot frame to scene frame.
    pub fn to_scene(&self, p: [f64; 2]) -> [f64; 2] {
        apply_h(&self.h, p)
    }

    /// Scene frame back to robot frame.
    pub fn to_robot(&self, p: [f64; 2]) -> [f64; 2] {
        apply_h(&self.h_inv, p)
    }
}

// the inverse is rebuilt after deserialization
impl<'de> serde::de::Deserialize<'de> for Calibration {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::de::Deserializer<'de>,
    {
        let h = <[[f64; 3]; 3]>::deserialize(deserializer)?;
        Calibration::new(h).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Calibration {
    fn serialize<S>(&self, serializer: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
    {
        self.h.serialize(serializer)
    }
}

fn apply_h(h: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    let x = h[0][0] * p[0] + h[0][1] * p[1] + h[0][2];
    let y = h[1][0] * p[0] + h[1][1] * p[1] + h[1][2];
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    [x / w, y / w]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn invert3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let c = |r: usize, c_: usize| -> f64 {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (c1, c2) = ((c_ + 1) % 3, (c_ + 2) % 3);
        m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
    };
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            // adjugate transpose
            *v = c(j, i) / det;
        }
    }
    out
}

/// End-effector pose at a Grasp/Use/Release event, associated with a
/// scene object when one sits within the association radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub therblig: Therblig,
    pub timestep: usize,
    /// Robot-frame pose at the anchor timestep.
    pub ee_pose: Pose2,
    /// Scene-frame location the registration uses; starts as the
    /// calibrated end-effector point, correction policies may move it.
    pub registration_xy: [f64; 2],
    pub object_id: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_round_trip_is_exact() {
        let calib = Calibration::rigid(0.3, [0.1, -0.2]);
        let p = [0.42, -0.13];
        let out = calib.to_robot(calib.to_scene(p));
        assert!((out[0] - p[0]).abs() < 1e-9);
        assert!((out[1] - p[1]).abs() < 1e-9);
    }

    #[test]
    fn quarter_turn_rotates_coordinates() {
        let calib = Calibration::rigid(std::f64::consts::FRAC_PI_2, [0.0, 0.0]);
        let out = calib.to_scene([1.0, 0.0]);
        assert!((out[0] - 0.0).abs() < 1e-12);
        assert!((out[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let err = Calibration::new([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(err, Err(RegError::SingularCalibration { .. })));
    }

    #[test]
    fn projective_calibration_inverts_too() {
        let calib = Calibration::new([[1.1, 0.02, 0.05], [-0.03, 0.97, -0.1], [0.01, -0.02, 1.0]])
            .unwrap();
        let p = [0.3, 0.25];
        let out = calib.to_robot(calib.to_scene(p));
        assert!((out[0] - p[0]).abs() < 1e-9 && (out[1] - p[1]).abs() < 1e-9);
    }

    #[test]
    fn serde_rebuilds_inverse() {
        let calib = Calibration::rigid(0.7, [0.3, 0.4]);
        let json = serde_json::to_string(&calib).unwrap();
        let back: Calibration = serde_json::from_str(&json).unwrap();
        let p = [0.6, -0.3];
        let there = back.to_scene(p);
        let home = back.to_robot(there);
        assert!((home[0] - p[0]).abs() < 1e-9 && (home[1] - p[1]).abs() < 1e-9);
    }
}
