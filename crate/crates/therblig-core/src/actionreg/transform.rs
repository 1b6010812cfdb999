//! Per-anchor SE(2) transforms from matched object geometry.

use super::matching::MatchResult;
use super::pca::estimate_orientation_pca;
use super::{Anchor, RegError};
use crate::domain::SceneDescriptor;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wrap an angle into (-pi/2, pi/2]; principal-axis orientations carry a
/// pi ambiguity, so rotation deltas live on the half circle.
pub fn wrap_half_pi(angle: f64) -> f64 {
    let mut a = angle;
    while a > PI / 2.0 {
        a -= PI;
    }
    while a <= -PI / 2.0 {
        a += PI;
    }
    a
}

/// Rigid planar transform `p -> R(rotation) * p + translation`.
///
/// `translation` is `centroid_new - R * centroid_demo`, so the demo
/// object's centroid maps exactly onto the new one; `pivot` records the
/// demo centroid the rotation acts about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneTransform {
    pub rotation: f64,
    pub translation: [f64; 2],
    pub pivot: [f64; 2],
}

impl SceneTransform {
    pub fn identity() -> SceneTransform {
        SceneTransform {
            rotation: 0.0,
            translation: [0.0, 0.0],
            pivot: [0.0, 0.0],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.translation == [0.0, 0.0]
    }

    /// Rotation about the origin followed by the translation.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        [
            cos * p[0] - sin * p[1] + self.translation[0],
            sin * p[0] + cos * p[1] + self.translation[1],
        ]
    }

    /// From matched object geometry: rotation is the orientation delta,
    /// translation carries the demo centroid onto the new one.
    pub fn between(
        demo_centroid: [f64; 2],
        demo_angle: f64,
        new_centroid: [f64; 2],
        new_angle: f64,
    ) -> SceneTransform {
        let rotation = wrap_half_pi(new_angle - demo_angle);
        let (sin, cos) = rotation.sin_cos();
        SceneTransform {
            rotation,
            translation: [
                new_centroid[0] - (cos * demo_centroid[0] - sin * demo_centroid[1]),
                new_centroid[1] - (sin * demo_centroid[0] + cos * demo_centroid[1]),
            ],
            pivot: demo_centroid,
        }
    }

    /// Compose with a pre-shift: the returned transform maps `p` the way
    /// `self` maps `p + shift`. Used when a correction policy moves an
    /// anchor's registration point off the recorded trajectory.
    pub fn pre_translated(&self, shift: [f64; 2]) -> SceneTransform {
        let (sin, cos) = self.rotation.sin_cos();
        SceneTransform {
            rotation: self.rotation,
            translation: [
                self.translation[0] + cos * shift[0] - sin * shift[1],
                self.translation[1] + sin * shift[0] + cos * shift[1],
            ],
            pivot: self.pivot,
        }
    }
}

/// One transform per anchor: the matched object's motion, or identity
/// for anchors with no associated object.
pub fn compute_transforms(
    anchors: &[Anchor],
    matches: &MatchResult,
    demo_scene: &SceneDescriptor,
    new_scene: &SceneDescriptor,
) -> Result<Vec<SceneTransform>, RegError> {
    anchors
        .iter()
        .map(|anchor| {
            let Some(object_id) = &anchor.object_id else {
                return Ok(SceneTransform::identity());
            };
            let matched = matches.match_for(object_id).ok_or_else(|| {
                RegError::ContextMatching(format!(
                    "anchored object {object_id:?} has no match in the new scene"
                ))
            })?;
            let demo_obj = demo_scene.object(object_id).ok_or_else(|| {
                RegError::ContextMatching(format!("object {object_id:?} missing from demo scene"))
            })?;
            let new_obj = new_scene.object(&matched.new_object_id).ok_or_else(|| {
                RegError::ContextMatching(format!(
                    "object {:?} missing from new scene",
                    matched.new_object_id
                ))
            })?;
            let demo_orientation = estimate_orientation_pca(&demo_obj.points)?;
            let new_orientation = estimate_orientation_pca(&new_obj.points)?;
            let (demo_angle, new_angle) =
                if demo_orientation.well_defined && new_orientation.well_defined {
                    (demo_orientation.angle, new_orientation.angle)
                } else {
                    (0.0, 0.0) // isotropic objects transfer by translation alone
                };
            Ok(SceneTransform::between(
                demo_obj.centroid,
                demo_angle,
                new_obj.centroid,
                new_angle,
            ))
        })
        .collect()
}
