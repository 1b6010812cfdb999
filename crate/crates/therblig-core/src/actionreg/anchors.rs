//! Anchor extraction: pin each Grasp/Use/Release segment midpoint to an
//! end-effector pose and the nearest scene object.

use super::{Anchor, Calibration, Pose2, RegError};
use crate::domain::{Demonstration, SceneDescriptor, Therblig, TherbligSegment};

/// Objects further than this from a calibrated anchor point are not
/// associated (meters, scene frame).
pub const ASSOCIATION_RADIUS: f64 = 0.08;

/// Extract anchors from Grasp/Use/Release segments. The anchor timestep
/// is the segment midpoint, the most jitter-tolerant point of the event.
/// A Grasp anchor with no object in range is a hard failure; Use and
/// Release anchors may stay unassociated (their transforms then default
/// to identity downstream).
pub fn extract_anchors(
    segments: &[TherbligSegment],
    demo: &Demonstration,
    scene: &SceneDescriptor,
    calibration: &Calibration,
) -> Result<Vec<Anchor>, RegError> {
    let mut anchors = Vec::new();
    for segment in segments {
        if !matches!(
            segment.therblig,
            Therblig::Grasp | Therblig::Use | Therblig::Release
        ) {
            continue;
        }
        let timestep = segment.midpoint().min(demo.len().saturating_sub(1));
        let state = &demo.states[timestep];
        let ee = state.ee_xy();
        let scene_xy = calibration.to_scene(ee);

        let mut nearest: Option<(&str, f64)> = None;
        for obj in &scene.objects {
            let d = ((obj.centroid[0] - scene_xy[0]).powi(2)
                + (obj.centroid[1] - scene_xy[1]).powi(2))
            .sqrt();
            if d <= ASSOCIATION_RADIUS && nearest.map(|(_, best)| d < best).unwrap_or(true) {
                nearest = Some((&obj.id, d));
            }
        }
        if segment.therblig == Therblig::Grasp && nearest.is_none() {
            return Err(RegError::ActionRegistration(format!(
                "no object within {ASSOCIATION_RADIUS} m of the Grasp anchor at t={timestep} \
                 (scene point {:.3}, {:.3})",
                scene_xy[0], scene_xy[1]
            )));
        }
        anchors.push(Anchor {
            therblig: segment.therblig,
            timestep,
            ee_pose: Pose2 {
                x: ee[0],
                y: ee[1],
                yaw: state.yaw(),
            },
            registration_xy: scene_xy,
            object_id: nearest.map(|(id, _)| id.to_string()),
        });
    }
    Ok(anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_demo, generate_scene, training_templates, GeneratorConfig};
    use crate::domain::segments_from_labels;
    use std::f64::consts::FRAC_PI_2;

    fn generated(seed: u64) -> (Demonstration, Vec<TherbligSegment>, SceneDescriptor) {
        let template = &training_templates()[1]; // has grasp, use, release
        let scene = generate_scene(2, 0, seed).unwrap();
        let out = generate_demo(template, &scene, &GeneratorConfig::default(), seed).unwrap();
        let segments = segments_from_labels(&out.labels).unwrap();
        (out.demo, segments, scene)
    }

    #[test]
    fn grasp_anchor_associates_to_source() {
        for seed in 0..20 {
            let (demo, segments, scene) = generated(seed);
            let anchors =
                extract_anchors(&segments, &demo, &scene, &Calibration::identity()).unwrap();
            let grasp = anchors.iter().find(|a| a.therblig == Therblig::Grasp).unwrap();
            let source = scene.object_by_class("source").unwrap();
            assert_eq!(grasp.object_id.as_deref(), Some(source.id.as_str()));
        }
    }

    #[test]
    fn identity_calibration_object_at_ee_gives_zero_distance() {
        let (demo, segments, mut scene) = generated(3);
        let anchors = extract_anchors(&segments, &demo, &scene, &Calibration::identity()).unwrap();
        let grasp = anchors.iter().find(|a| a.therblig == Therblig::Grasp).unwrap();
        // move the source exactly onto the anchor point
        let source_id = grasp.object_id.clone().unwrap();
        for obj in &mut scene.objects {
            if obj.id == source_id {
                obj.centroid = grasp.registration_xy;
            }
        }
        let again = extract_anchors(&segments, &demo, &scene, &Calibration::identity()).unwrap();
        let grasp2 = again.iter().find(|a| a.therblig == Therblig::Grasp).unwrap();
        assert_eq!(grasp2.object_id.as_deref(), Some(source_id.as_str()));
        assert_eq!(grasp2.registration_xy, grasp.registration_xy);
    }

    #[test]
    fn rotated_calibration_rotates_anchor_points() {
        let (demo, segments, scene) = generated(5);
        let calib = Calibration::rigid(FRAC_PI_2, [0.0, 0.0]);
        // rotate the scene objects to match the calibrated frame so
        // association still works
        let mut rotated = scene.clone();
        for obj in &mut rotated.objects {
            obj.centroid = calib.to_scene(obj.centroid);
            for p in &mut obj.points {
                *p = calib.to_scene(*p);
            }
        }
        rotated.workspace = crate::domain::Rect {
            min: [-0.4, 0.1],
            max: [0.4, 0.9],
        };
        let anchors = extract_anchors(&segments, &demo, &rotated, &calib).unwrap();
        for anchor in &anchors {
            let expect = calib.to_scene(anchor.ee_pose.xy());
            assert!((anchor.registration_xy[0] - expect[0]).abs() < 1e-12);
            assert!((anchor.registration_xy[1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn grasp_without_nearby_object_is_action_registration_failure() {
        let (demo, segments, mut scene) = generated(7);
        // push every object far away
        for obj in &mut scene.objects {
            obj.centroid = [0.11, -0.39];
        }
        match extract_anchors(&segments, &demo, &scene, &Calibration::identity()) {
            Err(RegError::ActionRegistration(msg)) => assert!(msg.contains("Grasp")),
            other => panic!("expected action registration failure, got {other:?}"),
        }
    }
}
