//! The transfer pipeline: segment, anchor, match, transform, warp, with
//! a structured per-stage trace for failure attribution.

use super::anchors::extract_anchors;
use super::matching::{match_objects, MatchResult};
use super::transform::{compute_transforms, SceneTransform};
use super::warp::{warp_trajectory, PlanAnchor, WarpPlan};
use super::{Anchor, Calibration, RegError};
use crate::domain::{Demonstration, LabelSequence, SceneDescriptor, TherbligSegment};
use crate::mgsf::{segment, segment_demo, MgsfModel};
use serde::{Deserialize, Serialize};

/// Failure taxonomy for transfer trials; every non-success maps to
/// exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureCategory {
    TherbligSegmentation,
    ActionRegistration,
    ContextMatching,
    TrajectoryPlanning,
    Others,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 5] = [
        FailureCategory::TherbligSegmentation,
        FailureCategory::ActionRegistration,
        FailureCategory::ContextMatching,
        FailureCategory::TrajectoryPlanning,
        FailureCategory::Others,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureCategory::TherbligSegmentation => "TherbligSegmentation",
            FailureCategory::ActionRegistration => "ActionRegistration",
            FailureCategory::ContextMatching => "ContextMatching",
            FailureCategory::TrajectoryPlanning => "TrajectoryPlanning",
            FailureCategory::Others => "Others",
        }
    }
}

impl std::fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Map a registration error onto its trial failure category.
pub fn categorize(err: &RegError) -> FailureCategory {
    match err {
        RegError::ActionRegistration(_) => FailureCategory::ActionRegistration,
        RegError::ContextMatching(_) | RegError::DescriptorLength { .. } => {
            FailureCategory::ContextMatching
        }
        RegError::TrajectoryPlanning(_) => FailureCategory::TrajectoryPlanning,
        RegError::SingularCalibration { .. }
        | RegError::DegeneratePoints { .. }
        | RegError::InvalidPlan(_) => FailureCategory::Others,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub status: String,
    pub detail: String,
}

/// Ordered record of every pipeline stage, successful or not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferTrace {
    pub stages: Vec<StageTrace>,
}

impl TransferTrace {
    pub fn ok(&mut self, stage: &str, detail: String) {
        self.stages.push(StageTrace {
            stage: stage.to_string(),
            status: "ok".into(),
            detail,
        });
    }

    pub fn failed(&mut self, stage: &str, detail: String) {
        self.stages.push(StageTrace {
            stage: stage.to_string(),
            status: "failed".into(),
            detail,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Where the therblig labels come from.
pub enum Labeling<'a> {
    /// Ground-truth (or externally provided) labels.
    Oracle(&'a LabelSequence),
    /// A trained segmentation model.
    Model(&'a MgsfModel<f32>),
}

#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub demo: Demonstration,
    pub labels: LabelSequence,
    pub segments: Vec<TherbligSegment>,
    pub anchors: Vec<Anchor>,
    pub matches: MatchResult,
    pub transforms: Vec<SceneTransform>,
    pub plan: WarpPlan,
    pub trace: TransferTrace,
}

/// A failed transfer: the first failing stage, its category, and the
/// trace up to and including the failure.
#[derive(Debug)]
pub struct TransferError {
    pub category: FailureCategory,
    pub stage: &'static str,
    pub detail: String,
    pub trace: TransferTrace,
}

impl std::fmt::Display for TransferError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failure at {}: {}", self.category, self.stage, self.detail)
    }
}

impl std::error::Error for TransferError {}

/// One-shot transfer of a demonstration onto a new scene layout.
///
/// Composition: segment, extract anchors, match objects, compute
/// per-anchor transforms, warp. The first failing stage aborts with its
/// failure category; the trace names every stage either way.
pub fn transfer(
    demo: &Demonstration,
    labeling: Labeling<'_>,
    demo_scene: &SceneDescriptor,
    new_scene: &SceneDescriptor,
    calibration: &Calibration,
) -> Result<TransferOutput, Box<TransferError>> {
    let mut trace = TransferTrace::default();
    let fail = |trace: &mut TransferTrace,
                stage: &'static str,
                category: FailureCategory,
                detail: String| {
        trace.failed(stage, detail.clone());
        Box::new(TransferError {
            category,
            stage,
            detail,
            trace: trace.clone(),
        })
    };

    // segmentation
    let (labels, segments) = match labeling {
        Labeling::Oracle(labels) => {
            let seg = segment(labels);
            (seg.0, seg.1)
        }
        Labeling::Model(model) => match segment_demo(model, demo) {
            Ok(pair) => pair,
            Err(e) => {
                return Err(fail(
                    &mut trace,
                    "segmentation",
                    FailureCategory::TherbligSegmentation,
                    e.to_string(),
                ))
            }
        },
    };
    trace.ok(
        "segmentation",
        format!("{} segments", segments.len()),
    );

    // anchors
    let anchors = match extract_anchors(&segments, demo, demo_scene, calibration) {
        Ok(anchors) if !anchors.is_empty() => anchors,
        Ok(_) => {
            return Err(fail(
                &mut trace,
                "anchors",
                FailureCategory::TherbligSegmentation,
                "no Grasp/Use/Release segments to anchor".into(),
            ))
        }
        Err(e) => return Err(fail(&mut trace, "anchors", categorize(&e), e.to_string())),
    };
    trace.ok("anchors", format!("{} anchors", anchors.len()));

    // matching
    let matches = match match_objects(demo_scene, new_scene) {
        Ok(m) => m,
        Err(e) => return Err(fail(&mut trace, "matching", categorize(&e), e.to_string())),
    };
    trace.ok(
        "matching",
        format!(
            "{} matched, {} unmatched",
            matches.matches.len(),
            matches.unmatched_demo.len()
        ),
    );

    // transforms
    let transforms = match compute_transforms(&anchors, &matches, demo_scene, new_scene) {
        Ok(t) => t,
        Err(e) => return Err(fail(&mut trace, "transforms", categorize(&e), e.to_string())),
    };
    trace.ok("transforms", format!("{} transforms", transforms.len()));

    // warp
    let plan_anchors: Vec<PlanAnchor> = anchors
        .iter()
        .zip(&transforms)
        .map(|(anchor, transform)| PlanAnchor {
            time: anchor.timestep,
            transform: *transform,
        })
        .collect();
    let plan = match WarpPlan::new(plan_anchors, demo.len(), Some(new_scene.workspace)) {
        Ok(p) => p,
        Err(e) => return Err(fail(&mut trace, "plan", categorize(&e), e.to_string())),
    };
    let warped = match warp_trajectory(demo, &segments, &plan, calibration) {
        Ok(w) => w,
        Err(e) => return Err(fail(&mut trace, "warp", categorize(&e), e.to_string())),
    };
    trace.ok("warp", format!("{} steps", warped.len()));

    Ok(TransferOutput {
        demo: warped,
        labels,
        segments,
        anchors,
        matches,
        transforms,
        plan,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{
        generate_demo, generate_scene, repose_scene, training_templates, GeneratorConfig,
    };
    use crate::domain::Therblig;

    fn fixture(seed: u64) -> (Demonstration, LabelSequence, SceneDescriptor) {
        let template = &training_templates()[0];
        let scene = generate_scene(2, 0, seed).unwrap();
        let out = generate_demo(template, &scene, &GeneratorConfig::default(), seed).unwrap();
        (out.demo, out.labels, scene)
    }

    #[test]
    fn identity_transfer_reproduces_the_demo() {
        let (demo, labels, scene) = fixture(41);
        let out = transfer(
            &demo,
            Labeling::Oracle(&labels),
            &scene,
            &scene,
            &Calibration::identity(),
        )
        .unwrap();
        for (a, b) in out.demo.states.iter().zip(&demo.states) {
            assert!((a.ee_position[0] - b.ee_position[0]).abs() <= 1e-9);
            assert!((a.ee_position[1] - b.ee_position[1]).abs() <= 1e-9);
        }
        assert!(out.trace.stages.iter().all(|s| s.status == "ok"));
    }

    #[test]
    fn moved_objects_move_the_grasp_anchor_onto_the_new_source() {
        for seed in [3u64, 17, 99] {
            let (demo, labels, scene) = fixture(seed);
            let (new_scene, motions) = repose_scene(&scene, 0, 0.4, seed ^ 0xabcd).unwrap();
            let out = transfer(
                &demo,
                Labeling::Oracle(&labels),
                &scene,
                &new_scene,
                &Calibration::identity(),
            )
            .unwrap();
            let grasp = out
                .anchors
                .iter()
                .position(|a| a.therblig == Therblig::Grasp)
                .unwrap();
            let anchor = &out.anchors[grasp];
            let warped_at_anchor = out.demo.states[anchor.timestep].ee_xy();
            let source_id = anchor.object_id.clone().unwrap();
            let true_motion = motions.iter().find(|(id, _)| *id == source_id).unwrap();
            let expect = true_motion.1.apply(demo.states[anchor.timestep].ee_xy());
            let err = ((warped_at_anchor[0] - expect[0]).powi(2)
                + (warped_at_anchor[1] - expect[1]).powi(2))
            .sqrt();
            assert!(err <= 1e-6, "seed {seed}: anchor error {err}");
        }
    }

    #[test]
    fn distractors_leave_the_result_unchanged() {
        let (demo, labels, scene) = fixture(8);
        let (plain, _) = repose_scene(&scene, 0, 0.3, 123).unwrap();
        let (mut crowded, _) = repose_scene(&scene, 5, 0.3, 123).unwrap();
        // same task-object layout; only the distractors differ
        for obj in &mut crowded.objects {
            if let Some(suspect) = plain.object(&obj.id) {
                obj.centroid = suspect.centroid;
                obj.orientation = suspect.orientation;
                obj.points = suspect.points.clone();
                obj.descriptor = suspect.descriptor.clone();
            }
        }
        let identity = Calibration::identity();
        let a = transfer(&demo, Labeling::Oracle(&labels), &scene, &plain, &identity).unwrap();
        let b = transfer(&demo, Labeling::Oracle(&labels), &scene, &crowded, &identity).unwrap();
        for (x, y) in a.demo.states.iter().zip(&b.demo.states) {
            assert_eq!(x.ee_position, y.ee_position);
        }
    }

    #[test]
    fn all_rest_labels_fail_as_segmentation() {
        let (demo, labels, scene) = fixture(10);
        let rest = LabelSequence::new(vec![Therblig::Rest; labels.len()]);
        let err = transfer(
            &demo,
            Labeling::Oracle(&rest),
            &scene,
            &scene,
            &Calibration::identity(),
        )
        .unwrap_err();
        assert_eq!(err.category, FailureCategory::TherbligSegmentation);
        assert_eq!(err.trace.stages.last().unwrap().status, "failed");
    }

    #[test]
    fn failure_categories_are_named_in_the_trace() {
        let (demo, labels, scene) = fixture(11);
        let mut far_scene = scene.clone();
        for (k, obj) in far_scene.objects.iter_mut().enumerate() {
            // park everything in a corner, away from any anchor point
            obj.centroid = [0.11 + 0.06 * k as f64, -0.38];
        }
        let err = transfer(
            &demo,
            Labeling::Oracle(&labels),
            &far_scene,
            &scene,
            &Calibration::identity(),
        )
        .unwrap_err();
        assert_eq!(err.category, FailureCategory::ActionRegistration);
        assert_eq!(err.stage, "anchors");
    }
}
