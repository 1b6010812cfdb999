//! Trajectory warping: piecewise-interpolated SE(2) transforms applied
//! to the whole path, pinned to identity at both ends.

use super::transform::SceneTransform;
use super::{Calibration, RegError};
use crate::domain::{Demonstration, Rect, SyntheticArm, TherbligSegment};
use serde::{Deserialize, Serialize};

/// An anchor time with the transform in force there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanAnchor {
    pub time: usize,
    pub transform: SceneTransform,
}

/// Executable output of trajectory generalization: anchor times with
/// attached transforms (identity pinned at the trajectory ends) and the
/// workspace the warped path must stay inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPlan {
    pub anchors: Vec<PlanAnchor>,
    pub workspace: Option<Rect>,
}

impl WarpPlan {
    /// Assemble a plan from anchor (time, transform) pairs, pinning
    /// identity transforms at timestep 0 and n-1.
    pub fn new(
        mut anchored: Vec<PlanAnchor>,
        trajectory_len: usize,
        workspace: Option<Rect>,
    ) -> Result<WarpPlan, RegError> {
        if trajectory_len < 2 {
            return Err(RegError::InvalidPlan("trajectory too short".into()));
        }
        anchored.retain(|a| a.time > 0 && a.time < trajectory_len - 1);
        let mut anchors = Vec::with_capacity(anchored.len() + 2);
        anchors.push(PlanAnchor {
            time: 0,
            transform: SceneTransform::identity(),
        });
        anchors.extend(anchored);
        anchors.push(PlanAnchor {
            time: trajectory_len - 1,
            transform: SceneTransform::identity(),
        });
        for pair in anchors.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(RegError::InvalidPlan(format!(
                    "anchor times not strictly increasing: {} then {}",
                    pair[0].time, pair[1].time
                )));
            }
        }
        Ok(WarpPlan { anchors, workspace })
    }

    /// Identity plan over a whole trajectory.
    pub fn identity(trajectory_len: usize) -> WarpPlan {
        WarpPlan::new(Vec::new(), trajectory_len, None).expect("identity plan")
    }

    /// The interpolated transform in force at timestep `t`: rotation
    /// angle and translation both linearly interpolated between the
    /// bracketing anchors.
    pub fn transform_at(&self, t: usize) -> SceneTransform {
        let i = match self.anchors.iter().rposition(|a| a.time <= t) {
            Some(i) => i.min(self.anchors.len().saturating_sub(2)),
            None => 0,
        };
        let lo = &self.anchors[i];
        let hi = &self.anchors[i + 1];
        let w = (t as f64 - lo.time as f64) / (hi.time as f64 - lo.time as f64);
        let w = w.clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + (b - a) * w;
        SceneTransform {
            rotation: lerp(lo.transform.rotation, hi.transform.rotation),
            translation: [
                lerp(lo.transform.translation[0], hi.transform.translation[0]),
                lerp(lo.transform.translation[1], hi.transform.translation[1]),
            ],
            pivot: [
                lerp(lo.transform.pivot[0], hi.transform.pivot[0]),
                lerp(lo.transform.pivot[1], hi.transform.pivot[1]),
            ],
        }
    }
}

/// Warp a demonstration onto a new layout.
///
/// Per timestep, the end-effector xy is carried into the scene frame,
/// moved by the interpolated transform, and carried back; yaw picks up
/// the interpolated rotation; z, forces, torques, and the gripper
/// schedule are copied; joint channels are recomputed through the
/// synthetic arm map. Leaving the plan's workspace is a trajectory
/// planning failure.
pub fn warp_trajectory(
    demo: &Demonstration,
    segments: &[TherbligSegment],
    plan: &WarpPlan,
    calibration: &Calibration,
) -> Result<Demonstration, RegError> {
    if let Some(last) = segments.last() {
        if last.end != demo.len() {
            return Err(RegError::InvalidPlan(format!(
                "segments cover [0, {}) but the demonstration has {} steps",
                last.end,
                demo.len()
            )));
        }
    }
    let n = demo.len();
    if plan
        .anchors
        .last()
        .map(|a| a.time != n - 1)
        .unwrap_or(true)
    {
        return Err(RegError::InvalidPlan(format!(
            "plan ends at {:?}, trajectory at {}",
            plan.anchors.last().map(|a| a.time),
            n - 1
        )));
    }

    let mut out = demo.clone();
    let mut prev_q: Option<[f64; 7]> = None;
    for (t, state) in out.states.iter_mut().enumerate() {
        let transform = plan.transform_at(t);
        let scene_xy = calibration.to_scene([state.ee_position[0], state.ee_position[1]]);
        let moved = transform.apply(scene_xy);
        if let Some(workspace) = &plan.workspace {
            if !workspace.contains(moved) {
                return Err(RegError::TrajectoryPlanning(format!(
                    "warped point ({:.3}, {:.3}) at t={t} leaves the workspace",
                    moved[0], moved[1]
                )));
            }
        }
        let robot_xy = calibration.to_robot(moved);
        state.ee_position[0] = robot_xy[0];
        state.ee_position[1] = robot_xy[1];
        state.ee_orientation[2] += transform.rotation;

        let pose = [
            state.ee_position[0],
            state.ee_position[1],
            state.ee_position[2],
            state.ee_orientation[0],
            state.ee_orientation[1],
            state.ee_orientation[2],
        ];
        state.joint_angles = SyntheticArm::joint_angles(&pose);
        state.joint_speeds = match prev_q {
            Some(prev) => SyntheticArm::joint_speeds(&prev, &state.joint_angles, demo.sample_rate_hz),
            None => [0.0; 7],
        };
        prev_q = Some(state.joint_angles);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_demo, generate_scene, training_templates, GeneratorConfig};
    use crate::domain::segments_from_labels;

    fn fixture(seed: u64) -> (Demonstration, Vec<TherbligSegment>) {
        let template = &training_templates()[0];
        let scene = generate_scene(2, 0, seed).unwrap();
        let out = generate_demo(template, &scene, &GeneratorConfig::default(), seed).unwrap();
        let segments = segments_from_labels(&out.labels).unwrap();
        (out.demo, segments)
    }

    #[test]
    fn identity_plan_is_identity_on_ee_channels() {
        let (demo, segments) = fixture(2);
        let plan = WarpPlan::identity(demo.len());
        let warped = warp_trajectory(&demo, &segments, &plan, &Calibration::identity()).unwrap();
        for (a, b) in warped.states.iter().zip(&demo.states) {
            assert!((a.ee_position[0] - b.ee_position[0]).abs() <= 1e-9);
            assert!((a.ee_position[1] - b.ee_position[1]).abs() <= 1e-9);
            assert_eq!(a.ee_position[2], b.ee_position[2]);
            assert_eq!(a.ee_orientation, b.ee_orientation);
            assert_eq!(a.force, b.force);
            assert_eq!(a.torque, b.torque);
        }
        assert_eq!(warped.gripper, demo.gripper);
    }

    #[test]
    fn identity_plan_with_rigid_calibration_is_still_identity() {
        let (demo, segments) = fixture(3);
        let plan = WarpPlan::identity(demo.len());
        let calib = Calibration::rigid(0.4, [0.2, -0.1]);
        let warped = warp_trajectory(&demo, &segments, &plan, &calib).unwrap();
        for (a, b) in warped.states.iter().zip(&demo.states) {
            assert!((a.ee_position[0] - b.ee_position[0]).abs() <= 1e-9);
            assert!((a.ee_position[1] - b.ee_position[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn anchor_times_must_increase() {
        let anchored = vec![
            PlanAnchor {
                time: 50,
                transform: SceneTransform::identity(),
            },
            PlanAnchor {
                time: 50,
                transform: SceneTransform::identity(),
            },
        ];
        assert!(WarpPlan::new(anchored, 100, None).is_err());
    }

    #[test]
    fn warped_path_hits_anchor_targets_exactly() {
        let (demo, segments) = fixture(4);
        let shift = SceneTransform {
            rotation: 0.0,
            translation: [0.1, -0.2],
            pivot: [0.0, 0.0],
        };
        let t_anchor = 300;
        let plan = WarpPlan::new(
            vec![PlanAnchor {
                time: t_anchor,
                transform: shift,
            }],
            demo.len(),
            None,
        )
        .unwrap();
        let warped = warp_trajectory(&demo, &segments, &plan, &Calibration::identity()).unwrap();
        let expect = shift.apply(demo.states[t_anchor].ee_xy());
        let got = warped.states[t_anchor].ee_xy();
        assert!((got[0] - expect[0]).abs() <= 1e-9);
        assert!((got[1] - expect[1]).abs() <= 1e-9);
        // endpoints unmoved
        for t in [0, demo.len() - 1] {
            let a = warped.states[t].ee_xy();
            let b = demo.states[t].ee_xy();
            assert!((a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn out_of_workspace_is_trajectory_planning_failure() {
        let (demo, segments) = fixture(5);
        let plan = WarpPlan::new(
            vec![PlanAnchor {
                time: 300,
                transform: SceneTransform {
                    rotation: 0.0,
                    translation: [5.0, 0.0],
                    pivot: [0.0, 0.0],
                },
            }],
            demo.len(),
            Some(crate::datagen::default_workspace()),
        )
        .unwrap();
        match warp_trajectory(&demo, &segments, &plan, &Calibration::identity()) {
            Err(RegError::TrajectoryPlanning(_)) => {}
            other => panic!("expected trajectory planning failure, got {other:?}"),
        }
    }

    #[test]
    fn joint_channels_are_recomputed_consistently() {
        let (demo, segments) = fixture(6);
        let plan = WarpPlan::new(
            vec![PlanAnchor {
                time: 200,
                transform: SceneTransform {
                    rotation: 0.2,
                    translation: [0.05, 0.05],
                    pivot: [0.3, 0.0],
                },
            }],
            demo.len(),
            None,
        )
        .unwrap();
        let warped = warp_trajectory(&demo, &segments, &plan, &Calibration::identity()).unwrap();
        for (t, state) in warped.states.iter().enumerate() {
            let pose = [
                state.ee_position[0],
                state.ee_position[1],
                state.ee_position[2],
                state.ee_orientation[0],
                state.ee_orientation[1],
                state.ee_orientation[2],
            ];
            assert_eq!(state.joint_angles, SyntheticArm::joint_angles(&pose), "t={t}");
        }
    }

    #[test]
    fn interpolation_is_continuous() {
        let (demo, segments) = fixture(7);
        let plan = WarpPlan::new(
            vec![
                PlanAnchor {
                    time: 150,
                    transform: SceneTransform {
                        rotation: 0.3,
                        translation: [0.08, -0.06],
                        pivot: [0.4, 0.1],
                    },
                },
                PlanAnchor {
                    time: 400,
                    transform: SceneTransform {
                        rotation: -0.2,
                        translation: [-0.04, 0.09],
                        pivot: [0.6, -0.2],
                    },
                },
            ],
            demo.len(),
            None,
        )
        .unwrap();
        let warped = warp_trajectory(&demo, &segments, &plan, &Calibration::identity()).unwrap();
        // max inter-step displacement stays bounded: original step plus
        // the transform change spread over the inter-anchor spans
        let step_bound = |d: &Demonstration| -> f64 {
            (1..d.len())
                .map(|t| {
                    let a = d.states[t - 1].ee_xy();
                    let b = d.states[t].ee_xy();
                    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                })
                .fold(0.0, f64::max)
        };
        let orig_max = step_bound(&demo);
        let warp_max = step_bound(&warped);
        // translation deltas: 0->(0.08,-0.06) over 150, then to
        // (-0.04,0.09) over 250, then back over 199; rotation moves points
        // by at most |dtheta| * radius (~1m workspace)
        let per_step_transform_drift = (0.1f64 / 150.0) + (0.5 / 150.0);
        assert!(
            warp_max <= orig_max + per_step_transform_drift + 1e-6,
            "warped max step {warp_max} vs original {orig_max}"
        );
    }
}
