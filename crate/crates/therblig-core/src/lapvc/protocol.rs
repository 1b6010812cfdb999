//! The correction wire protocol: request/response JSON and the prompt.

use super::{LapVcError, ProtocolFailure};
use crate::domain::{Rect, SceneDescriptor, Therblig};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// A predicted point tagged with the therblig it registers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedPoint {
    pub therblig: Therblig,
    pub xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub protocol_version: u32,
    pub prompt: String,
    pub scene: SceneDescriptor,
    pub points: Vec<TaggedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    #[serde(default)]
    pub protocol_version: u32,
    pub corrected_points: Vec<[f64; 2]>,
    /// One rationale per point; may be empty.
    #[serde(default)]
    pub rationales: Vec<String>,
}

/// Render the instruction text the endpoint (or its operator) sees:
/// workspace bounds, the object inventory, the tagged predicted points,
/// and the exact reply format.
pub fn build_prompt(points: &[TaggedPoint], scene: &SceneDescriptor) -> String {
    use std::fmt::Write;
    let mut out = String::with_capacity(512);
    let ws = scene.workspace;
    writeln!(
        out,
        "A robot predicted action points on a tabletop workspace with corners \
         ({:.6}, {:.6}) and ({:.6}, {:.6}), units meters.",
        ws.min[0], ws.min[1], ws.max[0], ws.max[1]
    )
    .expect("string write");
    writeln!(out, "Objects in the scene:").expect("string write");
    for obj in &scene.objects {
        writeln!(
            out,
            "- id={} class={} centroid=({:.6}, {:.6}) orientation={:.6} rad",
            obj.id, obj.class_name, obj.centroid[0], obj.centroid[1], obj.orientation
        )
        .expect("string write");
    }
    writeln!(out, "Predicted action points, possibly off target:").expect("string write");
    for (k, p) in points.iter().enumerate() {
        writeln!(
            out,
            "- point {k}: action={} at ({:.6}, {:.6})",
            p.therblig,
            p.xy[0],
            p.xy[1]
        )
        .expect("string write");
    }
    write!(
        out,
        "Move each point onto the object it should act on, keeping the order. \
         Reply with strict JSON of the form {{\"corrected_points\": [[x, y], ...]}} \
         with exactly {} points inside the workspace and nothing else.",
        points.len()
    )
    .expect("string write");
    out
}

/// Validate and extract corrected points from a response payload.
///
/// Rejections are enumerated: invalid JSON, point-count mismatch,
/// non-finite coordinates, out-of-workspace points. The raw payload is
/// retained inside the error.
pub fn parse_response(
    payload: &str,
    expected_points: usize,
    workspace: &Rect,
) -> Result<Vec<[f64; 2]>, LapVcError> {
    let reject = |reason: ProtocolFailure| LapVcError::Protocol {
        reason,
        payload: payload.to_string(),
    };
    let value: serde_json::Value =
        serde_json::from_str(payload).map_err(|_| reject(ProtocolFailure::InvalidJson))?;
    let points = value
        .get("corrected_points")
        .and_then(|v| v.as_array())
        .ok_or_else(|| reject(ProtocolFailure::InvalidJson))?;
    if points.len() != expected_points {
        return Err(reject(ProtocolFailure::CountMismatch {
            expected: expected_points,
            actual: points.len(),
        }));
    }
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let pair = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
            reject(ProtocolFailure::NonNumeric)
        })?;
        let x = pair[0].as_f64().ok_or_else(|| reject(ProtocolFailure::NonNumeric))?;
        let y = pair[1].as_f64().ok_or_else(|| reject(ProtocolFailure::NonNumeric))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(reject(ProtocolFailure::NonNumeric));
        }
        if !workspace.contains([x, y]) {
            return Err(reject(ProtocolFailure::OutOfBounds));
        }
        out.push([x, y]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_scene;

    fn workspace() -> Rect {
        Rect {
            min: [0.0, -0.5],
            max: [1.0, 0.5],
        }
    }

    #[test]
    fn parse_accepts_minimal_payload() {
        let points =
            parse_response(r#"{"corrected_points": [[0.1, 0.2]]}"#, 1, &workspace()).unwrap();
        assert_eq!(points, vec![[0.1, 0.2]]);
    }

    #[test]
    fn parse_rejects_count_mismatch_naming_counts() {
        let err = parse_response(r#"{"corrected_points": [[0.1, 0.2]]}"#, 2, &workspace())
            .unwrap_err();
        match err {
            LapVcError::Protocol {
                reason: ProtocolFailure::CountMismatch { expected: 2, actual: 1 },
                payload,
            } => assert!(payload.contains("corrected_points")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_each_failure_kind() {
        let ws = workspace();
        assert!(matches!(
            parse_response("not json", 1, &ws),
            Err(LapVcError::Protocol { reason: ProtocolFailure::InvalidJson, .. })
        ));
        assert!(matches!(
            parse_response(r#"{"corrected_points": [["a", 0.2]]}"#, 1, &ws),
            Err(LapVcError::Protocol { reason: ProtocolFailure::NonNumeric, .. })
        ));
        assert!(matches!(
            parse_response(r#"{"corrected_points": [[5.0, 0.2]]}"#, 1, &ws),
            Err(LapVcError::Protocol { reason: ProtocolFailure::OutOfBounds, .. })
        ));
    }

    #[test]
    fn prompt_names_bounds_objects_points_and_format() {
        let scene = generate_scene(2, 1, 4).unwrap();
        let points = vec![
            TaggedPoint {
                therblig: Therblig::Grasp,
                xy: [0.3, 0.1],
            },
            TaggedPoint {
                therblig: Therblig::Release,
                xy: [0.6, -0.2],
            },
        ];
        let prompt = build_prompt(&points, &scene);
        assert!(prompt.contains("corrected_points"));
        assert!(prompt.contains("exactly 2 points"));
        assert!(prompt.contains("Grasp"));
        for obj in &scene.objects {
            assert!(prompt.contains(&obj.id));
        }
        // deterministic rendering
        assert_eq!(prompt, build_prompt(&points, &scene));
    }
}
