//! Scene descriptors: the abstract stand-in for camera images.
//!
//! A scene is a set of objects with planar centroids, oriented point
//! sets, and fixed-length match descriptors, inside an axis-aligned
//! workspace. Serialized form:
//!
//! ```json
//! {
//!   "workspace": [xmin, ymin, xmax, ymax],
//!   "objects": [
//!     { "id": "...", "class": "...", "centroid": [x, y],
//!       "orientation": 0.0, "points": [[x, y], ...],
//!       "descriptor": [f, ...] }
//!   ]
//! }
//! ```
//!
//! Units are meters and radians.

use super::DomainError;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

/// Axis-aligned rectangle, serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Rect {
        Rect {
            min: [v[0], v[1]],
            max: [v[2], v[3]],
        }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> [f64; 4] {
        [r.min[0], r.min[1], r.max[0], r.max[1]]
    }
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    /// Rectangle shrunk by `margin` on every side.
    pub fn inset(&self, margin: f64) -> Rect {
        Rect {
            min: [self.min[0] + margin, self.min[1] + margin],
            max: [self.max[0] - margin, self.max[1] - margin],
        }
    }
}

/// One detected object: centroid, oriented point set, match descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    pub centroid: [f64; 2],
    /// Principal-axis orientation in (-pi/2, pi/2].
    pub orientation: f64,
    pub points: Vec<[f64; 2]>,
    pub descriptor: Vec<f64>,
}

impl SceneObject {
    /// Trace of the covariance of the centered point set. Zero means the
    /// points are degenerate (all coincident).
    pub fn covariance_trace(&self) -> f64 {
        let n = self.points.len() as f64;
        if n < 1.0 {
            return 0.0;
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for p in &self.points {
            cx += p[0];
            cy += p[1];
        }
        cx /= n;
        cy /= n;
        let mut trace = 0.0;
        for p in &self.points {
            trace += (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
        }
        trace / n
    }

    /// Diagonal of the axis-aligned bounding box of the point set.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
        let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            xmin = xmin.min(p[0]);
            ymin = ymin.min(p[1]);
            xmax = xmax.max(p[0]);
            ymax = ymax.max(p[1]);
        }
        ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt()
    }
}

/// A full scene: objects plus workspace bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub workspace: Rect,
    pub objects: Vec<SceneObject>,
}

impl SceneDescriptor {
    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// First object of a given class, the role-binding lookup.
    pub fn object_by_class(&self, class_name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.class_name == class_name)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let mut seen = HashSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id.as_str()) {
                return Err(DomainError::InvalidScene(format!(
                    "duplicate object id {:?}",
                    obj.id
                )));
            }
            if !self.workspace.contains(obj.centroid) {
                return Err(DomainError::InvalidScene(format!(
                    "object {:?} centroid ({}, {}) outside workspace",
                    obj.id, obj.centroid[0], obj.centroid[1]
                )));
            }
            if obj.points.len() < 3 {
                return Err(DomainError::InvalidScene(format!(
                    "object {:?} has {} points, need at least 3",
                    obj.id,
                    obj.points.len()
                )));
            }
            if obj.covariance_trace() <= 0.0 {
                return Err(DomainError::InvalidScene(format!(
                    "object {:?} point set is degenerate",
                    obj.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<SceneDescriptor, DomainError> {
        let scene: SceneDescriptor = serde_json::from_str(text)
            .map_err(|e| DomainError::InvalidScene(format!("scene JSON: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<SceneDescriptor, DomainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DomainError::InvalidScene(format!("read {}: {e}", path.display())))?;
        SceneDescriptor::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_points(c: [f64; 2]) -> Vec<[f64; 2]> {
        vec![
            [c[0] - 0.02, c[1] - 0.01],
            [c[0] + 0.02, c[1] - 0.01],
            [c[0] + 0.02, c[1] + 0.01],
            [c[0] - 0.02, c[1] + 0.01],
        ]
    }

    fn sample_scene() -> SceneDescriptor {
        SceneDescriptor {
            workspace: Rect {
                min: [0.0, -0.5],
                max: [1.0, 0.5],
            },
            objects: vec![SceneObject {
                id: "obj-0".into(),
                class_name: "source".into(),
                centroid: [0.3, 0.1],
                orientation: 0.2,
                points: square_points([0.3, 0.1]),
                descriptor: vec![0.5; 16],
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let scene = sample_scene();
        let back = SceneDescriptor::from_json(&scene.to_json()).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn workspace_serializes_as_flat_array() {
        let v: serde_json::Value = serde_json::from_str(&sample_scene().to_json()).unwrap();
        assert_eq!(v["workspace"], serde_json::json!([0.0, -0.5, 1.0, 0.5]));
        assert_eq!(v["objects"][0]["class"], "source");
    }

    #[test]
    fn validate_rejects_duplicate_ids() {
        let mut scene = sample_scene();
        scene.objects.push(scene.objects[0].clone());
        assert!(scene.validate().is_err());
    }

    #[test]
    fn validate_rejects_out_of_bounds_centroid() {
        let mut scene = sample_scene();
        scene.objects[0].centroid = [2.0, 0.0];
        assert!(scene.validate().is_err());
    }

    #[test]
    fn validate_rejects_degenerate_points() {
        let mut scene = sample_scene();
        scene.objects[0].points = vec![[0.3, 0.1]; 5];
        assert!(scene.validate().is_err());
    }
}
