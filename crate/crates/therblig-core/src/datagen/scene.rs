//! Seeded scene generation and rigid re-posing.
//!
//! Task objects get role class names in a fixed order (source,
//! destination, tool, extra-N); distractors get their own classes.
//! Descriptors are drawn deterministically from the object identity so
//! the same object seen in two scenes matches, while distractors sit far
//! away in descriptor space.

use super::GenError;
use crate::domain::{Rect, SceneDescriptor, SceneObject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

/// Default workspace: an 0.8 m x 0.8 m table patch.
pub fn default_workspace() -> Rect {
    Rect {
        min: [0.1, -0.4],
        max: [0.9, 0.4],
    }
}

/// Resting pose of the arm, near the lower workspace edge.
pub fn home_position(workspace: &Rect) -> [f64; 2] {
    [
        0.5 * (workspace.min[0] + workspace.max[0]),
        workspace.min[1] + 0.08,
    ]
}

/// Minimum pairwise centroid separation when placing objects.
pub const MIN_SEPARATION: f64 = 0.05;

/// Clearance between task objects (and from home): transports must cover
/// real distance for the motion signatures to rise above sensor noise.
pub const TASK_CLEARANCE: f64 = 0.2;

/// Margin objects keep from the workspace edge.
const EDGE_MARGIN: f64 = 0.06;

/// Points per object outline cloud.
const POINTS_PER_OBJECT: usize = 24;

/// Object half extents: elongated so PCA orientation is well defined.
const HALF_LONG: f64 = 0.04;
const HALF_SHORT: f64 = 0.015;

/// Descriptor length shared by every generated object.
pub const DESCRIPTOR_LEN: usize = 16;

/// Per-scene descriptor perturbation; well under the distractor
/// separation so ratio-test matching stays unambiguous.
const DESCRIPTOR_NOISE: f64 = 0.01;

fn role_class(index: usize) -> String {
    match index {
        0 => "source".to_string(),
        1 => "destination".to_string(),
        2 => "tool".to_string(),
        n => format!("extra{}", n - 2),
    }
}

/// Identity-keyed base descriptor: same class name, same vector.
fn base_descriptor(class_name: &str) -> Vec<f64> {
    let digest = Sha256::digest(class_name.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..DESCRIPTOR_LEN).map(|_| normal.sample(&mut rng)).collect()
}

fn jittered_descriptor(class_name: &str, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, DESCRIPTOR_NOISE).expect("descriptor noise");
    base_descriptor(class_name)
        .into_iter()
        .map(|v| v + normal.sample(rng))
        .collect()
}

/// Rectangular outline point cloud centered on `centroid`, long axis
/// along `orientation`.
fn object_points(centroid: [f64; 2], orientation: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let (sin, cos) = orientation.sin_cos();
    (0..POINTS_PER_OBJECT)
        .map(|i| {
            // deterministic grid along the outline plus small jitter
            let frac = i as f64 / POINTS_PER_OBJECT as f64;
            let angle = 2.0 * PI * frac;
            let lx = HALF_LONG * angle.cos() + rng.random_range(-0.002..0.002);
            let ly = HALF_SHORT * angle.sin() + rng.random_range(-0.002..0.002);
            [
                centroid[0] + cos * lx - sin * ly,
                centroid[1] + sin * lx + cos * ly,
            ]
        })
        .collect()
}

/// Place `task_count` centroids with [`TASK_CLEARANCE`] among themselves
/// and the keep-clear points, then `extra_count` more with only the
/// [`MIN_SEPARATION`] rule.
fn place_centroids(
    task_count: usize,
    extra_count: usize,
    workspace: &Rect,
    keep_clear: &[[f64; 2]],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 2]>, GenError> {
    let inner = workspace.inset(EDGE_MARGIN);
    let mut task_points: Vec<[f64; 2]> = keep_clear.to_vec();
    let mut all_points: Vec<[f64; 2]> = keep_clear.to_vec();
    let mut out = Vec::with_capacity(task_count + extra_count);
    for i in 0..task_count + extra_count {
        let is_task = i < task_count;
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 1000 {
                return Err(GenError::Placement {
                    placed: out.len(),
                    requested: task_count + extra_count,
                });
            }
            let candidate = [
                rng.random_range(inner.min[0]..inner.max[0]),
                rng.random_range(inner.min[1]..inner.max[1]),
            ];
            let dist = |p: &[f64; 2]| {
                let dx = p[0] - candidate[0];
                let dy = p[1] - candidate[1];
                (dx * dx + dy * dy).sqrt()
            };
            let clear = all_points.iter().all(|p| dist(p) >= MIN_SEPARATION)
                && (!is_task || task_points.iter().all(|p| dist(p) >= TASK_CLEARANCE));
            if clear {
                if is_task {
                    task_points.push(candidate);
                }
                all_points.push(candidate);
                out.push(candidate);
                break;
            }
        }
    }
    Ok(out)
}

/// Generate a scene with `num_task_objects` role objects and
/// `num_distractors` unrelated ones, uniformly placed with minimum
/// separation, orientations uniform in (-pi/2, pi/2].
pub fn generate_scene(
    num_task_objects: usize,
    num_distractors: usize,
    seed: u64,
) -> Result<SceneDescriptor, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_scene_with_rng(num_task_objects, num_distractors, &mut rng)
}

pub(crate) fn generate_scene_with_rng(
    num_task_objects: usize,
    num_distractors: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SceneDescriptor, GenError> {
    let workspace = default_workspace();
    let home = home_position(&workspace);
    let total = num_task_objects + num_distractors;
    let centroids = place_centroids(num_task_objects, num_distractors, &workspace, &[home], rng)?;

    let mut objects = Vec::with_capacity(total);
    for (i, centroid) in centroids.iter().enumerate() {
        let class_name = if i < num_task_objects {
            role_class(i)
        } else {
            format!("distractor{}", i - num_task_objects)
        };
        // orientation uniform in (-pi/2, pi/2]
        let orientation = PI / 2.0 - rng.random_range(0.0..PI);
        objects.push(SceneObject {
            id: format!("obj-{i}"),
            points: object_points(*centroid, orientation, rng),
            descriptor: jittered_descriptor(&class_name, rng),
            class_name,
            centroid: *centroid,
            orientation,
        });
    }
    let scene = SceneDescriptor { workspace, objects };
    scene.validate().map_err(GenError::Domain)?;
    Ok(scene)
}

/// True rigid motion applied to one object during re-posing; the ground
/// truth a transfer trial is scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueMotion {
    pub rotation: f64,
    /// New centroid (the rotation pivot is the old centroid).
    pub new_centroid: [f64; 2],
    pub old_centroid: [f64; 2],
}

impl TrueMotion {
    /// Map a point rigidly: rotate about nothing but the old centroid,
    /// then translate onto the new one.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let dx = p[0] - self.old_centroid[0];
        let dy = p[1] - self.old_centroid[1];
        [
            self.new_centroid[0] + cos * dx - sin * dy,
            self.new_centroid[1] + sin * dx + cos * dy,
        ]
    }
}

/// Rigidly re-pose every task object of `scene` into a fresh layout and
/// append `num_distractors` new distractors. Object identities (ids,
/// classes, descriptors up to per-scene noise) are preserved; point sets
/// move rigidly, so estimated orientations move with them.
///
/// `max_rotation` caps the orientation change magnitude.
pub fn repose_scene(
    scene: &SceneDescriptor,
    num_distractors: usize,
    max_rotation: f64,
    seed: u64,
) -> Result<(SceneDescriptor, Vec<(String, TrueMotion)>), GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let workspace = scene.workspace;
    let home = home_position(&workspace);

    let task_objects: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| !o.class_name.starts_with("distractor"))
        .collect();
    let centroids =
        place_centroids(task_objects.len(), num_distractors, &workspace, &[home], &mut rng)?;

    let mut objects = Vec::new();
    let mut motions = Vec::new();
    for (i, obj) in task_objects.iter().enumerate() {
        let rotation = rng.random_range(-max_rotation..=max_rotation);
        let motion = TrueMotion {
            rotation,
            new_centroid: centroids[i],
            old_centroid: obj.centroid,
        };
        let points = obj.points.iter().map(|p| motion.apply(*p)).collect();
        let mut orientation = obj.orientation + rotation;
        // keep the stored orientation in (-pi/2, pi/2]
        while orientation > PI / 2.0 {
            orientation -= PI;
        }
        while orientation <= -PI / 2.0 {
            orientation += PI;
        }
        objects.push(SceneObject {
            id: obj.id.clone(),
            class_name: obj.class_name.clone(),
            centroid: centroids[i],
            orientation,
            points,
            descriptor: jittered_descriptor(&obj.class_name, &mut rng),
        });
        motions.push((obj.id.clone(), motion));
    }
    for d in 0..num_distractors {
        let class_name = format!("distractor{d}");
        let centroid = centroids[task_objects.len() + d];
        let orientation = PI / 2.0 - rng.random_range(0.0..PI);
        objects.push(SceneObject {
            id: format!("new-{d}"),
            points: object_points(centroid, orientation, &mut rng),
            descriptor: jittered_descriptor(&class_name, &mut rng),
            class_name,
            centroid,
            orientation,
        });
    }
    let new_scene = SceneDescriptor { workspace, objects };
    new_scene.validate().map_err(GenError::Domain)?;
    Ok((new_scene, motions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_scene_has_two_role_objects() {
        let scene = generate_scene(2, 0, 7).unwrap();
        assert_eq!(scene.objects.len(), 2);
        assert_eq!(scene.objects[0].class_name, "source");
        assert_eq!(scene.objects[1].class_name, "destination");
    }

    #[test]
    fn com_scene_adds_distractors() {
        let scene = generate_scene(2, 5, 7).unwrap();
        assert_eq!(scene.objects.len(), 7);
        assert!(scene.objects[6].class_name.starts_with("distractor"));
    }

    #[test]
    fn min_separation_holds_across_seeds() {
        for seed in 0..1000 {
            let scene = generate_scene(2, 3, seed).unwrap();
            for (i, a) in scene.objects.iter().enumerate() {
                for b in &scene.objects[i + 1..] {
                    let d = ((a.centroid[0] - b.centroid[0]).powi(2)
                        + (a.centroid[1] - b.centroid[1]).powi(2))
                    .sqrt();
                    assert!(d >= MIN_SEPARATION, "seed {seed}: {d}");
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(2, 4, 42).unwrap();
        let b = generate_scene(2, 4, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orientations_in_half_open_range() {
        for seed in 0..50 {
            let scene = generate_scene(3, 2, seed).unwrap();
            for o in &scene.objects {
                assert!(o.orientation > -PI / 2.0 && o.orientation <= PI / 2.0);
            }
        }
    }

    #[test]
    fn same_identity_descriptors_are_close_distractors_far() {
        let a = generate_scene(2, 2, 1).unwrap();
        let b = generate_scene(2, 2, 2).unwrap();
        let dist = |x: &[f64], y: &[f64]| -> f64 {
            x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
        };
        let same = dist(&a.objects[0].descriptor, &b.objects[0].descriptor);
        let cross = dist(&a.objects[0].descriptor, &b.objects[1].descriptor);
        assert!(same < 0.1, "same-identity distance {same}");
        assert!(cross > 10.0 * same, "cross {cross} vs same {same}");
    }

    #[test]
    fn repose_preserves_identity_and_reports_motion() {
        let scene = generate_scene(2, 0, 5).unwrap();
        let (new_scene, motions) = repose_scene(&scene, 3, 0.4, 99).unwrap();
        assert_eq!(new_scene.objects.len(), 5);
        assert_eq!(motions.len(), 2);
        for (id, motion) in &motions {
            let old = scene.object(id).unwrap();
            let new = new_scene.object(id).unwrap();
            assert_eq!(old.class_name, new.class_name);
            let mapped = motion.apply(old.centroid);
            assert!((mapped[0] - new.centroid[0]).abs() < 1e-12);
            assert!((mapped[1] - new.centroid[1]).abs() < 1e-12);
        }
    }
}
