//! Error injection and the alignment score.

use crate::actionreg::ASSOCIATION_RADIUS;
use crate::domain::SceneDescriptor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Seeded perturbation standing in for demonstration and calibration
/// error: rotation about the scene origin, a constant bias, and white
/// noise per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub bias: [f64; 2],
    pub sigma: f64,
    pub rotation: f64,
    pub seed: u64,
}

impl ErrorModel {
    pub fn zero() -> ErrorModel {
        ErrorModel {
            bias: [0.0, 0.0],
            sigma: 0.0,
            rotation: 0.0,
            seed: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bias == [0.0, 0.0] && self.sigma == 0.0 && self.rotation == 0.0
    }

    pub fn with_seed(mut self, seed: u64) -> ErrorModel {
        self.seed = seed;
        self
    }
}

impl Default for ErrorModel {
    /// The harness default: 3 cm bias, 1 cm noise.
    fn default() -> Self {
        ErrorModel {
            bias: [0.03, 0.0],
            sigma: 0.01,
            rotation: 0.0,
            seed: 0,
        }
    }
}

/// Perturb points: `p' = R(rotation) * p + bias + N(0, sigma^2)`.
pub fn inject_error(points: &[[f64; 2]], model: &ErrorModel) -> Vec<[f64; 2]> {
    assert!(model.sigma >= 0.0, "sigma must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let (sin, cos) = model.rotation.sin_cos();
    let noise = Normal::new(0.0, model.sigma.max(f64::MIN_POSITIVE)).expect("sigma");
    points
        .iter()
        .map(|p| {
            let (nx, ny) = if model.sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            [
                cos * p[0] - sin * p[1] + model.bias[0] + nx,
                sin * p[0] + cos * p[1] + model.bias[1] + ny,
            ]
        })
        .collect()
}

/// Fallback reference length when a ground-truth point has no associated
/// object (meters).
const FALLBACK_D_REF: f64 = 0.1;

/// Mean per-point alignment in [0, 1].
///
/// Per point: `s = max(0, 1 - |p - p*| / d_ref)` where `d_ref` is the
/// bounding-box diagonal of the object associated with the ground-truth
/// point — errors are judged relative to the object's size, so small
/// objects score harsher.
pub fn alignment_score(
    corrected: &[[f64; 2]],
    ground_truth: &[[f64; 2]],
    scene: &SceneDescriptor,
) -> f64 {
    assert_eq!(
        corrected.len(),
        ground_truth.len(),
        "point counts must match"
    );
    if corrected.is_empty() {
        return 1.0;
    }
    let mut sum = 0.0;
    for (p, truth) in corrected.iter().zip(ground_truth) {
        let mut d_ref = FALLBACK_D_REF;
        let mut best = f64::INFINITY;
        for obj in &scene.objects {
            let d = ((obj.centroid[0] - truth[0]).powi(2) + (obj.centroid[1] - truth[1]).powi(2)).sqrt();
            if d <= ASSOCIATION_RADIUS && d < best {
                best = d;
                d_ref = obj.bbox_diagonal().max(1e-9);
            }
        }
        let err = ((p[0] - truth[0]).powi(2) + (p[1] - truth[1]).powi(2)).sqrt();
        sum += (1.0 - err / d_ref).max(0.0);
    }
    sum / corrected.len() as f64
}
