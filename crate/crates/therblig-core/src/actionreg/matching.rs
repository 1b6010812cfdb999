//! Descriptor matching between a demo scene and a new scene.
//!
//! Greedy global-minimum mutual nearest neighbor over descriptor
//! Euclidean distance, with a ratio test on both sides of each pair:
//! ambiguous objects stay unmatched rather than guessing.

use super::RegError;
use crate::domain::SceneDescriptor;
use serde::{Deserialize, Serialize};

/// Best-to-second-best distance ratio above which a match is ambiguous.
pub const RATIO_TEST_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMatch {
    pub demo_object_id: String,
    pub new_object_id: String,
    pub descriptor_distance: f64,
    /// 1 - worst-side ratio; 1.0 means unambiguous.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<ObjectMatch>,
    /// Demo objects left unmatched, with the reason.
    pub unmatched_demo: Vec<(String, String)>,
}

impl MatchResult {
    pub fn match_for(&self, demo_object_id: &str) -> Option<&ObjectMatch> {
        self.matches.iter().find(|m| m.demo_object_id == demo_object_id)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ratio of the best to second-best value in a row of distances,
/// skipping `best_index`. A single candidate means ratio 0 (always
/// unambiguous); a zero second-best means ratio 1 (never).
fn lowe_ratio(distances: &[f64], best_index: usize) -> f64 {
    let best = distances[best_index];
    let mut second = f64::INFINITY;
    for (j, d) in distances.iter().enumerate() {
        if j != best_index && *d < second {
            second = *d;
        }
    }
    if second.is_infinite() {
        0.0
    } else if second <= 0.0 {
        1.0
    } else {
        best / second
    }
}

/// Match objects across scenes one-to-one.
pub fn match_objects(
    demo_scene: &SceneDescriptor,
    new_scene: &SceneDescriptor,
) -> Result<MatchResult, RegError> {
    let demo = &demo_scene.objects;
    let new = &new_scene.objects;
    for d in demo {
        for n in new {
            if d.descriptor.len() != n.descriptor.len() {
                return Err(RegError::DescriptorLength {
                    demo: d.descriptor.len(),
                    new: n.descriptor.len(),
                });
            }
        }
    }

    let dist: Vec<Vec<f64>> = demo
        .iter()
        .map(|d| new.iter().map(|n| euclidean(&d.descriptor, &n.descriptor)).collect())
        .collect();

    let mut demo_free: Vec<bool> = vec![true; demo.len()];
    let mut new_free: Vec<bool> = vec![true; new.len()];
    let mut matches = Vec::new();
    let mut unmatched_demo: Vec<(String, String)> = Vec::new();

    loop {
        // globally smallest remaining pair is mutual by construction
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in dist.iter().enumerate() {
            if !demo_free[i] {
                continue;
            }
            for (j, d) in row.iter().enumerate() {
                if !new_free[j] {
                    continue;
                }
                if best.map(|(_, _, b)| *d < b).unwrap_or(true) {
                    best = Some((i, j, *d));
                }
            }
        }
        let Some((i, j, d)) = best else { break };

        let ratio_demo = lowe_ratio(&dist[i], j);
        let col: Vec<f64> = dist.iter().map(|row| row[j]).collect();
        let ratio_new = lowe_ratio(&col, i);
        let worst = ratio_demo.max(ratio_new);
        if worst >= RATIO_TEST_THRESHOLD {
            // ambiguous: retire the demo object, leave the new one for
            // other (unambiguous) demo objects
            demo_free[i] = false;
            unmatched_demo.push((
                demo[i].id.clone(),
                format!("ratio test failed ({worst:.3} >= {RATIO_TEST_THRESHOLD})"),
            ));
            continue;
        }
        demo_free[i] = false;
        new_free[j] = false;
        matches.push(ObjectMatch {
            demo_object_id: demo[i].id.clone(),
            new_object_id: new[j].id.clone(),
            descriptor_distance: d,
            confidence: 1.0 - worst,
        });
    }

    for (i, free) in demo_free.iter().enumerate() {
        if *free {
            unmatched_demo.push((demo[i].id.clone(), "no candidate left".to_string()));
        }
    }
    matches.sort_by(|a, b| a.demo_object_id.cmp(&b.demo_object_id));
    unmatched_demo.sort();
    Ok(MatchResult {
        matches,
        unmatched_demo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_scene, repose_scene};

    #[test]
    fn identical_scenes_match_identically_with_full_confidence() {
        let scene = generate_scene(2, 0, 3).unwrap();
        let result = match_objects(&scene, &scene).unwrap();
        assert_eq!(result.matches.len(), 2);
        assert!(result.unmatched_demo.is_empty());
        for m in &result.matches {
            assert_eq!(m.demo_object_id, m.new_object_id);
            assert_eq!(m.confidence, 1.0);
            assert_eq!(m.descriptor_distance, 0.0);
        }
    }

    #[test]
    fn distractors_do_not_disturb_task_matches() {
        let scene = generate_scene(2, 0, 11).unwrap();
        let (crowded, _) = repose_scene(&scene, 5, 0.3, 77).unwrap();
        let result = match_objects(&scene, &crowded).unwrap();
        assert!(result.unmatched_demo.is_empty());
        for m in &result.matches {
            assert_eq!(m.demo_object_id, m.new_object_id, "task objects keep identity");
            assert!(m.confidence > 0.5);
        }
    }

    #[test]
    fn identical_descriptors_fail_ratio_test() {
        let mut demo = generate_scene(2, 0, 5).unwrap();
        let mut new = demo.clone();
        // make both demo objects indistinguishable
        let descriptor = demo.objects[0].descriptor.clone();
        demo.objects[1].descriptor = descriptor.clone();
        new.objects[0].descriptor = descriptor.clone();
        new.objects[1].descriptor = descriptor;
        let result = match_objects(&demo, &new).unwrap();
        assert!(result.matches.is_empty());
        assert_eq!(result.unmatched_demo.len(), 2);
        assert!(result.unmatched_demo[0].1.contains("ratio test"));
    }

    #[test]
    fn matched_pair_set_is_symmetric_in_scene_order() {
        let scene = generate_scene(3, 2, 21).unwrap();
        let (new, _) = repose_scene(&scene, 2, 0.5, 9).unwrap();
        let forward = match_objects(&scene, &new).unwrap();
        let backward = match_objects(&new, &scene).unwrap();
        let fwd: Vec<(String, String)> = forward
            .matches
            .iter()
            .map(|m| (m.demo_object_id.clone(), m.new_object_id.clone()))
            .collect();
        let mut bwd: Vec<(String, String)> = backward
            .matches
            .iter()
            .map(|m| (m.new_object_id.clone(), m.demo_object_id.clone()))
            .collect();
        bwd.sort();
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn descriptor_length_mismatch_is_an_error() {
        let demo = generate_scene(2, 0, 1).unwrap();
        let mut new = demo.clone();
        new.objects[0].descriptor.pop();
        assert!(matches!(
            match_objects(&demo, &new),
            Err(RegError::DescriptorLength { .. })
        ));
    }
}
