//! Demonstration synthesis: choreography, per-therblig signatures,
//! noise, and ground-truth anchors.
//!
//! Phase targets come from the template's waypoint bindings: transports
//! move the end effector (minimum-jerk) toward the next placed phase,
//! stationary phases hold. Force channels carry the class signatures:
//! a grip ramp during Grasp, a held load through the loaded span, an
//! oscillation during Use, a reverse ramp during Release, and a linear
//! per-demo sensor drift throughout.

use super::scene::home_position;
use super::templates::{Role, TaskTemplate};
use super::{AnchorTruth, GenError, GeneratorConfig};
use crate::domain::{
    Demonstration, LabelSequence, RobotState, SceneDescriptor, SyntheticArm, Therblig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Constant end-effector height; registration is planar.
const EE_HEIGHT: f64 = 0.28;
/// Roll/pitch of a downward-pointing gripper.
const EE_ROLL: f64 = PI;
const EE_PITCH: f64 = 0.0;
/// Payload weight on the z force axis while holding, newtons.
const LOAD_N: f64 = 3.0;
/// Extra contact press during Use, newtons.
const PRESS_N: f64 = 1.5;
/// Grip transient peak during Grasp/Release, newtons.
const GRIP_BUMP_N: f64 = 1.2;
/// Effective payload mass for transport inertial forces, kilograms.
const CARRY_MASS: f64 = 0.6;
/// Sideways oscillation radius during Use, meters.
const USE_WIGGLE_M: f64 = 0.004;

/// AR(1) coefficient for pose noise. Position error on a real arm is
/// dominated by slow calibration wobble, not white jitter; the smooth
/// process keeps absolute error at sigma_state while inter-step motion
/// stays far below transport speeds.
const POSE_NOISE_RHO: f64 = 0.995;

/// Stationary AR(1) noise over the six pose channels.
struct SmoothNoise {
    state: [f64; 6],
    sigma: f64,
    innovation: f64,
}

impl SmoothNoise {
    fn new(sigma: f64, rng: &mut ChaCha8Rng) -> SmoothNoise {
        let mut state = [0.0; 6];
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma");
            for s in state.iter_mut() {
                *s = normal.sample(rng);
            }
        }
        SmoothNoise {
            state,
            sigma,
            innovation: sigma * (1.0 - POSE_NOISE_RHO * POSE_NOISE_RHO).sqrt(),
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> [f64; 6] {
        if self.sigma > 0.0 {
            let normal = Normal::new(0.0, self.innovation).expect("sigma");
            for s in self.state.iter_mut() {
                *s = POSE_NOISE_RHO * *s + normal.sample(rng);
            }
        }
        self.state
    }
}

/// Output of [`generate_demo`]: the trajectory, its labels, and the
/// clean anchor ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedDemo {
    pub demo: Demonstration,
    pub labels: LabelSequence,
    pub anchors: Vec<AnchorTruth>,
}

/// Minimum-jerk interpolation profile on [0, 1].
fn min_jerk(tau: f64) -> f64 {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    t3 * (10.0 - 15.0 * tau + 6.0 * t2)
}

/// Second derivative of the minimum-jerk profile.
fn min_jerk_accel(tau: f64) -> f64 {
    60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau
}

/// Smooth 0-to-1 ramp used for grip force transitions.
fn smoothstep(tau: f64) -> f64 {
    tau * tau * (3.0 - 2.0 * tau)
}

fn is_transport(t: Therblig) -> bool {
    matches!(t, Therblig::TransportEmpty | Therblig::TransportLoaded)
}

/// Where a stationary phase is pinned, when it is pinned at all.
#[derive(Debug, Clone, Copy)]
struct Place {
    xy: [f64; 2],
    yaw: f64,
    object: Option<usize>, // index into scene.objects
}

struct Choreography {
    /// Per-phase: (entry point, exit point, entry yaw, exit yaw).
    segments: Vec<PhasePath>,
}

#[derive(Debug, Clone, Copy)]
struct PhasePath {
    from: [f64; 2],
    to: [f64; 2],
    yaw_from: f64,
    yaw_to: f64,
    /// Object acted on for Grasp/Use/Release phases.
    object: Option<usize>,
}

fn role_place(
    scene: &SceneDescriptor,
    role: Role,
    template: &TaskTemplate,
) -> Result<Place, GenError> {
    let obj_index = scene
        .objects
        .iter()
        .position(|o| o.class_name == role.class_name())
        .ok_or_else(|| GenError::MissingRole {
            role,
            template: template.name.clone(),
        })?;
    let obj = &scene.objects[obj_index];
    Ok(Place {
        xy: obj.centroid,
        yaw: obj.orientation,
        object: Some(obj_index),
    })
}

/// Resolve the place a stationary phase is bound to, if any.
fn phase_place(
    therblig: Therblig,
    template: &TaskTemplate,
    scene: &SceneDescriptor,
    home: [f64; 2],
) -> Result<Option<Place>, GenError> {
    let place = match therblig {
        Therblig::Grasp => Some(role_place(scene, template.waypoints.grasp_role, template)?),
        Therblig::Use => match template.waypoints.use_role {
            Some(role) => Some(role_place(scene, role, template)?),
            None => None,
        },
        Therblig::Release => Some(role_place(scene, template.waypoints.release_role, template)?),
        Therblig::Rest => Some(Place {
            xy: home,
            yaw: 0.0,
            object: None,
        }),
        _ => None,
    };
    Ok(place)
}

/// Walk the grammar once, resolving each transport's destination as the
/// next phase with a bound place, and each stationary phase as a hold.
fn plan_choreography(
    template: &TaskTemplate,
    scene: &SceneDescriptor,
) -> Result<Choreography, GenError> {
    let home = home_position(&scene.workspace);
    let phases = &template.grammar;
    let mut segments = Vec::with_capacity(phases.len());
    let mut position = home;
    let mut yaw = 0.0;

    for (i, p) in phases.iter().enumerate() {
        if is_transport(p.therblig) {
            // destination: first downstream phase that is pinned somewhere
            let mut destination = Place {
                xy: position,
                yaw,
                object: None,
            };
            for q in &phases[i + 1..] {
                if is_transport(q.therblig) {
                    break; // back-to-back transports each need their own scan stop
                }
                if let Some(place) = phase_place(q.therblig, template, scene, home)? {
                    destination = place;
                    break;
                }
            }
            segments.push(PhasePath {
                from: position,
                to: destination.xy,
                yaw_from: yaw,
                yaw_to: destination.yaw,
                object: None,
            });
            position = destination.xy;
            yaw = destination.yaw;
        } else {
            let place = phase_place(p.therblig, template, scene, home)?;
            segments.push(PhasePath {
                from: position,
                to: position,
                yaw_from: yaw,
                yaw_to: yaw,
                object: place.and_then(|pl| pl.object),
            });
        }
    }
    Ok(Choreography { segments })
}

/// Draw phase durations summing exactly to `total`.
fn sample_durations(
    template: &TaskTemplate,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, GenError> {
    let (min, max) = template.duration_bounds();
    if total < min || total > max {
        return Err(GenError::InfeasibleDuration {
            template: template.name.clone(),
            total,
            min,
            max,
        });
    }
    let mut durations: Vec<usize> = template
        .grammar
        .iter()
        .map(|p| rng.random_range(p.min_steps..=p.max_steps))
        .collect();
    let mut diff = total as i64 - durations.iter().sum::<usize>() as i64;
    while diff != 0 {
        for (i, p) in template.grammar.iter().enumerate() {
            if diff > 0 && durations[i] < p.max_steps {
                durations[i] += 1;
                diff -= 1;
            } else if diff < 0 && durations[i] > p.min_steps {
                durations[i] -= 1;
                diff += 1;
            }
            if diff == 0 {
                break;
            }
        }
    }
    Ok(durations)
}

/// Generate one labeled demonstration over `scene`.
pub fn generate_demo(
    template: &TaskTemplate,
    scene: &SceneDescriptor,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<GeneratedDemo, GenError> {
    template.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.duration_steps;
    let rate = config.sample_rate_hz;

    let durations = sample_durations(template, n, &mut rng)?;
    let choreo = plan_choreography(template, scene)?;
    let phases = &template.grammar;

    // phase boundaries: starts[i]..starts[i+1]
    let mut starts = Vec::with_capacity(phases.len() + 1);
    let mut acc = 0;
    for d in &durations {
        starts.push(acc);
        acc += d;
    }
    starts.push(acc);

    // grip interval: grasp midpoint to release midpoint
    let grasp_idx = phases.iter().position(|p| p.therblig == Therblig::Grasp);
    let release_idx = phases.iter().position(|p| p.therblig == Therblig::Release);
    let grip_span = match (grasp_idx, release_idx) {
        (Some(g), Some(r)) => Some((
            (starts[g] + starts[g + 1]) / 2,
            (starts[r] + starts[r + 1]) / 2,
        )),
        _ => None,
    };

    // per-demo force drift direction
    let drift: [f64; 3] = [
        rng.random_range(-1.0..1.0) * config.force_drift_rate,
        rng.random_range(-1.0..1.0) * config.force_drift_rate,
        rng.random_range(-1.0..1.0) * config.force_drift_rate,
    ];

    // clean per-step pose and wrench
    let mut clean_xy = vec![[0.0f64; 2]; n];
    let mut clean_yaw = vec![0.0f64; n];
    let mut clean_force = vec![[0.0f64; 3]; n];
    let mut clean_torque = vec![[0.0f64; 3]; n];
    let mut norm_load = vec![0.0f64; n]; // 0..1 grip force profile

    for (i, p) in phases.iter().enumerate() {
        let (t0, t1) = (starts[i], starts[i + 1]);
        let steps = (t1 - t0) as f64;
        let path = choreo.segments[i];
        for t in t0..t1 {
            let tau = (t - t0) as f64 / steps;
            let s = min_jerk(tau);
            let mut xy = [
                path.from[0] + (path.to[0] - path.from[0]) * s,
                path.from[1] + (path.to[1] - path.from[1]) * s,
            ];
            let yaw = path.yaw_from + (path.yaw_to - path.yaw_from) * s;
            let mut force = [0.0f64; 3];
            let mut torque = [0.0f64; 3];

            match p.therblig {
                Therblig::TransportEmpty | Therblig::TransportLoaded => {
                    // inertial reaction to the minimum-jerk acceleration
                    let a = min_jerk_accel(tau) / (steps / rate).powi(2);
                    force[0] -= CARRY_MASS * (path.to[0] - path.from[0]) * a;
                    force[1] -= CARRY_MASS * (path.to[1] - path.from[1]) * a;
                }
                Therblig::Grasp => {
                    norm_load[t] = smoothstep(tau);
                    force[0] += GRIP_BUMP_N * (PI * tau).sin();
                }
                Therblig::Release => {
                    norm_load[t] = 1.0 - smoothstep(tau);
                    force[0] += GRIP_BUMP_N * (PI * tau).sin();
                }
                Therblig::Use => {
                    let osc = template.use_amplitude
                        * (2.0 * PI * template.use_frequency * (t - t0) as f64 / rate).sin();
                    let (sin_o, cos_o) = path.yaw_from.sin_cos();
                    force[0] += osc * cos_o;
                    force[1] += osc * sin_o;
                    force[2] -= PRESS_N;
                    torque[2] += 0.25 * osc;
                    xy[0] += USE_WIGGLE_M * cos_o * (2.0 * PI * template.use_frequency * (t - t0) as f64 / rate).sin();
                    xy[1] += USE_WIGGLE_M * sin_o * (2.0 * PI * template.use_frequency * (t - t0) as f64 / rate).sin();
                }
                Therblig::Rest | Therblig::Delay => {}
            }

            // the held load spans phases between the grasp and release ramps
            if norm_load[t] == 0.0 {
                if let Some((open, close)) = grip_span {
                    if t >= open && t < close && !matches!(p.therblig, Therblig::Grasp | Therblig::Release) {
                        norm_load[t] = 1.0;
                    }
                }
            }
            force[2] -= LOAD_N * norm_load[t];
            force[0] += drift[0] * t as f64;
            force[1] += drift[1] * t as f64;
            force[2] += drift[2] * t as f64;
            torque[0] += 0.1 * drift[0] * t as f64;
            torque[1] += 0.1 * drift[1] * t as f64;
            torque[2] += 0.1 * drift[2] * t as f64;

            clean_xy[t] = xy;
            clean_yaw[t] = yaw;
            clean_force[t] = force;
            clean_torque[t] = torque;
        }
    }

    // gripper schedule from the load profile
    let gripper: Vec<bool> = (0..n).map(|t| norm_load[t] >= 0.5).collect();

    // anchors from the clean path at true phase midpoints
    let mut anchors = Vec::new();
    for (i, p) in phases.iter().enumerate() {
        if matches!(p.therblig, Therblig::Grasp | Therblig::Use | Therblig::Release) {
            let step = (starts[i] + starts[i + 1]) / 2;
            let object_id = choreo.segments[i]
                .object
                .map(|k| scene.objects[k].id.clone())
                .unwrap_or_default();
            anchors.push(AnchorTruth {
                therblig: p.therblig,
                step,
                xy: clean_xy[step],
                object_id,
            });
        }
    }

    // noisy states: smooth pose noise, white sensor noise elsewhere
    let force_noise = Normal::new(0.0, config.sigma_force.max(f64::MIN_POSITIVE)).expect("sigma");
    let joint_noise = Normal::new(0.0, (0.5 * config.sigma_state).max(f64::MIN_POSITIVE)).expect("sigma");
    let zero_state = config.sigma_state == 0.0;
    let zero_force = config.sigma_force == 0.0;
    let mut pose_noise = SmoothNoise::new(config.sigma_state, &mut rng);

    let mut states = Vec::with_capacity(n);
    let mut prev_q: Option<[f64; 7]> = None;
    for t in 0..n {
        let wobble = pose_noise.step(&mut rng);
        let pose = [
            clean_xy[t][0] + wobble[0],
            clean_xy[t][1] + wobble[1],
            EE_HEIGHT + wobble[2],
            EE_ROLL + wobble[3],
            EE_PITCH + wobble[4],
            clean_yaw[t] + wobble[5],
        ];
        let mut q = SyntheticArm::joint_angles(&pose);
        if !zero_state {
            for qi in q.iter_mut() {
                *qi += joint_noise.sample(&mut rng);
            }
        }
        let qd = match prev_q {
            Some(prev) => SyntheticArm::joint_speeds(&prev, &q, rate),
            None => [0.0; 7],
        };
        prev_q = Some(q);

        let mut force = clean_force[t];
        let mut torque = clean_torque[t];
        for k in 0..3 {
            if !zero_force {
                force[k] += force_noise.sample(&mut rng);
                torque[k] += 0.15 * force_noise.sample(&mut rng);
            }
        }

        states.push(RobotState {
            joint_angles: q,
            joint_speeds: qd,
            ee_position: [pose[0], pose[1], pose[2]],
            ee_orientation: [pose[3], pose[4], pose[5]],
            force,
            torque,
        });
    }

    // labels from jittered phase boundaries
    let mut boundaries = starts.clone();
    let j = config.label_jitter_steps as i64;
    if j > 0 {
        for b in boundaries.iter_mut().take(phases.len()).skip(1) {
            let shift = rng.random_range(-j..=j);
            *b = (*b as i64 + shift) as usize;
        }
        // keep boundaries strictly increasing
        for i in 1..boundaries.len() - 1 {
            let lo = boundaries[i - 1] + 1;
            let hi = boundaries[i + 1].saturating_sub(1);
            boundaries[i] = boundaries[i].clamp(lo, hi.max(lo));
        }
    }
    let mut labels = Vec::with_capacity(n);
    for (i, p) in phases.iter().enumerate() {
        for _ in boundaries[i]..boundaries[i + 1] {
            labels.push(p.therblig);
        }
    }
    debug_assert_eq!(labels.len(), n);

    let demo = Demonstration {
        states,
        sample_rate_hz: rate,
        task_id: template.name.clone(),
        gripper,
    };
    Ok(GeneratedDemo {
        demo,
        labels: LabelSequence::new(labels),
        anchors,
    })
}
