//! Fixed synthetic arm map: joint channels from end-effector pose.
//!
//! Joint angles are a clipped affine function of the pose,
//! `q = clip(A * [x, y, z, roll, pitch, yaw] + b)`, with `A` and `b`
//! fixed constants. This produces correlated, plausible joint channels
//! without solving real kinematics; the same map is used when a warped
//! trajectory needs its joint channels recomputed, so generated and
//! transferred demonstrations stay consistent.

/// Joint-angle clip limit in radians.
pub const JOINT_LIMIT: f64 = 2.8;

/// The fixed 7x6 pose-to-joint mixing matrix.
pub const ARM_A: [[f64; 6]; 7] = [
    [0.90, 0.20, 0.00, 0.00, 0.00, 0.10],
    [-0.30, 0.80, 0.10, 0.00, 0.00, 0.00],
    [0.20, -0.40, 0.90, 0.00, 0.10, 0.00],
    [0.50, 0.50, -0.60, 0.20, 0.00, 0.00],
    [-0.70, 0.30, 0.20, 0.00, 0.30, 0.00],
    [0.10, -0.60, 0.40, 0.10, 0.00, 0.20],
    [0.40, 0.10, -0.20, 0.00, 0.00, 0.90],
];

/// The fixed joint offsets.
pub const ARM_B: [f64; 7] = [0.0, -0.5, 0.3, -1.2, 0.8, 0.4, 0.0];

/// Deterministic pose-to-joint map shared by generation and warping.
pub struct SyntheticArm;

impl SyntheticArm {
    /// Joint angles for a pose `[x, y, z, roll, pitch, yaw]`.
    pub fn joint_angles(pose: &[f64; 6]) -> [f64; 7] {
        let mut q = [0.0; 7];
        for (i, row) in ARM_A.iter().enumerate() {
            let mut acc = ARM_B[i];
            for (j, a) in row.iter().enumerate() {
                acc += a * pose[j];
            }
            q[i] = acc.clamp(-JOINT_LIMIT, JOINT_LIMIT);
        }
        q
    }

    /// Backward finite-difference joint speeds. The first step gets zeros.
    pub fn joint_speeds(prev: &[f64; 7], current: &[f64; 7], sample_rate_hz: f64) -> [f64; 7] {
        let mut qd = [0.0; 7];
        for i in 0..7 {
            qd[i] = (current[i] - prev[i]) * sample_rate_hz;
        }
        qd
    }
}
