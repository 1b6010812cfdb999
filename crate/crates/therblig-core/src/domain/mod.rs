//! Core vocabulary: therbligs, robot states, demonstrations, labels,
//! segments, scenes, and the conversions between label and segment form.
//!
//! Everything in this module is an immutable value object after
//! construction and safe to share across threads.

mod arm;
mod scene;

pub use arm::SyntheticArm;
pub use scene::{Rect, SceneDescriptor, SceneObject};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of scalar features per robot state row.
pub const FEATURE_DIM: usize = 26;

/// Number of therblig classes.
pub const NUM_THERBLIGS: usize = 7;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("therblig code {code} out of range 0..7 at index {index}")]
    BadCode { code: u8, index: usize },
    #[error("label sequence is empty")]
    EmptyLabels,
    #[error("segments do not tile [0, {expected}): {detail}")]
    BadSegments { expected: usize, detail: String },
    #[error("robot state row has {got} features, expected {expected}")]
    BadWidth { got: usize, expected: usize },
    #[error("{0}")]
    InvalidScene(String),
}

/// One of the seven elemental motions a task decomposes into.
///
/// The discriminants are the stable wire codes 0..6, in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Therblig {
    Rest = 0,
    TransportEmpty = 1,
    Delay = 2,
    Grasp = 3,
    TransportLoaded = 4,
    Use = 5,
    Release = 6,
}

impl Therblig {
    pub const ALL: [Therblig; NUM_THERBLIGS] = [
        Therblig::Rest,
        Therblig::TransportEmpty,
        Therblig::Delay,
        Therblig::Grasp,
        Therblig::TransportLoaded,
        Therblig::Use,
        Therblig::Release,
    ];

    /// Stable integer code, 0..6.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Therblig> {
        Therblig::ALL.get(code as usize).copied()
    }

    /// Short label used in figures and compact reports.
    pub fn abbrev(self) -> &'static str {
        match self {
            Therblig::Rest => "R",
            Therblig::TransportEmpty => "TE",
            Therblig::Delay => "D",
            Therblig::Grasp => "G",
            Therblig::TransportLoaded => "TL",
            Therblig::Use => "U",
            Therblig::Release => "Rel",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Therblig::Rest => "Rest",
            Therblig::TransportEmpty => "TransportEmpty",
            Therblig::Delay => "Delay",
            Therblig::Grasp => "Grasp",
            Therblig::TransportLoaded => "TransportLoaded",
            Therblig::Use => "Use",
            Therblig::Release => "Release",
        }
    }
}

impl std::fmt::Display for Therblig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One sampled robot state: 26 scalar features in a fixed column order.
///
/// Column order (the canonical dataset layout): 7 joint angles, 7 joint
/// speeds, end-effector position (x, y, z), end-effector orientation
/// (roll, pitch, yaw), force (fx, fy, fz), torque (tx, ty, tz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub joint_angles: [f64; 7],
    pub joint_speeds: [f64; 7],
    pub ee_position: [f64; 3],
    pub ee_orientation: [f64; 3],
    pub force: [f64; 3],
    pub torque: [f64; 3],
}

impl RobotState {
    pub fn zeros() -> RobotState {
        RobotState {
            joint_angles: [0.0; 7],
            joint_speeds: [0.0; 7],
            ee_position: [0.0; 3],
            ee_orientation: [0.0; 3],
            force: [0.0; 3],
            torque: [0.0; 3],
        }
    }

    /// Flatten into the canonical 26-column order.
    pub fn flatten(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..7].copy_from_slice(&self.joint_angles);
        out[7..14].copy_from_slice(&self.joint_speeds);
        out[14..17].copy_from_slice(&self.ee_position);
        out[17..20].copy_from_slice(&self.ee_orientation);
        out[20..23].copy_from_slice(&self.force);
        out[23..26].copy_from_slice(&self.torque);
        out
    }

    pub fn from_flat(row: &[f64]) -> Result<RobotState, DomainError> {
        if row.len() != FEATURE_DIM {
            return Err(DomainError::BadWidth {
                got: row.len(),
                expected: FEATURE_DIM,
            });
        }
        let mut s = RobotState::zeros();
        s.joint_angles.copy_from_slice(&row[..7]);
        s.joint_speeds.copy_from_slice(&row[7..14]);
        s.ee_position.copy_from_slice(&row[14..17]);
        s.ee_orientation.copy_from_slice(&row[17..20]);
        s.force.copy_from_slice(&row[20..23]);
        s.torque.copy_from_slice(&row[23..26]);
        Ok(s)
    }

    /// End-effector xy, the plane all registration happens in.
    pub fn ee_xy(&self) -> [f64; 2] {
        [self.ee_position[0], self.ee_position[1]]
    }

    pub fn yaw(&self) -> f64 {
        self.ee_orientation[2]
    }
}

/// A recorded state trajectory: the unit of all learning and transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub states: Vec<RobotState>,
    pub sample_rate_hz: f64,
    pub task_id: String,
    /// Gripper closed flags, one per timestep. Carried alongside the 26
    /// features: replay needs it, the feature layout does not include it.
    pub gripper: Vec<bool>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Row-major n x 26 feature matrix in the canonical column order.
    pub fn feature_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.states.len() * FEATURE_DIM);
        for s in &self.states {
            out.extend_from_slice(&s.flatten());
        }
        out
    }
}

/// Per-timestep therblig labels, optionally with class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub labels: Vec<Therblig>,
    /// Per-step probability rows (length 7, sum 1 within 1e-6), when the
    /// labels came out of a model rather than an annotator.
    pub probabilities: Option<Vec<[f64; NUM_THERBLIGS]>>,
}

impl LabelSequence {
    pub fn new(labels: Vec<Therblig>) -> LabelSequence {
        LabelSequence {
            labels,
            probabilities: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.labels.iter().map(|t| t.code()).collect()
    }

    pub fn from_codes(codes: &[u8]) -> Result<LabelSequence, DomainError> {
        let labels = codes
            .iter()
            .enumerate()
            .map(|(index, &code)| {
                Therblig::from_code(code).ok_or(DomainError::BadCode { code, index })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LabelSequence::new(labels))
    }
}

/// A maximal run of one therblig: `[start, end)` timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TherbligSegment {
    pub therblig: Therblig,
    pub start: usize,
    pub end: usize,
}

impl TherbligSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Midpoint timestep, the registration point for anchor extraction.
    pub fn midpoint(&self) -> usize {
        self.start + (self.end - self.start) / 2
    }
}

/// One-hot encode a label sequence as an n x 7 row-major matrix.
pub fn one_hot(labels: &LabelSequence) -> Vec<[f64; NUM_THERBLIGS]> {
    labels
        .labels
        .iter()
        .map(|t| {
            let mut row = [0.0; NUM_THERBLIGS];
            row[t.code() as usize] = 1.0;
            row
        })
        .collect()
}

/// Inverse of [`one_hot`]: argmax per row.
pub fn decode_one_hot(rows: &[[f64; NUM_THERBLIGS]]) -> LabelSequence {
    let labels = rows
        .iter()
        .map(|row| {
            let mut best = 0usize;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            Therblig::ALL[best]
        })
        .collect();
    LabelSequence::new(labels)
}

/// Run-length view of a label sequence: maximal, contiguous, covering
/// segments with distinct adjacent therbligs.
pub fn segments_from_labels(labels: &LabelSequence) -> Result<Vec<TherbligSegment>, DomainError> {
    if labels.is_empty() {
        return Err(DomainError::EmptyLabels);
    }
    let mut segments = Vec::new();
    let mut start = 0usize;
    for t in 1..=labels.len() {
        if t == labels.len() || labels.labels[t] != labels.labels[start] {
            segments.push(TherbligSegment {
                therblig: labels.labels[start],
                start,
                end: t,
            });
            start = t;
        }
    }
    Ok(segments)
}

/// Expand segments back into a per-timestep label sequence.
///
/// Errors if the segments do not tile `[0, n)` contiguously.
pub fn labels_from_segments(segments: &[TherbligSegment]) -> Result<LabelSequence, DomainError> {
    let n = segments.last().map(|s| s.end).unwrap_or(0);
    if segments.is_empty() {
        return Err(DomainError::EmptyLabels);
    }
    let mut cursor = 0usize;
    let mut labels = Vec::with_capacity(n);
    for seg in segments {
        if seg.start != cursor || seg.is_empty() {
            return Err(DomainError::BadSegments {
                expected: n,
                detail: format!(
                    "segment ({}, {}..{}) does not continue from {}",
                    seg.therblig, seg.start, seg.end, cursor
                ),
            });
        }
        labels.extend(std::iter::repeat(seg.therblig).take(seg.len()));
        cursor = seg.end;
    }
    Ok(LabelSequence::new(labels))
}

/// A single rule violation found while validating input data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    TooShort { len: usize },
    NonFinite { timestep: usize, feature: usize },
    BadWidth { timestep: usize, width: usize },
    GripperLength { states: usize, gripper: usize },
    BadSampleRate { rate: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooShort { len } => write!(f, "demonstration too short: {len} < 2 steps"),
            Violation::NonFinite { timestep, feature } => {
                write!(f, "non-finite value at (t={timestep}, feature={feature})")
            }
            Violation::BadWidth { timestep, width } => {
                write!(f, "row t={timestep} has {width} features, expected {FEATURE_DIM}")
            }
            Violation::GripperLength { states, gripper } => {
                write!(f, "gripper length {gripper} != state count {states}")
            }
            Violation::BadSampleRate { rate } => write!(f, "sample rate {rate} must be > 0"),
        }
    }
}

/// Outcome of validating a demonstration: every violation, not just the
/// first. `is_ok()` means the input is usable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Validate an in-memory demonstration. Always returns a report.
pub fn validate_demonstration(demo: &Demonstration) -> ValidationReport {
    let mut report = ValidationReport::default();
    if demo.len() < 2 {
        report.violations.push(Violation::TooShort { len: demo.len() });
    }
    if !(demo.sample_rate_hz > 0.0) {
        report.violations.push(Violation::BadSampleRate {
            rate: demo.sample_rate_hz,
        });
    }
    if demo.gripper.len() != demo.states.len() {
        report.violations.push(Violation::GripperLength {
            states: demo.states.len(),
            gripper: demo.gripper.len(),
        });
    }
    for (t, state) in demo.states.iter().enumerate() {
        for (k, v) in state.flatten().iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(Violation::NonFinite {
                    timestep: t,
                    feature: k,
                });
            }
        }
    }
    report
}

/// Validate raw feature rows before they are shaped into states; catches
/// width errors that `RobotState` cannot represent.
pub fn validate_feature_rows(rows: &[Vec<f64>]) -> ValidationReport {
    let mut report = ValidationReport::default();
    if rows.len() < 2 {
        report.violations.push(Violation::TooShort { len: rows.len() });
    }
    for (t, row) in rows.iter().enumerate() {
        if row.len() != FEATURE_DIM {
            report.violations.push(Violation::BadWidth {
                timestep: t,
                width: row.len(),
            });
            continue;
        }
        for (k, v) in row.iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(Violation::NonFinite {
                    timestep: t,
                    feature: k,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn therblig_codes_round_trip() {
        for t in Therblig::ALL {
            assert_eq!(Therblig::from_code(t.code()), Some(t));
        }
        assert_eq!(Therblig::from_code(7), None);
        // Pin the wire order.
        assert_eq!(Therblig::Rest.code(), 0);
        assert_eq!(Therblig::TransportEmpty.code(), 1);
        assert_eq!(Therblig::Delay.code(), 2);
        assert_eq!(Therblig::Grasp.code(), 3);
        assert_eq!(Therblig::TransportLoaded.code(), 4);
        assert_eq!(Therblig::Use.code(), 5);
        assert_eq!(Therblig::Release.code(), 6);
    }

    #[test]
    fn one_hot_grasp() {
        let l = LabelSequence::new(vec![Therblig::Grasp]);
        let rows = one_hot(&l);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][3], 1.0);
        assert_eq!(rows[0].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn one_hot_rest_rows_identical() {
        let l = LabelSequence::new(vec![Therblig::Rest, Therblig::Rest]);
        let rows = one_hot(&l);
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[0][0], 1.0);
    }

    #[test]
    fn segments_basic_runs() {
        use Therblig::*;
        let l = LabelSequence::new(vec![Rest, Rest, TransportEmpty, TransportEmpty, Grasp]);
        let segs = segments_from_labels(&l).unwrap();
        assert_eq!(
            segs,
            vec![
                TherbligSegment { therblig: Rest, start: 0, end: 2 },
                TherbligSegment { therblig: TransportEmpty, start: 2, end: 4 },
                TherbligSegment { therblig: Grasp, start: 4, end: 5 },
            ]
        );
    }

    #[test]
    fn segments_all_rest() {
        let l = LabelSequence::new(vec![Therblig::Rest; 600]);
        let segs = segments_from_labels(&l).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (0, 600));
    }

    #[test]
    fn segments_empty_errors() {
        let l = LabelSequence::new(vec![]);
        assert!(segments_from_labels(&l).is_err());
    }

    #[test]
    fn validate_flags_nan_with_position() {
        let mut states = vec![RobotState::zeros(); 30];
        states[17].ee_orientation[0] = f64::NAN; // feature index 17
        let demo = Demonstration {
            gripper: vec![false; 30],
            states,
            sample_rate_hz: 10.0,
            task_id: "t".into(),
        };
        let report = validate_demonstration(&demo);
        assert_eq!(
            report.violations,
            vec![Violation::NonFinite { timestep: 17, feature: 17 }]
        );
    }

    #[test]
    fn validate_reports_every_violation() {
        let demo = Demonstration {
            states: vec![RobotState {
                joint_angles: [f64::INFINITY; 7],
                ..RobotState::zeros()
            }],
            sample_rate_hz: 0.0,
            task_id: "t".into(),
            gripper: vec![],
        };
        let report = validate_demonstration(&demo);
        assert!(report.violations.len() >= 9); // short + rate + gripper + 7 infs
        assert!(!report.is_ok());
    }

    #[test]
    fn validate_rows_flags_width() {
        let rows = vec![vec![0.0; 25], vec![0.0; 26]];
        let report = validate_feature_rows(&rows);
        assert_eq!(
            report.violations,
            vec![Violation::BadWidth { timestep: 0, width: 25 }]
        );
    }

    #[test]
    fn flatten_round_trip() {
        let mut s = RobotState::zeros();
        s.joint_angles[3] = 1.5;
        s.ee_position = [0.1, 0.2, 0.3];
        s.torque = [0.4, 0.5, 0.6];
        let flat = s.flatten();
        assert_eq!(flat.len(), FEATURE_DIM);
        assert_eq!(RobotState::from_flat(&flat).unwrap(), s);
        assert!(matches!(
            RobotState::from_flat(&flat[..25]),
            Err(DomainError::BadWidth { got: 25, .. })
        ));
    }

    fn arb_labels() -> impl Strategy<Value = Vec<Therblig>> {
        proptest::collection::vec(0u8..7, 1..200)
            .prop_map(|codes| codes.iter().map(|&c| Therblig::from_code(c).unwrap()).collect())
    }

    proptest! {
        #[test]
        fn segment_round_trip_is_identity(labels in arb_labels()) {
            let l = LabelSequence::new(labels);
            let segs = segments_from_labels(&l).unwrap();
            let back = labels_from_segments(&segs).unwrap();
            prop_assert_eq!(back.labels, l.labels);
            // maximal runs: adjacent segments differ
            for w in segs.windows(2) {
                prop_assert_ne!(w[0].therblig, w[1].therblig);
            }
        }

        #[test]
        fn one_hot_round_trip_is_identity(labels in arb_labels()) {
            let l = LabelSequence::new(labels);
            let rows = one_hot(&l);
            for row in &rows {
                prop_assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
                prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
            }
            let back = decode_one_hot(&rows);
            prop_assert_eq!(back.labels, l.labels);
        }
    }
}
