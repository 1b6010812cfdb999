//! Label prediction to segments: argmax, median smoothing, run-length.

use super::{MgsfError, MgsfModel};
use crate::domain::{
    segments_from_labels, Demonstration, LabelSequence, Therblig, TherbligSegment,
};

/// Median smoothing window; suppresses 1-2 step label flickers without
/// moving boundaries more than the generator's label jitter.
pub const SMOOTH_WINDOW: usize = 5;

/// Median-of-codes smoothing with edge replication.
pub fn median_smooth(labels: &LabelSequence, window: usize) -> LabelSequence {
    assert!(window % 2 == 1, "window must be odd");
    let n = labels.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0u8; window];
    for t in 0..n {
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = (t + k).saturating_sub(half).min(n.saturating_sub(1));
            *slot = labels.labels[idx].code();
        }
        buf.sort_unstable();
        out.push(Therblig::from_code(buf[half]).expect("codes stay in range"));
    }
    LabelSequence {
        labels: out,
        probabilities: labels.probabilities.clone(),
    }
}

/// Segment a demonstration with a trained model: argmax per timestep,
/// median smoothing, then run-length segmentation.
pub fn segment_demo(
    model: &MgsfModel<f32>,
    demo: &Demonstration,
) -> Result<(LabelSequence, Vec<TherbligSegment>), MgsfError> {
    let probs = model.forward(demo)?;
    let labels: Vec<Therblig> = probs
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
    let raw = LabelSequence {
        labels,
        probabilities: Some(probs),
    };
    Ok(segment(&raw))
}

/// Smooth an already-predicted label sequence and cut it into segments.
pub fn segment(labels: &LabelSequence) -> (LabelSequence, Vec<TherbligSegment>) {
    let smoothed = median_smooth(labels, SMOOTH_WINDOW);
    let segments = segments_from_labels(&smoothed).expect("smoothed labels nonempty");
    (smoothed, segments)
}
