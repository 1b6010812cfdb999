//! Therblig-based task backbone: segmentation, transfer, and correction.
//!
//! A robot task trajectory decomposes into seven elemental motions
//! ("therbligs"): Rest, Transport Empty, Delay, Grasp, Transport Loaded,
//! Use, Release. This crate provides everything needed to learn that
//! decomposition from state trajectories and to reuse it:
//!
//! - [`domain`] — the shared vocabulary: therbligs, robot states,
//!   demonstrations, label sequences, segments, and scene descriptors.
//! - [`numeric`] — a small reverse-mode autodiff engine (dense ops, LSTM
//!   cell, multi-head attention, losses, Adam) generic over the scalar
//!   type; f32 for training, f64 for gradient checking.
//! - [`datagen`] — a seeded synthetic generator of labeled demonstrations
//!   and scenes, with CSV/JSON dataset files and split manifests.
//! - [`mgsf`] — the gated BiLSTM/Transformer fusion segmenter, its
//!   ablation variants, training loop, and metric suite.
//! - [`actionreg`] — anchor extraction, scene-object matching, SE(2)
//!   transform estimation, and trajectory warping to new layouts.
//! - [`lapvc`] — anchor-point correction policies (passthrough, snap,
//!   external endpoint with a deterministic mock) and alignment scoring.
//! - [`harness`] — end-to-end transfer trials, success suites, and
//!   report emission.

pub mod actionreg;
pub mod datagen;
pub mod domain;
pub mod harness;
pub mod lapvc;
pub mod mgsf;
pub mod numeric;

/// Default training scalar.
pub type Real = f32;

/// Tensor in the default (training) precision.
pub type Tensor32 = numeric::Tensor<f32>;
/// Tensor in gradient-check precision.
pub type Tensor64 = numeric::Tensor<f64>;

/// Autodiff tape in the default (training) precision.
pub type Tape32 = numeric::Tape<f32>;
/// Autodiff tape in gradient-check precision.
pub type Tape64 = numeric::Tape<f64>;
