//! Cough-based acoustic screening pipeline.
//!
//! The crate covers the full desk-scale path from raw audio to a trained
//! classifier and its evaluation:
//!
//! - [`audio_io`]: WAV parsing/writing, resampling, dataset manifests and
//!   subject-disjoint splits
//! - [`preprocess`]: short-time-energy cough segmentation
//! - [`features`]: log-mel and log-energy frontends over a radix-2 FFT
//! - [`augment`]: seeded waveform shifting and feature masking
//! - [`model`]: tape-based autodiff, the compact TDNN encoder with attentive
//!   statistics pooling, the sigmoid classifier, and embedding fusion
//! - [`train_eval`]: BCE training with Adam and warm-restart scheduling,
//!   ROC-AUC evaluation, and the scenario/ablation harness
//! - [`synth`]: synthetic labeled corpora with exact burst ground truth

pub mod audio_io;
pub mod augment;
pub mod features;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod train_eval;
