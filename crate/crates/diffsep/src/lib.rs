//! Diffusion-based vocal source separation in the waveform domain.
//!
//! The crate trains and runs a conditioned generative separator: a 1-D U-Net
//! generator learns the velocity objective of a trigonometric diffusion
//! process, a coupled conditioner network summarizes the input mixture into
//! multi-resolution embeddings, and a DDIM sampler turns Gaussian noise into
//! the separated vocal, optionally refining it with high-pass-filtered
//! stochastic noise. Everything runs on the CPU; a synthetic-mixture
//! generator and SDR/SIR metrics make the whole pipeline testable end to end
//! without external data.
//!
//! Module map:
//!
//! - [`audio`] — the multichannel sample buffer shared by every stage
//! - [`schedule`] — noise schedules and the closed-form diffusion algebra
//! - [`dsp`] — Butterworth high-pass design, normalized filtered noise,
//!   overlap-add chunking
//! - [`io`] — WAV files and paired-stem dataset scanning
//! - [`tensor`] — minimal reverse-mode autodiff over `(batch, channels,
//!   time)` tensors
//! - [`nn`] — generator and conditioner networks, oracle denoisers, model
//!   serialization
//! - [`sampler`] — deterministic and stochastic DDIM sampling
//! - [`train`] — losses, AdamW, data augmentation, the training loop
//! - [`metrics`] — SDR/SIR and dataset evaluation
//! - [`synth`] — deterministic synthetic mixtures for desk-scale runs

pub mod audio;
pub mod dsp;
mod error;
pub mod io;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod synth;
pub mod tensor;
pub mod train;
#[cfg(test)]
pub(crate) mod testutil;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
