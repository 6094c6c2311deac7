//! Artifact-augmented audio deepfake detection.
//!
//! The crate covers the whole desk-scale pipeline: clips are standardized
//! ([`audio_io`]), fake clips are perturbed with speaker-matched real audio
//! to produce artifact-fakes ([`artifact_gen`]), everything is turned into
//! mel features ([`spectral`]), and a small convolutional detector is trained
//! in three stages (baseline, artifact detector, fine-tune) and scored with
//! F1/EER/AUC ([`model`], [`metrics`]).

// Negated comparisons are how NaN gets rejected in range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact_gen;
pub mod audio_io;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};

// Book chapters run as doc tests so their examples stay compilable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/artifacts.md")]
    mod artifacts {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
