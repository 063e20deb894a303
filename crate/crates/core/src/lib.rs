//! Readmission prediction from structured EHR fields and clinical notes.
//!
//! The pipeline encodes structured fields, vectorizes each note type with
//! TF-IDF and LDA topic distributions, fits one logistic regression per
//! modality, and fuses them by averaging their sigmoid outputs over whichever
//! modalities a patient actually has. A naive-concatenation baseline,
//! discriminative-index feature importance, and a k-fold c-statistic harness
//! sit alongside, plus a synthetic cohort generator for end-to-end runs.

pub mod classifier;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod explain;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod structured;
pub mod synth;
pub mod topicmodel;
pub mod vectorspace;
pub mod vocab;

pub use error::{Error, Result};
