//! Core library for the explainable intoxication-detection assistant.
//!
//! The crate is organised around the data flow of the system:
//!
//! * [`features`] turns raw wearable/phone sensor records into labelled
//!   five-minute feature windows and preprocessed per-participant matrices.
//! * [`models`] trains decision trees, boosted ensembles and rule sets per
//!   participant and selects the best one on a chronological hold-out.
//! * [`xai`] explains a trained model with exact Shapley values, extracted
//!   rules, leaf-box counterfactuals and a BIC-scored causal graph, and
//!   renders every artifact to a chart spec plus a base64 PNG.
//! * [`affect`] classifies facial-emotion frames and text sentiment and fuses
//!   them into the tone that drives responses.
//! * [`prompt`] assembles tone directive, qualitative facts and chart images
//!   into a prompt bundle.
//! * [`stats`] holds the paired t-test machinery used to compare survey
//!   conditions.

pub mod affect;
pub mod chart;
pub mod features;
pub mod models;
pub mod prompt;
pub mod stats;
pub mod xai;

pub use features::{FeatureMatrix, Label};

