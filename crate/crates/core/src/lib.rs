//! Interpretable state variables for football tracking data.
//!
//! The pipeline runs from synchronized tracking/event files to rule-based
//! spatiotemporal features (velocity-aware dominance regions, weighted space
//! scores, arrival and interception times), a pass-success classifier built
//! on second-order gradient boosting, and exact per-prediction Shapley
//! attribution.
//!
//! Module map:
//!
//! * [`geometry`]: pitch conventions, field weight, goal distance/angle.
//! * [`dominance`]: arrival-time model, dominance grid, space scores, offside.
//! * [`ingest`]: tracking/event files, kickoff sync, attack sequences.
//! * [`synth`]: deterministic synthetic matches with a known success rule.
//! * [`features`]: off-ball/on-ball variables and the model-ready table.
//! * [`gbdt`]: boosted trees, metrics, stratified CV and grid search.
//! * [`explain`]: TreeSHAP, its brute-force oracle, importance summaries.
//! * [`render`]: SVG frames of the space score.
//! * [`config`], [`cli`]: run configuration and the command-line surface.

pub mod cli;
pub mod config;
pub mod dominance;
pub mod error;
pub mod explain;
pub mod features;
pub mod gbdt;
pub mod geometry;
pub mod ingest;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{PitchSpec, Point2, WeightParams};
