//! Core library for gridguard, a desk-scale electricity-theft detection
//! engine for smart-meter fleets.
//!
//! The crate is organized as a pipeline of independent stages:
//!
//! * [`telemetry`] — CSV ingest, validation, 15-minute resampling, imputation
//! * [`synthgrid`] — seeded synthetic grids, telemetry, and theft injection
//! * [`features`] — supply/demand, rolling-window, and environmental features
//! * [`labeler`] — four-condition rule labeling with reason codes
//! * [`numeric`] — dense tensor kernel with manual gradients
//! * [`detectors`] — LSTM / TCN / autoencoder anomaly trio with 2-of-3 voting
//! * [`forest`] — CART trees, random forest, gradient boosting
//! * [`gridgraph`] — transformer–meter graph and GCN node scoring
//! * [`nilm`] — cyclic-appliance disaggregation from aggregate power
//! * [`fusion`] — unified risk from time-series, classifier, and graph scores
//! * [`metrics`] — confusion-matrix metrics and rank-based ROC-AUC
//! * [`pipeline`] — end-to-end orchestration from a single seeded config
//! * [`report`] — CSV/JSON/SVG report emission from a completed run

pub mod detectors;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod gridgraph;
pub mod labeler;
pub mod metrics;
pub mod nilm;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod seeds;
pub mod synthgrid;
pub mod telemetry;
