//! Occupancy measurement from person-detection logs and its use in
//! occupancy-centric HVAC control.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`ingest`]: detection logs, ground truth, identity ground truth, weather.
//! - [`tracking`]: detection-only counting plus SORT, DeepSORT and ByteTrack
//!   style trackers over a shared Kalman/assignment core.
//! - [`refinement`]: confidence-gated LLM review of uncertain frames.
//! - [`metrics`]: counting errors, occupied/unoccupied scores, identity metrics.
//! - [`occupancy_signal`]: aggregation to control intervals and annual tiling.
//! - [`control_sim`]: zone model, receding-horizon MPC, schedule baseline,
//!   Fanger comfort and energy accounting.
//! - [`pipeline`]: reproducible experiment runs and run comparison.
//! - [`report`]: monthly SVG charts.

pub mod control_sim;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod occupancy_signal;
pub mod pipeline;
pub mod refinement;
pub mod report;
pub mod series;
pub mod tracking;

pub use error::{Error, Result};
