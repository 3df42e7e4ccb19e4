//! Prediction-based traffic anomaly detection.
//!
//! Tracked objects' future boxes are forecast by a recurrent encoder-decoder
//! conditioned on ego-motion; frames are scored by how well past forecasts
//! match what is observed and by how much overlapping forecasts disagree.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod scoring;
pub mod synth;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BBox32 = geometry::BBox<f32>;
pub type BBox64 = geometry::BBox<f64>;
pub type FlowField32 = features::FlowField<f32>;
pub type FlowField64 = features::FlowField<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
