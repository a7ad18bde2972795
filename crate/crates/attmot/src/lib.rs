//! attmot — noise-robust unsupervised multi-object tracking on synthetic
//! video benchmarks.
//!
//! Pipeline: synthetic MOT video generation with ground truth, an
//! attention-U-Net frame encoder, recurrent tracker arrays emitting
//! renderable mid-level object states, spatial-transformer layer compositing
//! trained by frame reconstruction, and a CLEAR-MOT / identity metrics
//! engine for evaluation under noise and object-scrambling corruptions.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod params;
pub mod plot;
pub mod renderer;
pub mod rng;
pub mod tracker;

pub use error::{AttmotError, Result};
