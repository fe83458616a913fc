//! Audio-driven talking-portrait animation in three trainable stages.
//!
//! 1. [`moda`] maps audio features and a subject template to mouth, eye, head-pose
//!    and torso motion in one forward pass.
//! 2. [`faco`] composes dense 478-point facial landmarks from the generated mouth
//!    and eye points.
//! 3. [`render`] turns projected landmarks, a reference image and a temporal
//!    encoding into frames.
//!
//! [`preprocess`] builds training records from detector outputs, [`metrics`] scores
//! results and [`pipeline`] wires the stages together for training and inference.

pub mod audio;
pub mod error;
pub mod faco;
pub mod geometry;
pub mod io;
pub mod landmarks;
pub mod metrics;
pub mod moda;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod render;
pub mod subject;
pub mod synth;

pub use error::{Error, Result};
