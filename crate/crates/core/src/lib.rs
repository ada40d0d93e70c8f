//! Aspect sentiment triplet extraction by boundary-driven table filling.
//!
//! A sentence is encoded into word states, every ordered word pair becomes a
//! cell of a relation table, a residual stack of dilated convolutions refines
//! the table, and triplets are read off as rectangles whose upper-left and
//! lower-right corners are tagged `S` and `E`. A margin loss aligns the
//! sentence state with the pooled table during training.
//!
//! Everything, including the autodiff engine in [`tensor`], is implemented in
//! this crate. See the `examples/` directory for one runnable program per
//! capability.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod mmcnn;
pub mod model;
pub mod nn;
pub mod region;
pub mod synthetic;
pub mod table;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
