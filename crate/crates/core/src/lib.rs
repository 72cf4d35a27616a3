//! Two-stage offline handwritten character recognition.
//!
//! Stage one runs two sigmoid MLPs, one on 24 shadow features and one on a
//! 200-bin chain-code histogram, fuses their class scores with
//! accuracy-derived weights and gates the result on the relative margin
//! between the top scores. Samples that fail the gate are resolved in stage
//! two by 1-nearest-neighbour edit distance over corner-count strings
//! produced by a Harris detector with an extra diagonal variation term.

pub mod corners;
pub mod editdist;
pub mod ensemble;
mod error;
pub mod features;
pub mod mlp;
pub mod pgm;
pub mod pipeline;
pub mod preprocess;

pub use error::{Error, Result};
