//! Scoring, curation and preference-loss tooling for videos in which an
//! animal moves from one side of a static object to another.

pub mod curation;
pub mod denoiser;
pub mod error;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod prompts;
pub mod synth;
pub mod toy;
pub mod trajectory;

pub use error::{Error, Result};
