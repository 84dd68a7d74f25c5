//! Workbench for studying ASR-pretraining transfer in low-resource
//! speech-to-text translation.

pub mod analysis;
pub mod audio;
pub mod autograd;
pub mod error;
pub mod eval;
pub mod model;
pub mod probing;
pub mod text;
pub mod train;
pub mod workbench;

pub use error::{Error, Result};
