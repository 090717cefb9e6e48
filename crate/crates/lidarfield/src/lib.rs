//! File formats, dataset layout and command-line tools around
//! [`lidarfield_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod images;
pub mod pipeline;
pub mod ply;
pub mod trajectory_io;

pub use error::{Error, Result};
pub use lidarfield_core as core;
