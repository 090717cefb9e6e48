//! Algorithmic core of a lidar-visual neural field reconstruction pipeline.
//!
//! Everything here works on in-memory data and needs only `alloc`; file
//! formats, the command line and other IO live in the `lidarfield` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod camera;
pub mod dataset;
pub mod eval;
pub mod error;
pub mod field;
pub mod image;
pub mod loss;
pub mod recon;
pub mod render;
pub mod synth;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
