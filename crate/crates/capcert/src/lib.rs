//! Std companion to `capcert-core`: file formats, corpus loaders, the
//! synthetic world, slot-omission injection and the experiment harness
//! behind the `capcert` CLI.

pub mod error;
pub mod formats;
pub mod harness;
pub mod multiwoz;
pub mod omission;
pub mod synth;

pub use capcert_core as core;
pub use error::{Error, Result};
