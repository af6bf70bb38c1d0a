//! Key-value cache for transformer KV state held in the memory of
//! a low-earth-orbit satellite constellation.

pub mod blockcodec;
pub mod error;
pub mod geometry;
pub mod index;
pub mod mapping;
pub mod protocol;
pub mod simnet;
pub mod store;
pub mod topology;

pub use error::{Error, Result};
