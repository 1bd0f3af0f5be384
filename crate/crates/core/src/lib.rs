//! Ranking models by out-of-domain performance from a handful of probe
//! examples, using token attributions.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command-line
//! pipeline and parallel drivers live in the `oodrank` companion crate.

#![no_std]

extern crate alloc;

pub mod attribution;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod factors;
pub mod model;
pub mod util;

pub use error::{Error, Result};
