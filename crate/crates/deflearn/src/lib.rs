//! Std companion to `deflearn-core`: file formats, dense-annotation
//! conversion, mesh export, parallel registration and the `deflearn` CLI.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dense;
pub mod error;
pub mod formats;
pub mod json;
pub mod mesh;
pub mod parallel;

pub use error::{Error, Result};
