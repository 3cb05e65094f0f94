#![no_std]
#![doc = "Numerical core: differentiable body model, adversarial pose prior, image-surface registration and alternating training. Requires only `alloc`."]

extern crate alloc;

pub mod body;
pub mod camera;
pub mod diff;
pub mod error;
pub mod geom;
pub mod learn;
pub mod metrics;
pub mod nn;
pub mod prior;
pub mod regist;
pub mod synth;

pub use error::{Error, Result};
