//! Data-quality techniques for training image-based recommendation
//! explanation models, together with the authorship rankers, the
//! leave-one-out evaluation protocol and emissions accounting used to
//! measure them.

pub mod augment;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod evalkit;
pub mod genaug;
pub mod image;
pub mod meter;
pub mod pipeline;
pub mod pu;
pub mod ranker;
pub mod reference;
pub mod seed;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
