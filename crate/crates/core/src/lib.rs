//! Facial albedo texture inference.
//!
//! The pipeline fits a PCA morphable face model with spherical-harmonics
//! lighting to a photograph, factors the shading out of the visible texels,
//! describes their fine-scale detail by convolutional feature correlations,
//! blends database correlations to cover the whole face, and synthesizes a
//! complete texture that matches them.

mod binio;
pub mod analysis;
pub mod dbtool;
pub mod error;
pub mod imageio;
pub mod morphable;
pub mod net;
pub mod numerics;
pub mod synthesis;

pub use error::{Error, Result};
