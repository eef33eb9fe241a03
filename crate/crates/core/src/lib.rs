//! Marcus-canonical jump SDEs driven by pure-jump Lévy processes on flat
//! space, spheres, hyperbolic space, frame bundles and matrix Lie groups,
//! together with a Monte Carlo density laboratory.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod density;
pub mod levy;
pub mod lie;
pub mod marcus;
pub mod parallel;
pub mod quad;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};
pub use rng::{PathSeed, Substream};
