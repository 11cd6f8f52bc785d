//! Stochastic video prediction with a learned, hierarchical model of
//! predictive precision.

pub mod checkpoint;
pub mod data;
pub mod discriminator;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod kv;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod seeding;
pub mod training;

pub use error::{NuqError, Result};
