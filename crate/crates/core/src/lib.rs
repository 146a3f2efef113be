//! Paired-speckle ultrasound simulation, classical despeckling filters and a
//! small trainable encoder-decoder despeckling network.
//!
//! The pipeline: [`phantom`] draws a tissue geometry, [`imaging`] renders
//! independent speckle instances of it, [`dataset`] persists training pairs
//! and nine-instance averages, [`net`] and [`loss`] train a network on
//! instance pairs, and [`eval`] scores it against the [`filters`].

pub mod dataset;
pub mod error;
pub mod eval;
pub mod filters;
pub mod grid;
pub mod imaging;
pub mod loss;
pub mod net;
pub mod phantom;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use grid::{GridSpec, ImageGrid};
