//! Deep equilibria of iterated layer maps: exact on finite sets, numerical on
//! compact disks, plus diagnostics for whether an equilibrium is computable.

pub mod approx;
pub mod cli;
pub mod definability;
pub mod dynamics;
pub mod error;
pub mod finite;
pub mod function;
pub mod poly;
pub mod sampling;
pub mod structure;

mod strict;

pub use error::{Error, Result};
