//! Change-of-numeraire methods for one-dimensional martingale optimal
//! transport: measure/coupling/path/cost transforms, a Bass fixed-point
//! solver for stretched Brownian motion, path simulation and diagnostics,
//! and LP-based shadow couplings.

pub mod bassfp;
pub mod error;
pub mod gauss;
pub mod io;
pub mod measure1d;
pub mod motlp;
pub mod numeraire;
pub mod pathlab;

pub use error::{Error, Result};
