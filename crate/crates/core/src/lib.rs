//! Differentially private reinforcement learning over stochastic population
//! processes.
//!
//! The agent only ever sees histograms released by a state privatization
//! mechanism; [`dprl::run`] enforces that boundary and [`oracle`] checks the
//! privacy and utility behaviour of the whole pipeline on small instances.

pub mod accounting;
pub mod agent;
pub mod dpmech;
pub mod dprl;
pub mod error;
pub mod oracle;
pub mod popproc;
pub mod seed;
pub mod state;

pub use error::{Error, Result};
pub use state::StateHistogram;
