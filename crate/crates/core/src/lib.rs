//! Sequential Monte Carlo changepoint detection for event streams.
//!
//! Changepoints of a piecewise Poisson (or shot-noise Cox) intensity are
//! tracked online: at each update a reversible-jump sampler proposes
//! changepoints for the newest window only, conditioning on data since the
//! estimated most recent changepoint, and the proposals are joined to the
//! existing particles with an importance weight. Multiple streams can share
//! a global particle budget.

pub mod error;
pub mod events;
pub mod io;
pub mod models;
pub mod multistream;
pub mod output;
pub mod particles;
pub mod rjmcmc;
pub mod simulate;
pub mod smc;
pub mod smcmc;
pub mod special;
pub mod summary;

pub use error::{Error, Result};
pub use events::{EventStream, EventWindow};
pub use particles::{ChangepointConfiguration, WeightedParticleSet};
