//! Citation dynamics of preprints and their published versions.
//!
//! Implements a generative day-resolution model of citation accrual with
//! preferential attachment and exponential temporal decay, a hierarchical
//! Bayesian layer tying per-article latent citation rates to per-journal
//! parameters (location, spread, and a post-publication citation
//! multiplier), full posterior inference with a no-U-turn Hamiltonian
//! sampler, and the bibliometric data-preparation pipeline that turns raw
//! preprint/publication/reference records into fit-ready subsets.

pub mod error;
pub mod inference;
pub mod ingest;
pub mod likelihood;
pub mod model;
pub mod priors;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
