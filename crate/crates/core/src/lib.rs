//! Multi-population ensemble genetic programming (MEGP) for classification,
//! with a single-population baseline (BGP) and a nonparametric comparison
//! pipeline.
//!
//! Populations evolve multi-gene expression trees on disjoint feature views.
//! Each individual's genes feed a softmax head; individuals from different
//! populations are mixed into weighted ensembles whose fitness feeds back into
//! elitism and crossover selection.

#[cfg(doctest)]
mod book;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod gp;
pub mod harness;
pub mod head;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
