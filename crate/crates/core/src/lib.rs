//! Risk scoring for addresses on an evolving transaction graph.
//!
//! The crate is organised as a chain of stages that only talk to each other
//! through plain data types (and, in the CLI, through files):
//!
//! * [`txgraph`] ingests transfers, keeps cumulative snapshots and builds the
//!   top-K neighbor store that random walks run on.
//! * [`walkgen`] produces second-order biased random walks over that store.
//! * [`embedder`] trains skip-gram with negative sampling on walk corpora and
//!   warm-starts from the previous snapshot's model.
//! * [`propagator`] is the one-hop embedding propagation baseline.
//! * [`features`] extracts behavioral statistics and assembles model rows.
//! * [`riskmodel`] resolves labels, trains the random forest and evaluates it.
//! * [`synthgen`] generates seeded synthetic ledgers with planted risky clusters.
//! * [`experiment`] wires everything together in memory for evaluation runs.

use std::sync::Arc;

pub mod embedder;
pub mod error;
pub mod experiment;
pub mod features;
pub mod hashing;
pub mod propagator;
pub mod riskmodel;
pub mod synthgen;
pub mod txgraph;
pub mod walkgen;

pub use error::{Error, Result};

/// Interned address string. Cheap to clone, shared between walks and stores.
pub type Addr = Arc<str>;
