//! dynlab: a compaction-policy laboratory.
//!
//! Online dynamization policies (merge/compaction rules), exact rational cost
//! accounting, offline-optimal oracles, adversarial input generators, and
//! reproducible workloads, all behind one trace format.

pub mod adversary;
pub mod cost;
pub mod error;
pub mod ledger;
pub mod model;
pub mod opt;
pub mod policy;
pub mod rng;
pub mod run;
pub mod weight;
pub mod workload;

pub use error::{Error, Result};
pub use weight::Weight;
