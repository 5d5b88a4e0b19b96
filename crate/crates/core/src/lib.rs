//! Locally-asynchronous, lock-free SGD with non-blocking model averaging.
//!
//! Each simulated worker owns a [`paramstore::ParamStore`] that several
//! updater threads modify without locks, computing full or partial
//! (block-restricted) minibatch gradients on inconsistent snapshots. One
//! averaging thread per worker periodically all-reduces the models with its
//! peers and applies the difference in place while updaters keep running.
//! Synchronous minibatch SGD and post-local SGD are provided as baselines,
//! and [`instrumentation`] turns the logged orders and delay events into
//! measurements.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod instrumentation;
pub mod metrics;
pub mod objectives;
pub mod paramstore;
pub mod partition;
pub mod schedules;
pub mod stats;

pub use error::{Error, Result};
