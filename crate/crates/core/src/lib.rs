//! Flow-level intrusion detection under distribution drift.
//!
//! Packets are assembled into bidirectional flows, reduced to 28 statistical
//! features, normalized, and used to train classifiers offline on one
//! population before updating them batch by batch on another, measuring
//! detection quality and forgetting along the way.

pub mod error;
pub mod eval;
pub mod features;
pub mod flow;
pub mod jsonio;
pub mod kv;
pub mod models;
pub mod preprocess;
pub mod protocol;
pub mod synth;

pub use error::{Error, Result};
