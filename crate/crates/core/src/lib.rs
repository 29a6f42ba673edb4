//! Explainable predictive decision mining.
//!
//! The crate covers the offline phase (event log ingestion, process
//! discovery, situation tables, decision-model training and selection) and
//! the online phase (predicting the routing decision of a running case and
//! attributing it to features with Shapley values).
//!
//! ```no_run
//! use edm_core::event_log::generate_synthetic_p2p;
//! use edm_core::process_model::{decision_points, discover_inductive};
//!
//! let log = generate_synthetic_p2p(7, 1000);
//! let net = discover_inductive(&log).unwrap();
//! for dp in decision_points(&net) {
//!     println!("{} -> {:?}", dp.place, dp.alternatives);
//! }
//! ```

pub mod error;
pub mod event_log;
pub mod explain;
pub mod learners;
pub mod par;
pub mod pipeline;
pub mod process_model;
pub mod situation;

pub use error::{Error, Result};
