//! Fairness-aware adaptive aggregation for federated learning.
//!
//! The server treats the choice of mixing coefficients as an online convex
//! optimization problem over the probability simplex: each round, client
//! losses are mapped to bounded responses, and the mixing decision is updated
//! by Online Newton Step (cross-silo, [`AggregatorMethod::AaggffS`]) or
//! linearized Follow-the-Regularized-Leader (cross-device,
//! [`AggregatorMethod::AaggffD`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregator;
pub mod bench;
pub mod config;
pub mod decision;
pub mod error;
pub mod experiment;
pub mod fedsim;
pub mod metrics;
pub mod modeldata;
pub mod output;
pub mod response;
pub mod simplex;

pub use aggregator::{Aggregator, AggregatorMethod, FtrlState, OnsState, RoundFeedback};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use response::{CdfFamily, CdfKind, ResponseBounds};
pub use simplex::Decision;
