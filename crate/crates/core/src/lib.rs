//! Battery sizing and control for peak shaving.
//!
//! The crate centres on a three-parameter rule-based controller (RBC) whose
//! thresholds are sliding-window quantiles of the uncontrolled load. Its
//! parameters, and optionally the battery size, are tuned by differential
//! evolution against daily-peak objectives, including a month-stratified
//! CVaR that targets the worst days. Prescient LP sizing and a receding
//! horizon MPC provide the reference points, and [`evaluate`] runs the full
//! sizing × controller comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod battery;
pub mod bench;
pub mod config;
pub mod economics;
pub mod error;
pub mod evaluate;
pub mod lp;
pub mod mpc;
pub mod optimize;
pub mod policies;
pub mod quantile;
pub mod risk;
pub mod sizing;
pub mod timeseries;

pub use error::{Error, Result};
