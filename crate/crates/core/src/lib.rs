//! Default-contagion simulation on a directed interbank network.
//!
//! The crate generates a scale-free lending network, calibrates bank balance
//! sheets against heavy-tailed external-asset returns, propagates defaults
//! through interbank exposures and compares two ways of immunizing banks:
//! moving them onto a common low-risk asset (*uniform*) or pairing them with
//! anti-correlated assets (*counteractive*).
//!
//! Module map:
//!
//! - [`graphgen`]: Chung-Lu style network generation and edge-list I/O.
//! - [`centrality`]: PageRank, degree, eigenvector, betweenness, dynamical
//!   importance, and the spectral GSCC presence test.
//! - [`balance`]: net-worth calibration and balance-sheet construction.
//! - [`shocks`]: per-trial return sampling under an immunization plan.
//! - [`immunize`]: uniform and counteractive vaccination plans.
//! - [`cascade`]: the default-propagation fixed point.
//! - [`metrics`]: histograms, expected cost, crisis and GSCC statistics.
//! - [`harness`]: experiment configs, seeded runs, sweeps and reports.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod cascade;
pub mod centrality;
pub mod error;
pub mod graphgen;
pub mod harness;
pub mod immunize;
pub mod metrics;
pub mod rng;
pub mod shocks;

pub use balance::{BalanceSheetSet, CalibrationResult, DistFamily, RiskParams};
pub use cascade::{run_cascade, TrialOutcome};
pub use centrality::{CentralityScores, EdgeScore, Metric};
pub use error::{Error, Result};
pub use graphgen::{DegreeSequences, InterbankNetwork, PowerLawParams};
pub use immunize::{ImmunizationPlan, OrderMetric, Strategy};
pub use metrics::{DefaultHistogram, RiskAggregate, RiskReport};
pub use shocks::{PairAssignment, ReturnVector};
