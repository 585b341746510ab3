//! Bilateral counterparty-risk valuation with simultaneous defaults.
//!
//! Two default times are built by the Cox construction from a Marshall–Olkin
//! bivariate exponential threshold pair, so the counterparty and the investor
//! can default at the same instant. The contract value solves a backward SDE
//! whose driver carries the first-to-default survival process; it is solved
//! by regression Monte Carlo ([`bsde`]) and by finite differences ([`pde`]),
//! and compared with the conditional-independence baseline.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod bve;
pub mod cashflows;
pub mod cox;
pub mod engine;
pub mod error;
pub mod funcs;
pub mod paths;
pub mod pde;
pub mod regression;
pub mod rng;
pub mod stats;

pub use bsde::{BackwardSolution, DriftKind, PicardSettings};
pub use bve::{BveParams, BveSample};
pub use cashflows::{ContractTerms, DefaultKind, SimultaneousRule, StateSnapshot};
pub use cox::{DefaultScenario, DefaultTime, IntensityModel, SignMode};
pub use engine::compare::ComparisonReport;
pub use engine::config::RunConfig;
pub use error::{ConfigIssue, Error, Result};
pub use funcs::{DividendFn, HedgeFn, IntensityFn, Payoff, TimeFn, VolFn};
pub use paths::{MarketModel, PathBundle, TimeGrid};
pub use pde::{PdeGrid, PdeSolution, ValueSurface};
pub use regression::RegressionBasis;
pub use stats::Estimate;
