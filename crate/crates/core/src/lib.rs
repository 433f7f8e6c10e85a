//! Behavioral-audit harness for repeated economic games.
//!
//! Two games are simulated: a 60-round second-price auction where the agent
//! sets a reserve price, and a 30-round newsvendor problem where the agent
//! sets an order quantity. Agents (human-trace replays, heuristics, remote
//! chat models) play through intervention conditions, and the metrics
//! module compares the resulting decision distributions with human ones.
//!
//! Metric and pricing code is generic over [`Scalar`]/[`Real`]; the aliases
//! below fix the common instantiations.

pub mod agents;
pub mod auction;
pub mod interventions;
pub mod metrics;
pub mod newsvendor;
pub mod rng;
pub mod scalar;
pub mod transcript;

pub use scalar::{Real, Scalar};

/// Exact rational scalar for metrics that must reproduce fractions exactly.
pub type Rational = num_rational::Ratio<i64>;

/// Default floating scalar.
pub type Float = f64;

pub type WelchTest = metrics::WelchTest<Float>;
pub type Summary = metrics::Summary<Float>;
pub type Rate = metrics::Rate<Float>;
