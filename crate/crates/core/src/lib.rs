//! Numerical library and Monte Carlo harness for Gaussian approximation of
//! maxima of martingale sums.
//!
//! The crate provides:
//!
//! * [`smooth_max`]: log-sum-exp smooth maximum calculus with directional
//!   derivatives up to third order and a C^3 step function;
//! * [`gaussian`]: covariance sampling plus closed-form and Monte Carlo
//!   anti-concentration and max-norm moment bounds;
//! * [`martingale`]: a catalog of martingale-difference scenarios with a
//!   discrete conditioning partition, a coupled path sampler, and the
//!   per-atom statistics beta and Gamma;
//! * [`bounds`]: the Kolmogorov-distance bound evaluators;
//! * [`harness`]: empirical conditional Kolmogorov distance estimation and
//!   grid sweeps;
//! * [`report`]: the stable CSV schema shared with the command line tool;
//! * [`verify`]: the named property suites behind the `verify` command.

pub mod bounds;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod martingale;
pub mod report;
pub mod rng;
pub mod smooth_max;
pub mod verify;

pub use error::{Error, Result};
pub use rng::SeedStream;
