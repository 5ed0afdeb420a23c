//! Two-stage estimation of an unobserved quarterly series from an annual
//! benchmark and related quarterly indicators.
//!
//! Stage one ([`regression`]) fits a static cointegrating regression on the
//! annual data, checks the residuals for a unit root, and interpolates the
//! fitted relation with quarterly indicators to produce a first-pass
//! ("dirty") quarterly series. Stage two ([`benchmark`]) removes the
//! measurement error in that series with a linear Gaussian state-space model
//! whose annual observation rows force the quarterly estimates to stay
//! coherent with the annual benchmarks; the general filtering, smoothing,
//! and maximum-likelihood machinery lives in [`ssm`], and residual checks in
//! [`diagnostics`].

pub mod benchmark;
pub mod diagnostics;
pub mod error;
pub mod par;
pub mod regression;
pub mod series;
pub mod ssm;

pub use error::{Error, Result};
pub use series::{Dataset, Frequency, PeriodIndex, Series};
