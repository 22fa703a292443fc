//! Gaussian process regression with certified uniform error bounds.
//!
//! The crate covers the whole pipeline from data to a safety certificate:
//!
//! * [`kernels`]: stationary kernels (squared exponential with ARD) and the
//!   constants derived from them on a domain.
//! * [`gp`]: exact posterior inference, hyperparameter fitting and prior
//!   sampling.
//! * [`bounds`]: covering numbers, the `beta`/`gamma` constants and
//!   [`ErrorCertificate`]s giving `|f(x) - nu_N(x)| <= eta(x)` on a whole
//!   domain with probability `1 - delta`, plus the growing-data harness.
//! * [`lipschitz`]: high-probability Lipschitz constants of GP sample paths.
//! * [`control`]: feedback-linearizing tracking control, plants, RK4
//!   simulation and the ultimate bound radius.
//! * [`experiments`]: configuration, runners and CSV/SVG/TOML output used by
//!   the command line tool.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod bounds;
pub mod control;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod lipschitz;
pub mod scalar;

pub use bounds::{CoveringNumber, ErrorCertificate};
pub use domain::Domain;
pub use error::{Error, Result};
pub use gp::{Dataset, Posterior};
pub use kernels::{KernelConstants, SeArdKernel, StationaryKernel};
pub use lipschitz::LipschitzEstimate;
pub use scalar::Scalar;

/// Squared-exponential ARD kernel in double precision.
pub type SeArd = SeArdKernel<f64>;
/// Double precision domain.
pub type Domain64 = Domain<f64>;
/// Double precision dataset.
pub type Dataset64 = Dataset<f64>;
/// Double precision posterior with the SE-ARD kernel.
pub type Posterior64 = Posterior<f64, SeArdKernel<f64>>;
/// Double precision kernel constants.
pub type KernelConstants64 = KernelConstants<f64>;
/// Double precision certificate with the SE-ARD kernel.
pub type Certificate64<'a> = ErrorCertificate<'a, f64, SeArdKernel<f64>>;
