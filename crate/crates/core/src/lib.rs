//! Stochastic gradient descent with polynomially increased weighted averaging.
//!
//! The crate is organised bottom-up:
//!
//! * [`vector`] and [`sampling`]: dense parameters, Euclidean-ball projection and
//!   the replayable index stream every optimizer draws from.
//! * [`losses`]: per-sample loss models and the proximal wrapper used by the
//!   stagewise driver.
//! * [`averaging`]: online averaging schemes (last, uniform, weighted `t^alpha`,
//!   suffix, polynomial-decay, exponential moving average).
//! * [`optimizer`]: the projected SGD loop and the stagewise proximal driver.
//! * [`bounds`]: closed-form evaluators of the optimization and stability bounds.
//! * [`stability`]: coupled runs on neighbouring datasets.
//! * [`data`]: LIBSVM parsing, synthetic generators and splitting.
//! * [`reference`]: high-accuracy optima used as baselines for measured gaps.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The type
//! aliases at the crate root pin the default `f64` instantiation.

pub mod averaging;
pub mod bounds;
pub mod data;
mod error;
pub mod losses;
pub mod optimizer;
pub mod reference;
pub mod sampling;
mod scalar;
pub mod stability;
pub mod vector;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense parameter vector in double precision.
pub type Params = vector::ParameterVector<f64>;
/// Projection domain in double precision.
pub type Domain = vector::BallDomain<f64>;
/// Labelled sparse sample in double precision.
pub type Sample = data::Sample<f64>;
/// Dataset in double precision.
pub type Dataset = data::Dataset<f64>;
/// Loss model in double precision.
pub type Loss = losses::LossModel<f64>;
/// Averaging state in double precision.
pub type Averager = averaging::AveragingState<f64>;
/// Run configuration in double precision.
pub type RunConfig = optimizer::SgdConfig<f64>;
/// Run trace in double precision.
pub type Trace = optimizer::RunTrace<f64>;
/// Bound inputs in double precision.
pub type Bounds = bounds::BoundInputs<f64>;
