//! Gradient-based epistemic and aleatoric uncertainty for small MLPs.
//!
//! The epistemic estimate is the squared norm of the gradient of the
//! predicted probability with respect to the parameters, taken at the MAP
//! point; the aleatoric estimate is the Bernoulli variance `p (1 - p)`.
//! Around these sit the pieces needed to check them: synthetic problems,
//! MAP training, a damped-Fisher Laplace comparison, an HMC reference
//! posterior and the statistics used to compare estimates.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type.

pub mod error;
pub mod linalg;
pub mod nnet;
pub mod refpost;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synthgen;
pub mod trainmap;
pub mod uq;

pub use error::{Error, Result};
pub use nnet::{Activation, Head, MlpSpec};
pub use scalar::Real;

pub type Params = nnet::ParamVector<f64>;
pub type Params32 = nnet::ParamVector<f32>;
pub type Gradient = nnet::GradientVector<f64>;
pub type Gradient32 = nnet::GradientVector<f32>;
pub type Dataset = synthgen::LabeledDataset<f64>;
pub type Dataset32 = synthgen::LabeledDataset<f32>;
pub type DenseMatrix = linalg::Matrix<f64>;
pub type DenseMatrix32 = linalg::Matrix<f32>;
pub type Samples = refpost::PosteriorSamples<f64>;
pub type Covariance = uq::CovarianceModel<f64>;
pub type Covariance32 = uq::CovarianceModel<f32>;
