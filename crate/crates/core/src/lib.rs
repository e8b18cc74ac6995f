//! Labelled multi-Bernoulli tracking with smooth trajectory estimation.
//!
//! The core is generic over the scalar type ([`scalar::Real`], implemented
//! for `f32` and `f64`). The aliases at the crate root fix it to `f64`.

pub mod error;
pub mod filters;
pub mod glmb;
pub mod lmb;
pub mod metrics;
pub mod models;
pub mod rfs;
pub mod scalar;
pub mod ste;

pub use error::{Error, Result};
pub use rfs::Label;
pub use scalar::Real;

pub type GaussianState = filters::GaussianState<f64>;
pub type GaussianMixture = rfs::GaussianMixture<f64>;
pub type LinearModel = filters::LinearModel<f64>;
pub type NonlinearModel = filters::NonlinearModel<f64>;
pub type SingleObjectModel = filters::SingleObjectModel<f64>;
pub type LmbDensity = rfs::LmbDensity<f64>;
pub type GlmbDensity = rfs::GlmbDensity<f64>;
pub type MultiObjectModel = glmb::MultiObjectModel<f64>;
pub type LmbFilter = lmb::LmbFilter<f64>;
pub type LmbStepOutput = lmb::LmbStepOutput<f64>;
pub type ScanLog = lmb::ScanLog<f64>;
pub type Trajectory = ste::Trajectory<f64>;
pub type TrajectorySet = ste::TrajectorySet<f64>;
pub type SmoothTrajectoryEstimator = ste::SmoothTrajectoryEstimator<f64>;
