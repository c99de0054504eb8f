//! Toolkit for state-space models: filtering, smoothing, marginal likelihoods,
//! maximum likelihood and Bayesian fitting, identifiability checks, model
//! selection and residual diagnostics.

pub mod error;
pub mod rng;
pub mod stats;
pub mod params;
pub mod data;
pub mod model;
pub mod zoo;
pub mod kalman;
pub mod discretized;
pub mod laplace;
pub mod smc;
pub mod estimation;
pub mod bayes;
pub mod selection;
pub mod diagnostics;
pub mod cli;

pub use data::TimeSeriesData;
pub use error::{Result, SsmError};
pub use model::{joint_log_likelihood, simulate, InitialState, LinearGaussianStep, Simulation, StateSpaceModel};
pub use params::{ParamDef, ParamVector, ParameterSpec, Transform};
