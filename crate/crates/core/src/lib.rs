//! Simulation and potential theory of isotropic stable processes and their
//! finite perturbations on bounded domains.

pub mod domain_quad;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod levy_models;
pub mod numerics;
pub mod path_sim;
pub mod perturbation;
pub mod stable_core;

pub use error::{Error, Result};
