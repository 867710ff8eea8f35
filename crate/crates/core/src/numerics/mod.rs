//! Numerical building blocks shared by the model and estimator modules.

pub mod interp;
pub mod quad;
pub mod special;
pub mod stats;
