//! Targeted point prediction from Bayesian posterior predictive draws.
//!
//! A fitted model supplies posterior predictive draws; a functional `h`
//! summarizes each predicted curve; sparse linear actions are fitted to the
//! predictive means of `h` along an adaptive lasso path; and out-of-sample
//! losses estimated by importance resampling pick the simplest action whose
//! loss is close to the best one.

pub mod data;
pub mod error;
pub mod functionals;
pub mod linalg;
pub mod model;
pub mod oos;
pub mod rng;
pub mod sim;
pub mod solver;

pub use data::Dataset;
pub use error::{Error, Result};
