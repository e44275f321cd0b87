//! Bayesian models, their posterior samplers and predictive simulation.

pub mod basis;
pub mod conjugate;
pub mod draws;
pub mod fosr;
pub mod predictive;
pub mod star;

pub use conjugate::{fit_conjugate, fit_conjugate_dataset, ConjugateDraws, ConjugateLinearModel, ConjugatePosterior, NoiseVariance};
pub use draws::PosteriorDrawSet;
pub use fosr::{gibbs_fosr, FosrDraws, FosrModel, GibbsConfig};
pub use predictive::{apply_to_draws, functional_draws, hbar, predictive_draws, PredictiveDrawSet, PredictiveMode};
pub use star::{star_round, star_transform, star_transform_inv};
