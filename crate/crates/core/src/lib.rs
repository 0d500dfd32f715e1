//! Finite mixture models fitted by EM, with Bayesian initialization averaging
//! and competing ways of choosing starting values.
//!
//! Three families are provided: Gaussian mixtures ([`gmm`]), latent class
//! models for binary data ([`lca`]) and a variational stochastic blockmodel
//! for networks ([`sbm`]). All of them plug into the generic driver in
//! [`em`], and every start strategy in [`init`] produces a membership matrix
//! for that driver.

pub mod data;
pub mod em;
pub mod error;
pub mod gmm;
pub mod init;
pub mod lca;
pub mod math;
pub mod sbm;

pub use nalgebra;

pub use data::{builtin_karate, load_edgelist, load_matrix, summarize, DataKind, Dataset, LoadOptions, Summary};
pub use em::{
    complete_data_loglik, converged, em_fit, ConvergenceConfig, EStep, FitFlags, FitResult, MixingWeights,
    MixtureFamily, Responsibilities,
};
pub use error::{DataError, FitError};
pub use gmm::{CovarianceStructure, GaussianMixture, GaussianParams};
pub use lca::{LatentClass, LcaParams};
pub use sbm::{SbmParams, SbmPriors, StochasticBlock};
