//! Tumour-fraction estimation from paired pre/post-surgery cfDNA methylation
//! profiles.
//!
//! Each observed count pair is modelled as the sum of a tumour and a
//! background bivariate log-normal component, weighted by per-patient tumour
//! fractions. The convolution likelihood is approximated on a per-pair grid
//! ([`grid`]) and maximised by block coordinate ascent ([`estimator`]).
//! [`oracle`] evaluates the same likelihood by brute-force quadrature,
//! [`simulator`] generates synthetic cohorts and [`evaluation`] holds the
//! statistics used to score estimates.

pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod simulator;

pub use data::{Dataset, PairedObservation};
pub use error::{Error, Result};
pub use estimator::{fit, init_theta, FitConfig, FitResult, RefEntry, ReferenceProfile, RhoMode};
pub use grid::{build_grid, pair_loglik, total_loglik, CellRule, Grid, LikelihoodConfig};
pub use model::{
    biv_lognormal_cdf, biv_lognormal_pdf, shift_params, std_binorm_cdf, ComponentParams, FeatureTheta, TumourFractions,
};
pub use simulator::{sample_truth, simulate_dataset, SimConfig, SimTruth};

