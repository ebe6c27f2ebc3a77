//! Gaussian-space harmonic analysis of variational autoencoders.
//!
//! The crate is organised around the pieces of that analysis:
//!
//! * [`measure`]: Gaussian measures, Hermite bases and variance decompositions.
//! * [`autodiff`]: dense networks, reverse-mode gradients and Adam.
//! * [`vae`]: the model, its ELBO, training and decoder variance analyses.
//! * [`spectral`]: DFT/NUDFT spectra and cross-validated polynomial degree.
//! * [`lipschitz`]: Lipschitz bounds and the Poincaré check.
//! * [`attack`]: maximum-damage attacks and likelihood degradation.
//! * [`experiment`]: datasets, checkpoints, configs and the sweep harness.

pub mod attack;
pub mod autodiff;
pub mod dataset;
pub mod exec;
pub mod experiment;
pub mod lipschitz;
pub mod measure;
pub mod report;
pub mod seed;
pub mod spectral;
pub mod vae;

pub use exec::Execution;
