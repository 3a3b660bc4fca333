//! Spectra of sample correlation and covariance matrices whose samples are
//! k-fold tensor products of random vectors.
//!
//! The `n^k`-dimensional model matrices are never formed: their nonzero
//! spectrum is read off an `m x m` Gram matrix whose entries factor over the
//! tensor levels. Around that core sit the Marčenko–Pastur reference law,
//! distribution distances, and replicated experiment drivers.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gram;
pub mod io;
pub mod metrics;
pub mod mp;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod selftest;
pub mod spectrum;

pub use config::{
    make_tau, EntryLaw, ModelKind, ModelParams, TauScheme, TauSpec, ValidationReport,
};
pub use error::{Error, Result};
pub use gram::GramMatrix;
pub use mp::MpLaw;
pub use sampler::{sample_base, BaseSample};
pub use spectrum::SpectralDistribution;
