//! Reconstruction of a discrete signal from the modulus of its wavelet
//! transform (scalogram), via the auxiliary-wavelet reformulation and a
//! multiscale algorithm, plus Gerchberg-Saxton baselines and an experiment
//! harness.

pub mod baseline;
pub mod error;
pub mod experiment;
pub mod io;
pub mod opt;
pub mod par;
pub mod recon;
pub mod reform;
pub mod signals;
pub mod smallsolve;
pub mod spectral;
pub mod wavelet;

pub use error::{Result, ScaloprError};
