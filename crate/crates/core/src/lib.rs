//! Deterministic herding dynamics.
//!
//! Herding turns a vector of target moments into a deterministic stream of
//! pseudo-samples whose running feature averages converge to the targets at
//! rate `O(1/T)`. The weight vector that drives it is a piecewise isometry:
//! bounded, never periodic in general, and never random.
//!
//! - [`engine`]: state spaces, feature maps, maximizers, the update step and
//!   traces, plus the finite-temperature gradient map used for bifurcation
//!   studies.
//! - [`scalar`]: closed-form single-neuron and 1-of-D herding, and the rabbit
//!   sequence.
//! - [`latent`]: herding with hidden variables imputed per data case.
//! - [`cond`]: conditional (discriminative) herding and the voted perceptron.
//! - [`diag`]: moment error, autocorrelation, subword complexity, PCT
//!   monitoring, torus and subspace geometry.
//! - [`models`]: random MRFs, the Ising lattice with a Swendsen-Wang oracle,
//!   RBM feature maps.
//! - [`io`]: dataset, moment, trace and report files.
//! - [`scan`]: multi-chain studies (temperature scans, seed sweeps) that fan
//!   out over [`par`].
//!
//! A single chain is always sequential. Independent chains and per-case
//! maximizations run on rayon when the `parallel` feature is enabled (the
//! default); results are always combined in input order.

pub mod cond;
pub mod diag;
pub mod engine;
pub mod error;
pub mod io;
pub mod latent;
pub mod models;
pub mod par;
pub mod scalar;
pub mod scan;

pub use engine::{
    herd_run, herd_run_with, herd_step, FeatureMap, HerdingTrace, Maximizer, MaximizerKind,
    MomentVector, PctCheck, Provenance, State, StateSpace, StepOptions, TableFeatures,
    TraceConfig, WeightVector,
};
pub use error::{HerdingError, Result};
pub use par::Exec;
