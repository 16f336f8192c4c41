//! Ensemble-taught hybrid label propagation.
//!
//! Several propagation learners share one labeled seed set. Each learner is
//! paired with a teacher that scores frontier candidates by how reliably and
//! how unambiguously they can be labeled. The teachers jointly pick a
//! curriculum of the simplest candidates each round through an
//! l2,1-coupled selection problem solved by block coordinate descent; the
//! learners then label that curriculum, their outputs are mixed by the
//! teachers' preferences, and an entropy feedback sizes the next round.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | CSV ingestion, seeded splits, the two-Gaussian benchmark |
//! | [`graph`] | kNN patterns, kernels, Laplacian spectrum, commute times |
//! | [`teacher`] | graph covariance, frontier, teaching matrix |
//! | [`ensemble`] | joint selection objective, gradient, line search, solver |
//! | [`propagate`] | label matrix, per-round propagation, steady state |
//! | [`feedback`] | entropy feedback and curriculum sizing |
//! | [`orchestrate`] | end-to-end runs, ablations, evaluation, t-test |

pub mod data;
pub mod ensemble;
pub mod error;
pub mod feedback;
pub mod graph;
pub mod orchestrate;
pub mod propagate;
pub mod rng;
pub mod teacher;

pub use error::{Error, Result};
