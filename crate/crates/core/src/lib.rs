//! Explainable restricted Boltzmann machines for collaborative filtering.
//!
//! An RBM over normalized ratings whose hidden layer is additionally conditioned on
//! per-(user, item) neighborhood explainability scores, so that the items it ranks
//! highly tend to be ones a user's nearest neighbors can vouch for.
//!
//! * [`dataset`] parses MovieLens-style rating files and performs the per-user temporal split.
//! * [`neighborhood`] computes cosine neighbors and explainability scores.
//! * [`rbm`] holds the conditional RBM, its contrastive-divergence training and an
//!   exact-enumeration oracle for small models.
//! * [`baselines`] provides the user-kNN and most-popular comparators.
//! * [`eval`] implements RMSE, nDCG, MEP and MER and the sweep runner.
//! * [`ranking`] turns per-item scores into top-n lists.

pub mod baselines;
pub mod dataset;
mod error;
pub mod eval;
pub mod neighborhood;
pub mod rbm;
pub mod ranking;

pub use error::{Error, Result};
