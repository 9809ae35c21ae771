//! Variational Bayesian Personalized Ranking.
//!
//! Each training unit is a bag of `M` observed positives and `N` sampled
//! negatives for one user. Closed-form variational posteriors weight the bag
//! members, the weighted interest centers give a compressed pairwise margin,
//! and the model is trained on `−ln σ(⟨u, c⁺ − c⁻⟩)` at `O(M + N)` per bag.
//! Exposure priors steer which bag members the posteriors trust.

// `!(x > 0.0)` also rejects NaN, which is the point
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod loss;
pub mod math;
pub mod model;
pub mod optim;
pub mod par;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
