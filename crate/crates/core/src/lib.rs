//! Population-graph spectral graph convolutional networks for
//! semi-supervised disease prediction.
//!
//! The pipeline: load or synthesize a population ([`dataset`]), optionally
//! reduce the imaging features ([`featsel`]), build a population graph from
//! phenotypic agreement and feature similarity ([`popgraph`]), derive the
//! rescaled Laplacian and Chebyshev bases ([`spectral`]), train a Chebyshev
//! GCN on the labelled nodes ([`gcn`]) and evaluate it with grouped,
//! stratified cross-validation ([`harness`]). Node-feature-only reference
//! classifiers live in [`baselines`]; [`cli`] is the command-line front end.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod featsel;
pub mod gcn;
pub mod harness;
pub mod popgraph;
pub mod spectral;

pub use error::{Error, Result};
