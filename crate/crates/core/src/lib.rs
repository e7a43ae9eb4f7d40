//! Multitask diffusion LMS over clustered networks with a proximal
//! sparsity-promoting coregularizer between neighboring clusters.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod check;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod prox;
pub mod regularization;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};
