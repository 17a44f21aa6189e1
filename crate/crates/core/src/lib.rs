//! Constrained KL-NMF and the topic models it is equivalent to.
//!
//! Multiplicative-update NMF (plain, simplex-constrained, PLSA, `ℓ1`-sparse),
//! variational LDA and Gamma–Poisson factorization, the maps between their
//! solutions and iterates, and file formats for corpora and fitted models.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod equivalence;
pub mod error;
pub mod init;
pub mod io;
pub mod matrix;
pub mod model;
pub mod mu;
pub mod objectives;
mod par;
pub mod reference;
pub mod specfun;
pub mod synth;
mod updates;
pub mod vi;

pub use error::{Error, ErrorClass, Result};
pub use matrix::TermDocMatrix;
pub use model::{ConstraintMode, Factorization, FitConfig, FitTrace, Method, Priors, VariationalState};
pub use par::is_parallel;
