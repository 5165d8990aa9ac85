//! Disclosure risk estimation for synthetic microdata.
//!
//! The crate covers the two risk families an agency has to assess before
//! releasing synthetic data:
//!
//! * **Attribute disclosure**: how well an intruder can infer a record's
//!   original synthesized values. [`attribute`] computes record-level
//!   posteriors over a guess set with Bayes' rule, estimating the synthetic
//!   data likelihood for each counterfactual guess by self-normalized
//!   importance sampling over the synthesizer's retained parameter draws.
//! * **Identification disclosure**: how well an intruder can link a known
//!   target to a released record. [`identification`] averages match
//!   probabilities over Monte Carlo draws of plausible original values and
//!   rolls them up into the expected match risk, true match rate and false
//!   match rate.
//!
//! [`synthesis`] provides the two synthesizers needed to produce releases
//! with retained draws: a finite mixture of products of multinomials fitted
//! by Gibbs sampling, and a sequential CART synthesizer with within-leaf
//! Bayesian bootstrap.
//!
//! The crate is `no_std` with `alloc`. The `std` feature enables the
//! standard library, `parallel` adds rayon-backed parallel loops, and
//! `serde` derives (de)serialization for the model and data types.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![warn(missing_debug_implementations, rust_2018_idioms)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::redundant_guards)]

extern crate alloc;

pub mod attribute;
pub mod data;
mod error;
pub mod identification;
pub mod math;
pub mod rng;
pub mod synthesis;

pub use error::{
    AttributeError, DataError, Error, IdentificationError, Result, SynthesisError,
};

pub use data::{Cell, Column, Dataset, Partition, Schema, Target, TargetFile, VariableDef, VariableKind};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on. The
/// output order is always the index order.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
