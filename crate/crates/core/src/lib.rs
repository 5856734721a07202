//! Finite-dimensional laboratory for interpolation derivations on sequence spaces.

pub mod error;
pub mod catalog;
pub mod ckmr;
pub mod extremal;
pub mod randsums;
pub mod rng;
pub mod seqspace;
pub mod twisted;

pub use error::{Error, Result};
pub use seqspace::{SeqVector, SpaceDescriptor, SpaceKind};
