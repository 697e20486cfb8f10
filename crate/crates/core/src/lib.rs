#![no_std]
//! Discrete finite propagation speed toolkit: metric measure spaces, sparse
//! first-order systems, their unitary groups and the Huygens principle for
//! the associated second-order problems.

extern crate alloc;

pub mod error;
pub mod group;
pub mod huygens;
pub mod linalg;
pub mod operators;
pub mod propagation;
pub mod quadrature;
pub mod space;
pub mod special;

pub use error::{Error, Result};
