//! Exact symmetric-traceless tensor machinery for expanding interaction
//! kernels between rigid molecules.
//!
//! The crate is layered bottom-up: [`exactscalar`] supplies the coefficient
//! fields, [`so3poly`] polynomials in rotation-matrix entries with exact Haar
//! integration, [`tensors`] and [`contract`] the tensor algebra, [`terms`]
//! the enumeration and Gram certification of expansion terms, [`groups`]
//! point-group invariants, [`expander`] the end-to-end term generator and
//! [`kernelproj`] numeric projection of sampled kernels.

pub mod cli;
pub mod contract;
pub mod error;
pub mod exactscalar;
pub mod expander;
pub mod gram;
pub mod groups;
pub mod kernelproj;
pub mod linalg;
pub mod so3poly;
pub mod tensors;
pub mod verify;
pub mod terms;

pub use error::{Error, Result};
pub use exactscalar::{Field, PiLinear, QuadScalar, Rational, Ring};
pub use so3poly::{OrientPoly, RotMatrix};
pub use tensors::{BasisW, SymTensor};
