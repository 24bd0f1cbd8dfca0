//! Tensor-train solvers for periodic cell problems.
//!
//! The crate estimates effective (homogenized) conductivity and stiffness
//! tensors of two-phase periodic microstructures discretized on a regular
//! lattice with `N = 2^n` nodes per axis. Fields over the lattice are kept in
//! quantized tensor-train form (one binary core per scale bit), finite
//! difference operators in the matching operator train form, and the cell
//! problems are solved by an alternating two-site sweep scheme with rank
//! control. A conventional full-rank path over the same discretization serves
//! as the reference.

pub mod elastic;
pub mod error;
pub mod fdm;
pub mod mals;
pub mod par;
pub mod pipeline;
pub mod reference;
pub mod report;
pub mod rve;
pub mod sparse;
pub mod thermal;
pub mod tt;

pub use error::CoreError;
