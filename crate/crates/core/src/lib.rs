//! Overcomplete third-order tensor decomposition via convex optimization.
//!
//! The library decomposes a dense tensor `T = Σ_p λ_p u_p ⊗ v_p ⊗ w_p` with
//! unit-norm factors and positive weights, treating the decomposition as an
//! atomic-norm (tensor nuclear norm) problem. It provides:
//!
//! - [`tensor`] — dense `Tensor3` storage, multilinear contractions, and
//!   norm estimation,
//! - [`factor`] — factor sets, random instance generation, and measurement
//!   of the incoherence / spectral-norm / Gram-isometry assumptions,
//! - [`admm`] — the cubic-penalty factorization solver (Burer-Monteiro style)
//!   with exact closed-form block updates,
//! - [`cert`] — construction and numerical verification of the minimal-energy
//!   dual certificate that witnesses optimality of a decomposition,
//! - [`sos`] — the degree-2 moment (Lasserre) relaxation and an ADMM
//!   semidefinite solver for it,
//! - [`io`] — the `t3d-json` / `fset-json` file formats.
//!
//! Every randomized routine takes an explicit seed and is bit-reproducible.

pub mod admm;
pub mod cert;
pub mod error;
pub mod factor;
pub mod io;
pub mod seed;
pub mod sos;
pub mod tensor;

pub use error::{Error, Result};
pub use factor::FactorSet;
pub use tensor::Tensor3;
