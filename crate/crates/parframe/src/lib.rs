//! Numerical construction of local Parseval wavelet frames on the cube and
//! their transport to model Riemannian manifolds (circle, flat torus, round
//! sphere), together with the discrete Triebel-Lizorkin / Besov sequence
//! norms and the verification checks that back the command-line `verify`
//! report.

pub mod checks;
pub mod error;
pub mod hestenes;
pub mod localframe;
pub mod manifold;
pub mod mframe;
pub mod numerics;
pub mod wavelets1d;

pub use error::{Error, Result};
