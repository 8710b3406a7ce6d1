//! Dense linear-algebra and statistical primitives shared by every other
//! module. Everything here is a pure function of its inputs.

mod linalg;
mod matrix;
mod stats;
mod subspace;

pub use linalg::{axpy, dot, norm, operator_norm, scale, sub};
pub use matrix::Matrix;
pub use stats::{clopper_pearson, normal_cdf, normal_pdf, probit};
pub use subspace::{orthonormalize, orthonormalize_in, Subspace, DEFAULT_RANK_TOL};
