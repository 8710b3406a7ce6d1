//! A desk-scale laboratory for studying when a pre-trained initialization
//! helps a linear classifier survive distribution shift.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`] holds the dense linear algebra and statistics primitives
//!   (subspaces, projections, operator norm, probit, Clopper-Pearson).
//! * [`logreg`] is the unregularized logistic-regression setting: loss,
//!   gradient, Hessian, gradient descent at step size `4 / ||X||_op^2`, and
//!   the decomposition of the learned weights into an in-subspace minimizer
//!   plus the untouched orthogonal part of the initialization.
//! * [`shiftgen`] generates seeded reference/shifted dataset pairs.
//! * [`robustness`] fits accuracy-on-the-line baselines in probit space and
//!   computes effective robustness and related group metrics.
//! * [`splitter`] divides a shifted dataset into in-support and
//!   out-of-support parts with a calibrated domain classifier.
//! * [`debias`] provides group-reweighted last-layer retraining and the
//!   balancing oracle.

pub mod dataset;
pub mod debias;
pub mod error;
pub mod logreg;
pub mod numeric;
pub mod robustness;
pub mod seed;
pub mod shiftgen;
pub mod splitter;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use numeric::{Matrix, Subspace};
