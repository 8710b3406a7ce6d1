//! Unregularized logistic regression and its gradient-descent dynamics.
//!
//! With inputs confined to the reference subspace `W_ref`, every gradient is
//! a combination of input rows, so gradient descent never changes the part
//! of the weights orthogonal to `W_ref`. Started anywhere, it converges to
//! `w*_ref + proj_perp(w_init)`, where `w*_ref` is the unique minimizer
//! inside `W_ref`. [`theorem1_decompose`] checks that decomposition
//! numerically.

use std::ops::Deref;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numeric::{self, axpy, dot, norm, Matrix, Subspace, DEFAULT_RANK_TOL};

/// Linear-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Step size of gradient descent: explicit, or `4 / ||X||_op^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => s.serialize_str("auto"),
            StepSize::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "step size must be positive, got {v}"
            ))),
            Raw::Name(s) if s == "auto" => Ok(StepSize::Auto),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "step size must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub step_size: StepSize,
    pub max_steps: usize,
    pub grad_tol: f64,
    /// Weights whose norm exceeds this are declared divergent.
    pub divergence_norm: f64,
    /// Stop as soon as an iterate classifies every (positively weighted)
    /// example with a strictly positive margin. Such an iterate certifies
    /// that the loss has no minimizer.
    pub stop_on_separation: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step_size: StepSize::Auto,
            max_steps: 500_000,
            grad_tol: 1e-9,
            divergence_norm: 1e6,
            stop_on_separation: true,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(v) = self.step_size {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("step size must be positive"));
            }
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if !(self.divergence_norm > 0.0) {
            return Err(Error::invalid("divergence_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    StepLimit,
    Diverged,
}

/// Record of one gradient-descent run. `losses[t]` and `grad_norms[t]` are
/// evaluated at iterate `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GdTrace {
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub weights: WeightVector,
    pub termination: Termination,
    pub step_size: f64,
}

impl GdTrace {
    pub fn steps(&self) -> usize {
        self.losses.len().saturating_sub(1)
    }
}

/// `log(1 + exp(-m))` without overflow.
fn softplus_neg(m: f64) -> f64 {
    (-m.abs()).exp().ln_1p() + (-m).max(0.0)
}

/// `1 / (1 + exp(m))` without overflow.
fn sigmoid_neg(m: f64) -> f64 {
    if m >= 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

/// `1 / (2 + exp(-m) + exp(m))`, the Hessian weight; lies in (0, 1/4].
fn curvature(m: f64) -> f64 {
    let e = (-m.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

fn check_dims(w: &[f64], data: &LabeledDataset) -> Result<()> {
    if w.len() != data.dim() {
        return Err(Error::invalid(format!(
            "weights of length {} for {}-dimensional features",
            w.len(),
            data.dim()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("weights must be finite"));
    }
    Ok(())
}

fn check_weights(weights: Option<&[f64]>, data: &LabeledDataset) -> Result<()> {
    if let Some(s) = weights {
        if s.len() != data.len() {
            return Err(Error::invalid("one sample weight per example required"));
        }
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("sample weights must be finite and nonnegative"));
        }
    }
    Ok(())
}

/// Loss and gradient in one pass. Also reports whether every example with
/// positive weight has a strictly positive margin.
fn loss_and_gradient(
    w: &[f64],
    data: &LabeledDataset,
    weights: Option<&[f64]>,
    grad: &mut [f64],
) -> (f64, bool) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut separated = true;
    for i in 0..data.len() {
        let sw = weights.map_or(1.0, |s| s[i]);
        if sw == 0.0 {
            continue;
        }
        let x = data.x(i);
        let y = data.y(i);
        let m = dot(w, x) * y;
        if m <= 0.0 {
            separated = false;
        }
        loss += sw * softplus_neg(m);
        axpy(-sw * y * sigmoid_neg(m), x, grad);
    }
    (loss, separated)
}

/// `sum log(1 + exp(-wᵀx·y))`
pub fn logistic_loss(w: &[f64], data: &LabeledDataset) -> Result<f64> {
    weighted_logistic_loss(w, data, None)
}

pub fn weighted_logistic_loss(
    w: &[f64],
    data: &LabeledDataset,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_dims(w, data)?;
    check_weights(weights, data)?;
    let mut grad = vec![0.0; data.dim()];
    Ok(loss_and_gradient(w, data, weights, &mut grad).0)
}

/// `-sum x·y / (1 + exp(wᵀx·y))`
pub fn loss_gradient(w: &[f64], data: &LabeledDataset) -> Result<Vec<f64>> {
    weighted_loss_gradient(w, data, None)
}

pub fn weighted_loss_gradient(
    w: &[f64],
    data: &LabeledDataset,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_dims(w, data)?;
    check_weights(weights, data)?;
    let mut grad = vec![0.0; data.dim()];
    loss_and_gradient(w, data, weights, &mut grad);
    Ok(grad)
}

/// `Xᵀ D(w) X` with `D_ii = 1 / (2 + exp(-m_i) + exp(m_i))`.
pub fn loss_hessian(w: &[f64], data: &LabeledDataset) -> Result<Matrix> {
    check_dims(w, data)?;
    let d = data.dim();
    let mut h = Matrix::zeros(d, d);
    for i in 0..data.len() {
        let x = data.x(i);
        let c = curvature(dot(w, x) * data.y(i));
        for a in 0..d {
            let ca = c * x[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                h.set(a, b, h.get(a, b) + ca * x[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h.set(a, b, h.get(b, a));
        }
    }
    Ok(h)
}

/// The Hessian restricted to a subspace, `Bᵀ H B` for basis columns `B`.
pub fn restricted_hessian(w: &[f64], data: &LabeledDataset, sub: &Subspace) -> Result<Matrix> {
    let h = loss_hessian(w, data)?;
    let b = sub.basis_matrix();
    b.transpose().matmul(&h)?.matmul(&b)
}

/// `4 / ||S^{1/2} X||_op^2`, the inverse Lipschitz constant of the gradient.
pub fn auto_step_size(data: &LabeledDataset, weights: Option<&[f64]>) -> Result<f64> {
    check_weights(weights, data)?;
    if data.is_empty() {
        return Err(Error::invalid("step size of an empty dataset"));
    }
    let x = match weights {
        Some(s) => {
            let root: Vec<f64> = s.iter().map(|v| v.sqrt()).collect();
            data.features().scale_rows(&root)?
        }
        None => data.features().clone(),
    };
    let op = numeric::operator_norm(&x, 1e-12, 0)?;
    Ok(if op > 0.0 { 4.0 / (op * op) } else { 1.0 })
}

const LOSS_FLOOR: f64 = 1e-12;

/// Runs `w <- w - η ∇L(w)` from `w_init` until the gradient norm drops to
/// `grad_tol`, the step budget runs out, or divergence is detected.
pub fn gradient_descent(
    w_init: &[f64],
    data: &LabeledDataset,
    cfg: &GdConfig,
) -> Result<GdTrace> {
    gradient_descent_observed(w_init, data, None, cfg, |_, _| {})
}

pub fn weighted_gradient_descent(
    w_init: &[f64],
    data: &LabeledDataset,
    weights: &[f64],
    cfg: &GdConfig,
) -> Result<GdTrace> {
    gradient_descent_observed(w_init, data, Some(weights), cfg, |_, _| {})
}

/// Gradient descent that hands every iterate `(t, w_t)` to `observer`.
pub fn gradient_descent_observed(
    w_init: &[f64],
    data: &LabeledDataset,
    weights: Option<&[f64]>,
    cfg: &GdConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<GdTrace> {
    check_dims(w_init, data)?;
    check_weights(weights, data)?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("gradient descent on an empty dataset"));
    }
    let eta = match cfg.step_size {
        StepSize::Auto => auto_step_size(data, weights)?,
        StepSize::Fixed(v) => v,
    };
    let mut w = w_init.to_vec();
    let mut grad = vec![0.0; w.len()];
    let mut losses = Vec::new();
    let mut grad_norms = Vec::new();
    let termination = loop {
        let t = losses.len();
        let (loss, separated) = loss_and_gradient(&w, data, weights, &mut grad);
        let gn = norm(&grad);
        observer(t, &w);
        losses.push(loss);
        grad_norms.push(gn);
        if gn <= cfg.grad_tol {
            break Termination::Converged;
        }
        if cfg.stop_on_separation && separated {
            break Termination::Diverged;
        }
        if loss < LOSS_FLOOR {
            break Termination::Diverged;
        }
        if t >= cfg.max_steps {
            break Termination::StepLimit;
        }
        axpy(-eta, &grad, &mut w);
        if norm(&w) > cfg.divergence_norm || w.iter().any(|v| !v.is_finite()) {
            break Termination::Diverged;
        }
    };
    Ok(GdTrace {
        losses,
        grad_norms,
        weights: WeightVector(w),
        termination,
        step_size: eta,
    })
}

/// Orthonormal basis of the span of the feature rows.
pub fn data_subspace(data: &LabeledDataset) -> Result<Subspace> {
    if data.is_empty() {
        return Err(Error::invalid("data subspace of an empty dataset"));
    }
    let rows: Vec<Vec<f64>> = data.features().iter_rows().map(<[f64]>::to_vec).collect();
    numeric::orthonormalize_in(data.dim(), &rows, DEFAULT_RANK_TOL)
}

/// Maps a non-converged trace to `NoMinimum` (diverged) or `NotConverged`.
pub fn require_converged(trace: &GdTrace) -> Result<()> {
    match trace.termination {
        Termination::Converged => Ok(()),
        Termination::Diverged => Err(Error::NoMinimum(format!(
            "gradient descent diverged after {} steps (|w| = {:e}); the data look linearly separable",
            trace.steps(),
            norm(&trace.weights)
        ))),
        Termination::StepLimit => Err(Error::NotConverged {
            steps: trace.steps(),
            grad_norm: *trace.grad_norms.last().unwrap_or(&f64::NAN),
        }),
    }
}

/// The unique minimizer inside the data subspace: gradient descent from zero.
pub fn reference_minimizer(data: &LabeledDataset, cfg: &GdConfig) -> Result<WeightVector> {
    let trace = gradient_descent(&vec![0.0; data.dim()], data, cfg)?;
    require_converged(&trace)?;
    Ok(trace.weights)
}

/// Learned weights split into their in-subspace and orthogonal parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub w_hat: WeightVector,
    pub w_star: WeightVector,
    pub in_part: Vec<f64>,
    pub orth_part: Vec<f64>,
    /// `||in_part - w*_ref||`
    pub in_residual: f64,
    /// `||orth_part - proj_perp(w_init)||`
    pub orth_residual: f64,
    pub residual: f64,
    /// Largest `||proj_perp(w_t) - proj_perp(w_init)||` over all iterates.
    pub max_orth_drift: f64,
    pub steps: usize,
    pub subspace_dim: usize,
}

pub fn theorem1_decompose(
    w_init: &[f64],
    data: &LabeledDataset,
    cfg: &GdConfig,
) -> Result<Decomposition> {
    let sub = data_subspace(data)?;
    let w_star = reference_minimizer(data, cfg)?;
    let orth_init = sub.project_complement(w_init)?;
    let mut max_orth_drift = 0.0f64;
    let trace = gradient_descent_observed(w_init, data, None, cfg, |_, w| {
        let c = sub.project_complement(w).expect("dimension checked");
        max_orth_drift = max_orth_drift.max(norm(&numeric::sub(&c, &orth_init)));
    })?;
    require_converged(&trace)?;
    let in_part = sub.project(&trace.weights)?;
    let orth_part = sub.project_complement(&trace.weights)?;
    let in_residual = norm(&numeric::sub(&in_part, &w_star));
    let orth_residual = norm(&numeric::sub(&orth_part, &orth_init));
    Ok(Decomposition {
        steps: trace.steps(),
        w_hat: trace.weights,
        w_star,
        in_part,
        orth_part,
        in_residual,
        orth_residual,
        residual: in_residual + orth_residual,
        max_orth_drift,
        subspace_dim: sub.dim(),
    })
}

/// `wᵀx` for every example.
pub fn scores(w: &[f64], data: &LabeledDataset) -> Result<Vec<f64>> {
    check_dims(w, data)?;
    data.features().matvec(w)
}

/// `sign(wᵀx) == y`, with a zero score counted as incorrect.
pub fn per_example_correct(w: &[f64], data: &LabeledDataset) -> Result<Vec<bool>> {
    Ok(scores(w, data)?
        .into_iter()
        .zip(data.labels())
        .map(|(s, &y)| s * f64::from(y) > 0.0)
        .collect())
}

pub fn accuracy(w: &[f64], data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset"));
    }
    let correct = per_example_correct(w, data)?;
    Ok(correct.iter().filter(|c| **c).count() as f64 / correct.len() as f64)
}
