//! Interventions against dataset bias: group-balanced last-layer retraining
//! (deep feature reweighting) and the balancing oracle that re-randomizes
//! spurious coordinates.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::logreg::{require_converged, weighted_gradient_descent, GdConfig, WeightVector};
use crate::numeric::{dot, Matrix};
use crate::seed;
use crate::shiftgen::ShiftSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeighting {
    pub weights: Vec<f64>,
}

/// `n / (G · n_g)` for an example of group `g`, so every group carries the
/// same total weight and the weights sum to `n`.
pub fn group_equal_weights(groups: &[u32]) -> Result<GroupWeighting> {
    let mut declared: Vec<u32> = groups.to_vec();
    declared.sort_unstable();
    declared.dedup();
    group_equal_weights_declared(groups, &declared)
}

/// As [`group_equal_weights`], over an explicit group list; a declared
/// group without members is an error.
pub fn group_equal_weights_declared(groups: &[u32], declared: &[u32]) -> Result<GroupWeighting> {
    if groups.is_empty() || declared.is_empty() {
        return Err(Error::invalid("group weighting of an empty dataset"));
    }
    let mut counts: BTreeMap<u32, usize> = declared.iter().map(|&g| (g, 0)).collect();
    for g in groups {
        *counts
            .get_mut(g)
            .ok_or_else(|| Error::invalid(format!("undeclared group {g}")))? += 1;
    }
    if let Some((g, _)) = counts.iter().find(|(_, &c)| c == 0) {
        return Err(Error::invalid(format!("group {g} has no examples")));
    }
    let n = groups.len() as f64;
    let k = counts.len() as f64;
    Ok(GroupWeighting {
        weights: groups.iter().map(|g| n / (k * counts[g] as f64)).collect(),
    })
}

/// `a·wᵀx + b` over a frozen direction `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfrModel {
    pub base: WeightVector,
    pub scale: f64,
    pub intercept: f64,
}

impl DfrModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.scale * dot(&self.base, x) + self.intercept
    }

    /// Zero scores count as errors, as for plain linear models.
    pub fn per_example_correct(&self, data: &LabeledDataset) -> Vec<bool> {
        (0..data.len())
            .map(|i| self.score(data.x(i)) * data.y(i) > 0.0)
            .collect()
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> f64 {
        let c = self.per_example_correct(data);
        c.iter().filter(|&&b| b).count() as f64 / c.len().max(1) as f64
    }
}

/// Retrains scale and intercept over the frozen score `wᵀx` by group-equal
/// weighted logistic loss, starting from `(1, 0)`.
pub fn dfr_retrain(base: &WeightVector, validation: &LabeledDataset, cfg: &GdConfig) -> Result<DfrModel> {
    if base.len() != validation.dim() {
        return Err(Error::invalid("base model and validation dimensions differ"));
    }
    let groups = validation
        .groups()
        .ok_or_else(|| Error::invalid("DFR needs group tags on the validation set"))?;
    let weights = group_equal_weights(groups)?;
    let mut data = Vec::with_capacity(2 * validation.len());
    for i in 0..validation.len() {
        data.push(dot(base, validation.x(i)));
        data.push(1.0);
    }
    let frozen = validation.with_features(Matrix::new(validation.len(), 2, data)?)?;
    let trace = weighted_gradient_descent(&[1.0, 0.0], &frozen, &weights.weights, cfg)?;
    require_converged(&trace)?;
    Ok(DfrModel {
        base: base.clone(),
        scale: trace.weights[0],
        intercept: trace.weights[1],
    })
}

/// Retrains a full last layer over precomputed frozen features (one column
/// per feature, intercept included by the caller) with group-equal weights.
pub fn dfr_retrain_layer(frozen: &LabeledDataset, cfg: &GdConfig) -> Result<WeightVector> {
    let groups = frozen
        .groups()
        .ok_or_else(|| Error::invalid("DFR needs group tags on the validation set"))?;
    let weights = group_equal_weights(groups)?;
    let trace = weighted_gradient_descent(&vec![0.0; frozen.dim()], frozen, &weights.weights, cfg)?;
    require_converged(&trace)?;
    Ok(trace.weights)
}

/// Copy of `data` whose spurious coordinates are redrawn from `U[-1, 1]`.
pub fn balance_training_data(data: &LabeledDataset, shift: &ShiftSpec, seed: u64) -> Result<LabeledDataset> {
    let coords = shift.spurious_coords()?;
    if coords.iter().any(|&j| j >= data.dim()) {
        return Err(Error::invalid("spurious coordinate outside the feature dimension"));
    }
    let mut rng = seed::rng(seed);
    let mut features = data.features().clone();
    for i in 0..data.len() {
        let row = features.row_mut(i);
        for &j in &coords {
            row[j] = rng.random_range(-1.0..=1.0);
        }
    }
    data.with_features(features)
}
