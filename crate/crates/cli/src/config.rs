//! JSON experiment configuration. Every section has defaults; unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shiftlab::logreg::GdConfig;
use shiftlab::shiftgen::{GeneratorSpec, ShiftKind, ShiftSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seed: u64,
    /// Independent repetitions (fresh data, initializations and pre-training
    /// samples per trial).
    pub trials: usize,
    pub generator: GeneratorSpec,
    pub shift: ShiftSpec,
    /// Gradient descent run to convergence (fine-tuning, pre-training).
    pub gd: GdConfig,
    pub sweep: SweepConfig,
    pub pretrain: PretrainConfig,
    pub bootstrap: BootstrapConfig,
    pub theorem: TheoremConfig,
    pub split: SplitConfig,
    pub combine: CombineConfig,
    pub curate: CurateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            trials: 20,
            generator: GeneratorSpec { n_test: 20_000, ..GeneratorSpec::default() },
            shift: ShiftSpec::new(ShiftKind::Spurious),
            gd: GdConfig::default(),
            sweep: SweepConfig::default(),
            pretrain: PretrainConfig::default(),
            bootstrap: BootstrapConfig::default(),
            theorem: TheoremConfig::default(),
            split: SplitConfig::default(),
            combine: CombineConfig::default(),
            curate: CurateConfig::default(),
        }
    }
}

/// From-scratch baselines that define the accuracy-on-the-line fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub trials: usize,
    pub checkpoints: usize,
    pub init_scale: f64,
    /// Step budget at fraction 1; smaller subsets get `max_steps / fraction`.
    pub max_steps: usize,
    pub grad_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            trials: 4,
            checkpoints: 2,
            init_scale: 1.0,
            max_steps: 2000,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub n: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { n: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 2000, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub n: usize,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub label_noise: f64,
    pub inits: usize,
    /// Norm of each random initialization.
    pub init_norm: f64,
    pub tolerance: f64,
    pub drift_tolerance: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            n: 200,
            ambient_dim: 10,
            subspace_dim: 4,
            label_noise: 0.1,
            inits: 10,
            init_norm: 1.0,
            tolerance: 1e-4,
            drift_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    /// Reference and shifted sets from the configured shift.
    Shift,
    /// Shifted set drawn from the reference distribution.
    Identical,
    /// Shifted set moved far outside the reference subspace.
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    Raw,
    /// Raw features followed by their squares, so that offsets of either
    /// sign become linearly detectable.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub source: SplitSource,
    /// Features seen by the domain classifier.
    pub features: FeatureMap,
    pub folds: usize,
    pub threshold: f64,
    pub threshold_sweep: Vec<f64>,
    pub bins: usize,
    pub level: f64,
    pub disjoint_offset: f64,
    /// Domain-classifier training.
    pub classifier: GdConfig,
    /// Fit baselines and a pre-trained model and report ER per split.
    pub per_split_er: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            source: SplitSource::Shift,
            features: FeatureMap::Raw,
            folds: 10,
            threshold: 0.2,
            threshold_sweep: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            bins: 100,
            level: 0.95,
            disjoint_offset: 10.0,
            classifier: GdConfig { max_steps: 20_000, grad_tol: 1e-8, ..GdConfig::default() },
            per_split_er: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    /// Re-randomize the spurious coordinate of the training data.
    Balance,
    /// Group-balanced retraining of scale and intercept on a held-out
    /// reference validation set.
    Dfr,
    /// No-op, for control runs.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombineConfig {
    pub intervention: Intervention,
    pub threshold: f64,
    pub n_validation: usize,
}

impl Default for CombineConfig {
    fn default() -> Self {
        Self { intervention: Intervention::Balance, threshold: 0.5, n_validation: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateConfig {
    pub n_curated: usize,
    pub restrict_group: Option<u32>,
    /// Curated-set sizes for the from-scratch arm.
    pub scratch_sizes: Vec<usize>,
    /// Step budget for fitting curated sets, which may be separable.
    pub fine_tune_steps: usize,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            n_curated: 64,
            restrict_group: Some(0),
            scratch_sizes: vec![64, 128, 256, 512, 1024],
            fine_tune_steps: 5000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return bad("run_id must be non-empty and use only [A-Za-z0-9_-]");
        }
        self.gd.validate()?;
        self.split.classifier.validate()?;
        if self.sweep.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("sweep fractions must lie in (0, 1]");
        }
        if !(self.sweep.init_scale >= 0.0) || !(self.sweep.grad_tol > 0.0) {
            return bad("sweep init_scale must be nonnegative and grad_tol positive");
        }
        if self.bootstrap.resamples < 100 || !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad("bootstrap needs at least 100 resamples and a level in (0, 1)");
        }
        if self.split.folds < 2 || self.split.bins < 2 {
            return bad("split needs at least 2 folds and 2 bins");
        }
        if !(self.split.threshold >= 0.0) || self.split.threshold_sweep.iter().any(|t| !(*t >= 0.0)) {
            return bad("split thresholds must be nonnegative");
        }
        if !(self.combine.threshold >= 0.0 && self.combine.threshold <= 1.0) {
            return bad("combine threshold must be a probability");
        }
        if self.curate.n_curated == 0 || self.curate.n_curated % 2 != 0 {
            return bad("curate n_curated must be positive and even");
        }
        if self.curate.scratch_sizes.iter().any(|&n| n == 0 || n % 2 != 0) {
            return bad("curate scratch_sizes must be positive and even");
        }
        let t = &self.theorem;
        if t.subspace_dim == 0 || t.subspace_dim > t.ambient_dim || t.n == 0 || t.inits == 0 {
            return bad("theorem instance needs 0 < subspace_dim <= ambient_dim, n > 0 and inits > 0");
        }
        if !(0.0..=0.5).contains(&t.label_noise) {
            return bad("theorem label_noise must lie in [0, 0.5]");
        }
        Ok(())
    }
}
