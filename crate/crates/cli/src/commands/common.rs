use serde::Serialize;
use shiftlab::logreg::{gradient_descent, require_converged, GdConfig};
use shiftlab::robustness::{random_init, SweepSpec};
use shiftlab::seed::{self, arm};
use shiftlab::shiftgen::{ExperimentData, ShiftGenerator};
use shiftlab::LabeledDataset;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Header embedded in every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader<'a> {
    pub command: &'static str,
    pub run_id: &'a str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
}

impl<'a> ReportHeader<'a> {
    pub fn new(command: &'static str, cfg: &'a ExperimentConfig) -> Self {
        Self { command, run_id: &cfg.run_id, seed: cfg.seed, config: cfg }
    }
}

pub fn generator(cfg: &ExperimentConfig) -> Result<ShiftGenerator, CliError> {
    Ok(ShiftGenerator::new(&cfg.generator, &cfg.shift)?)
}

pub fn trial_data(cfg: &ExperimentConfig, gen: &ShiftGenerator, trial: usize) -> ExperimentData {
    gen.sample_experiment(seed::mix(cfg.seed, arm::DATA, trial as u64))
}

pub fn sweep_spec(cfg: &ExperimentConfig, trial: usize) -> SweepSpec {
    SweepSpec {
        fractions: cfg.sweep.fractions.clone(),
        trials: cfg.sweep.trials,
        checkpoints: cfg.sweep.checkpoints,
        init_scale: cfg.sweep.init_scale,
        seed: seed::mix(cfg.seed, arm::BASELINE, trial as u64),
    }
}

/// Budgeted training for baselines; small subsets may be separable.
pub fn sweep_gd(cfg: &ExperimentConfig) -> GdConfig {
    GdConfig {
        max_steps: cfg.sweep.max_steps,
        grad_tol: cfg.sweep.grad_tol,
        stop_on_separation: false,
        ..cfg.gd.clone()
    }
}

/// Weights fitted to convergence on the auxiliary pre-training data.
pub fn pretrained_weights(
    cfg: &ExperimentConfig,
    gen: &ShiftGenerator,
    trial: usize,
) -> Result<Vec<f64>, CliError> {
    let mut rng = seed::rng(seed::mix(cfg.seed, arm::PRETRAIN, trial as u64));
    let data = gen.sample_pretraining(cfg.pretrain.n, &mut rng);
    fit(&vec![0.0; data.dim()], &data, &cfg.gd)
}

/// Random initialization `N(0, init_scale²)` for one arm and trial.
pub fn scratch_init(cfg: &ExperimentConfig, d: usize, arm_id: u64, trial: usize) -> Result<Vec<f64>, CliError> {
    let mut rng = seed::rng(seed::mix(cfg.seed ^ arm::INIT, arm_id, trial as u64));
    Ok(random_init(d, cfg.sweep.init_scale, &mut rng)?)
}

/// Gradient descent that must converge.
pub fn fit(w0: &[f64], data: &LabeledDataset, gd: &GdConfig) -> Result<Vec<f64>, CliError> {
    let trace = gradient_descent(w0, data, gd)?;
    require_converged(&trace)?;
    Ok(trace.weights.into_inner())
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
