//! Numerical check of the initialization decomposition: from any start,
//! gradient descent ends at `w*_ref + proj_perp(w_init)`.

use serde::Serialize;
use shiftlab::logreg::theorem1_decompose;
use shiftlab::numeric::{norm, Matrix};
use shiftlab::seed::{self, arm};
use shiftlab::{Error, LabeledDataset};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::common::ReportHeader;
use crate::config::{ExperimentConfig, TheoremConfig};
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

/// Gaussian inputs on the first `k` coordinates, labels from a random
/// direction with a `label_noise` chance of flipping.
pub fn theorem_instance(t: &TheoremConfig, seed: u64) -> Result<LabeledDataset, CliError> {
    let mut rng = seed::rng(seed);
    let (d, k) = (t.ambient_dim, t.subspace_dim);
    let mut dir: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nd = norm(&dir);
    dir.iter_mut().for_each(|v| *v /= nd);
    let mut data = vec![0.0; t.n * d];
    let mut labels = Vec::with_capacity(t.n);
    for i in 0..t.n {
        let row = &mut data[i * d..i * d + k];
        row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let s: f64 = row.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut y: i8 = if s >= 0.0 { 1 } else { -1 };
        if rng.random::<f64>() < t.label_noise {
            y = -y;
        }
        labels.push(y);
    }
    Ok(LabeledDataset::new(Matrix::new(t.n, d, data)?, labels)?)
}

/// `init_norm` times a uniformly random unit vector.
pub fn random_unit_init(d: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x *= scale / n);
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct InitResult {
    pub init: usize,
    pub in_residual: f64,
    pub orth_residual: f64,
    pub residual: f64,
    pub max_orth_drift: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    /// `pass`, `fail` or `no-minimum`.
    pub status: &'static str,
    pub message: Option<String>,
    pub subspace_dim: Option<usize>,
    pub max_residual: Option<f64>,
    pub max_orth_drift: Option<f64>,
    pub inits: Vec<InitResult>,
}

pub fn run(cfg: &ExperimentConfig) -> (Outputs, Result<(), CliError>) {
    let mut out = Outputs::default();
    let mut report = TheoremReport {
        header: ReportHeader::new("theorem-check", cfg),
        status: "pass",
        message: None,
        subspace_dim: None,
        max_residual: None,
        max_orth_drift: None,
        inits: Vec::new(),
    };
    let status = check(cfg, &mut report);
    match &status {
        Ok(()) => {}
        Err(CliError::Core(Error::NoMinimum(m))) => {
            report.status = "no-minimum";
            report.message = Some(m.clone());
        }
        Err(e) => {
            report.status = "fail";
            report.message = Some(e.to_string());
        }
    }
    let mut csv = Csv::new(&["init", "in_residual", "orth_residual", "residual", "max_orth_drift", "steps"]);
    for r in &report.inits {
        csv.row(&[
            Cell::U(r.init as u64),
            Cell::F(r.in_residual),
            Cell::F(r.orth_residual),
            Cell::F(r.residual),
            Cell::F(r.max_orth_drift),
            Cell::U(r.steps as u64),
        ]);
    }
    out.add("residuals.csv", csv.finish());
    if let Err(e) = out.json("report.json", &report) {
        return (out, Err(e));
    }
    (out, status)
}

fn check(cfg: &ExperimentConfig, report: &mut TheoremReport) -> Result<(), CliError> {
    let t = &cfg.theorem;
    let data = theorem_instance(t, seed::mix(cfg.seed, arm::DATA, 0))?;
    for i in 0..t.inits {
        let w0 = random_unit_init(t.ambient_dim, t.init_norm, seed::mix(cfg.seed, arm::INIT, i as u64));
        let dec = theorem1_decompose(&w0, &data, &cfg.gd)?;
        report.subspace_dim = Some(dec.subspace_dim);
        report.inits.push(InitResult {
            init: i,
            in_residual: dec.in_residual,
            orth_residual: dec.orth_residual,
            residual: dec.residual,
            max_orth_drift: dec.max_orth_drift,
            steps: dec.steps,
        });
    }
    let max_res = report.inits.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_drift = report.inits.iter().map(|r| r.max_orth_drift).fold(0.0, f64::max);
    report.max_residual = Some(max_res);
    report.max_orth_drift = Some(max_drift);
    if max_res > t.tolerance || max_drift > t.drift_tolerance {
        return Err(CliError::CheckFailed(format!(
            "residual {max_res:e} (tolerance {:e}), orthogonal drift {max_drift:e} (tolerance {:e})",
            t.tolerance, t.drift_tolerance
        )));
    }
    Ok(())
}
