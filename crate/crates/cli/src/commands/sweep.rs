//! From-scratch baseline sweep and its probit-space fit.

use serde::Serialize;
use shiftlab::robustness::{baseline_sweep, default_clamp, probit_fit, AccuracyPoint, ProbitFit};

use super::common::{self, ReportHeader};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub points: usize,
    pub fit: Option<ProbitFit>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<(SweepReport<'_>, Outputs), CliError> {
    let gen = common::generator(cfg)?;
    let data = common::trial_data(cfg, &gen, 0);
    let points: Vec<AccuracyPoint> = baseline_sweep(
        &data.train,
        &data.reference_test,
        &data.shifted_test,
        &common::sweep_spec(cfg, 0),
        &common::sweep_gd(cfg),
    )?;
    let fit = if points.is_empty() {
        None
    } else {
        Some(probit_fit(&points, default_clamp(cfg.generator.n_test))?)
    };
    let mut csv = Csv::new(&["tag", "acc_ref", "acc_shift"]);
    for p in &points {
        csv.row(&[Cell::S(&p.tag), Cell::F(p.acc_ref), Cell::F(p.acc_shift)]);
    }
    let mut out = Outputs::default();
    out.add("points.csv", csv.finish());
    let report = SweepReport { header: ReportHeader::new("sweep", cfg), points: points.len(), fit };
    out.json("report.json", &report)?;
    Ok((report, out))
}
