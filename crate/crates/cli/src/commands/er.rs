//! Effective robustness of pre-trained initializations over the
//! accuracy-on-the-line fit of from-scratch baselines.

use rayon::prelude::*;
use serde::Serialize;
use shiftlab::logreg::accuracy;
use shiftlab::robustness::{
    baseline_sweep, bootstrap_mean_ci, default_clamp, effective_robustness, probit_fit, AccuracyPoint, Interval,
    ProbitFit,
};
use shiftlab::seed::{self, arm};
use shiftlab::shiftgen::ShiftKind;

use super::common::{self, ReportHeader};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

#[derive(Debug, Clone, Serialize)]
pub struct ErTrial {
    pub trial: usize,
    pub fit: ProbitFit,
    pub pretrained: AccuracyPoint,
    pub predicted_shift: f64,
    pub er: f64,
    #[serde(skip)]
    pub baselines: Vec<AccuracyPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub shift_kind: ShiftKind,
    pub in_support_kind: bool,
    pub trials: Vec<ErTrial>,
    pub mean_er: Option<f64>,
    pub mean_er_interval: Option<Interval>,
    pub interval_method: &'static str,
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<ErTrial, CliError> {
    let gen = common::generator(cfg)?;
    let data = common::trial_data(cfg, &gen, trial);
    let baselines = baseline_sweep(
        &data.train,
        &data.reference_test,
        &data.shifted_test,
        &common::sweep_spec(cfg, trial),
        &common::sweep_gd(cfg),
    )?;
    let fit = probit_fit(&baselines, default_clamp(cfg.generator.n_test))?;
    let w_pre = common::pretrained_weights(cfg, &gen, trial)?;
    let w = common::fit(&w_pre, &data.train, &cfg.gd)?;
    let pretrained = AccuracyPoint::new(
        accuracy(&w, &data.reference_test)?,
        accuracy(&w, &data.shifted_test)?,
        format!("pretrained trial={trial}"),
    )?;
    let er = effective_robustness(&fit, &pretrained)?;
    Ok(ErTrial { trial, predicted_shift: fit.predict(pretrained.acc_ref)?, fit, pretrained, er, baselines })
}

pub fn run(cfg: &ExperimentConfig) -> Result<(ErReport<'_>, Outputs), CliError> {
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;
    let ers: Vec<f64> = trials.iter().map(|t| t.er).collect();
    let mean_er_interval = if ers.is_empty() {
        None
    } else {
        Some(bootstrap_mean_ci(
            &ers,
            cfg.bootstrap.resamples,
            cfg.bootstrap.level,
            seed::mix(cfg.seed, arm::BOOTSTRAP, 0),
        )?)
    };

    let mut out = Outputs::default();
    let mut table = Csv::new(&["trial", "acc_ref", "acc_shift", "predicted_shift", "er", "fit_a", "fit_b", "fit_r_squared"]);
    let mut scatter = Csv::new(&["trial", "model", "tag", "acc_ref", "acc_shift"]);
    let mut curve = Csv::new(&["trial", "acc_ref", "predicted_shift"]);
    for t in &trials {
        table.row(&[
            Cell::U(t.trial as u64),
            Cell::F(t.pretrained.acc_ref),
            Cell::F(t.pretrained.acc_shift),
            Cell::F(t.predicted_shift),
            Cell::F(t.er),
            Cell::F(t.fit.a),
            Cell::F(t.fit.b),
            Cell::F(t.fit.r_squared),
        ]);
        for (model, p) in t
            .baselines
            .iter()
            .map(|p| ("baseline", p))
            .chain(std::iter::once(("pretrained", &t.pretrained)))
        {
            scatter.row(&[Cell::U(t.trial as u64), Cell::S(model), Cell::S(&p.tag), Cell::F(p.acc_ref), Cell::F(p.acc_shift)]);
        }
        for i in 1..100 {
            let r = i as f64 / 100.0;
            curve.row(&[Cell::U(t.trial as u64), Cell::F(r), Cell::F(t.fit.predict(r)?)]);
        }
    }
    out.add("er_table.csv", table.finish());
    out.add("scatter.csv", scatter.finish());
    out.add("fit_curve.csv", curve.finish());
    let report = ErReport {
        header: ReportHeader::new("er", cfg),
        shift_kind: cfg.shift.kind,
        in_support_kind: cfg.shift.kind.is_in_support(),
        mean_er: common::mean(&ers),
        mean_er_interval,
        interval_method: "percentile bootstrap over per-trial ER",
        trials,
    };
    out.json("report.json", &report)?;
    Ok((report, out))
}
