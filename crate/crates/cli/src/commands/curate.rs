//! Fine-tuning on a small counterfactually curated dataset versus training on
//! the full group-imbalanced data.

use serde::Serialize;
use shiftlab::logreg::{accuracy, gradient_descent, per_example_correct, scores, GdConfig};
use shiftlab::robustness::worst_group_accuracy;
use shiftlab::seed::{self, arm};
use shiftlab::shiftgen::{
    build_counterfactual_dataset, class_group_tags, coordinate_label_correlation, ShiftKind, CLASS_COORD,
    SPURIOUS_COORD,
};
use shiftlab::LabeledDataset;

use super::common::{self, ReportHeader};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

#[derive(Debug, Clone, Serialize)]
pub struct ArmRow {
    pub arm: String,
    pub n_train: usize,
    pub accuracy: f64,
    pub worst_group_accuracy: f64,
    /// Class-by-group tag `2·group + [y = +1]` of the worst group.
    pub worst_group: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurateReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub arms: Vec<ArmRow>,
    pub curated_spurious_correlation: f64,
    pub curated_label_counts: (usize, usize),
    pub worst_group_gain: f64,
    /// Smallest from-scratch curated size matching the pre-trained curated
    /// arm's worst-group accuracy, if any size in the sweep does.
    pub scratch_size_to_match: Option<usize>,
}

fn evaluate(arm: String, n_train: usize, w: &[f64], test: &LabeledDataset) -> Result<ArmRow, CliError> {
    let tags = class_group_tags(test)?;
    let (wga, g) = worst_group_accuracy(&per_example_correct(w, test)?, &tags)?;
    Ok(ArmRow { arm, n_train, accuracy: accuracy(w, test)?, worst_group_accuracy: wga, worst_group: g })
}

/// Budgeted descent; curated sets may be separable, so the last iterate is
/// kept whatever the termination.
fn budget_fit(w0: &[f64], data: &LabeledDataset, cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let gd = GdConfig { max_steps: cfg.curate.fine_tune_steps, stop_on_separation: false, ..cfg.gd.clone() };
    Ok(gradient_descent(w0, data, &gd)?.weights.into_inner())
}

pub struct CurateRun {
    pub arms: Vec<ArmRow>,
    pub curated: LabeledDataset,
    pub pretrained_curated: Vec<f64>,
    pub test: LabeledDataset,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<CurateRun, CliError> {
    if cfg.shift.kind != ShiftKind::GroupImbalance {
        return Err(CliError::Config("curate needs a group_imbalance shift".into()));
    }
    let gen = common::generator(cfg)?;
    let data = common::trial_data(cfg, &gen, 0);
    let test = data.reference_test;
    let d = test.dim();
    let w_pre = common::pretrained_weights(cfg, &gen, 0)?;
    let n_full = data.train.len();

    let mut arms = Vec::new();
    let scratch = budget_fit(&common::scratch_init(cfg, d, arm::BASELINE, 0)?, &data.train, cfg)?;
    arms.push(evaluate("scratch_full".into(), n_full, &scratch, &test)?);
    let pre_full = budget_fit(&w_pre, &data.train, cfg)?;
    arms.push(evaluate("pretrained_full".into(), n_full, &pre_full, &test)?);

    let mut rng = seed::rng(seed::mix(cfg.seed, arm::CURATE, 0));
    let max_size = cfg.curate.scratch_sizes.iter().copied().max().unwrap_or(0).max(cfg.curate.n_curated);
    // enough source examples for the largest curated set of the restricted group
    let source = gen.sample_reference(4 * max_size + 64, &mut rng);
    let curated = build_counterfactual_dataset(
        &source,
        cfg.curate.n_curated,
        cfg.curate.restrict_group,
        CLASS_COORD,
        seed::mix(cfg.seed, arm::CURATE, 1),
    )?;
    let pretrained_curated = budget_fit(&w_pre, &curated, cfg)?;
    arms.push(evaluate("pretrained_curated".into(), curated.len(), &pretrained_curated, &test)?);
    for (i, &n) in cfg.curate.scratch_sizes.iter().enumerate() {
        let set = build_counterfactual_dataset(
            &source,
            n,
            cfg.curate.restrict_group,
            CLASS_COORD,
            seed::mix(cfg.seed, arm::CURATE, 2 + i as u64),
        )?;
        let w0 = common::scratch_init(cfg, d, arm::CURATE, i)?;
        let w = budget_fit(&w0, &set, cfg)?;
        arms.push(evaluate(format!("scratch_curated_{n}"), n, &w, &test)?);
    }
    Ok(CurateRun { arms, curated, pretrained_curated, test })
}

pub fn run(cfg: &ExperimentConfig) -> Result<(CurateReport<'_>, Outputs), CliError> {
    let r = execute(cfg)?;
    let mut out = Outputs::default();
    let mut table = Csv::new(&["arm", "n_train", "accuracy", "worst_group_accuracy", "worst_group"]);
    for a in &r.arms {
        table.row(&[
            Cell::S(&a.arm),
            Cell::U(a.n_train as u64),
            Cell::F(a.accuracy),
            Cell::F(a.worst_group_accuracy),
            Cell::U(a.worst_group.into()),
        ]);
    }
    out.add("arms.csv", table.finish());

    let mut scatter = Csv::new(&["index", "group", "label", "class_coord", "score"]);
    let s = scores(&r.pretrained_curated, &r.test)?;
    let groups = r.test.groups().expect("group-imbalance data carry groups");
    for i in 0..r.test.len() {
        scatter.row(&[
            Cell::U(i as u64),
            Cell::U(groups[i].into()),
            Cell::S(if r.test.labels()[i] > 0 { "1" } else { "-1" }),
            Cell::F(r.test.x(i)[CLASS_COORD]),
            Cell::F(s[i]),
        ]);
    }
    out.add("extrapolation.csv", scatter.finish());
    out.dataset("curated.csv", &r.curated)?;

    let pre_full = r.arms.iter().find(|a| a.arm == "pretrained_full").expect("arm present");
    let pre_cur = r.arms.iter().find(|a| a.arm == "pretrained_curated").expect("arm present");
    let pos = r.curated.labels().iter().filter(|&&y| y > 0).count();
    let report = CurateReport {
        header: ReportHeader::new("curate", cfg),
        curated_spurious_correlation: coordinate_label_correlation(&r.curated, SPURIOUS_COORD),
        curated_label_counts: (pos, r.curated.len() - pos),
        worst_group_gain: pre_cur.worst_group_accuracy - pre_full.worst_group_accuracy,
        scratch_size_to_match: r
            .arms
            .iter()
            .filter(|a| a.arm.starts_with("scratch_curated_") && a.worst_group_accuracy >= pre_cur.worst_group_accuracy)
            .map(|a| a.n_train)
            .min(),
        arms: r.arms.clone(),
    };
    out.json("report.json", &report)?;
    Ok((report, out))
}
