//! Pre-training, a bias intervention, and both together, on a shift that is
//! partly spurious and partly out-of-support.

use rayon::prelude::*;
use serde::Serialize;
use shiftlab::debias::{balance_training_data, dfr_retrain};
use shiftlab::logreg::{per_example_correct, WeightVector};
use shiftlab::robustness::{
    baseline_sweep, bootstrap_mean_ci, corrected_examples, default_clamp, effective_robustness, overlap_report,
    probit_fit, AccuracyPoint, CorrectedSet, Interval, OverlapReport, ProbitFit,
};
use shiftlab::seed::{self, arm};
use shiftlab::shiftgen::{ShiftGenerator, SPURIOUS_COORD};
use shiftlab::LabeledDataset;

use super::common::{self, ReportHeader};
use crate::config::{ExperimentConfig, Intervention};
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

pub const ARMS: [&str; 4] = ["baseline", "pretrain", "intervention", "pretrain+intervention"];

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub acc_ref: f64,
    pub acc_shift: f64,
    pub correct_shift: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct CombineTrial {
    pub arms: Vec<ArmResult>,
}

impl CombineTrial {
    /// Whether the combined arm has the strictly highest shifted accuracy.
    pub fn combined_wins(&self) -> bool {
        let c = self.arms[3].acc_shift;
        self.arms[..3].iter().all(|a| a.acc_shift < c)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub arm: &'static str,
    pub mean_acc_ref: f64,
    pub mean_acc_shift: f64,
    pub mean_er: f64,
    pub er_interval: Interval,
}

#[derive(Debug, Clone, Serialize)]
pub struct CombineReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub intervention: Intervention,
    pub fit: Option<ProbitFit>,
    pub arms: Vec<ArmSummary>,
    pub combined_wins: usize,
    pub trials: usize,
    pub corrected_sizes: Vec<(String, usize)>,
    pub overlap: Option<OverlapReport>,
}

/// Group tags `2·[x_s·y > 0] + [y > 0]`: class crossed with whether the
/// spurious coordinate agrees with the label.
pub fn alignment_groups(data: &LabeledDataset, coord: usize) -> Vec<u32> {
    (0..data.len())
        .map(|i| 2 * u32::from(data.x(i)[coord] * data.y(i) > 0.0) + u32::from(data.y(i) > 0.0))
        .collect()
}

fn arm_result(w: &[f64], reference: &LabeledDataset, shifted: &LabeledDataset) -> Result<ArmResult, CliError> {
    let correct_ref = per_example_correct(w, reference)?;
    let correct_shift = per_example_correct(w, shifted)?;
    Ok(arm_from_correct(&correct_ref, correct_shift))
}

fn arm_from_correct(correct_ref: &[bool], correct_shift: Vec<bool>) -> ArmResult {
    let frac = |c: &[bool]| c.iter().filter(|&&b| b).count() as f64 / c.len().max(1) as f64;
    ArmResult { acc_ref: frac(correct_ref), acc_shift: frac(&correct_shift), correct_shift }
}

fn dfr_arm(
    cfg: &ExperimentConfig,
    w: Vec<f64>,
    validation: &LabeledDataset,
    reference: &LabeledDataset,
    shifted: &LabeledDataset,
) -> Result<ArmResult, CliError> {
    let m = dfr_retrain(&WeightVector(w), validation, &cfg.gd)?;
    Ok(arm_from_correct(&m.per_example_correct(reference), m.per_example_correct(shifted)))
}

pub fn run_trial(
    cfg: &ExperimentConfig,
    gen: &ShiftGenerator,
    reference_test: &LabeledDataset,
    shifted_test: &LabeledDataset,
    trial: usize,
) -> Result<CombineTrial, CliError> {
    let t = trial as u64;
    let mut rng = seed::rng(seed::mix(cfg.seed, arm::DATA, t));
    let train = gen.sample_reference(cfg.generator.n_train, &mut rng);
    let d = train.dim();
    let w_pre = common::pretrained_weights(cfg, gen, trial)?;
    let init_base = common::scratch_init(cfg, d, arm::BASELINE, trial)?;
    let init_int = common::scratch_init(cfg, d, arm::INTERVENTION, trial)?;

    let baseline = common::fit(&init_base, &train, &cfg.gd)?;
    let pretrain = common::fit(&w_pre, &train, &cfg.gd)?;
    let eval = |w: &[f64]| arm_result(w, reference_test, shifted_test);
    let arms = match cfg.combine.intervention {
        Intervention::Balance => {
            let balanced = balance_training_data(&train, &cfg.shift, seed::mix(cfg.seed, arm::INTERVENTION, t))?;
            let intervention = common::fit(&init_int, &balanced, &cfg.gd)?;
            let combined = common::fit(&w_pre, &balanced, &cfg.gd)?;
            vec![eval(&baseline)?, eval(&pretrain)?, eval(&intervention)?, eval(&combined)?]
        }
        Intervention::Dfr => {
            let mut vrng = seed::rng(seed::mix(cfg.seed, arm::INTERVENTION, t));
            let v = gen.sample_reference(cfg.combine.n_validation, &mut vrng);
            let groups = alignment_groups(&v, SPURIOUS_COORD);
            let v = v.with_groups(groups)?;
            let intervention = common::fit(&init_int, &train, &cfg.gd)?;
            vec![
                eval(&baseline)?,
                eval(&pretrain)?,
                dfr_arm(cfg, intervention, &v, reference_test, shifted_test)?,
                dfr_arm(cfg, pretrain.clone(), &v, reference_test, shifted_test)?,
            ]
        }
        Intervention::Identity => {
            vec![eval(&baseline)?, eval(&pretrain)?, eval(&baseline)?, eval(&pretrain)?]
        }
    };
    Ok(CombineTrial { arms })
}

pub struct CombineRun {
    pub trials: Vec<CombineTrial>,
    pub fit: Option<ProbitFit>,
    pub corrected: Vec<(String, CorrectedSet)>,
    pub overlap: Option<OverlapReport>,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<CombineRun, CliError> {
    let gen = common::generator(cfg)?;
    let mut rng = seed::rng(seed::mix(cfg.seed, arm::COMBINED, 0));
    let reference_test = gen.sample_reference(cfg.generator.n_test, &mut rng);
    let shifted_test = gen.sample_shifted(cfg.generator.n_test, &mut rng);
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &gen, &reference_test, &shifted_test, t))
        .collect::<Result<Vec<_>, _>>()?;
    if trials.is_empty() {
        return Ok(CombineRun { trials, fit: None, corrected: Vec::new(), overlap: None });
    }

    let data = common::trial_data(cfg, &gen, 0);
    let baselines = baseline_sweep(
        &data.train,
        &reference_test,
        &shifted_test,
        &common::sweep_spec(cfg, 0),
        &common::sweep_gd(cfg),
    )?;
    let fit = probit_fit(&baselines, default_clamp(cfg.generator.n_test))?;

    let matrix = |a: usize| -> Vec<Vec<bool>> { trials.iter().map(|t| t.arms[a].correct_shift.clone()).collect() };
    let base = matrix(0);
    let corrected = (1..4)
        .map(|a| Ok((ARMS[a].to_string(), corrected_examples(&base, &matrix(a), cfg.combine.threshold)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let overlap = overlap_report(&corrected, Some(ARMS[3]))?;
    Ok(CombineRun { trials, fit: Some(fit), corrected, overlap: Some(overlap) })
}

pub fn run(cfg: &ExperimentConfig) -> Result<(CombineReport<'_>, Outputs), CliError> {
    let result = execute(cfg)?;
    let mut out = Outputs::default();
    let mut arms_csv = Csv::new(&["trial", "arm", "acc_ref", "acc_shift", "er"]);
    let mut summaries = Vec::new();
    if let Some(fit) = &result.fit {
        for (a, name) in ARMS.iter().enumerate() {
            let mut ers = Vec::new();
            let (mut sr, mut ss) = (0.0, 0.0);
            for (t, trial) in result.trials.iter().enumerate() {
                let r = &trial.arms[a];
                let er = effective_robustness(fit, &AccuracyPoint::new(r.acc_ref, r.acc_shift, *name)?)?;
                arms_csv.row(&[Cell::U(t as u64), Cell::S(name), Cell::F(r.acc_ref), Cell::F(r.acc_shift), Cell::F(er)]);
                ers.push(er);
                sr += r.acc_ref;
                ss += r.acc_shift;
            }
            let n = result.trials.len() as f64;
            summaries.push(ArmSummary {
                arm: name,
                mean_acc_ref: sr / n,
                mean_acc_shift: ss / n,
                mean_er: common::mean(&ers).unwrap_or(0.0),
                er_interval: bootstrap_mean_ci(
                    &ers,
                    cfg.bootstrap.resamples,
                    cfg.bootstrap.level,
                    seed::mix(cfg.seed, arm::BOOTSTRAP, a as u64),
                )?,
            });
        }
    }
    out.add("arms.csv", arms_csv.finish());

    if !result.corrected.is_empty() {
        let mut header = vec!["index", "baseline_fraction"];
        let names: Vec<String> = result.corrected.iter().map(|(n, _)| n.clone()).collect();
        let frac_cols: Vec<String> = names.iter().map(|n| format!("{n}_fraction")).collect();
        let in_cols: Vec<String> = names.iter().map(|n| format!("in_{n}")).collect();
        header.extend(frac_cols.iter().map(String::as_str));
        header.extend(in_cols.iter().map(String::as_str));
        let mut csv = Csv::new(&header);
        let base = &result.corrected[0].1.baseline_fraction;
        for i in 0..base.len() {
            let mut cells = vec![Cell::U(i as u64), Cell::F(base[i])];
            cells.extend(result.corrected.iter().map(|(_, s)| Cell::F(s.intervention_fraction[i])));
            cells.extend(
                result
                    .corrected
                    .iter()
                    .map(|(_, s)| Cell::B(s.indices.binary_search(&i).is_ok())),
            );
            csv.row(&cells);
        }
        out.add("corrected.csv", csv.finish());
    }

    let report = CombineReport {
        header: ReportHeader::new("combine", cfg),
        intervention: cfg.combine.intervention,
        fit: result.fit.clone(),
        arms: summaries,
        combined_wins: result.trials.iter().filter(|t| t.combined_wins()).count(),
        trials: result.trials.len(),
        corrected_sizes: result.corrected.iter().map(|(n, s)| (n.clone(), s.indices.len())).collect(),
        overlap: result.overlap.clone(),
    };
    out.json("report.json", &report)?;
    Ok((report, out))
}
