//! In-/out-of-support split of a shifted set, with calibration diagnostics
//! and optional per-split effective robustness.

use serde::Serialize;
use shiftlab::logreg::accuracy;
use shiftlab::robustness::{baseline_sweep, default_clamp, effective_robustness, probit_fit, AccuracyPoint};
use shiftlab::seed::{self, arm};
use shiftlab::splitter::{apply_threshold, calibration_curve, split_shifted, FoldReport};
use shiftlab::numeric::Matrix;
use shiftlab::LabeledDataset;

use super::common::{self, ReportHeader};
use crate::config::{ExperimentConfig, FeatureMap, SplitSource};
use crate::error::CliError;
use crate::output::{Cell, Csv, Outputs};

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub in_support: usize,
    pub out_of_support: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitEr {
    pub split: &'static str,
    pub n: usize,
    pub pretrained: AccuracyPoint,
    pub er: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport<'a> {
    #[serde(flatten)]
    pub header: ReportHeader<'a>,
    pub n_reference: usize,
    pub n_shifted: usize,
    pub threshold: f64,
    pub in_support: usize,
    pub out_of_support: usize,
    pub in_support_fraction: f64,
    pub calibration_split: &'static str,
    pub folds: Vec<FoldReport>,
    pub threshold_sweep: Vec<ThresholdCount>,
    pub per_split_er: Vec<SplitEr>,
}

/// Reference and shifted sets for the configured source.
pub fn split_pair(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), CliError> {
    let gen = common::generator(cfg)?;
    let data = common::trial_data(cfg, &gen, 0);
    let shifted = match cfg.split.source {
        SplitSource::Shift => data.shifted_test,
        SplitSource::Identical => {
            let mut rng = seed::rng(seed::mix(cfg.seed, arm::SPLIT, 1));
            gen.sample_reference(cfg.generator.n_test, &mut rng)
        }
        SplitSource::Disjoint => {
            let mut rng = seed::rng(seed::mix(cfg.seed, arm::SPLIT, 1));
            let base = gen.sample_reference(cfg.generator.n_test, &mut rng);
            let mut f = base.features().clone();
            let k = cfg.generator.subspace_dim;
            for i in 0..f.rows() {
                f.row_mut(i)[k] += cfg.split.disjoint_offset;
            }
            base.with_features(f)?
        }
    };
    Ok((data.train, data.reference_test, shifted))
}

/// Appends `x_j²` for every coordinate.
pub fn quadratic_features(data: &LabeledDataset) -> Result<LabeledDataset, CliError> {
    let (n, d) = (data.len(), data.dim());
    let mut v = Vec::with_capacity(n * 2 * d);
    for i in 0..n {
        let x = data.x(i);
        v.extend_from_slice(x);
        v.extend(x.iter().map(|a| a * a));
    }
    Ok(data.with_features(Matrix::new(n, 2 * d, v)?)?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<(SplitReport<'_>, Outputs), CliError> {
    let (reference, reference_test, shifted) = split_pair(cfg)?;
    let s = &cfg.split;
    let (ref_features, shift_features) = match s.features {
        FeatureMap::Raw => (reference.clone(), shifted.clone()),
        FeatureMap::Quadratic => (quadratic_features(&reference)?, quadratic_features(&shifted)?),
    };
    let result = split_shifted(
        &shift_features,
        &ref_features,
        s.folds,
        s.threshold,
        &s.classifier,
        seed::mix(cfg.seed, arm::SPLIT, 0),
    )?;
    let mut out = Outputs::default();

    let mut split_csv = Csv::new(&["index", "ratio", "split"]);
    for (i, &r) in result.ratio.iter().enumerate() {
        let label = if r < s.threshold { "out" } else { "in" };
        split_csv.row(&[Cell::U(i as u64), Cell::F(r), Cell::S(label)]);
    }
    out.add("split.csv", split_csv.finish());

    let (probs, labels): (Vec<f64>, Vec<i8>) = result.calibration.iter().copied().unzip();
    let curve = calibration_curve(&probs, &labels, s.bins, s.level)?;
    let mut cal_csv = Csv::new(&["bin", "mean_pred", "rate", "lo", "hi"]);
    for b in &curve {
        cal_csv.row(&[Cell::U(b.bin as u64), Cell::F(b.mean_pred), Cell::F(b.rate), Cell::F(b.lo), Cell::F(b.hi)]);
    }
    out.add("calibration.csv", cal_csv.finish());

    let mut thresholds = s.threshold_sweep.clone();
    thresholds.sort_by(f64::total_cmp);
    let threshold_sweep: Vec<ThresholdCount> = thresholds
        .iter()
        .map(|&t| {
            let (i, o) = apply_threshold(&result.ratio, t);
            ThresholdCount { threshold: t, in_support: i.len(), out_of_support: o.len() }
        })
        .collect();
    let mut sweep_csv = Csv::new(&["threshold", "in_support", "out_of_support"]);
    for t in &threshold_sweep {
        sweep_csv.row(&[Cell::F(t.threshold), Cell::U(t.in_support as u64), Cell::U(t.out_of_support as u64)]);
    }
    out.add("threshold_sweep.csv", sweep_csv.finish());

    let per_split_er = if s.per_split_er {
        per_split_er(cfg, &reference, &reference_test, &shifted, &result.in_support, &result.out_of_support)?
    } else {
        Vec::new()
    };

    let report = SplitReport {
        header: ReportHeader::new("split", cfg),
        n_reference: reference.len(),
        n_shifted: shifted.len(),
        threshold: s.threshold,
        in_support: result.in_support.len(),
        out_of_support: result.out_of_support.len(),
        in_support_fraction: result.in_support.len() as f64 / shifted.len().max(1) as f64,
        calibration_split: "10% of each fold's training pool, held out from classifier training",
        folds: result.folds.clone(),
        threshold_sweep,
        per_split_er,
    };
    out.json("report.json", &report)?;
    Ok((report, out))
}

fn per_split_er(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    reference_test: &LabeledDataset,
    shifted: &LabeledDataset,
    in_idx: &[usize],
    out_idx: &[usize],
) -> Result<Vec<SplitEr>, CliError> {
    let gen = common::generator(cfg)?;
    let w_pre = common::pretrained_weights(cfg, &gen, 0)?;
    let w = common::fit(&w_pre, train, &cfg.gd)?;
    let mut rows = Vec::new();
    for (name, idx) in [("in", in_idx), ("out", out_idx)] {
        if idx.is_empty() {
            continue;
        }
        let part = shifted.subset(idx);
        let baselines = baseline_sweep(
            train,
            reference_test,
            &part,
            &common::sweep_spec(cfg, 0),
            &common::sweep_gd(cfg),
        )?;
        let fit = probit_fit(&baselines, default_clamp(part.len()))?;
        let pretrained = AccuracyPoint::new(accuracy(&w, reference_test)?, accuracy(&w, &part)?, name)?;
        rows.push(SplitEr { split: name, n: idx.len(), er: effective_robustness(&fit, &pretrained)?, pretrained });
    }
    Ok(rows)
}
