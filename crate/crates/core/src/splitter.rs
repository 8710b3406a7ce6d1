//! Splitting a shifted dataset into in-support and out-of-support parts
//! with a cross-fitted, temperature-calibrated domain classifier.
//!
//! The classifier's calibrated posterior turns into a density ratio through
//! `p_ref/p_shift = p(ref|x)/p(shift|x) · p(shift)/p(ref)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::logreg::{gradient_descent, GdConfig, Termination, WeightVector};
use crate::numeric::{clopper_pearson, dot};
use crate::seed;

/// Linear logistic domain classifier; the last weight is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainClassifier {
    pub weights: WeightVector,
    pub fold: Option<usize>,
    pub iterations: usize,
    pub termination: Termination,
    /// The pooled training data were found linearly separable.
    pub separable: bool,
}

impl DomainClassifier {
    pub fn logit(&self, x: &[f64]) -> f64 {
        let d = self.weights.len() - 1;
        dot(&self.weights[..d], x) + self.weights[d]
    }

    pub fn logits(&self, data: &LabeledDataset) -> Vec<f64> {
        (0..data.len()).map(|i| self.logit(data.x(i))).collect()
    }
}

/// Reference and shifted examples pooled with labels `-1` / `+1`.
pub fn domain_dataset(reference: &LabeledDataset, shifted: &LabeledDataset) -> Result<LabeledDataset> {
    if reference.dim() != shifted.dim() {
        return Err(Error::invalid(format!(
            "reference has dimension {}, shifted {}",
            reference.dim(),
            shifted.dim()
        )));
    }
    let r = reference.with_labels(vec![-1; reference.len()])?;
    let s = shifted.with_labels(vec![1; shifted.len()])?;
    r.concat(&s)
}

pub fn train_domain_classifier(
    reference: &LabeledDataset,
    shifted: &LabeledDataset,
    cfg: &GdConfig,
) -> Result<DomainClassifier> {
    if reference.is_empty() || shifted.is_empty() {
        return Err(Error::invalid("domain classifier needs examples from both domains"));
    }
    let pooled = domain_dataset(reference, shifted)?.with_intercept();
    let trace = gradient_descent(&vec![0.0; pooled.dim()], &pooled, cfg)?;
    Ok(DomainClassifier {
        iterations: trace.steps(),
        termination: trace.termination,
        separable: trace.termination == Termination::Diverged,
        weights: trace.weights,
        fold: None,
    })
}

pub const ALPHA_FLOOR: f64 = 1e-6;
pub const ALPHA_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureWarning {
    /// Scores carry no usable signal; alpha sits at the floor.
    Floor,
    /// Calibration data are separated by the scores; alpha sits at the cap.
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScale {
    pub alpha: f64,
    pub warning: Option<TemperatureWarning>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// First and second derivative of `sum log(1 + exp(-alpha·f·y))` in alpha.
fn temperature_derivatives(alpha: f64, logits: &[f64], labels: &[i8]) -> (f64, f64) {
    let (mut g, mut h) = (0.0, 0.0);
    for (&f, &y) in logits.iter().zip(labels) {
        let fy = f * f64::from(y);
        let s = sigmoid(-alpha * fy);
        g -= fy * s;
        h += fy * fy * s * (1.0 - s);
    }
    (g, h)
}

/// Temperature `alpha` minimizing the calibration-set logistic loss of
/// `alpha·logit`, by safeguarded Newton on `[ALPHA_FLOOR, ALPHA_CAP]`.
pub fn fit_temperature(logits: &[f64], labels: &[i8]) -> Result<TemperatureScale> {
    if logits.len() != labels.len() {
        return Err(Error::invalid("logit and label counts differ"));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::invalid("temperature fit needs both labels"));
    }
    if logits.iter().any(|f| !f.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    let (g_lo, _) = temperature_derivatives(ALPHA_FLOOR, logits, labels);
    if g_lo >= 0.0 {
        return Ok(TemperatureScale { alpha: ALPHA_FLOOR, warning: Some(TemperatureWarning::Floor) });
    }
    let (g_hi, _) = temperature_derivatives(ALPHA_CAP, logits, labels);
    if g_hi <= 0.0 {
        return Ok(TemperatureScale { alpha: ALPHA_CAP, warning: Some(TemperatureWarning::Cap) });
    }
    let (mut lo, mut hi) = (ALPHA_FLOOR, ALPHA_CAP);
    let mut alpha = 1.0;
    for _ in 0..500 {
        let (g, h) = temperature_derivatives(alpha, logits, labels);
        if g.abs() <= 1e-10 {
            break;
        }
        if g < 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        if hi - lo <= 4.0 * f64::EPSILON * alpha {
            break;
        }
        let newton = alpha - g / h;
        alpha = if h > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            // geometric midpoint: the bracket spans many orders of magnitude
            (lo * hi).sqrt()
        };
    }
    Ok(TemperatureScale { alpha, warning: None })
}

/// Logistic loss of `alpha·logit` (mean over examples).
pub fn calibration_loss(alpha: f64, logits: &[f64], labels: &[i8]) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&f, &y)| {
            let m = alpha * f * f64::from(y);
            (-m.abs()).exp().ln_1p() + (-m).max(0.0)
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub p_ref: f64,
    pub p_shift: f64,
}

impl Priors {
    pub fn from_counts(n_ref: usize, n_shift: usize) -> Result<Self> {
        if n_ref == 0 || n_shift == 0 {
            return Err(Error::invalid("priors need examples from both domains"));
        }
        let n = (n_ref + n_shift) as f64;
        Ok(Self { p_ref: n_ref as f64 / n, p_shift: n_shift as f64 / n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: Vec<f64>,
    pub p_shift_post: Vec<f64>,
    pub p_ref_post: Vec<f64>,
    pub priors: Priors,
}

const LOGIT_CLAMP: f64 = 700.0;

fn push_ratio(est: &mut RatioEstimate, z: f64) {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let ps = sigmoid(z);
    let pr = sigmoid(-z);
    est.p_shift_post.push(ps);
    est.p_ref_post.push(pr);
    est.ratio.push((pr / ps) * (est.priors.p_shift / est.priors.p_ref));
}

pub fn estimate_ratios(
    classifier: &DomainClassifier,
    scale: &TemperatureScale,
    shifted: &LabeledDataset,
    priors: Priors,
) -> Result<RatioEstimate> {
    if shifted.dim() + 1 != classifier.weights.len() {
        return Err(Error::invalid("classifier and data dimensions differ"));
    }
    let mut est = RatioEstimate {
        ratio: Vec::with_capacity(shifted.len()),
        p_shift_post: Vec::with_capacity(shifted.len()),
        p_ref_post: Vec::with_capacity(shifted.len()),
        priors,
    };
    for i in 0..shifted.len() {
        push_ratio(&mut est, scale.alpha * classifier.logit(shifted.x(i)));
    }
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub held_out: usize,
    pub n_train: usize,
    pub n_calibration: usize,
    pub alpha: f64,
    pub alpha_warning: Option<TemperatureWarning>,
    pub separable: bool,
    pub iterations: usize,
    pub calibration_loss_before: f64,
    pub calibration_loss_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub threshold: f64,
    pub in_support: Vec<usize>,
    pub out_of_support: Vec<usize>,
    pub ratio: Vec<f64>,
    pub p_shift_post: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub folds: Vec<FoldReport>,
    /// Temperature-scaled `p(shift|x)` and domain label (`+1` shifted) of
    /// every calibration example, fold by fold.
    #[serde(skip)]
    pub calibration: Vec<(f64, i8)>,
}

/// Examples with `ratio < threshold` go out-of-support.
pub fn apply_threshold(ratio: &[f64], threshold: f64) -> (Vec<usize>, Vec<usize>) {
    (0..ratio.len()).partition(|&i| ratio[i] >= threshold)
}

/// Share of each fold's training pool held out for temperature scaling.
pub const CALIBRATION_SHARE: f64 = 0.1;

pub fn split_shifted(
    shifted: &LabeledDataset,
    reference: &LabeledDataset,
    folds: usize,
    threshold: f64,
    cfg: &GdConfig,
    seed: u64,
) -> Result<SplitResult> {
    if folds < 2 {
        return Err(Error::invalid("cross-fitting needs at least 2 folds"));
    }
    if shifted.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} shifted examples cannot fill {folds} folds",
            shifted.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("empty reference set"));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold must be nonnegative"));
    }
    let mut order: Vec<usize> = (0..shifted.len()).collect();
    order.shuffle(&mut seed::rng(seed::mix(seed, seed::arm::SPLIT, u64::MAX)));
    let mut fold_of = vec![0; shifted.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let pooled = domain_dataset(reference, shifted)?;
    let n_ref = reference.len();

    type FoldOutput = (FoldReport, Vec<usize>, RatioEstimate, Vec<(f64, i8)>);
    let per_fold: Vec<Result<FoldOutput>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let held: Vec<usize> = (0..shifted.len()).filter(|&i| fold_of[i] == f).collect();
            let mut pool: Vec<usize> = (0..n_ref)
                .chain((0..shifted.len()).filter(|&i| fold_of[i] != f).map(|i| n_ref + i))
                .collect();
            let n_shift_pool = pool.len() - n_ref;
            pool.shuffle(&mut seed::rng(seed::mix(seed, seed::arm::SPLIT, f as u64)));
            let n_cal = ((pool.len() as f64 * CALIBRATION_SHARE).round() as usize).max(2);
            let (cal, train) = pool.split_at(n_cal);
            let mut train = train.to_vec();
            train.sort_unstable();
            let mut cal = cal.to_vec();
            cal.sort_unstable();
            for &i in &held {
                assert!(
                    !train.contains(&(n_ref + i)) && !cal.contains(&(n_ref + i)),
                    "held-out example in its own training pool"
                );
            }
            let train_set = pooled.subset(&train);
            let labels = train_set.labels();
            if !labels.contains(&1) || !labels.contains(&-1) {
                return Err(Error::InsufficientData(format!(
                    "fold {f} training portion lacks one of the domains"
                )));
            }
            let t = train_set.with_intercept();
            let trace = gradient_descent(&vec![0.0; t.dim()], &t, cfg)?;
            let clf = DomainClassifier {
                iterations: trace.steps(),
                termination: trace.termination,
                separable: trace.termination == Termination::Diverged,
                weights: trace.weights,
                fold: Some(f),
            };
            let cal_set = pooled.subset(&cal);
            let cal_logits = clf.logits(&cal_set);
            let scale = fit_temperature(&cal_logits, cal_set.labels())?;
            let est = estimate_ratios(
                &clf,
                &scale,
                &shifted.subset(&held),
                Priors::from_counts(n_ref, n_shift_pool)?,
            )?;
            let report = FoldReport {
                fold: f,
                held_out: held.len(),
                n_train: train.len(),
                n_calibration: cal.len(),
                alpha: scale.alpha,
                alpha_warning: scale.warning,
                separable: clf.separable,
                iterations: clf.iterations,
                calibration_loss_before: calibration_loss(1.0, &cal_logits, cal_set.labels()),
                calibration_loss_after: calibration_loss(scale.alpha, &cal_logits, cal_set.labels()),
            };
            let calibrated = cal_logits
                .iter()
                .zip(cal_set.labels())
                .map(|(&f, &y)| (sigmoid((scale.alpha * f).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)), y))
                .collect();
            Ok((report, held, est, calibrated))
        })
        .collect();

    let mut ratio = vec![f64::NAN; shifted.len()];
    let mut p_shift_post = vec![f64::NAN; shifted.len()];
    let mut reports = Vec::with_capacity(folds);
    let mut calibration = Vec::new();
    for r in per_fold {
        let (report, held, est, calibrated) = r?;
        calibration.extend(calibrated);
        for (j, &i) in held.iter().enumerate() {
            ratio[i] = est.ratio[j];
            p_shift_post[i] = est.p_shift_post[j];
        }
        reports.push(report);
    }
    let (in_support, out_of_support) = apply_threshold(&ratio, threshold);
    Ok(SplitResult {
        threshold,
        in_support,
        out_of_support,
        ratio,
        p_shift_post,
        fold_of,
        folds: reports,
        calibration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub lower_edge: f64,
    pub count: usize,
    pub mean_pred: f64,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Reliability curve over quantile bins; bins sharing an edge are merged.
pub fn calibration_curve(
    probabilities: &[f64],
    labels: &[i8],
    bins: usize,
    level: f64,
) -> Result<Vec<CalibrationBin>> {
    if bins < 2 {
        return Err(Error::invalid("calibration curve needs at least 2 bins"));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::invalid("probability and label counts differ"));
    }
    if probabilities.is_empty() {
        return Ok(Vec::new());
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("predicted probability outside [0, 1]"));
    }
    let mut sorted = probabilities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (0..bins).map(|j| sorted[j * n / bins]).collect();
    edges.dedup();
    let mut acc = vec![(0usize, 0.0f64, 0u64); edges.len()];
    for (&p, &y) in probabilities.iter().zip(labels) {
        let b = edges.partition_point(|&e| e <= p) - 1;
        acc[b].0 += 1;
        acc[b].1 += p;
        acc[b].2 += u64::from(y > 0);
    }
    let mut out = Vec::with_capacity(edges.len());
    for (b, (&(count, sum, pos), &edge)) in acc.iter().zip(&edges).enumerate() {
        if count == 0 {
            continue;
        }
        let (lo, hi) = clopper_pearson(pos, count as u64, level)?;
        out.push(CalibrationBin {
            bin: b,
            lower_edge: edge,
            count,
            mean_pred: sum / count as f64,
            rate: pos as f64 / count as f64,
            lo,
            hi,
        });
    }
    Ok(out)
}
