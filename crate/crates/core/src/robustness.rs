//! Effective robustness: probit-space "accuracy on the line" fits, ER with
//! bootstrap intervals, worst-group accuracy, difficulty reweighting and
//! corrected-example analysis.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::logreg::{accuracy, gradient_descent_observed, GdConfig, Termination};
use crate::numeric::{normal_cdf, probit};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub acc_ref: f64,
    pub acc_shift: f64,
    pub tag: String,
}

impl AccuracyPoint {
    pub fn new(acc_ref: f64, acc_shift: f64, tag: impl Into<String>) -> Result<Self> {
        for a in [acc_ref, acc_shift] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("accuracy {a} outside [0, 1]")));
            }
        }
        Ok(Self {
            acc_ref,
            acc_shift,
            tag: tag.into(),
        })
    }
}

/// `probit(acc_shift) ≈ a·probit(acc_ref) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub clamp: f64,
}

/// Half-count continuity correction `1 / (2 n_test)`.
pub fn default_clamp(n_test: usize) -> f64 {
    1.0 / (2.0 * n_test.max(1) as f64)
}

fn clamped_probit(p: f64, clamp: f64) -> Result<f64> {
    probit(p.clamp(clamp, 1.0 - clamp))
}

fn check_clamp(clamp: f64) -> Result<()> {
    if !(clamp > 0.0 && clamp < 0.5) {
        return Err(Error::invalid(format!("clamp {clamp} outside (0, 0.5)")));
    }
    Ok(())
}

pub fn probit_fit(points: &[AccuracyPoint], clamp: f64) -> Result<ProbitFit> {
    check_clamp(clamp)?;
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "probit fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let xs = points
        .iter()
        .map(|p| clamped_probit(p.acc_ref, clamp))
        .collect::<Result<Vec<_>>>()?;
    let ys = points
        .iter()
        .map(|p| clamped_probit(p.acc_shift, clamp))
        .collect::<Result<Vec<_>>>()?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let spread = xs.iter().fold(0.0f64, |m, x| m.max((x - mx).abs()));
    if spread <= 1e-12 * (1.0 + mx.abs()) {
        return Err(Error::DegenerateFit(
            "all reference accuracies coincide after clamping".into(),
        ));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (a * x + b);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ProbitFit {
        a,
        b,
        r_squared,
        n_points: points.len(),
        clamp,
    })
}

impl ProbitFit {
    /// Predicted shifted accuracy at a reference accuracy.
    pub fn predict(&self, acc_ref: f64) -> Result<f64> {
        Ok(normal_cdf(self.a * clamped_probit(acc_ref, self.clamp)? + self.b))
    }
}

pub fn effective_robustness(fit: &ProbitFit, point: &AccuracyPoint) -> Result<f64> {
    Ok(point.acc_shift - fit.predict(point.acc_ref)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Linear-interpolated quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci(values: &[f64], trials: usize, level: f64, seed: u64) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::invalid("bootstrap of an empty sample"));
    }
    if trials < 100 {
        return Err(Error::invalid(format!("bootstrap needs at least 100 resamples, got {trials}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level {level} outside (0, 1)")));
    }
    let n = values.len();
    let estimate = values.iter().sum::<f64>() / n as f64;
    let mut rng = seed::rng(seed);
    let mut means: Vec<f64> = (0..trials)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        estimate,
        lo: quantile_sorted(&means, tail),
        hi: quantile_sorted(&means, 1.0 - tail),
        level,
    })
}

/// Fits the line on `fit_points`, then bootstraps the mean ER of
/// `eval_points` against that fixed line.
pub fn er_confidence_interval(
    fit_points: &[AccuracyPoint],
    eval_points: &[AccuracyPoint],
    clamp: f64,
    trials: usize,
    level: f64,
    seed: u64,
) -> Result<Interval> {
    let fit = probit_fit(fit_points, clamp)?;
    let ers = eval_points
        .iter()
        .map(|p| effective_robustness(&fit, p))
        .collect::<Result<Vec<_>>>()?;
    bootstrap_mean_ci(&ers, trials, level, seed)
}

/// Minimum per-group accuracy and the group attaining it (lowest tag on ties).
pub fn worst_group_accuracy(correct: &[bool], groups: &[u32]) -> Result<(f64, u32)> {
    let declared: BTreeSet<u32> = groups.iter().copied().collect();
    let declared: Vec<u32> = declared.into_iter().collect();
    worst_group_accuracy_declared(correct, groups, &declared)
}

/// As [`worst_group_accuracy`], over an explicit group list; a declared group
/// without members is an error.
pub fn worst_group_accuracy_declared(
    correct: &[bool],
    groups: &[u32],
    declared: &[u32],
) -> Result<(f64, u32)> {
    if correct.len() != groups.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} group tags",
            correct.len(),
            groups.len()
        )));
    }
    if declared.is_empty() {
        return Err(Error::invalid("no groups"));
    }
    let mut counts: BTreeMap<u32, (usize, usize)> = declared.iter().map(|&g| (g, (0, 0))).collect();
    for (&c, g) in correct.iter().zip(groups) {
        let e = counts
            .get_mut(g)
            .ok_or_else(|| Error::invalid(format!("undeclared group {g}")))?;
        e.0 += usize::from(c);
        e.1 += 1;
    }
    let mut worst: Option<(f64, u32)> = None;
    for (g, (hits, total)) in counts {
        if total == 0 {
            return Err(Error::invalid(format!("group {g} has no examples")));
        }
        let acc = hits as f64 / total as f64;
        if worst.is_none_or(|(w, _)| acc < w) {
            worst = Some((acc, g));
        }
    }
    Ok(worst.expect("declared groups are non-empty"))
}

/// Fraction of models (rows) that get each example (column) wrong.
pub fn difficulty(per_model_correct: &[Vec<bool>]) -> Result<Vec<f64>> {
    let first = per_model_correct
        .first()
        .ok_or_else(|| Error::invalid("difficulty needs at least one model"))?;
    let n = first.len();
    if per_model_correct.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("models disagree on the example count"));
    }
    let m = per_model_correct.len() as f64;
    Ok((0..n)
        .map(|i| per_model_correct.iter().filter(|r| !r[i]).count() as f64 / m)
        .collect())
}

fn bin_of(d: f64, bins: usize) -> usize {
    ((d * bins as f64).floor() as usize).min(bins - 1)
}

/// Per-example weights `p_in(d)/p_out(d)` for the out-of-support examples,
/// from equal-width histograms on `[0, 1]`, normalized to sum to 1.
pub fn difficulty_weights(d_out: &[f64], d_in: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::invalid("difficulty histograms need at least 2 bins"));
    }
    if d_out.is_empty() || d_in.is_empty() {
        return Err(Error::UndefinedReweighting("empty split".into()));
    }
    let mut h_in = vec![0usize; bins];
    let mut h_out = vec![0usize; bins];
    for &d in d_in {
        h_in[bin_of(d, bins)] += 1;
    }
    for &d in d_out {
        h_out[bin_of(d, bins)] += 1;
    }
    let (n_in, n_out) = (d_in.len() as f64, d_out.len() as f64);
    let raw: Vec<f64> = d_out
        .iter()
        .map(|&d| {
            let b = bin_of(d, bins);
            (h_in[b] as f64 / n_in) / (h_out[b] as f64 / n_out)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedReweighting(
            "no out-of-support example shares a difficulty bin with the in-support split".into(),
        ));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Accuracy on the out-of-support split after matching its difficulty
/// distribution to the in-support split.
pub fn difficulty_reweighted_accuracy(
    per_model_correct_out: &[Vec<bool>],
    per_model_correct_in: &[Vec<bool>],
    eval_correct_out: &[bool],
    bins: usize,
) -> Result<f64> {
    let d_out = difficulty(per_model_correct_out)?;
    let d_in = difficulty(per_model_correct_in)?;
    if eval_correct_out.len() != d_out.len() {
        return Err(Error::invalid("evaluated model and baselines disagree on the example count"));
    }
    let w = difficulty_weights(&d_out, &d_in, bins)?;
    Ok(w.iter()
        .zip(eval_correct_out)
        .filter(|(_, &c)| c)
        .map(|(w, _)| w)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedSet {
    pub indices: Vec<usize>,
    pub baseline_fraction: Vec<f64>,
    pub intervention_fraction: Vec<f64>,
}

fn mean_correct(rows: &[Vec<bool>]) -> Result<Vec<f64>> {
    Ok(difficulty(rows)?.into_iter().map(|d| 1.0 - d).collect())
}

/// Examples the baseline gets right in fewer than `threshold` of its trials
/// while the intervention gets them right in at least `threshold`.
pub fn corrected_examples(
    baseline_correct: &[Vec<bool>],
    intervention_correct: &[Vec<bool>],
    threshold: f64,
) -> Result<CorrectedSet> {
    let base = mean_correct(baseline_correct)?;
    let inter = mean_correct(intervention_correct)?;
    if base.len() != inter.len() {
        return Err(Error::invalid("baseline and intervention disagree on the example count"));
    }
    let indices = (0..base.len())
        .filter(|&i| base[i] < threshold && inter[i] >= threshold)
        .collect();
    Ok(CorrectedSet {
        indices,
        baseline_fraction: base,
        intervention_fraction: inter,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: String,
    pub b: String,
    pub intersection: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub sizes: BTreeMap<String, usize>,
    pub pairwise: Vec<PairOverlap>,
    pub combined: Option<String>,
    /// Size of the union of every set other than `combined`.
    pub union_size: usize,
    /// `|combined ∩ union| / |union|`; `None` when the union is empty.
    pub coverage: Option<f64>,
}

pub fn overlap_report(
    sets: &[(String, CorrectedSet)],
    combined: Option<&str>,
) -> Result<OverlapReport> {
    if sets.len() < 2 {
        return Err(Error::invalid("overlap report needs at least two sets"));
    }
    let members: Vec<BTreeSet<usize>> = sets
        .iter()
        .map(|(_, s)| s.indices.iter().copied().collect())
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.push(PairOverlap {
                a: sets[i].0.clone(),
                b: sets[j].0.clone(),
                intersection: members[i].intersection(&members[j]).count(),
            });
        }
    }
    let combined_idx = match combined {
        Some(name) => Some(
            sets.iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::invalid(format!("no set named {name}")))?,
        ),
        None => None,
    };
    let union: BTreeSet<usize> = members
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != combined_idx)
        .flat_map(|(_, s)| s.iter().copied())
        .collect();
    let coverage = match combined_idx {
        Some(c) if !union.is_empty() => {
            Some(members[c].intersection(&union).count() as f64 / union.len() as f64)
        }
        _ => None,
    };
    Ok(OverlapReport {
        sizes: sets.iter().map(|(n, s)| (n.clone(), s.indices.len())).collect(),
        pairwise,
        combined: combined.map(str::to_owned),
        union_size: union.len(),
        coverage,
    })
}

/// Baseline ("from scratch") models for the accuracy-on-the-line fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub fractions: Vec<f64>,
    pub trials: usize,
    /// Intermediate iterates recorded per run, at geometrically spaced steps.
    pub checkpoints: usize,
    /// Standard deviation of the random initialization, per coordinate.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            fractions: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            trials: 2,
            checkpoints: 4,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

/// Geometric checkpoint steps in `[1, max_steps]`.
pub fn checkpoint_steps(max_steps: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count)
        .map(|i| {
            let t = (max_steps.max(1) as f64).powf(i as f64 / (count + 1) as f64);
            t.round() as usize
        })
        .collect();
    out.dedup();
    out
}

/// Random-init weights `N(0, scale²)` per coordinate.
pub fn random_init(d: usize, scale: f64, rng: &mut seed::Rng) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..d).map(|_| normal.sample(rng)).collect())
}

/// Trains random-init models on random subsets of `train` and records
/// `(acc_ref, acc_shift)` at each checkpoint and at the end. Points are
/// ordered by `(fraction, trial, checkpoint)`.
pub fn baseline_sweep(
    train: &LabeledDataset,
    reference_test: &LabeledDataset,
    shifted_test: &LabeledDataset,
    spec: &SweepSpec,
    cfg: &GdConfig,
) -> Result<Vec<AccuracyPoint>> {
    if spec.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::invalid("subset fractions must lie in (0, 1]"));
    }
    if !(spec.init_scale >= 0.0 && spec.init_scale.is_finite()) {
        return Err(Error::invalid("init_scale must be nonnegative"));
    }
    let jobs: Vec<(usize, f64, usize)> = spec
        .fractions
        .iter()
        .enumerate()
        .flat_map(|(fi, &f)| (0..spec.trials).map(move |t| (fi, f, t)))
        .collect();
    let results: Vec<Result<Vec<AccuracyPoint>>> = jobs
        .par_iter()
        .map(|&(fi, fraction, trial)| {
            let mut rng = seed::rng(seed::mix(
                spec.seed,
                seed::arm::BASELINE,
                (fi * spec.trials + trial) as u64,
            ));
            let n = ((fraction * train.len() as f64).ceil() as usize).clamp(1, train.len());
            let mut idx = index::sample(&mut rng, train.len(), n).into_vec();
            idx.sort_unstable();
            let subset = train.subset(&idx);
            let w0 = random_init(train.dim(), spec.init_scale, &mut rng)?;
            let run_cfg = GdConfig {
                max_steps: (cfg.max_steps as f64 / fraction).round() as usize,
                ..cfg.clone()
            };
            let marks = checkpoint_steps(run_cfg.max_steps, spec.checkpoints);
            let mut saved: Vec<(usize, Vec<f64>)> = Vec::new();
            let trace = gradient_descent_observed(&w0, &subset, None, &run_cfg, |t, w| {
                if marks.binary_search(&t).is_ok() {
                    saved.push((t, w.to_vec()));
                }
            })?;
            if trace.termination == Termination::Diverged {
                return Err(Error::NoMinimum(format!(
                    "baseline on {n} examples diverged; the subset looks linearly separable"
                )));
            }
            let final_step = trace.steps();
            saved.retain(|(t, _)| *t < final_step);
            saved.push((final_step, trace.weights.into_inner()));
            saved
                .into_iter()
                .map(|(t, w)| {
                    AccuracyPoint::new(
                        accuracy(&w, reference_test)?,
                        accuracy(&w, shifted_test)?,
                        format!("baseline f={fraction} trial={trial} step={t}"),
                    )
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(r: f64, s: f64) -> AccuracyPoint {
        AccuracyPoint::new(r, s, "").unwrap()
    }

    #[test]
    fn identity_line() {
        let pts: Vec<_> = [0.6, 0.7, 0.8, 0.9].iter().map(|&p| pt(p, p)).collect();
        let fit = probit_fit(&pts, 1e-4).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-12 && fit.b.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_interpolate() {
        let fit = probit_fit(&[pt(0.6, 0.55), pt(0.9, 0.7)], 1e-4).unwrap();
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.predict(0.9).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit() {
        assert!(matches!(
            probit_fit(&[pt(0.7, 0.5), pt(0.7, 0.6)], 1e-4),
            Err(Error::DegenerateFit(_))
        ));
        assert!(probit_fit(&[pt(0.7, 0.5)], 1e-4).is_err());
    }

    #[test]
    fn er_against_identity() {
        let fit = ProbitFit { a: 1.0, b: 0.0, r_squared: 1.0, n_points: 2, clamp: 1e-4 };
        assert!((effective_robustness(&fit, &pt(0.5, 0.6)).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_point_interval_is_degenerate() {
        let ci = bootstrap_mean_ci(&[0.3], 200, 0.95, 1).unwrap();
        assert_eq!((ci.lo, ci.hi, ci.estimate), (0.3, 0.3, 0.3));
        assert!(bootstrap_mean_ci(&[0.3], 99, 0.95, 1).is_err());
    }

    #[test]
    fn worst_group_direct_count() {
        let correct = [true, true, true, false, true, false];
        let groups = [0, 0, 0, 0, 1, 1];
        assert_eq!(worst_group_accuracy(&correct, &groups).unwrap(), (0.5, 1));
        assert!(worst_group_accuracy_declared(&correct, &groups, &[0, 1, 2]).is_err());
        assert_eq!(worst_group_accuracy(&[true, false], &[3, 3]).unwrap(), (0.5, 3));
    }

    #[test]
    fn corrected_identity_intervention_is_empty() {
        let m = vec![vec![true, false, false], vec![false, false, true]];
        assert!(corrected_examples(&m, &m, 0.5).unwrap().indices.is_empty());
        let base = vec![vec![false, true]; 3];
        let inter = vec![vec![true, true]; 3];
        assert_eq!(corrected_examples(&base, &inter, 0.5).unwrap().indices, vec![0]);
    }

    #[test]
    fn overlap_of_disjoint_sets() {
        let mk = |v: Vec<usize>| CorrectedSet {
            indices: v,
            baseline_fraction: vec![],
            intervention_fraction: vec![],
        };
        let sets = vec![
            ("a".to_string(), mk(vec![1, 2])),
            ("b".to_string(), mk(vec![3])),
            ("ab".to_string(), mk(vec![1, 2, 3])),
        ];
        let r = overlap_report(&sets[..2], None).unwrap();
        assert_eq!(r.pairwise[0].intersection, 0);
        let r = overlap_report(&sets, Some("ab")).unwrap();
        assert_eq!(r.coverage, Some(1.0));
    }

    #[test]
    fn reweighting_with_in_support_mass_in_bin_zero() {
        let w = difficulty_weights(&[0.05, 0.5, 0.95], &[0.0, 0.01], 10).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            difficulty_weights(&[0.95], &[0.0], 10),
            Err(Error::UndefinedReweighting(_))
        ));
    }

    #[test]
    fn checkpoints_are_increasing() {
        let c = checkpoint_steps(10_000, 4);
        assert!(c.windows(2).all(|w| w[0] < w[1]) && *c.last().unwrap() < 10_000);
        assert!(checkpoint_steps(1000, 0).is_empty());
    }
}
