//! Seeded reference/shifted dataset pairs in feature space.
//!
//! Reference inputs live in the first `k` coordinates of `R^d`:
//!
//! | coordinate | role |
//! |---|---|
//! | `0` | constant 1 (intercept) |
//! | `1` | spurious "tint" coordinate (group coordinate for `group_imbalance`) |
//! | `2..k` | class signal `y·core_signal + N(0, σ²)` (`group_imbalance`: only `2` carries signal) |
//! | `k..d` | zero in the reference distribution |
//!
//! A "tint" mixes a per-example random color into designated coordinates,
//! `x' = (1 - m)·x + m·c`. A "flip" mirrors the coordinate order, which is a
//! pixel permutation in the image analogue and moves `W_ref` out of itself.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, DOMAIN_REFERENCE, DOMAIN_SHIFTED};
use crate::error::{Error, Result};
use crate::logreg::data_subspace;
use crate::numeric::{norm, Matrix};
use crate::seed::{self, Rng};

pub const BIAS_COORD: usize = 0;
pub const SPURIOUS_COORD: usize = 1;
/// The class-defining coordinate of the group-imbalance generator.
pub const CLASS_COORD: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub classes: usize,
    pub core_signal: f64,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            ambient_dim: 16,
            subspace_dim: 6,
            classes: 2,
            core_signal: 0.5,
            noise_sigma: 1.0,
            n_train: 1000,
            n_test: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Spurious,
    LabelShift,
    UnseenTransform,
    Flip,
    Combined,
    GroupImbalance,
}

impl ShiftKind {
    pub fn is_in_support(self) -> bool {
        matches!(
            self,
            ShiftKind::Spurious | ShiftKind::LabelShift | ShiftKind::GroupImbalance
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::Spurious => "spurious",
            ShiftKind::LabelShift => "label_shift",
            ShiftKind::UnseenTransform => "unseen_transform",
            ShiftKind::Flip => "flip",
            ShiftKind::Combined => "combined",
            ShiftKind::GroupImbalance => "group_imbalance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    /// Probability of a class-specific tint in the reference set. Defaults to
    /// 0.5 for `spurious` and 0.8 for `combined`.
    #[serde(default)]
    pub p_spurious: Option<f64>,
    #[serde(default = "default_p_minority")]
    pub p_minority: f64,
    /// Tinted coordinates. Defaults to `[1]` for `spurious` and to every
    /// coordinate outside the reference subspace for `unseen_transform` and
    /// `combined`.
    #[serde(default)]
    pub transform_dims: Option<Vec<usize>>,
    /// Norm of the random tint color `c`.
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_mix_weight")]
    pub mix_weight: f64,
    /// Positive-class rate in group 0 and group 1.
    #[serde(default = "default_group_rates")]
    pub group_rates: [f64; 2],
}

fn default_p_minority() -> f64 {
    0.2
}
fn default_offset() -> f64 {
    8.0
}
fn default_mix_weight() -> f64 {
    0.25
}
fn default_group_rates() -> [f64; 2] {
    [0.24, 0.02]
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind) -> Self {
        Self {
            kind,
            p_spurious: None,
            p_minority: default_p_minority(),
            transform_dims: None,
            offset: default_offset(),
            mix_weight: default_mix_weight(),
            group_rates: default_group_rates(),
        }
    }

    pub fn p_spurious(&self) -> f64 {
        self.p_spurious.unwrap_or(match self.kind {
            ShiftKind::Combined => 0.8,
            _ => 0.5,
        })
    }

    /// Coordinates carrying the spurious tint, for kinds that have one.
    pub fn spurious_coords(&self) -> Result<Vec<usize>> {
        match self.kind {
            ShiftKind::Spurious => Ok(self
                .transform_dims
                .clone()
                .unwrap_or_else(|| vec![SPURIOUS_COORD])),
            ShiftKind::Combined => Ok(vec![SPURIOUS_COORD]),
            other => Err(Error::Spec(format!(
                "shift kind {} has no spurious coordinate",
                other.name()
            ))),
        }
    }

    /// Out-of-subspace coordinates that receive a tint in the shifted set.
    pub fn offset_coords(&self, gen: &GeneratorSpec) -> Vec<usize> {
        match self.kind {
            ShiftKind::UnseenTransform | ShiftKind::Combined => self
                .transform_dims
                .clone()
                .unwrap_or_else(|| (gen.subspace_dim..gen.ambient_dim).collect()),
            _ => Vec::new(),
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Spec(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

/// Validated pair of generator and shift specifications.
#[derive(Debug, Clone)]
pub struct ShiftGenerator {
    gen: GeneratorSpec,
    shift: ShiftSpec,
    spurious: Vec<usize>,
    offsets: Vec<usize>,
}

impl ShiftGenerator {
    pub fn new(gen: &GeneratorSpec, shift: &ShiftSpec) -> Result<Self> {
        let (d, k) = (gen.ambient_dim, gen.subspace_dim);
        if k >= d {
            return Err(Error::Spec(format!("subspace_dim {k} must be below ambient_dim {d}")));
        }
        if k < 3 {
            return Err(Error::Spec("subspace_dim must be at least 3".into()));
        }
        if gen.classes != 2 {
            return Err(Error::Spec("only binary generators are supported".into()));
        }
        if !(gen.noise_sigma > 0.0 && gen.noise_sigma.is_finite()) {
            return Err(Error::Spec("noise_sigma must be positive".into()));
        }
        if !gen.core_signal.is_finite() {
            return Err(Error::Spec("core_signal must be finite".into()));
        }
        check_probability("p_spurious", shift.p_spurious())?;
        check_probability("p_minority", shift.p_minority)?;
        check_probability("mix_weight", shift.mix_weight)?;
        for r in shift.group_rates {
            check_probability("group rate", r)?;
        }
        if !(shift.offset >= 0.0 && shift.offset.is_finite()) {
            return Err(Error::Spec("offset must be nonnegative".into()));
        }
        let dims = shift.transform_dims.as_deref().unwrap_or(&[]);
        if dims.iter().any(|&j| j >= d) {
            return Err(Error::Spec("transform_dims exceed the ambient dimension".into()));
        }
        match shift.kind {
            ShiftKind::UnseenTransform | ShiftKind::Combined | ShiftKind::Flip => {
                if dims.iter().any(|&j| j < k) {
                    return Err(Error::Spec(format!(
                        "{} is out-of-support: transform_dims must lie outside the first {k} coordinates",
                        shift.kind.name()
                    )));
                }
                if shift.transform_dims.as_ref().is_some_and(Vec::is_empty)
                    && shift.kind != ShiftKind::Flip
                {
                    return Err(Error::Spec("transform_dims must not be empty".into()));
                }
            }
            ShiftKind::Spurious | ShiftKind::LabelShift | ShiftKind::GroupImbalance => {
                if dims.iter().any(|&j| j >= k) {
                    return Err(Error::Spec(format!(
                        "{} is in-support: transform_dims must lie inside the first {k} coordinates",
                        shift.kind.name()
                    )));
                }
                if shift.kind == ShiftKind::Spurious && dims.contains(&BIAS_COORD) {
                    return Err(Error::Spec("the intercept coordinate cannot be tinted".into()));
                }
                if shift.kind == ShiftKind::Spurious && dims.is_empty() && shift.transform_dims.is_some() {
                    return Err(Error::Spec("transform_dims must not be empty".into()));
                }
            }
        }
        let spurious = shift.spurious_coords().unwrap_or_default();
        let offsets = shift.offset_coords(gen);
        Ok(Self {
            gen: gen.clone(),
            shift: shift.clone(),
            spurious,
            offsets,
        })
    }

    pub fn generator(&self) -> &GeneratorSpec {
        &self.gen
    }

    pub fn shift(&self) -> &ShiftSpec {
        &self.shift
    }

    pub fn dim(&self) -> usize {
        self.gen.ambient_dim
    }

    fn gauss(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.gen.noise_sigma * z
    }

    /// One example of the untransformed distribution. `p_tint` is the chance
    /// of a class-specific tint on the spurious coordinates; `p_pos` the
    /// positive-class rate.
    fn base_example(&self, rng: &mut Rng, p_pos: f64, p_tint: f64) -> (Vec<f64>, i8, u32) {
        let (d, k) = (self.gen.ambient_dim, self.gen.subspace_dim);
        let mut x = vec![0.0; d];
        x[BIAS_COORD] = 1.0;
        if self.shift.kind == ShiftKind::GroupImbalance {
            let g: u32 = u32::from(rng.random::<f64>() < 0.5);
            let y: i8 = if rng.random::<f64>() < p_pos.min(self.shift.group_rates[g as usize]) {
                1
            } else {
                -1
            };
            x[SPURIOUS_COORD] = if g == 0 { 1.0 } else { -1.0 };
            x[CLASS_COORD] = f64::from(y) * self.gen.core_signal + self.gauss(rng);
            for v in x.iter_mut().take(k).skip(CLASS_COORD + 1) {
                *v = self.gauss(rng);
            }
            return (x, y, g);
        }
        let y: i8 = if rng.random::<f64>() < p_pos { 1 } else { -1 };
        for j in 2..k {
            x[j] = f64::from(y) * self.gen.core_signal + self.gauss(rng);
        }
        let class_tint = rng.random::<f64>() < p_tint;
        for &j in &self.spurious {
            x[j] = if class_tint {
                f64::from(y)
            } else {
                rng.random_range(-1.0..=1.0)
            };
        }
        if self.shift.kind != ShiftKind::Spurious && self.shift.kind != ShiftKind::Combined {
            // no spurious correlation: the coordinate is a plain random tint
            x[SPURIOUS_COORD] = rng.random_range(-1.0..=1.0);
        }
        (x, y, 0)
    }

    fn tint(&self, x: &mut [f64], rng: &mut Rng) {
        if self.offsets.is_empty() {
            return;
        }
        let mut c: Vec<f64> = self
            .offsets
            .iter()
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let nc = norm(&c);
        c.iter_mut().for_each(|v| *v *= self.shift.offset / nc);
        let m = self.shift.mix_weight;
        for (&j, cj) in self.offsets.iter().zip(&c) {
            x[j] = (1.0 - m) * x[j] + m * cj;
        }
    }

    fn assemble(rows: Vec<(Vec<f64>, i8, u32)>, domain: u32, groups: bool) -> LabeledDataset {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.0.len());
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        for (x, y, g) in rows {
            data.extend(x);
            labels.push(y);
            tags.push(g);
        }
        let ds = LabeledDataset::new(Matrix::new(n, d, data).expect("finite samples"), labels)
            .expect("valid labels")
            .with_domains(vec![domain; n])
            .expect("length");
        if groups {
            ds.with_groups(tags).expect("length")
        } else {
            ds
        }
    }

    fn reference_rates(&self) -> (f64, f64) {
        match self.shift.kind {
            ShiftKind::LabelShift => (self.shift.p_minority, 0.0),
            ShiftKind::Spurious | ShiftKind::Combined => (0.5, self.shift.p_spurious()),
            ShiftKind::GroupImbalance => (1.0, 0.0),
            _ => (0.5, 0.0),
        }
    }

    pub fn sample_reference(&self, n: usize, rng: &mut Rng) -> LabeledDataset {
        let (p_pos, p_tint) = self.reference_rates();
        let rows = (0..n).map(|_| self.base_example(rng, p_pos, p_tint)).collect();
        Self::assemble(rows, DOMAIN_REFERENCE, self.shift.kind == ShiftKind::GroupImbalance)
    }

    pub fn sample_shifted(&self, n: usize, rng: &mut Rng) -> LabeledDataset {
        let d = self.gen.ambient_dim;
        let rows = (0..n)
            .map(|_| {
                let (mut x, y, g) = match self.shift.kind {
                    ShiftKind::LabelShift => self.base_example(rng, 1.0 - self.shift.p_minority, 0.0),
                    ShiftKind::GroupImbalance => self.base_example(rng, 1.0, 0.0),
                    _ => self.base_example(rng, 0.5, 0.0),
                };
                match self.shift.kind {
                    ShiftKind::UnseenTransform | ShiftKind::Combined => self.tint(&mut x, rng),
                    ShiftKind::Flip => x = mirror(&x),
                    _ => {}
                }
                debug_assert_eq!(x.len(), d);
                (x, y, g)
            })
            .collect();
        Self::assemble(rows, DOMAIN_SHIFTED, self.shift.kind == ShiftKind::GroupImbalance)
    }

    /// Auxiliary "pre-training" distribution covering the whole ambient
    /// space: class-balanced, no spurious correlation, half of the examples
    /// carrying the shift family's transformation (random tints or mirror
    /// images), and isotropic noise on every coordinate outside `W_ref`.
    pub fn sample_pretraining(&self, n: usize, rng: &mut Rng) -> LabeledDataset {
        let (d, k) = (self.gen.ambient_dim, self.gen.subspace_dim);
        let group = self.shift.kind == ShiftKind::GroupImbalance;
        let rows = (0..n)
            .map(|_| {
                let (mut x, mut y, g) = self.base_example(rng, 0.5, 0.0);
                if group {
                    // decouple class from group: draw the class afresh
                    y = if rng.random::<f64>() < 0.5 { 1 } else { -1 };
                    x[CLASS_COORD] = f64::from(y) * self.gen.core_signal + self.gauss(rng);
                }
                if rng.random::<f64>() < 0.5 {
                    match self.shift.kind {
                        ShiftKind::UnseenTransform | ShiftKind::Combined => self.tint(&mut x, rng),
                        ShiftKind::Flip => x = mirror(&x),
                        _ => {}
                    }
                }
                for v in x.iter_mut().take(d).skip(k) {
                    *v += 0.5 * self.gauss(rng);
                }
                (x, y, g)
            })
            .collect();
        Self::assemble(rows, DOMAIN_REFERENCE, group)
    }

    /// Train, reference-test and shifted-test sets from one seed.
    pub fn sample_experiment(&self, seed: u64) -> ExperimentData {
        let mut rng = seed::rng(seed);
        let train = self.sample_reference(self.gen.n_train, &mut rng);
        let reference_test = self.sample_reference(self.gen.n_test, &mut rng);
        let shifted_test = self.sample_shifted(self.gen.n_test, &mut rng);
        ExperimentData {
            train,
            reference_test,
            shifted_test,
        }
    }
}

/// Reverses the coordinate order.
pub fn mirror(x: &[f64]) -> Vec<f64> {
    x.iter().rev().copied().collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub reference_test: LabeledDataset,
    pub shifted_test: LabeledDataset,
}

/// A reference set of `n_train` and a shifted set of `n_test` examples,
/// drawn from `gen.seed`.
pub fn generate_pair(
    gen: &GeneratorSpec,
    shift: &ShiftSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let g = ShiftGenerator::new(gen, shift)?;
    let mut rng = seed::rng(seed::mix(gen.seed, seed::arm::DATA, 0));
    let reference = g.sample_reference(gen.n_train, &mut rng);
    let shifted = g.sample_shifted(gen.n_test, &mut rng);
    Ok((reference, shifted))
}

/// Class-by-group tags `2·group + [y = +1]`.
pub fn class_group_tags(data: &LabeledDataset) -> Result<Vec<u32>> {
    let groups = data
        .groups()
        .ok_or_else(|| Error::invalid("dataset carries no group tags"))?;
    Ok(groups
        .iter()
        .zip(data.labels())
        .map(|(g, &y)| 2 * g + u32::from(y > 0))
        .collect())
}

/// Pairs `n/2` source examples with counterfactual copies whose
/// class-defining coordinate is negated (moved to the opposite class value)
/// and whose label is flipped. Every other coordinate is copied unchanged,
/// so no other coordinate carries any information about the label.
pub fn build_counterfactual_dataset(
    source: &LabeledDataset,
    n: usize,
    restrict_group: Option<u32>,
    class_coord: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid(format!("curated size must be positive and even, got {n}")));
    }
    if class_coord >= source.dim() {
        return Err(Error::invalid("class coordinate outside the feature dimension"));
    }
    let mut eligible: Vec<usize> = match restrict_group {
        Some(g) => {
            let groups = source
                .groups()
                .ok_or_else(|| Error::invalid("group restriction needs group tags"))?;
            (0..source.len()).filter(|&i| groups[i] == g).collect()
        }
        None => (0..source.len()).collect(),
    };
    if eligible.len() < n / 2 {
        return Err(Error::InsufficientData(format!(
            "{} eligible source examples for {} pairs",
            eligible.len(),
            n / 2
        )));
    }
    let mut rng = seed::rng(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(n / 2);
    eligible.sort_unstable();

    let d = source.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for &i in &eligible {
        let x = source.x(i);
        let mut cf = x.to_vec();
        cf[class_coord] = -cf[class_coord];
        data.extend_from_slice(x);
        data.extend(cf);
        labels.push(source.labels()[i]);
        labels.push(-source.labels()[i]);
        let g = source.groups().map_or(0, |gs| gs[i]);
        groups.push(g);
        groups.push(g);
    }
    let ds = LabeledDataset::new(Matrix::new(n, d, data)?, labels)?;
    if source.groups().is_some() {
        ds.with_groups(groups)
    } else {
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub subspace_dim: usize,
    pub max_complement_norm: f64,
    pub mean_complement_norm: f64,
    pub tolerance: f64,
    pub in_support: bool,
}

/// Measures how far shifted inputs leave the span of the reference inputs.
pub fn support_check(
    reference: &LabeledDataset,
    shifted: &LabeledDataset,
    subspace_tol: f64,
) -> Result<SupportReport> {
    if reference.dim() != shifted.dim() {
        return Err(Error::invalid("reference and shifted dimensions differ"));
    }
    let sub = data_subspace(reference)?;
    let mut max = 0.0f64;
    let mut total = 0.0;
    for i in 0..shifted.len() {
        let c = norm(&sub.project_complement(shifted.x(i))?);
        max = max.max(c);
        total += c;
    }
    Ok(SupportReport {
        subspace_dim: sub.dim(),
        max_complement_norm: max,
        mean_complement_norm: if shifted.is_empty() { 0.0 } else { total / shifted.len() as f64 },
        tolerance: subspace_tol,
        in_support: max <= subspace_tol,
    })
}

/// Pearson correlation of one coordinate with the label; 0 when either has
/// no variance.
pub fn coordinate_label_correlation(data: &LabeledDataset, coord: usize) -> f64 {
    let n = data.len() as f64;
    if data.is_empty() {
        return 0.0;
    }
    let xs: Vec<f64> = (0..data.len()).map(|i| data.x(i)[coord]).collect();
    let ys: Vec<f64> = (0..data.len()).map(|i| data.y(i)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 1e-300 || syy <= 1e-300 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(n: usize) -> GeneratorSpec {
        GeneratorSpec {
            n_train: n,
            n_test: n,
            seed: 11,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = gen(10);
        let mut s = ShiftSpec::new(ShiftKind::UnseenTransform);
        s.transform_dims = Some(vec![2]);
        assert!(matches!(ShiftGenerator::new(&g, &s), Err(Error::Spec(_))));
        let mut s = ShiftSpec::new(ShiftKind::Spurious);
        s.transform_dims = Some(vec![10]);
        assert!(ShiftGenerator::new(&g, &s).is_err());
        let mut s = ShiftSpec::new(ShiftKind::Spurious);
        s.p_spurious = Some(1.5);
        assert!(ShiftGenerator::new(&g, &s).is_err());
        let bad = GeneratorSpec {
            subspace_dim: 16,
            ..g.clone()
        };
        assert!(ShiftGenerator::new(&bad, &ShiftSpec::new(ShiftKind::Flip)).is_err());
        let bad = GeneratorSpec { classes: 3, ..g };
        assert!(ShiftGenerator::new(&bad, &ShiftSpec::new(ShiftKind::Flip)).is_err());
    }

    #[test]
    fn reference_lives_in_first_k_coordinates() {
        for kind in [
            ShiftKind::Spurious,
            ShiftKind::LabelShift,
            ShiftKind::UnseenTransform,
            ShiftKind::Flip,
            ShiftKind::Combined,
            ShiftKind::GroupImbalance,
        ] {
            let (r, _) = generate_pair(&gen(200), &ShiftSpec::new(kind)).unwrap();
            for i in 0..r.len() {
                assert!(r.x(i)[6..].iter().all(|v| *v == 0.0));
                assert_eq!(r.x(i)[BIAS_COORD], 1.0);
            }
        }
    }

    #[test]
    fn counterfactual_pair_from_one_example() {
        let src = LabeledDataset::from_rows(vec![vec![1.0, 0.3, 2.0]], vec![1]).unwrap();
        let cf = build_counterfactual_dataset(&src, 2, None, 2, 0).unwrap();
        assert_eq!(cf.labels(), &[1, -1]);
        let diff: Vec<usize> = (0..3).filter(|&j| cf.x(0)[j] != cf.x(1)[j]).collect();
        assert_eq!(diff, vec![2]);
        assert!(build_counterfactual_dataset(&src, 4, None, 2, 0).is_err());
        assert!(build_counterfactual_dataset(&src, 3, None, 2, 0).is_err());
        assert!(build_counterfactual_dataset(&src, 2, Some(0), 2, 0).is_err());
    }

    #[test]
    fn mirror_reverses() {
        assert_eq!(mirror(&[1.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn correlation_of_constant_is_zero() {
        let ds = LabeledDataset::from_rows(vec![vec![1.0], vec![1.0]], vec![1, -1]).unwrap();
        assert_eq!(coordinate_label_correlation(&ds, 0), 0.0);
    }
}
