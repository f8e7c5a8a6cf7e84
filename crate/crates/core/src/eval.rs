//! Repeated stratified evaluation of the SVM baseline against label
//! propagation, with nested parameter selection and a paired t-test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::corpus::{Dataset, Mr};
use crate::error::{Error, Result};
use crate::labelprop::{self, LabelPropParams};
use crate::numerics::{paired_t_test, DenseMatrix, TTestResult};
use crate::svm::{self, SvmParams};
use crate::Label;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_UNLABELED_FRACTION: f64 = 0.6;
pub const DEFAULT_REPEATS: usize = 5;
/// Share of the training portion held out for parameter selection.
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub repeats: Vec<Split>,
    pub seed: u64,
}

fn class_members(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut members = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        members[usize::from(l == 1)].push(i);
    }
    members
}

/// Largest-remainder allocation of `total` items across classes in
/// proportion to `sizes`, respecting per-class `caps`. Ties go to the lower
/// class index.
fn allocate(total: usize, sizes: &[usize], caps: &[usize]) -> Option<Vec<usize>> {
    if total > caps.iter().sum() {
        return None;
    }
    let n: usize = sizes.iter().sum();
    let ideal: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = ideal
        .iter()
        .zip(caps)
        .map(|(&q, &cap)| (q.floor() as usize).min(cap))
        .collect();
    while alloc.iter().sum::<usize>() < total {
        let pick = (0..sizes.len())
            .filter(|&c| alloc[c] < caps[c])
            .max_by(|&a, &b| {
                let ra = ideal[a] - alloc[a] as f64;
                let rb = ideal[b] - alloc[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            })?;
        alloc[pick] += 1;
    }
    Some(alloc)
}

fn test_size(n: usize, fraction: f64) -> usize {
    // ceil, tolerant of representation error in products like 0.2 * 10
    ((n as f64 * fraction) - 1e-9).ceil().max(1.0) as usize
}

/// Seeded stratified shuffle splits. Each test set holds
/// `ceil(test_fraction * n)` items split across classes by largest
/// remainder; every class keeps at least one training member.
pub fn stratified_splits(labels: &[Label], test_fraction: f64, repeats: usize, seed: u64) -> Result<SplitPlan> {
    crate::check_labels(labels)?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let members = class_members(labels);
    for (c, m) in members.iter().enumerate() {
        if m.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} member(s); stratified splitting needs at least 2 per class (class balance)",
                m.len()
            )));
        }
    }
    let sizes = [members[0].len(), members[1].len()];
    let caps = [sizes[0] - 1, sizes[1] - 1];
    let n_test = test_size(labels.len(), test_fraction).min(caps[0] + caps[1]);
    let alloc = allocate(n_test, &sizes, &caps).expect("n_test within capacity");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (c, m) in members.iter().enumerate() {
            let mut shuffled = m.clone();
            shuffled.shuffle(&mut rng);
            test.extend_from_slice(&shuffled[..alloc[c]]);
            train.extend_from_slice(&shuffled[alloc[c]..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        plan.push(Split { train, test });
    }
    Ok(SplitPlan { repeats: plan, seed })
}

/// Chooses `round(fraction * n)` of the given items to hide, stratified by
/// class; `true` marks an unlabeled item.
///
/// Singleton classes are never masked. Other classes keep at least one
/// labeled member whenever the requested count allows it; if it does not,
/// larger classes give up that guarantee first. A request that could only
/// be met by masking a singleton class is an error.
pub fn mask_unlabeled(labels: &[Label], fraction: f64, seed: u64) -> Result<Vec<bool>> {
    crate::check_labels(labels)?;
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("mask fraction must be in [0, 1), got {fraction}")));
    }
    let n = labels.len();
    let n_mask = (fraction * n as f64).round() as usize;
    let mut mask = vec![false; n];
    if n_mask == 0 {
        return Ok(mask);
    }
    let members = class_members(labels);
    let sizes = [members[0].len(), members[1].len()];
    let mut caps: Vec<usize> = sizes.iter().map(|&s| s.saturating_sub(1)).collect();
    // relax the keep-one guard on non-singleton classes, largest first
    let mut order: Vec<usize> = (0..2).filter(|&c| sizes[c] >= 2).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for c in order {
        if caps.iter().sum::<usize>() >= n_mask {
            break;
        }
        caps[c] = sizes[c];
    }
    let alloc = allocate(n_mask, &sizes, &caps).ok_or_else(|| {
        Error::InsufficientData(format!(
            "cannot mask {n_mask} of {n} items without fully masking a single-member class"
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (c, m) in members.iter().enumerate() {
        let mut shuffled = m.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..alloc[c]] {
            mask[i] = true;
        }
    }
    Ok(mask)
}

pub fn accuracy(predicted: &[Label], actual: &[Label]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// kNN grid: n_neighbors in {3, 5, 7} by max_iter in {1, 10, 100, 1000},
/// tol 1e-10.
pub fn default_lp_grid() -> Vec<LabelPropParams> {
    let mut grid = Vec::new();
    for k in [3, 5, 7] {
        for max_iter in [1, 10, 100, 1000] {
            grid.push(LabelPropParams::knn(k, max_iter, 1e-10));
        }
    }
    grid
}

fn split_masked(
    x: &DenseMatrix,
    y: &[Label],
    indices: &[usize],
    mask: &[bool],
) -> (DenseMatrix, Vec<Label>, DenseMatrix) {
    let labeled: Vec<usize> = indices.iter().zip(mask).filter(|(_, &m)| !m).map(|(&i, _)| i).collect();
    let unlabeled: Vec<usize> = indices.iter().zip(mask).filter(|(_, &m)| m).map(|(&i, _)| i).collect();
    (
        x.select_rows(&labeled),
        labeled.iter().map(|&i| y[i]).collect(),
        x.select_rows(&unlabeled),
    )
}

fn labels_at(y: &[Label], indices: &[usize]) -> Vec<Label> {
    indices.iter().map(|&i| y[i]).collect()
}

/// Picks label-propagation parameters using only `train_indices`: a seeded
/// stratified validation split of the training portion, masking of the
/// remainder, and validation accuracy per grid point. Ties keep the
/// earlier grid point. Grid points that cannot be fit (for example more
/// neighbours than points) are skipped.
pub fn nested_cv_labelprop(
    x: &DenseMatrix,
    y: &[Label],
    train_indices: &[usize],
    grid: &[LabelPropParams],
    unlabeled_fraction: f64,
    seed: u64,
) -> Result<LabelPropParams> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let train_y = labels_at(y, train_indices);
    let inner = stratified_splits(&train_y, VALIDATION_FRACTION, 1, seed)?;
    let Split { train: fit_pos, test: val_pos } = &inner.repeats[0];
    let fit_idx: Vec<usize> = fit_pos.iter().map(|&p| train_indices[p]).collect();
    let val_idx: Vec<usize> = val_pos.iter().map(|&p| train_indices[p]).collect();
    let mask = mask_unlabeled(&labels_at(y, &fit_idx), unlabeled_fraction, seed.wrapping_add(1))?;
    let (xl, yl, xu) = split_masked(x, y, &fit_idx, &mask);
    let x_val = x.select_rows(&val_idx);
    let y_val = labels_at(y, &val_idx);

    let mut best: Option<(f64, LabelPropParams)> = None;
    for params in grid {
        let Ok(model) = labelprop::fit(&xl, &yl, &xu, params) else {
            continue;
        };
        let acc = accuracy(&model.predict(&x_val)?, &y_val)?;
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, *params));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::InsufficientData("no grid point could be fit on the training portion".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScores {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Label-propagation parameters chosen in each repeat.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub selected_params: Vec<LabelPropParams>,
}

impl ModelScores {
    fn new(accuracies: Vec<f64>, selected_params: Vec<LabelPropParams>) -> Self {
        let mean = accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64;
        Self {
            accuracies,
            mean,
            selected_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm: Option<ModelScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labelprop: Option<ModelScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_test: Option<TTestResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Svm,
    LabelProp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub svm: SvmParams,
    pub lp_grid: Vec<LabelPropParams>,
    pub test_fraction: f64,
    pub unlabeled_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            svm: SvmParams::default(),
            lp_grid: default_lp_grid(),
            test_fraction: DEFAULT_TEST_FRACTION,
            unlabeled_fraction: DEFAULT_UNLABELED_FRACTION,
            repeats: DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

/// Per-repeat seed for masking and inner selection, decorrelated from the
/// split seed.
fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(repeat as u64 + 1)
}

fn svm_accuracy(x: &DenseMatrix, y: &[Label], split: &Split, params: &SvmParams) -> Result<f64> {
    let model = svm::fit(&x.select_rows(&split.train), &labels_at(y, &split.train), params)?;
    accuracy(&model.predict(&x.select_rows(&split.test))?, &labels_at(y, &split.test))
}

fn labelprop_accuracy(
    x: &DenseMatrix,
    y: &[Label],
    split: &Split,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(f64, LabelPropParams)> {
    let params = nested_cv_labelprop(x, y, &split.train, &cfg.lp_grid, cfg.unlabeled_fraction, seed)?;
    let mask = mask_unlabeled(&labels_at(y, &split.train), cfg.unlabeled_fraction, seed.wrapping_add(2))?;
    let (xl, yl, xu) = split_masked(x, y, &split.train, &mask);
    let model = labelprop::fit(&xl, &yl, &xu, &params)?;
    let acc = accuracy(&model.predict(&x.select_rows(&split.test))?, &labels_at(y, &split.test))?;
    Ok((acc, params))
}

/// SVM accuracy and label-propagation (accuracy, chosen params) for one
/// repeat.
type RepeatScores = (Option<f64>, Option<(f64, LabelPropParams)>);

/// Scores the requested models on every repeat of `plan`. Repeats run in
/// parallel and are merged in repeat order.
pub fn evaluate_models(
    x: &DenseMatrix,
    y: &[Label],
    plan: &SplitPlan,
    cfg: &EvalConfig,
    models: &[ModelKind],
) -> Result<MrReport> {
    let want_svm = models.contains(&ModelKind::Svm);
    let want_lp = models.contains(&ModelKind::LabelProp);
    let per_repeat: Vec<Result<RepeatScores>> = plan
        .repeats
        .par_iter()
        .enumerate()
        .map(|(r, split)| {
            let seed = repeat_seed(plan.seed, r);
            let s = if want_svm {
                let params = SvmParams {
                    seed,
                    ..cfg.svm
                };
                Some(svm_accuracy(x, y, split, &params)?)
            } else {
                None
            };
            let l = if want_lp {
                Some(labelprop_accuracy(x, y, split, cfg, seed)?)
            } else {
                None
            };
            Ok((s, l))
        })
        .collect();

    let mut svm_acc = Vec::new();
    let mut lp_acc = Vec::new();
    let mut lp_params = Vec::new();
    for item in per_repeat {
        let (s, l) = item?;
        svm_acc.extend(s);
        if let Some((a, p)) = l {
            lp_acc.push(a);
            lp_params.push(p);
        }
    }
    let t_test = if want_svm && want_lp && plan.repeats.len() >= 2 {
        Some(paired_t_test(&lp_acc, &svm_acc)?)
    } else {
        None
    };
    Ok(MrReport {
        svm: want_svm.then(|| ModelScores::new(svm_acc, Vec::new())),
        labelprop: want_lp.then(|| ModelScores::new(lp_acc, lp_params)),
        t_test,
    })
}

/// SVM on the full labeled training set versus label propagation on the
/// masked training set, scored on identical test sets. The t-test is on
/// label-propagation minus SVM accuracies.
pub fn compare_models(dataset: &Dataset, mr: Mr, plan: &SplitPlan, cfg: &EvalConfig) -> Result<MrReport> {
    evaluate_models(
        dataset.features.values(),
        dataset.labels(mr),
        plan,
        cfg,
        &[ModelKind::Svm, ModelKind::LabelProp],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub repeats: usize,
    pub test_fraction: f64,
    pub unlabeled_fraction: f64,
    pub validation_fraction: f64,
    pub svm_params: SvmParams,
    pub lp_grid: Vec<LabelPropParams>,
    pub corpus_methods: usize,
    pub corpus_features: usize,
    pub corpus_sha256: String,
}

/// Per-MR sections in canonical MR order followed by `meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub sections: Vec<(Mr, MrReport)>,
    pub meta: ReportMeta,
}

impl EvaluationReport {
    pub fn to_json_value(&self) -> Result<Value> {
        let mut root = Map::new();
        for (mr, section) in &self.sections {
            root.insert(mr.name().to_string(), serde_json::to_value(section)?);
        }
        root.insert("meta".into(), serde_json::to_value(&self.meta)?);
        Ok(Value::Object(root))
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()?)?;
        s.push('\n');
        Ok(s)
    }
}

fn meta(dataset: &Dataset, cfg: &EvalConfig) -> ReportMeta {
    ReportMeta {
        seed: cfg.seed,
        repeats: cfg.repeats,
        test_fraction: cfg.test_fraction,
        unlabeled_fraction: cfg.unlabeled_fraction,
        validation_fraction: VALIDATION_FRACTION,
        svm_params: cfg.svm,
        lp_grid: cfg.lp_grid.clone(),
        corpus_methods: dataset.len(),
        corpus_features: dataset.vocabulary.len(),
        corpus_sha256: dataset.fingerprint.clone(),
    }
}

fn section(dataset: &Dataset, mr: Mr, cfg: &EvalConfig, models: &[ModelKind]) -> Result<MrReport> {
    let y = dataset.labels(mr);
    let plan = stratified_splits(y, cfg.test_fraction, cfg.repeats, cfg.seed)
        .map_err(|e| Error::InsufficientData(format!("{mr}: {e}")))?;
    evaluate_models(dataset.features.values(), y, &plan, cfg, models)
}

/// Full comparison over all six relations.
pub fn compare_all(dataset: &Dataset, cfg: &EvalConfig) -> Result<EvaluationReport> {
    let sections = Mr::ALL
        .par_iter()
        .map(|&mr| section(dataset, mr, cfg, &[ModelKind::Svm, ModelKind::LabelProp]).map(|s| (mr, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        sections,
        meta: meta(dataset, cfg),
    })
}

/// Single-model evaluation for one relation.
pub fn evaluate_one(dataset: &Dataset, mr: Mr, model: ModelKind, cfg: &EvalConfig) -> Result<EvaluationReport> {
    let s = section(dataset, mr, cfg, &[model])?;
    Ok(EvaluationReport {
        sections: vec![(mr, s)],
        meta: meta(dataset, cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items_each_test_set_has_one_of_each() {
        let labels = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let plan = stratified_splits(&labels, 0.2, 5, 3).unwrap();
        assert_eq!(plan.repeats.len(), 5);
        for s in &plan.repeats {
            assert_eq!(s.test.len(), 2);
            assert_eq!(s.test.iter().filter(|&&i| labels[i] == 1).count(), 1);
        }
        assert_eq!(plan, stratified_splits(&labels, 0.2, 5, 3).unwrap());
    }

    #[test]
    fn sixty_two_items() {
        let labels: Vec<Label> = (0..62).map(|i| (i % 2) as Label).collect();
        let plan = stratified_splits(&labels, 0.2, 5, 0).unwrap();
        for s in &plan.repeats {
            assert!(s.test.len() == 12 || s.test.len() == 13);
            let pos = s.test.iter().filter(|&&i| labels[i] == 1).count();
            assert!((6..=7).contains(&pos));
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..62).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_errors() {
        assert!(stratified_splits(&[1, 0, 0, 0], 0.2, 1, 0).is_err());
        assert!(stratified_splits(&[1, 1, 0, 0], 0.0, 1, 0).is_err());
        assert!(stratified_splits(&[1, 1, 1], 0.2, 1, 0).is_err());
    }

    #[test]
    fn masking_examples() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let mask = mask_unlabeled(&labels, 0.6, 1).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 6);
        for c in 0..2 {
            assert!(labels.iter().zip(&mask).any(|(&l, &m)| l == c && !m));
        }
        assert!(mask_unlabeled(&labels, 0.0, 1).unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn singleton_class_stays_labeled() {
        let labels = [0, 0, 1, 0, 0];
        let mask = mask_unlabeled(&labels, 0.8, 4).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 4);
        assert!(!mask[2]);
    }

    #[test]
    fn masking_a_singleton_is_an_error() {
        assert!(mask_unlabeled(&[1, 0], 0.9, 0).is_err());
        // one item: rounding asks for it to be hidden
        assert!(mask_unlabeled(&[1], 0.6, 0).is_err());
        assert!(mask_unlabeled(&[1, 0, 0], 0.9, 0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert!((accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy(&[1, 0], &[1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn single_point_grid_is_returned() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let only = LabelPropParams::knn(9, 1, 1e-10);
        assert_eq!(nested_cv_labelprop(&x, &[0, 1], &[0, 1], &[only], 0.6, 0).unwrap(), only);
        assert!(nested_cv_labelprop(&x, &[0, 1], &[0, 1], &[], 0.6, 0).is_err());
    }

    #[test]
    fn tie_keeps_first_grid_point() {
        // perfectly separated clusters: every grid point scores 1.0
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { 0.0 } else { 100.0 } + (i % 10) as f64 * 0.01]).collect();
        let y: Vec<Label> = (0..20).map(|i| Label::from(i >= 10)).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let grid = [LabelPropParams::knn(2, 10, 1e-10), LabelPropParams::knn(1, 10, 1e-10)];
        let train: Vec<usize> = (0..20).collect();
        assert_eq!(nested_cv_labelprop(&x, &y, &train, &grid, 0.6, 5).unwrap(), grid[0]);
    }
}
