use mrpred_core::eval::{
    evaluate_models, mask_unlabeled, nested_cv_labelprop, stratified_splits, EvalConfig, ModelKind,
};
use mrpred_core::labelprop::{self, LabelPropParams};
use mrpred_core::numerics::{paired_t_test, DenseMatrix};
use mrpred_core::svm::{self, SvmParams};
use mrpred_core::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tight 1-D clusters of four, spaced 10 apart, classes alternating by
/// cluster. Three neighbours stay inside a cluster; seven cannot.
fn alternating_clusters(clusters: usize) -> (DenseMatrix, Vec<Label>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for c in 0..clusters {
        for k in 0..4 {
            rows.push(vec![10.0 * c as f64 + 0.1 * k as f64]);
            y.push(Label::from(c % 2 == 1));
        }
    }
    (DenseMatrix::from_rows(&rows).unwrap(), y)
}

fn validation_accuracy_by_hand(x: &DenseMatrix, y: &[Label], params: &LabelPropParams) -> f64 {
    // Every cluster keeps at least one labeled member here, so the fit
    // labels its own cluster correctly exactly when k < 4.
    let idx: Vec<usize> = (0..y.len()).collect();
    let labeled: Vec<usize> = idx.iter().copied().filter(|i| i % 4 == 0).collect();
    let unlabeled: Vec<usize> = idx.iter().copied().filter(|i| i % 4 != 0).collect();
    let yl: Vec<Label> = labeled.iter().map(|&i| y[i]).collect();
    let model = labelprop::fit(&x.select_rows(&labeled), &yl, &x.select_rows(&unlabeled), params).unwrap();
    let pred = model.transduction();
    let truth: Vec<Label> = labeled.iter().chain(&unlabeled).map(|&i| y[i]).collect();
    pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[test]
fn nested_cv_prefers_the_neighbourhood_that_separates() {
    let (x, y) = alternating_clusters(12);
    let k7 = LabelPropParams::knn(7, 100, 1e-10);
    let k3 = LabelPropParams::knn(3, 100, 1e-10);
    // Exhaustive check of the planted signal: k=3 is perfect, k=7 is not.
    assert_eq!(validation_accuracy_by_hand(&x, &y, &k3), 1.0);
    assert!(validation_accuracy_by_hand(&x, &y, &k7) < 1.0);

    let train: Vec<usize> = (0..y.len()).collect();
    for seed in 0..5 {
        let chosen = nested_cv_labelprop(&x, &y, &train, &[k7, k3], 0.6, seed).unwrap();
        assert_eq!(chosen, k3, "seed {seed}");
    }
}

#[test]
fn pure_noise_stays_near_majority_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 62;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
    let y: Vec<Label> = (0..n).map(|_| Label::from(rng.random_bool(0.5))).collect();
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let ones = y.iter().filter(|&&l| l == 1).count();
    let majority = ones.max(n - ones) as f64 / n as f64;

    let cfg = EvalConfig {
        repeats: 20,
        seed: 9,
        ..EvalConfig::default()
    };
    let plan = stratified_splits(&y, cfg.test_fraction, cfg.repeats, cfg.seed).unwrap();
    let r = evaluate_models(&x, &y, &plan, &cfg, &[ModelKind::Svm, ModelKind::LabelProp]).unwrap();
    let svm_mean = r.svm.unwrap().mean;
    let lp_mean = r.labelprop.unwrap().mean;
    assert!((svm_mean - majority).abs() <= 0.15, "svm {svm_mean} vs majority {majority}");
    assert!((lp_mean - majority).abs() <= 0.15, "lp {lp_mean} vs majority {majority}");
}

#[test]
fn feature_equal_to_label_is_learned_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<Label> = (0..40).map(|_| Label::from(rng.random_bool(0.5))).collect();
    let rows: Vec<Vec<f64>> = y.iter().map(|&l| vec![f64::from(l)]).collect();
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let cfg = EvalConfig::default();
    let plan = stratified_splits(&y, cfg.test_fraction, cfg.repeats, 1).unwrap();
    let r = evaluate_models(&x, &y, &plan, &cfg, &[ModelKind::Svm, ModelKind::LabelProp]).unwrap();
    assert_eq!(r.svm.unwrap().mean, 1.0);
    assert_eq!(r.labelprop.unwrap().mean, 1.0);
}

#[test]
fn identical_accuracies_give_p_one() {
    let a = [0.7, 0.8, 0.75, 0.9, 0.6];
    let r = paired_t_test(&a, &a).unwrap();
    assert_eq!(r.t_statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
}

fn separable(seed: u64) -> (DenseMatrix, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    while rows.len() < 20 {
        let p: [f64; 2] = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let s = p[0] - 0.5 * p[1] + 0.3;
        if s.abs() > 0.8 {
            rows.push(p.to_vec());
            y.push(Label::from(s > 0.0));
        }
    }
    (DenseMatrix::from_rows(&rows).unwrap(), y)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn splits_partition_and_stratify(
        labels in prop::collection::vec(0u8..2, 10..80).prop_filter("two classes of size >= 2", |l| {
            let ones = l.iter().filter(|&&v| v == 1).count();
            ones >= 2 && l.len() - ones >= 2
        }),
        seed in any::<u64>(),
    ) {
        let plan = stratified_splits(&labels, 0.2, 3, seed).unwrap();
        for split in &plan.repeats {
            let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for c in 0..2u8 {
                prop_assert!(split.train.iter().any(|&i| labels[i] == c));
            }
        }
    }

    #[test]
    fn masking_hides_exact_count_and_keeps_each_class(
        labels in prop::collection::vec(0u8..2, 4..60).prop_filter("two classes of size >= 2", |l| {
            let ones = l.iter().filter(|&&v| v == 1).count();
            ones >= 2 && l.len() - ones >= 2
        }),
        seed in any::<u64>(),
    ) {
        let mask = mask_unlabeled(&labels, 0.6, seed).unwrap();
        let expected = (0.6 * labels.len() as f64).round() as usize;
        prop_assert_eq!(mask.iter().filter(|&&m| m).count(), expected);
        for c in 0..2u8 {
            prop_assert!(labels.iter().zip(&mask).any(|(&l, &m)| l == c && !m));
        }
    }

    #[test]
    fn svm_predictions_survive_feature_rescaling(seed in 0u64..1000, scale in 0.25f64..4.0) {
        let (x, y) = separable(seed);
        let base = svm::fit(&x, &y, &SvmParams { c: 10.0, ..SvmParams::default() }).unwrap();
        let scaled_rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).iter().map(|v| v * scale).collect()).collect();
        let xs = DenseMatrix::from_rows(&scaled_rows).unwrap();
        let scaled = svm::fit(&xs, &y, &SvmParams { c: 10.0 / scale, ..SvmParams::default() }).unwrap();
        prop_assert_eq!(base.predict(&x).unwrap(), scaled.predict(&xs).unwrap());
    }

    #[test]
    fn nearest_labeled_neighbour_wins_in_one_dimension(
        labeled in prop::collection::btree_map(-50i32..50, 0u8..2, 1..6),
        unlabeled in prop::collection::btree_set(-50i32..50, 1..6),
        max_iter in 1usize..50,
    ) {
        let unlabeled: Vec<i32> = unlabeled.into_iter().filter(|u| !labeled.contains_key(u)).collect();
        prop_assume!(!unlabeled.is_empty());
        let xl: Vec<Vec<f64>> = labeled.keys().map(|&v| vec![f64::from(v)]).collect();
        let yl: Vec<Label> = labeled.values().copied().collect();
        let xu: Vec<Vec<f64>> = unlabeled.iter().map(|&v| vec![f64::from(v)]).collect();
        let model = labelprop::fit(
            &DenseMatrix::from_rows(&xl).unwrap(),
            &yl,
            &DenseMatrix::from_rows(&xu).unwrap(),
            &LabelPropParams::knn(1, max_iter, 1e-10),
        ).unwrap();
        let points: Vec<f64> = xl.iter().chain(&xu).map(|r| r[0]).collect();
        let transduced = model.transduction();
        for (u, &pu) in points.iter().enumerate().skip(xl.len()) {
            // Nearest other point, lower index on ties.
            let nearest = (0..points.len())
                .filter(|&j| j != u)
                .min_by(|&a, &b| (points[a] - pu).abs().total_cmp(&(points[b] - pu).abs()).then(a.cmp(&b)))
                .unwrap();
            if nearest < xl.len() {
                prop_assert_eq!(transduced[u], yl[nearest]);
            }
        }
    }
}
