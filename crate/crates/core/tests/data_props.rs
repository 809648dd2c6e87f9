mod common;

use fraud_core::baselines::{Classifier, Knn};
use fraud_core::dataset::{
    class_counts, generate_synthetic, parse_csv, to_csv_string, Schema, SyntheticKind, SyntheticSpec,
};
use fraud_core::metrics::evaluate;
use fraud_core::preprocess::{
    apply_iqr_bounds, balance_undersample, fit_iqr_bounds, iqr_bounds, pearson_correlation, shuffle,
    stratified_split, stratified_split_indices, FitOn,
};
use proptest::prelude::*;

fn sorted_rows(ds: &fraud_core::dataset::LabeledDataset) -> Vec<(Vec<u64>, u8)> {
    let mut rows: Vec<(Vec<u64>, u8)> = (0..ds.n_rows())
        .map(|i| (ds.row(i).iter().map(|v| v.to_bits()).collect(), ds.labels()[i]))
        .collect();
    rows.sort();
    rows
}

fn labelled_rows(max_rows: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
    (2usize..max_rows, 1usize..5).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-1e6f64..1e6, d), n),
            prop::collection::vec(0u8..2, n - 2).prop_map(|mut l| {
                l.extend([0, 1]);
                l
            }),
        )
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact((rows, labels) in labelled_rows(40)) {
        let ds = common::dataset(&rows, labels);
        let (back, _) = parse_csv(&to_csv_string(&ds), Schema::AutoDetect).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn balance_keeps_minority_and_equalises((rows, labels) in labelled_rows(60), seed in any::<u64>()) {
        let ds = common::dataset(&rows, labels);
        let before = class_counts(&ds);
        let out = balance_undersample(&ds, seed).unwrap();
        let after = class_counts(&out);
        let minority = before.n_fraud.min(before.n_legit);
        prop_assert_eq!((after.n_fraud, after.n_legit), (minority, minority));
        prop_assert_eq!(balance_undersample(&ds, seed).unwrap(), out);
    }

    #[test]
    fn shuffle_is_a_permutation((rows, labels) in labelled_rows(40), seed in any::<u64>()) {
        let ds = common::dataset(&rows, labels);
        prop_assert_eq!(sorted_rows(&shuffle(&ds, seed)), sorted_rows(&ds));
    }

    #[test]
    fn split_partitions_and_stratifies(
        n0 in 2usize..80,
        n1 in 2usize..80,
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        let (train, test) = stratified_split_indices(&labels, frac, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n0 + n1).collect::<Vec<_>>());
        for (class, n) in [(0u8, n0), (1u8, n1)] {
            let t = test.iter().filter(|&&i| labels[i] == class).count();
            let want = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(t, want);
        }
    }

    #[test]
    fn iqr_removal_keeps_exactly_in_bounds_rows(values in prop::collection::vec(-100f64..100.0, 4..60)) {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let labels: Vec<u8> = (0..rows.len()).map(|i| (i % 2) as u8).collect();
        let ds = common::dataset(&rows, labels);
        let bounds = fit_iqr_bounds(&ds, &["x0"], FitOn::AllRows).unwrap();
        let (kept, report) = apply_iqr_bounds(&ds, &bounds).unwrap();
        let b = &bounds[0];
        let inside = values.iter().filter(|&&v| v >= b.lower && v <= b.upper).count();
        prop_assert_eq!(kept.n_rows(), inside);
        prop_assert_eq!(report.rows_removed, values.len() - inside);
        prop_assert!(b.q1 <= b.q3);
    }

    #[test]
    fn correlation_is_symmetric_with_unit_diagonal((rows, labels) in labelled_rows(30)) {
        let ds = common::dataset(&rows, labels);
        let cm = pearson_correlation(&ds).unwrap();
        let k = cm.labels.len();
        for i in 0..k {
            for j in 0..k {
                let v = cm.values[(i, j)];
                prop_assert!(v.abs() <= 1.0 + 1e-12);
                prop_assert_eq!(v, cm.values[(j, i)]);
            }
            if !cm.constant[i] {
                prop_assert!((cm.values[(i, i)] - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn iqr_fixture_bounds() {
    let b = iqr_bounds(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
    assert_eq!((b.q1, b.q3, b.iqr, b.lower, b.upper), (2.25, 4.75, 2.5, -1.5, 8.5));
}

#[test]
fn one_nn_separates_blob_fixture() {
    let ds = generate_synthetic(&SyntheticSpec {
        n_per_class: 500,
        kind: SyntheticKind::GaussianBlobs { mu: 3.0 },
        n_features: 2,
        seed: 1,
    })
    .unwrap();
    let (train, test) = stratified_split(&ds, 0.5, 1).unwrap();
    let mut knn = Knn::new(1);
    knn.fit(&train, 0).unwrap();
    let r = evaluate(&knn.score_dataset(&test).unwrap(), test.labels(), knn.threshold()).unwrap();
    let c = r.confusion;
    let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
    // 1.0 observed at these seeds
    assert!(accuracy > 0.95, "{accuracy}");
}

#[test]
fn xor_fixture_is_centred_in_x0() {
    let ds = generate_synthetic(&SyntheticSpec {
        n_per_class: 500,
        kind: SyntheticKind::XorQuadrants,
        n_features: 2,
        seed: 1,
    })
    .unwrap();
    for class in [0u8, 1] {
        let idx = ds.indices_of_class(class);
        let mean = idx.iter().map(|&i| ds.row(i)[0]).sum::<f64>() / idx.len() as f64;
        assert!(mean.abs() < 0.2, "class {class}: {mean}");
    }
}
