//! Fixed-schema meta-feature extraction for tabular classification datasets,
//! including landmarking with in-repo 1-NN, decision-stump, and majority
//! classifiers under stratified 5-fold cross-validation.
//!
//! All entropic quantities are in nats. Imputation rules: NaN cells are
//! median-imputed (after being counted in `fraction_missing`), moments of a
//! zero-variance feature are 0, and numeric features are discretized into 10
//! equal-width bins for entropy and mutual information. Statistical moments
//! are computed over numeric (non-categorical) features only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result, Stage};
use crate::seeding;
use crate::stats;

/// Version tag embedded in the registry CSV header.
pub const SCHEMA_VERSION: &str = "mf18/v1";

/// Meta-feature names in schema order.
pub const SCHEMA_NAMES: [&str; 18] = [
    "n_instances",
    "n_features",
    "n_classes",
    "log_instances_per_feature",
    "class_entropy",
    "class_imbalance_ratio",
    "mean_of_feature_means",
    "mean_of_feature_stds",
    "mean_feature_skewness",
    "mean_feature_kurtosis",
    "mean_feature_entropy",
    "mean_mutual_information_with_target",
    "max_mutual_information_with_target",
    "fraction_categorical",
    "fraction_missing",
    "landmark_1nn_accuracy",
    "landmark_stump_accuracy",
    "landmark_majority_accuracy",
];

pub const N_META_FEATURES: usize = 18;

const N_BINS: usize = 10;
const N_FOLDS: usize = 5;

/// Fixed 18-entry numeric description of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetaFeatureVector {
    values: Vec<f64>,
}

impl MetaFeatureVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let err = |msg: String| Error::validation(Stage::Metafeatures, msg);
        if values.len() != N_META_FEATURES {
            return Err(err(format!("meta-feature vector has {} entries, expected {}", values.len(), N_META_FEATURES)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err("meta-feature vector has non-finite entries".into()));
        }
        for (i, name) in SCHEMA_NAMES.iter().enumerate() {
            let v = values[i];
            if name.ends_with("accuracy") && !(0.0..=1.0).contains(&v) {
                return Err(err(format!("{} = {} outside [0, 1]", name, v)));
            }
            if name.contains("entropy") && v < 0.0 {
                return Err(err(format!("{} = {} is negative", name, v)));
            }
        }
        Ok(MetaFeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        SCHEMA_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Compute the full meta-feature vector. Deterministic given `(ds, seed)`;
/// the seed only drives landmarker fold assignment.
pub fn extract(ds: &TabularDataset, seed: u64) -> Result<MetaFeatureVector> {
    let imputed = impute_medians(ds);
    let n = ds.n_rows as f64;
    let p = ds.n_cols as f64;

    let class_counts = ds.class_counts();
    let class_entropy = stats::entropy_nats(&class_counts);
    let majority = *class_counts.iter().max().expect("classes present") as f64;
    let minority = *class_counts.iter().min().expect("classes present") as f64;

    let numeric_cols: Vec<usize> = (0..ds.n_cols).filter(|&j| !ds.categorical_mask[j]).collect();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut skews = Vec::new();
    let mut kurts = Vec::new();
    for &j in &numeric_cols {
        let col = column(&imputed, ds, j);
        means.push(stats::mean(&col));
        stds.push(stats::std_dev(&col));
        skews.push(stats::skewness(&col));
        kurts.push(stats::kurtosis(&col));
    }
    let mean_or_zero = |xs: &[f64]| if xs.is_empty() { 0.0 } else { stats::mean(xs) };

    let mut entropies = Vec::with_capacity(ds.n_cols);
    let mut mis = Vec::with_capacity(ds.n_cols);
    for j in 0..ds.n_cols {
        let col = column(&imputed, ds, j);
        let (bins, n_bins) = discretize(&col, ds.categorical_mask[j]);
        let mut counts = vec![0usize; n_bins];
        for &b in &bins {
            counts[b] += 1;
        }
        entropies.push(stats::entropy_nats(&counts));
        mis.push(stats::mutual_information(&bins, &ds.target, n_bins, ds.n_classes));
    }
    let max_mi = mis.iter().cloned().fold(0.0f64, f64::max);

    let missing = (0..ds.n_rows)
        .flat_map(|i| (0..ds.n_cols).map(move |j| (i, j)))
        .filter(|&(i, j)| ds.get(i, j).is_nan())
        .count() as f64;
    let n_categorical = ds.categorical_mask.iter().filter(|&&c| c).count() as f64;

    let folds = stratified_folds(&ds.target, ds.n_classes, N_FOLDS, seed);
    let acc_1nn = landmark_1nn_with_folds(&imputed, ds, &folds);
    let acc_stump = landmark_stump_with_folds(&imputed, ds, &folds);
    let acc_majority = landmark_majority_with_folds(ds, &folds);

    MetaFeatureVector::from_values(vec![
        n,
        p,
        ds.n_classes as f64,
        (n / p).ln(),
        class_entropy,
        majority / minority,
        mean_or_zero(&means),
        mean_or_zero(&stds),
        mean_or_zero(&skews),
        mean_or_zero(&kurts),
        stats::mean(&entropies),
        stats::mean(&mis),
        max_mi,
        n_categorical / p,
        missing / (n * p),
        acc_1nn,
        acc_stump,
        acc_majority,
    ])
}

/// Mean stratified 5-fold CV accuracy of a 1-nearest-neighbor classifier on
/// z-scored features (fold-local statistics), distance ties broken by lowest
/// training row index.
pub fn landmark_1nn(ds: &TabularDataset, seed: u64) -> Result<f64> {
    let imputed = impute_medians(ds);
    let folds = stratified_folds(&ds.target, ds.n_classes, N_FOLDS, seed);
    Ok(landmark_1nn_with_folds(&imputed, ds, &folds))
}

/// Mean stratified 5-fold CV accuracy of a depth-1 information-gain tree.
pub fn landmark_stump(ds: &TabularDataset, seed: u64) -> Result<f64> {
    let imputed = impute_medians(ds);
    let folds = stratified_folds(&ds.target, ds.n_classes, N_FOLDS, seed);
    Ok(landmark_stump_with_folds(&imputed, ds, &folds))
}

/// Mean stratified 5-fold CV accuracy of predicting the training majority.
pub fn landmark_majority(ds: &TabularDataset, seed: u64) -> Result<f64> {
    let folds = stratified_folds(&ds.target, ds.n_classes, N_FOLDS, seed);
    Ok(landmark_majority_with_folds(ds, &folds))
}

/// Per-class shuffled round-robin fold assignment.
pub fn stratified_folds(target: &[usize], n_classes: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut folds = vec![0usize; target.len()];
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..target.len()).filter(|&i| target[i] == class).collect();
        let mut rng = seeding::stream(seed, "folds", class as u64);
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            folds[i] = pos % n_folds;
        }
    }
    folds
}

/// Median-imputed copy of the feature matrix (row-major).
fn impute_medians(ds: &TabularDataset) -> Vec<f64> {
    let mut data: Vec<f64> = (0..ds.n_rows)
        .flat_map(|i| (0..ds.n_cols).map(move |j| ds.get(i, j)))
        .collect();
    for j in 0..ds.n_cols {
        let mut present: Vec<f64> = (0..ds.n_rows).map(|i| ds.get(i, j)).filter(|v| !v.is_nan()).collect();
        let fill = if present.is_empty() {
            0.0
        } else {
            present.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
            let m = present.len();
            if m % 2 == 1 {
                present[m / 2]
            } else {
                (present[m / 2 - 1] + present[m / 2]) / 2.0
            }
        };
        for i in 0..ds.n_rows {
            let cell = &mut data[i * ds.n_cols + j];
            if cell.is_nan() {
                *cell = fill;
            }
        }
    }
    data
}

fn column(data: &[f64], ds: &TabularDataset, j: usize) -> Vec<f64> {
    (0..ds.n_rows).map(|i| data[i * ds.n_cols + j]).collect()
}

/// Discretize a feature: categorical columns use their ordinal codes
/// directly, numeric columns get 10 equal-width bins.
fn discretize(col: &[f64], categorical: bool) -> (Vec<usize>, usize) {
    if categorical {
        let max = col.iter().cloned().fold(0.0f64, f64::max) as usize;
        (col.iter().map(|&v| v as usize).collect(), max + 1)
    } else {
        (stats::equal_width_bins(col, N_BINS), N_BINS)
    }
}

pub(crate) fn landmark_1nn_with_folds(data: &[f64], ds: &TabularDataset, folds: &[usize]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..N_FOLDS {
        let train: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] == fold).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        // Fold-local z-scoring; zero-variance features map to 0 everywhere.
        let mut mu = vec![0.0; ds.n_cols];
        let mut sd = vec![0.0; ds.n_cols];
        for j in 0..ds.n_cols {
            let col: Vec<f64> = train.iter().map(|&i| data[i * ds.n_cols + j]).collect();
            mu[j] = stats::mean(&col);
            sd[j] = stats::std_dev(&col);
        }
        let z = |i: usize, j: usize| -> f64 {
            if sd[j] > 0.0 {
                (data[i * ds.n_cols + j] - mu[j]) / sd[j]
            } else {
                0.0
            }
        };
        for &t in &test {
            let mut best_d = f64::INFINITY;
            let mut best_label = 0usize;
            for &tr in &train {
                let mut d = 0.0;
                for j in 0..ds.n_cols {
                    let diff = z(t, j) - z(tr, j);
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best_label = ds.target[tr];
                }
            }
            if best_label == ds.target[t] {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Best (feature, threshold) split by information gain; thresholds scanned at
/// midpoints between consecutive sorted distinct values.
fn fit_stump(data: &[f64], ds: &TabularDataset, train: &[usize]) -> Option<(usize, f64, usize, usize)> {
    let mut counts = vec![0usize; ds.n_classes];
    for &i in train {
        counts[ds.target[i]] += 1;
    }
    let parent_entropy = stats::entropy_nats(&counts);
    let n = train.len() as f64;

    let mut best: Option<(f64, usize, f64, usize, usize)> = None;
    for j in 0..ds.n_cols {
        let mut pairs: Vec<(f64, usize)> = train.iter().map(|&i| (data[i * ds.n_cols + j], ds.target[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("imputed values"));
        let mut left = vec![0usize; ds.n_classes];
        let mut right = counts.clone();
        for t in 0..pairs.len().saturating_sub(1) {
            left[pairs[t].1] += 1;
            right[pairs[t].1] -= 1;
            if pairs[t].0 == pairs[t + 1].0 {
                continue;
            }
            let nl = (t + 1) as f64;
            let nr = n - nl;
            let gain = parent_entropy
                - (nl / n) * stats::entropy_nats(&left)
                - (nr / n) * stats::entropy_nats(&right);
            let threshold = (pairs[t].0 + pairs[t + 1].0) / 2.0;
            let better = match &best {
                None => gain > 1e-12,
                Some((g, ..)) => gain > g + 1e-12,
            };
            if better {
                let left_label = argmax_count(&left);
                let right_label = argmax_count(&right);
                best = Some((gain, j, threshold, left_label, right_label));
            }
        }
    }
    best.map(|(_, j, thr, l, r)| (j, thr, l, r))
}

fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn landmark_stump_with_folds(data: &[f64], ds: &TabularDataset, folds: &[usize]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..N_FOLDS {
        let train: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] == fold).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let stump = fit_stump(data, ds, &train);
        let majority = {
            let mut counts = vec![0usize; ds.n_classes];
            for &i in &train {
                counts[ds.target[i]] += 1;
            }
            argmax_count(&counts)
        };
        for &t in &test {
            let pred = match stump {
                Some((j, thr, l, r)) => {
                    if data[t * ds.n_cols + j] <= thr {
                        l
                    } else {
                        r
                    }
                }
                None => majority,
            };
            if pred == ds.target[t] {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

pub(crate) fn landmark_majority_with_folds(ds: &TabularDataset, folds: &[usize]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..N_FOLDS {
        let train: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..ds.n_rows).filter(|&i| folds[i] == fold).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; ds.n_classes];
        for &i in &train {
            counts[ds.target[i]] += 1;
        }
        let majority = argmax_count(&counts);
        correct += test.iter().filter(|&&t| ds.target[t] == majority).count();
        total += test.len();
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn balanced_two_class(n: usize, p: usize, seed: u64) -> TabularDataset {
        let mut rng = seeding::stream(seed, "test-ds", 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
            .collect();
        let target: Vec<usize> = (0..n).map(|i| i % 2).collect();
        TabularDataset::new(rows, target, vec![false; p]).unwrap()
    }

    #[test]
    fn balanced_dataset_entropy_and_imbalance() {
        let ds = balanced_two_class(100, 4, 1);
        let mf = extract(&ds, 42).unwrap();
        assert_abs_diff_eq!(mf.get("class_entropy").unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(mf.get("class_imbalance_ratio").unwrap(), 1.0);
        assert_eq!(mf.get("n_instances").unwrap(), 100.0);
        assert_eq!(mf.get("n_features").unwrap(), 4.0);
        assert_eq!(mf.get("n_classes").unwrap(), 2.0);
        assert_abs_diff_eq!(mf.get("log_instances_per_feature").unwrap(), (100.0f64 / 4.0).ln());
    }

    #[test]
    fn sonar_shaped_dataset_reports_its_shape() {
        let ds = balanced_two_class(208, 60, 2);
        let mf = extract(&ds, 42).unwrap();
        assert_eq!(mf.get("n_instances").unwrap(), 208.0);
        assert_eq!(mf.get("n_features").unwrap(), 60.0);
        assert_eq!(mf.get("n_classes").unwrap(), 2.0);
    }

    #[test]
    fn threshold_dataset_has_perfect_stump_and_max_mi_near_class_entropy() {
        // Feature 0 determines the class; bin edges cannot straddle the
        // threshold because values sit on a 0.1 grid offset by 0.05.
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![0.05 + 0.1 * ((i % 10) as f64), (i as f64 * 0.37) % 1.0])
            .collect();
        let target: Vec<usize> = rows.iter().map(|r| usize::from(r[0] > 0.5)).collect();
        let ds = TabularDataset::new(rows, target, vec![false, false]).unwrap();
        let mf = extract(&ds, 42).unwrap();
        assert_eq!(mf.get("landmark_stump_accuracy").unwrap(), 1.0);
        let gap = (mf.get("max_mutual_information_with_target").unwrap() - mf.get("class_entropy").unwrap()).abs();
        assert!(gap <= 0.05, "MI vs class entropy gap {}", gap);
    }

    #[test]
    fn duplicated_rows_give_perfect_1nn() {
        let mut rng = seeding::stream(3, "dup", 0);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for i in 0..60 {
            let row: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            rows.push(row.clone());
            rows.push(row);
            target.push(i % 2);
            target.push(i % 2);
        }
        let ds = TabularDataset::new(rows, target, vec![false; 3]).unwrap();
        // Every point's twin lands in some other fold with overwhelming
        // probability at n=120; check across a few seeds.
        let acc = landmark_1nn(&ds, 42).unwrap();
        assert!(acc >= 0.95, "twin 1-NN accuracy {}", acc);
    }

    #[test]
    fn random_labels_give_chance_level_1nn() {
        let mut accs = Vec::new();
        for seed in 0..20u64 {
            let mut rng = seeding::stream(seed, "noise", 1);
            let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
            let mut target: Vec<usize> = (0..500).map(|_| rng.random_range(0..2)).collect();
            // Ensure both classes appear.
            target[0] = 0;
            target[1] = 1;
            let ds = TabularDataset::new(rows, target, vec![false; 5]).unwrap();
            accs.push(landmark_1nn(&ds, seed).unwrap());
        }
        let mean_acc = stats::mean(&accs);
        assert!((0.4..=0.6).contains(&mean_acc), "mean accuracy {}", mean_acc);
    }

    #[test]
    fn separated_clusters_give_near_perfect_1nn() {
        let mut rng = seeding::stream(9, "clusters", 0);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for i in 0..200 {
            let center = if i % 2 == 0 { 0.0 } else { 10.0 };
            rows.push(vec![center + rng.random::<f64>(), center + rng.random::<f64>()]);
            target.push(i % 2);
        }
        let ds = TabularDataset::new(rows, target, vec![false; 2]).unwrap();
        assert!(landmark_1nn(&ds, 42).unwrap() >= 0.98);
    }

    #[test]
    fn xor_labels_defeat_the_stump() {
        let mut rng = seeding::stream(11, "xor", 0);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for _ in 0..400 {
            let a = rng.random::<f64>();
            let b = rng.random::<f64>();
            rows.push(vec![a, b]);
            target.push(usize::from((a > 0.5) ^ (b > 0.5)));
        }
        let ds = TabularDataset::new(rows, target, vec![false; 2]).unwrap();
        let acc = landmark_stump(&ds, 42).unwrap();
        assert!((0.4..=0.6).contains(&acc), "xor stump accuracy {}", acc);
    }

    #[test]
    fn constant_features_fall_back_to_majority() {
        let rows: Vec<Vec<f64>> = (0..90).map(|_| vec![1.0, 1.0]).collect();
        let target: Vec<usize> = (0..90).map(|i| usize::from(i % 3 == 0)).collect();
        let ds = TabularDataset::new(rows, target, vec![false; 2]).unwrap();
        let stump = landmark_stump(&ds, 42).unwrap();
        let majority = landmark_majority(&ds, 42).unwrap();
        assert_abs_diff_eq!(stump, majority, epsilon = 1e-12);
        assert_abs_diff_eq!(majority, 2.0 / 3.0, epsilon = 1.0 / 90.0);
    }

    #[test]
    fn majority_accuracy_matches_class_frequency() {
        let ds = balanced_two_class(101, 3, 5);
        let mf = extract(&ds, 42).unwrap();
        let freq = 51.0 / 101.0;
        let acc = mf.get("landmark_majority_accuracy").unwrap();
        assert!((acc - freq).abs() <= 1.0 / 101.0, "majority {} vs freq {}", acc, freq);
    }

    #[test]
    fn extract_is_deterministic() {
        let ds = balanced_two_class(80, 6, 7);
        let a = extract(&ds, 42).unwrap();
        let b = extract(&ds, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_permutation_only_moves_landmarkers_slightly() {
        let ds = balanced_two_class(250, 5, 13);
        let mf = extract(&ds, 42).unwrap();
        let perm: Vec<usize> = (0..250).rev().collect();
        let permuted = ds.permuted(&perm).unwrap();
        let mf_p = extract(&permuted, 42).unwrap();
        for (i, name) in SCHEMA_NAMES.iter().enumerate() {
            let (a, b) = (mf.values()[i], mf_p.values()[i]);
            if name.starts_with("landmark") {
                assert!((a - b).abs() <= 0.05, "{}: {} vs {}", name, a, b);
            } else {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn permutation_with_carried_folds_is_exact() {
        let ds = balanced_two_class(120, 4, 17);
        let folds = stratified_folds(&ds.target, ds.n_classes, N_FOLDS, 42);
        let imputed = impute_medians(&ds);
        let a = landmark_1nn_with_folds(&imputed, &ds, &folds);

        let perm: Vec<usize> = (0..120).map(|i| (i * 7) % 120).collect();
        let permuted = ds.permuted(&perm).unwrap();
        let carried: Vec<usize> = perm.iter().map(|&i| folds[i]).collect();
        let imputed_p = impute_medians(&permuted);
        let b = landmark_1nn_with_folds(&imputed_p, &permuted, &carried);
        assert_eq!(a, b);
    }

    #[test]
    fn positive_scaling_leaves_scale_free_features_unchanged() {
        let ds = balanced_two_class(150, 4, 19);
        let mf = extract(&ds, 42).unwrap();
        let scaled_rows: Vec<Vec<f64>> = (0..ds.n_rows).map(|i| ds.row(i).iter().map(|&v| v * 4.0).collect()).collect();
        let scaled = TabularDataset::new(scaled_rows, ds.target.clone(), ds.categorical_mask.clone()).unwrap();
        let mf_s = extract(&scaled, 42).unwrap();
        for name in ["landmark_1nn_accuracy", "mean_feature_skewness", "mean_feature_kurtosis"] {
            assert_abs_diff_eq!(mf.get(name).unwrap(), mf_s.get(name).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_cells_are_counted_then_imputed() {
        let rows = vec![
            vec![1.0, f64::NAN],
            vec![2.0, 4.0],
            vec![f64::NAN, 6.0],
            vec![3.0, 8.0],
        ];
        let ds = TabularDataset::new(rows, vec![0, 1, 0, 1], vec![false, false]).unwrap();
        let mf = extract(&ds, 42).unwrap();
        assert_abs_diff_eq!(mf.get("fraction_missing").unwrap(), 2.0 / 8.0);
        assert!(mf.values().iter().all(|v| v.is_finite()));
    }
}
