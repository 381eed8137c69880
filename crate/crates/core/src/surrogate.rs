//! Performance surrogate: a regression forest over encoded configurations
//! with a held-out R² estimate and a training fingerprint.

use rand::seq::SliceRandom;

use crate::error::{Error, Result, Stage};
use crate::forest::{ForestConfig, RegressionForest};
use crate::retrieval::MetaDataset;
use crate::seeding;

/// Identifies what a surrogate was trained on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingFingerprint {
    pub n_rows: usize,
    pub space_hash: u64,
    pub seed: u64,
}

/// Fitted surrogate. `holdout_r2` is reported so downstream consumers can
/// judge how much to trust the attributions; no threshold is enforced.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub forest: RegressionForest<f64>,
    pub fingerprint: TrainingFingerprint,
    pub holdout_r2: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Fit options beyond the spec defaults, used by tests and debugging.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub forest: ForestConfig,
    /// Fraction of rows held out before fitting for the R² estimate.
    pub holdout_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            forest: ForestConfig::default(),
            holdout_fraction: 0.2,
        }
    }
}

/// Fit a surrogate on a meta-dataset: 100 bootstrap trees, per-split random
/// subset of ceil(k/3) dimensions, minimum leaf size 3, no depth limit, R²
/// from a 20% split held out before fitting. Deterministic given the seed.
pub fn fit(t: &MetaDataset, seed: u64, n_trees: usize) -> Result<SurrogateModel> {
    let opts = FitOptions {
        forest: ForestConfig {
            n_trees,
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    fit_rows_with(
        &t.rows.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>(),
        &t.rows.iter().map(|(_, y)| *y).collect::<Vec<_>>(),
        t.space.fingerprint(),
        seed,
        &opts,
    )
}

/// Lower-level fit over raw encoded rows.
pub fn fit_rows_with(
    rows: &[Vec<f64>],
    targets: &[f64],
    space_hash: u64,
    seed: u64,
    opts: &FitOptions,
) -> Result<SurrogateModel> {
    if rows.len() < 10 {
        return Err(Error::validation(
            Stage::Surrogate,
            format!("surrogate needs >= 10 rows, got {}", rows.len()),
        ));
    }
    let n = rows.len();
    let n_holdout = ((n as f64) * opts.holdout_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeding::stream(seed, "holdout", 0);
    order.shuffle(&mut rng);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
    let forest = RegressionForest::fit(&train_rows, &train_y, &opts.forest)?;

    let holdout_r2 = if holdout_idx.is_empty() {
        0.0
    } else {
        let ys: Vec<f64> = holdout_idx.iter().map(|&i| targets[i]).collect();
        // Translated mean so constant holdouts give SST exactly 0.
        let mean = ys[0] + ys.iter().map(|y| y - ys[0]).sum::<f64>() / ys.len() as f64;
        let mut sse = 0.0;
        let mut sst = 0.0;
        for &i in holdout_idx {
            let pred = forest.predict_unchecked(&rows[i]);
            sse += (targets[i] - pred) * (targets[i] - pred);
            sst += (targets[i] - mean) * (targets[i] - mean);
        }
        if sst > 0.0 {
            1.0 - sse / sst
        } else {
            0.0
        }
    };

    let y_min = train_y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = train_y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SurrogateModel {
        forest,
        fingerprint: TrainingFingerprint {
            n_rows: n,
            space_hash,
            seed,
        },
        holdout_r2,
        y_min,
        y_max,
    })
}

/// Predict performance at an encoded configuration.
pub fn predict(model: &SurrogateModel, x: &[f64]) -> Result<f64> {
    model.forest.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fit_xy(rows: Vec<Vec<f64>>, y: Vec<f64>, seed: u64) -> SurrogateModel {
        fit_rows_with(&rows, &y, 0, seed, &FitOptions::default()).unwrap()
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let y = vec![0.5; 9];
        assert!(fit_rows_with(&rows, &y, 0, 0, &FitOptions::default()).is_err());
    }

    #[test]
    fn constant_target_predicts_constant_with_zero_r2() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 60.0]).collect();
        let model = fit_xy(rows, vec![0.7; 60], 1);
        assert_eq!(model.holdout_r2, 0.0);
        assert_eq!(predict(&model, &[0.33]).unwrap(), 0.7);
    }

    #[test]
    fn noiseless_step_function_reaches_high_r2() {
        let mut rng = crate::seeding::stream(2, "sstep", 0);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.4 { 0.85 } else { 0.15 }).collect();
        let model = fit_xy(rows, y, 3);
        assert!(model.holdout_r2 >= 0.95, "r2 {}", model.holdout_r2);
    }

    #[test]
    fn predictions_bounded_by_training_range() {
        let mut rng = crate::seeding::stream(4, "bound", 0);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.2 + 0.6 * r[0]).collect();
        let model = fit_xy(rows, y, 5);
        for _ in 0..100 {
            let p = predict(&model, &[rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()]).unwrap();
            assert!(p >= model.y_min && p <= model.y_max);
        }
    }

    #[test]
    fn fingerprint_records_inputs() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let model = fit_rows_with(&rows, &y, 99, 7, &FitOptions::default()).unwrap();
        assert_eq!(model.fingerprint, TrainingFingerprint { n_rows: 30, space_hash: 99, seed: 7 });
    }
}
