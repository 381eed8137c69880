//! In-memory tabular classification dataset and its CSV loader.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result, Stage};

/// A tabular classification dataset. Features are stored row-major; missing
/// cells are NaN. Categorical features are ordinal-encoded at load time and
/// flagged in `categorical_mask`.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    data: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub target: Vec<usize>,
    pub n_classes: usize,
    pub categorical_mask: Vec<bool>,
    pub feature_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        target: Vec<usize>,
        categorical_mask: Vec<bool>,
    ) -> Result<Self> {
        let err = |msg: String| Error::validation(Stage::Metafeatures, msg);
        let n_rows = rows.len();
        if n_rows < 2 {
            return Err(err("dataset needs at least 2 rows".into()));
        }
        let n_cols = rows[0].len();
        if n_cols < 1 {
            return Err(err("dataset needs at least 1 feature".into()));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(err("ragged feature rows".into()));
        }
        if target.len() != n_rows {
            return Err(err("target length does not match row count".into()));
        }
        if categorical_mask.len() != n_cols {
            return Err(err("categorical mask length does not match feature count".into()));
        }
        let n_classes = target.iter().copied().max().map_or(0, |m| m + 1);
        if n_classes < 2 {
            return Err(err("dataset needs at least 2 classes".into()));
        }
        let mut counts = vec![0usize; n_classes];
        for &y in &target {
            counts[y] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(err("every class label in 0..c must appear at least once".into()));
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            data.extend(r);
        }
        let feature_names = (0..n_cols).map(|j| format!("f{}", j)).collect();
        Ok(TabularDataset {
            data,
            n_rows,
            n_cols,
            target,
            n_classes,
            categorical_mask,
            feature_names,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &y in &self.target {
            counts[y] += 1;
        }
        counts
    }

    /// Reorder rows by `perm` (new row i = old row perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_rows {
            return Err(Error::validation(Stage::Metafeatures, "permutation length mismatch"));
        }
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| self.row(i).to_vec()).collect();
        let target: Vec<usize> = perm.iter().map(|&i| self.target[i]).collect();
        let mut ds = TabularDataset::new(rows, target, self.categorical_mask.clone())?;
        ds.feature_names = self.feature_names.clone();
        Ok(ds)
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Load a CSV with a header row. `target_col` names the class column; all
/// other columns become features. A feature column is categorical when any
/// non-missing cell fails to parse as a number, or when listed in
/// `force_categorical`. Categories and class labels are ordinal-encoded in
/// sorted label order.
pub fn load_csv(path: &Path, target_col: &str, force_categorical: &[String]) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::validation(Stage::Metafeatures, format!("{}: {}", path.display(), e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::validation(Stage::Metafeatures, format!("{}: {}", path.display(), e)))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = headers.iter().position(|h| h == target_col).ok_or_else(|| {
        Error::validation(
            Stage::Metafeatures,
            format!("target column '{}' not found in {}", target_col, path.display()),
        )
    })?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::validation(Stage::Metafeatures, format!("{} row {}: {}", path.display(), line + 2, e))
        })?;
        if record.len() != headers.len() {
            return Err(Error::validation(
                Stage::Metafeatures,
                format!("{} row {}: expected {} fields, got {}", path.display(), line + 2, headers.len(), record.len()),
            ));
        }
        cells.push(record.iter().map(|c| c.to_string()).collect());
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != target_idx).collect();
    let mut categorical = vec![false; feature_cols.len()];
    for (fi, &j) in feature_cols.iter().enumerate() {
        let forced = force_categorical.iter().any(|c| c == &headers[j]);
        let non_numeric = cells
            .iter()
            .any(|row| !is_missing(&row[j]) && row[j].trim().parse::<f64>().is_err());
        categorical[fi] = forced || non_numeric;
    }

    // Sorted-label ordinal codes for each categorical column.
    let mut codes: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); feature_cols.len()];
    for (fi, &j) in feature_cols.iter().enumerate() {
        if categorical[fi] {
            let mut labels: Vec<String> = cells
                .iter()
                .filter(|row| !is_missing(&row[j]))
                .map(|row| row[j].trim().to_string())
                .collect();
            labels.sort();
            labels.dedup();
            codes[fi] = labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
        }
    }

    let mut class_labels: Vec<String> = cells.iter().map(|row| row[target_idx].trim().to_string()).collect();
    class_labels.sort();
    class_labels.dedup();
    let class_code: BTreeMap<String, usize> =
        class_labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut target = Vec::with_capacity(cells.len());
    for (line, row) in cells.iter().enumerate() {
        if is_missing(&row[target_idx]) {
            return Err(Error::validation(
                Stage::Metafeatures,
                format!("{} row {}: missing class label", path.display(), line + 2),
            ));
        }
        target.push(class_code[row[target_idx].trim()]);
        let mut feats = Vec::with_capacity(feature_cols.len());
        for (fi, &j) in feature_cols.iter().enumerate() {
            let cell = row[j].trim();
            let v = if is_missing(cell) {
                f64::NAN
            } else if categorical[fi] {
                codes[fi][cell] as f64
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::validation(
                        Stage::Metafeatures,
                        format!("{} row {}: cannot parse '{}' as number", path.display(), line + 2, cell),
                    )
                })?
            };
            feats.push(v);
        }
        rows.push(feats);
    }

    let mut ds = TabularDataset::new(rows, target, categorical)?;
    ds.feature_names = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    Ok(ds)
}
