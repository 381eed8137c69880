//! The meta-knowledge base: evaluated pipeline records, the per-dataset
//! meta-feature registry, and per-algorithm space definitions.
//!
//! On disk a KB is a bundle directory: `records.jsonl` (one record per line),
//! `meta_features.csv` (schema header + one row per dataset), `spaces.json`
//! (algorithm id to ordered parameter specs), and an optional `bundle.json`
//! header carrying the metric name. Records are kept in file order and
//! duplicates are legitimate repeated observations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::metafeatures::{MetaFeatureVector, N_META_FEATURES, SCHEMA_NAMES, SCHEMA_VERSION};
use crate::space::{HyperparameterSpace, RawConfig};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const META_FEATURES_FILE: &str = "meta_features.csv";
pub const SPACES_FILE: &str = "spaces.json";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const BUNDLE_FORMAT: &str = "kb-bundle/v1";

/// One evaluated pipeline: which algorithm ran with which configuration on
/// which dataset, and the score it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbRecord {
    pub dataset_id: String,
    pub algorithm_id: String,
    pub config: RawConfig,
    pub performance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleHeader {
    format: String,
    metric: String,
}

/// Immutable after load; safe for concurrent reads.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub records: Vec<KbRecord>,
    pub meta_registry: BTreeMap<String, MetaFeatureVector>,
    pub spaces: BTreeMap<String, HyperparameterSpace>,
    /// Name of the performance metric; the pipeline treats scores opaquely as
    /// "higher is better".
    pub metric: String,
}

impl KnowledgeBase {
    pub fn new(
        records: Vec<KbRecord>,
        meta_registry: BTreeMap<String, MetaFeatureVector>,
        spaces: BTreeMap<String, HyperparameterSpace>,
        metric: &str,
    ) -> Result<Self> {
        let kb = KnowledgeBase {
            records,
            meta_registry,
            spaces,
            metric: metric.to_string(),
        };
        kb.validate()?;
        Ok(kb)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for space in self.spaces.values() {
            space.validate()?;
        }
        for (i, r) in self.records.iter().enumerate() {
            validate_record(r, &self.meta_registry, &self.spaces)
                .map_err(|msg| Error::validation(Stage::Kb, format!("record {}: {}", i, msg)))?;
        }
        Ok(())
    }

    /// Records for `algorithm_id` whose dataset is in `dataset_ids`, in
    /// stored order. An empty id set yields an empty list.
    pub fn query(&self, algorithm_id: &str, dataset_ids: &BTreeSet<String>) -> Result<Vec<&KbRecord>> {
        if !self.spaces.contains_key(algorithm_id) {
            return Err(Error::validation(
                Stage::Kb,
                format!("unknown algorithm id '{}'", algorithm_id),
            ));
        }
        Ok(self
            .records
            .iter()
            .filter(|r| r.algorithm_id == algorithm_id && dataset_ids.contains(&r.dataset_id))
            .collect())
    }

    /// Per-dataset record counts for one algorithm.
    pub fn counts_by_dataset(&self, algorithm_id: &str) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            if r.algorithm_id == algorithm_id {
                *counts.entry(r.dataset_id.clone()).or_insert(0) += 1;
            }
        }
        counts
    }
}

fn validate_record(
    r: &KbRecord,
    registry: &BTreeMap<String, MetaFeatureVector>,
    spaces: &BTreeMap<String, HyperparameterSpace>,
) -> std::result::Result<(), String> {
    if !r.performance.is_finite() || !(0.0..=1.0).contains(&r.performance) {
        return Err(format!("performance {} outside [0, 1]", r.performance));
    }
    if !registry.contains_key(&r.dataset_id) {
        return Err(format!("unknown dataset id '{}'", r.dataset_id));
    }
    let space = spaces
        .get(&r.algorithm_id)
        .ok_or_else(|| format!("unknown algorithm id '{}'", r.algorithm_id))?;
    space.check_config(&r.config)
}

/// Load and validate a KB bundle directory.
pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let spaces_path = path.join(SPACES_FILE);
    let spaces_text = std::fs::read_to_string(&spaces_path)
        .map_err(|e| Error::io(Stage::Kb, spaces_path.display().to_string(), e))?;
    let spaces: BTreeMap<String, HyperparameterSpace> = serde_json::from_str(&spaces_text)
        .map_err(|e| Error::validation(Stage::Kb, format!("{}: {}", spaces_path.display(), e)))?;
    for space in spaces.values() {
        space.validate()?;
    }

    let meta_registry = read_registry(&path.join(META_FEATURES_FILE))?;

    let metric = match std::fs::read_to_string(path.join(BUNDLE_FILE)) {
        Ok(text) => {
            let header: BundleHeader = serde_json::from_str(&text)
                .map_err(|e| Error::validation(Stage::Kb, format!("{}: {}", BUNDLE_FILE, e)))?;
            header.metric
        }
        Err(_) => "accuracy".to_string(),
    };

    let records_path = path.join(RECORDS_FILE);
    let file = std::fs::File::open(&records_path)
        .map_err(|e| Error::io(Stage::Kb, records_path.display().to_string(), e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(Stage::Kb, records_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: KbRecord = serde_json::from_str(&line).map_err(|e| {
            Error::validation(
                Stage::Kb,
                format!("{} line {}: {}", RECORDS_FILE, lineno + 1, e),
            )
        })?;
        validate_record(&record, &meta_registry, &spaces).map_err(|msg| {
            Error::validation(
                Stage::Kb,
                format!("{} line {}: {}", RECORDS_FILE, lineno + 1, msg),
            )
        })?;
        records.push(record);
    }

    Ok(KnowledgeBase {
        records,
        meta_registry,
        spaces,
        metric,
    })
}

/// Write a KB bundle directory (creating it if needed).
pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(Stage::Kb, path.display().to_string(), e))?;
    let io_err = |p: &Path, e: std::io::Error| Error::io(Stage::Kb, p.display().to_string(), e);

    let spaces_path = path.join(SPACES_FILE);
    let spaces_json = serde_json::to_string_pretty(&kb.spaces).expect("spaces serialize");
    std::fs::write(&spaces_path, spaces_json).map_err(|e| io_err(&spaces_path, e))?;

    let header = BundleHeader {
        format: BUNDLE_FORMAT.to_string(),
        metric: kb.metric.clone(),
    };
    let bundle_path = path.join(BUNDLE_FILE);
    std::fs::write(&bundle_path, serde_json::to_string_pretty(&header).expect("header serializes"))
        .map_err(|e| io_err(&bundle_path, e))?;

    let registry_path = path.join(META_FEATURES_FILE);
    let mut out = String::new();
    out.push_str(&format!("# schema: {}\n", SCHEMA_VERSION));
    out.push_str("dataset_id");
    for name in SCHEMA_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, mfv) in &kb.meta_registry {
        out.push_str(id);
        for v in mfv.values() {
            out.push(',');
            out.push_str(&format!("{}", v));
        }
        out.push('\n');
    }
    std::fs::write(&registry_path, out).map_err(|e| io_err(&registry_path, e))?;

    let records_path = path.join(RECORDS_FILE);
    let file = std::fs::File::create(&records_path).map_err(|e| io_err(&records_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in &kb.records {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        w.write_all(b"\n").map_err(|e| io_err(&records_path, e))?;
    }
    w.flush().map_err(|e| io_err(&records_path, e))?;
    Ok(())
}

fn read_registry(path: &Path) -> Result<BTreeMap<String, MetaFeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::validation(Stage::Kb, format!("{}: {}", path.display(), e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::validation(Stage::Kb, format!("{}: {}", path.display(), e)))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() != N_META_FEATURES + 1 || headers[0] != "dataset_id" {
        return Err(Error::validation(
            Stage::Kb,
            format!("{}: header must be dataset_id followed by the {} schema names", path.display(), N_META_FEATURES),
        ));
    }
    for (i, name) in SCHEMA_NAMES.iter().enumerate() {
        if headers[i + 1] != *name {
            return Err(Error::validation(
                Stage::Kb,
                format!("{}: column {} is '{}', expected '{}'", path.display(), i + 1, headers[i + 1], name),
            ));
        }
    }
    let mut registry = BTreeMap::new();
    for (lineno, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| Error::validation(Stage::Kb, format!("{} row {}: {}", path.display(), lineno + 2, e)))?;
        let id = record[0].to_string();
        let values: std::result::Result<Vec<f64>, _> = record.iter().skip(1).map(|c| c.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| {
            Error::validation(Stage::Kb, format!("{} row {}: {}", path.display(), lineno + 2, e))
        })?;
        let mfv = MetaFeatureVector::from_values(values)
            .map_err(|e| Error::validation(Stage::Kb, format!("{} row {}: {}", path.display(), lineno + 2, e)))?;
        if registry.insert(id.clone(), mfv).is_some() {
            return Err(Error::validation(
                Stage::Kb,
                format!("{} row {}: duplicate dataset id '{}'", path.display(), lineno + 2, id),
            ));
        }
    }
    Ok(registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamSpec, RawValue};

    fn tiny_space() -> HyperparameterSpace {
        HyperparameterSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0, false, 0.5)]).unwrap()
    }

    fn tiny_mfv() -> MetaFeatureVector {
        let mut values = vec![0.0; N_META_FEATURES];
        values[0] = 100.0;
        values[1] = 4.0;
        values[2] = 2.0;
        values[3] = (100.0f64 / 4.0).ln();
        values[5] = 1.0;
        MetaFeatureVector::from_values(values).unwrap()
    }

    fn singleton_kb() -> KnowledgeBase {
        let mut registry = BTreeMap::new();
        registry.insert("d1".to_string(), tiny_mfv());
        let mut spaces = BTreeMap::new();
        spaces.insert("alg1".to_string(), tiny_space());
        let record = KbRecord {
            dataset_id: "d1".into(),
            algorithm_id: "alg1".into(),
            config: [("x".to_string(), RawValue::Number(0.5))].into_iter().collect(),
            performance: 0.9,
        };
        KnowledgeBase::new(vec![record], registry, spaces, "accuracy").unwrap()
    }

    #[test]
    fn empty_bundle_round_trips_with_zero_counts() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::new(Vec::new(), BTreeMap::new(), BTreeMap::new(), "accuracy").unwrap();
        save_kb(&kb, dir.path()).unwrap();
        let loaded = load_kb(dir.path()).unwrap();
        assert_eq!(loaded.len(), 0);
        assert!(loaded.meta_registry.is_empty());
        assert!(loaded.spaces.is_empty());
    }

    #[test]
    fn singleton_round_trip_is_field_exact() {
        let dir = tempfile::tempdir().unwrap();
        let kb = singleton_kb();
        save_kb(&kb, dir.path()).unwrap();
        let loaded = load_kb(dir.path()).unwrap();
        assert_eq!(kb, loaded);
        assert_eq!(loaded.len(), 1);
    }

    #[test]
    fn missing_bundle_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_kb(&dir.path().join("absent")).unwrap_err();
        assert!(err.is_validation());
        assert_eq!(err.stage(), Stage::Kb);
    }

    #[test]
    fn bad_records_name_the_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let kb = singleton_kb();
        save_kb(&kb, dir.path()).unwrap();
        // Append a record with an unknown dataset id.
        let extra = r#"{"dataset_id":"ghost","algorithm_id":"alg1","config":{"x":0.5},"performance":0.5}"#;
        let records = dir.path().join(RECORDS_FILE);
        let mut text = std::fs::read_to_string(&records).unwrap();
        text.push_str(extra);
        text.push('\n');
        std::fs::write(&records, text).unwrap();
        let err = load_kb(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "message: {}", msg);
        assert!(msg.contains("ghost"), "message: {}", msg);
    }

    #[test]
    fn out_of_range_performance_is_rejected() {
        let mut kb = singleton_kb();
        kb.records[0].performance = 1.5;
        assert!(kb.validate().is_err());
    }

    #[test]
    fn config_key_mismatch_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        save_kb(&singleton_kb(), dir.path()).unwrap();
        let records = dir.path().join(RECORDS_FILE);
        let bad = r#"{"dataset_id":"d1","algorithm_id":"alg1","config":{"x":0.5,"y":1.0},"performance":0.5}"#;
        std::fs::write(&records, format!("{}\n", bad)).unwrap();
        let err = load_kb(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown parameters"), "message: {}", err);
    }

    #[test]
    fn query_filters_by_algorithm_and_dataset_set() {
        let kb = singleton_kb();
        let empty: BTreeSet<String> = BTreeSet::new();
        assert!(kb.query("alg1", &empty).unwrap().is_empty());
        let d1: BTreeSet<String> = ["d1".to_string()].into_iter().collect();
        assert_eq!(kb.query("alg1", &d1).unwrap().len(), 1);
        assert!(kb.query("missing", &d1).is_err());
    }
}
