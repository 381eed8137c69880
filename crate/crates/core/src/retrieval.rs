//! Neighborhood search in meta-feature space and assembly of the surrogate
//! training set from the records of the retrieved datasets.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result, Stage};
use crate::kb::KnowledgeBase;
use crate::metafeatures::MetaFeatureVector;
use crate::space::HyperparameterSpace;

/// Per-dimension z-scoring statistics over a registry.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Z-score a vector with these statistics; zero-variance dimensions map
    /// to 0.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(d, &v)| if self.std[d] > 0.0 { (v - self.mean[d]) / self.std[d] } else { 0.0 })
            .collect()
    }
}

/// Nearest datasets to a query, ascending by distance, ties broken by id.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub entries: Vec<(String, f64)>,
    pub query: MetaFeatureVector,
    pub k_neighbors: usize,
}

impl Neighborhood {
    pub fn ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Surrogate training set: encoded configs with observed performances.
#[derive(Debug, Clone)]
pub struct MetaDataset {
    pub rows: Vec<(Vec<f64>, f64)>,
    pub space: HyperparameterSpace,
    pub source_dataset_ids: BTreeSet<String>,
}

impl MetaDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the best-performing row (ties broken by first occurrence).
    pub fn best_row(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, (_, perf)) in self.rows.iter().enumerate() {
            if best.is_none_or(|b| *perf > self.rows[b].1) {
                best = Some(i);
            }
        }
        best
    }
}

/// Z-score every registry vector using registry-wide statistics.
pub fn normalize(
    registry: &BTreeMap<String, MetaFeatureVector>,
) -> Result<(BTreeMap<String, Vec<f64>>, NormStats)> {
    if registry.is_empty() {
        return Err(Error::validation(Stage::Retrieval, "empty meta-feature registry"));
    }
    let dim = registry.values().next().expect("nonempty").len();
    let n = registry.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in registry.values() {
        for (d, &x) in v.values().iter().enumerate() {
            mean[d] += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for v in registry.values() {
        for (d, &x) in v.values().iter().enumerate() {
            std[d] += (x - mean[d]) * (x - mean[d]);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    let stats = NormStats { mean, std };
    let normalized = registry
        .iter()
        .map(|(id, v)| (id.clone(), stats.apply(v.values())))
        .collect();
    Ok((normalized, stats))
}

/// Top-k nearest registry entries to `query` by Euclidean distance in
/// z-scored space. The query is normalized with the registry's statistics.
/// `exclude_id` removes the target itself for leave-one-out evaluation.
pub fn knn(
    query: &MetaFeatureVector,
    normalized: &BTreeMap<String, Vec<f64>>,
    stats: &NormStats,
    k_neighbors: usize,
    exclude_id: Option<&str>,
) -> Result<Neighborhood> {
    if normalized.is_empty() {
        return Err(Error::validation(Stage::Retrieval, "empty meta-feature registry"));
    }
    if k_neighbors == 0 {
        return Err(Error::validation(Stage::Retrieval, "k_neighbors must be >= 1"));
    }
    let q = stats.apply(query.values());
    // BTreeMap iteration is id-ascending, and the sort below is stable, so
    // equal distances come out in lexicographic id order.
    let mut entries: Vec<(String, f64)> = normalized
        .iter()
        .filter(|(id, _)| exclude_id != Some(id.as_str()))
        .map(|(id, v)| {
            let d2: f64 = q.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            (id.clone(), d2.sqrt())
        })
        .collect();
    entries.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"));
    entries.truncate(k_neighbors);
    Ok(Neighborhood {
        entries,
        query: query.clone(),
        k_neighbors,
    })
}

/// Pool the records of the neighborhood's datasets into one encoded training
/// set, preserving KB record order.
pub fn build_meta_dataset(
    kb: &KnowledgeBase,
    neighborhood: &Neighborhood,
    algorithm_id: &str,
) -> Result<MetaDataset> {
    let space = kb
        .spaces
        .get(algorithm_id)
        .ok_or_else(|| Error::validation(Stage::Retrieval, format!("unknown algorithm id '{}'", algorithm_id)))?
        .clone();
    let ids = neighborhood.ids();
    let records = kb.query(algorithm_id, &ids)?;
    if records.is_empty() {
        return Err(Error::validation(
            Stage::Retrieval,
            format!(
                "no records for algorithm '{}' among the {} retrieved datasets; widen k_neighbors",
                algorithm_id,
                ids.len()
            ),
        ));
    }
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        rows.push((space.encode(&r.config)?, r.performance));
    }
    Ok(MetaDataset {
        rows,
        space,
        source_dataset_ids: ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metafeatures::N_META_FEATURES;
    use approx::assert_abs_diff_eq;

    fn mfv(fill: &[(usize, f64)]) -> MetaFeatureVector {
        let mut values = vec![0.0; N_META_FEATURES];
        values[0] = 100.0;
        values[1] = 4.0;
        values[2] = 2.0;
        values[5] = 1.0;
        for &(i, v) in fill {
            values[i] = v;
        }
        MetaFeatureVector::from_values(values).unwrap()
    }

    fn registry_of(vs: Vec<(&str, MetaFeatureVector)>) -> BTreeMap<String, MetaFeatureVector> {
        vs.into_iter().map(|(id, v)| (id.to_string(), v)).collect()
    }

    #[test]
    fn single_vector_normalizes_to_zero() {
        let reg = registry_of(vec![("a", mfv(&[]))]);
        let (norm, _) = normalize(&reg).unwrap();
        assert!(norm["a"].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_pair_normalizes_to_negatives() {
        let reg = registry_of(vec![("a", mfv(&[(6, -3.0)])), ("b", mfv(&[(6, 3.0)]))]);
        let (norm, _) = normalize(&reg).unwrap();
        for d in 0..N_META_FEATURES {
            assert_abs_diff_eq!(norm["a"][d], -norm["b"][d], epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_moments_are_standardized() {
        let mut entries = Vec::new();
        for i in 0..10 {
            entries.push((
                format!("d{}", i),
                mfv(&[(6, i as f64), (7, 1.0 + (i as f64) * 0.5)]),
            ));
        }
        let reg: BTreeMap<String, MetaFeatureVector> =
            entries.into_iter().collect();
        let (norm, _) = normalize(&reg).unwrap();
        for d in [6usize, 7] {
            let col: Vec<f64> = norm.values().map(|v| v[d]).collect();
            assert_abs_diff_eq!(crate::stats::mean(&col), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(crate::stats::std_dev(&col), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn self_retrieval_comes_first_at_distance_zero() {
        let reg = registry_of(vec![
            ("a", mfv(&[(6, 1.0)])),
            ("b", mfv(&[(6, 5.0)])),
            ("c", mfv(&[(6, 9.0)])),
        ]);
        let (norm, stats) = normalize(&reg).unwrap();
        let nbhd = knn(&reg["b"], &norm, &stats, 2, None).unwrap();
        assert_eq!(nbhd.entries[0].0, "b");
        assert_eq!(nbhd.entries[0].1, 0.0);
    }

    #[test]
    fn oversized_k_returns_everything_sorted() {
        let reg = registry_of(vec![
            ("a", mfv(&[(6, 1.0)])),
            ("b", mfv(&[(6, 2.0)])),
            ("c", mfv(&[(6, 8.0)])),
        ]);
        let (norm, stats) = normalize(&reg).unwrap();
        let nbhd = knn(&reg["a"], &norm, &stats, 10, None).unwrap();
        assert_eq!(nbhd.entries.len(), 3);
        assert!(nbhd.entries.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn exclusion_drops_the_target_id() {
        let reg = registry_of(vec![("a", mfv(&[(6, 1.0)])), ("b", mfv(&[(6, 5.0)]))]);
        let (norm, stats) = normalize(&reg).unwrap();
        let nbhd = knn(&reg["a"], &norm, &stats, 5, Some("a")).unwrap();
        assert_eq!(nbhd.entries.len(), 1);
        assert_eq!(nbhd.entries[0].0, "b");
    }

    #[test]
    fn distance_ties_break_lexicographically() {
        // "zzz" and "aaa" sit symmetrically around the query.
        let reg = registry_of(vec![
            ("zzz", mfv(&[(6, -2.0)])),
            ("aaa", mfv(&[(6, 2.0)])),
            ("mid", mfv(&[(6, 0.0)])),
        ]);
        let (norm, stats) = normalize(&reg).unwrap();
        let nbhd = knn(&reg["mid"], &norm, &stats, 3, Some("mid")).unwrap();
        assert_eq!(nbhd.entries[0].1, nbhd.entries[1].1);
        assert_eq!(nbhd.entries[0].0, "aaa");
        assert_eq!(nbhd.entries[1].0, "zzz");
    }

    #[test]
    fn affine_rescaling_preserves_neighbor_order() {
        let mut entries = Vec::new();
        for i in 0..8 {
            entries.push((format!("d{}", i), mfv(&[(6, (i as f64).sin() * 3.0), (7, 0.5 + i as f64)])));
        }
        let reg: BTreeMap<String, MetaFeatureVector> = entries.clone().into_iter().collect();
        let (norm, stats) = normalize(&reg).unwrap();
        let order: Vec<String> = knn(&reg["d3"], &norm, &stats, 8, None)
            .unwrap()
            .entries
            .into_iter()
            .map(|(id, _)| id)
            .collect();

        // Rescale dimension 6 by 100 and shift dimension 7 by 40 everywhere.
        let rescaled: BTreeMap<String, MetaFeatureVector> = entries
            .into_iter()
            .map(|(id, v)| {
                let mut values = v.values().to_vec();
                values[6] *= 100.0;
                values[7] += 40.0;
                (id, MetaFeatureVector::from_values(values).unwrap())
            })
            .collect();
        let (norm2, stats2) = normalize(&rescaled).unwrap();
        let order2: Vec<String> = knn(&rescaled["d3"], &norm2, &stats2, 8, None)
            .unwrap()
            .entries
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        assert_eq!(order, order2);
    }

    #[test]
    fn far_entry_never_displaces_top_neighbor() {
        let mut reg = registry_of(vec![
            ("a", mfv(&[(6, 1.0)])),
            ("b", mfv(&[(6, 1.2)])),
            ("c", mfv(&[(6, 2.0)])),
        ]);
        let (norm, stats) = normalize(&reg).unwrap();
        let top1 = knn(&reg["a"], &norm, &stats, 2, Some("a")).unwrap().entries[0].0.clone();
        reg.insert("far".to_string(), mfv(&[(6, 500.0)]));
        let (norm2, stats2) = normalize(&reg).unwrap();
        let top1b = knn(&reg["a"], &norm2, &stats2, 2, Some("a")).unwrap().entries[0].0.clone();
        assert_eq!(top1, top1b);
    }
}
