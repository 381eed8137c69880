//! Synthetic performance surfaces with analytically known per-parameter
//! importances, and a desk-scale knowledge-base generator whose meta-feature
//! vectors cluster so retrieval finds structurally similar surfaces.
//!
//! A surface is a weighted sum of bounded per-parameter shape functions
//! (quadratic bump, logistic ramp, step, or null) over normalized coordinates
//! plus optional product-form pairwise interactions, affinely rescaled to
//! [0, 1]. Ground truth (variance contributions, optimum, 50%-of-peak good
//! regions) comes from closed forms where available and deterministic
//! quadrature elsewhere.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design;
use crate::error::{Error, Result, Stage};
use crate::kb::{KbRecord, KnowledgeBase};
use crate::metafeatures::{MetaFeatureVector, N_META_FEATURES};
use crate::optimizer::Objective;
use crate::seeding;
use crate::space::{HyperparameterSpace, ParamSpec, RawConfig};

/// Bounded shape function over a normalized coordinate u in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ShapeFn {
    Null,
    /// 1 - ((u - center)/width)^2, peaked at `center`.
    QuadBump { center: f64, width: f64 },
    /// Logistic 1/(1 + exp(-steepness (u - center))).
    LogisticRamp { center: f64, steepness: f64 },
    /// Indicator of u >= threshold.
    Step { threshold: f64 },
}

impl ShapeFn {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ShapeFn::Null => 0.0,
            ShapeFn::QuadBump { center, width } => 1.0 - ((u - center) / width).powi(2),
            ShapeFn::LogisticRamp { center, steepness } => 1.0 / (1.0 + (-steepness * (u - center)).exp()),
            ShapeFn::Step { threshold } => f64::from(u >= *threshold),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ShapeFn::Null)
    }

    /// Mean under u ~ U[0, 1]; closed form except for the ramp (Simpson).
    pub fn mean(&self) -> f64 {
        match self {
            ShapeFn::Null => 0.0,
            ShapeFn::QuadBump { center, width } => 1.0 - moment2(*center) / (width * width),
            ShapeFn::LogisticRamp { .. } => simpson(|u| self.eval(u), 2000),
            ShapeFn::Step { threshold } => 1.0 - threshold,
        }
    }

    /// Variance under u ~ U[0, 1].
    pub fn variance(&self) -> f64 {
        match self {
            ShapeFn::Null => 0.0,
            ShapeFn::QuadBump { center, width } => {
                let a = 1.0 / (width * width);
                let m2 = moment2(*center);
                let m4 = moment4(*center);
                a * a * (m4 - m2 * m2)
            }
            ShapeFn::LogisticRamp { .. } => {
                let mean = self.mean();
                simpson(|u| (self.eval(u) - mean).powi(2), 2000)
            }
            ShapeFn::Step { threshold } => threshold * (1.0 - threshold),
        }
    }

    /// Peak value over [0, 1].
    pub fn peak(&self) -> f64 {
        match self {
            ShapeFn::Null => 0.0,
            ShapeFn::QuadBump { center, width } => {
                let c = center.clamp(0.0, 1.0);
                1.0 - ((c - center) / width).powi(2)
            }
            ShapeFn::LogisticRamp { .. } => self.eval(1.0),
            ShapeFn::Step { .. } => 1.0,
        }
    }

    pub fn argmax(&self) -> f64 {
        match self {
            ShapeFn::Null => 0.5,
            ShapeFn::QuadBump { center, .. } => center.clamp(0.0, 1.0),
            ShapeFn::LogisticRamp { .. } => 1.0,
            ShapeFn::Step { threshold } => (threshold + 1.0) / 2.0,
        }
    }

    /// The 50%-of-peak superlevel set {u : g(u) >= peak/2}, intersected with
    /// [0, 1]. None for null shapes.
    pub fn good_region(&self) -> Option<(f64, f64)> {
        match self {
            ShapeFn::Null => None,
            ShapeFn::QuadBump { center, width } => {
                let half = self.peak() / 2.0;
                // 1 - ((u-c)/w)^2 >= half
                let r = (1.0 - half).max(0.0).sqrt() * width;
                Some(((center - r).max(0.0), (center + r).min(1.0)))
            }
            ShapeFn::LogisticRamp { center, steepness } => {
                let half = self.peak() / 2.0;
                // g(u) = half at u = center + ln(half/(1-half))/steepness.
                let u = center + (half / (1.0 - half)).ln() / steepness;
                Some((u.clamp(0.0, 1.0), 1.0))
            }
            ShapeFn::Step { threshold } => Some((*threshold, 1.0)),
        }
    }
}

fn moment2(c: f64) -> f64 {
    ((1.0 - c).powi(3) + c.powi(3)) / 3.0
}

fn moment4(c: f64) -> f64 {
    ((1.0 - c).powi(5) + c.powi(5)) / 5.0
}

fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0
}

/// Product-form interaction between two parameters: weight * h(u_i) * h(u_j)
/// with h(u) = 2u - 1 (centered, so additive surfaces stay additive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Variance of h(U) = 2U - 1 under the uniform measure.
const VAR_H: f64 = 1.0 / 3.0;

/// A synthetic performance surface over a hyperparameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSurface {
    pub space: HyperparameterSpace,
    pub shapes: Vec<ShapeFn>,
    pub weights: Vec<f64>,
    pub pairs: Vec<PairTerm>,
    pub noise_sigma: f64,
    pub raw_min: f64,
    pub raw_max: f64,
}

impl SyntheticSurface {
    /// Raw (pre-squash) value at unit coordinates.
    pub fn raw_eval(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((shape, &w), &ui) in self.shapes.iter().zip(&self.weights).zip(u) {
            if !shape.is_null() {
                s += w * shape.eval(ui);
            }
        }
        for pair in &self.pairs {
            s += pair.weight * (2.0 * u[pair.i] - 1.0) * (2.0 * u[pair.j] - 1.0);
        }
        s
    }

    /// Noise-free squashed value in [0, 1] at unit coordinates.
    pub fn eval_unit(&self, u: &[f64]) -> f64 {
        let span = self.raw_max - self.raw_min;
        if span <= 0.0 {
            return 0.5;
        }
        ((self.raw_eval(u) - self.raw_min) / span).clamp(0.0, 1.0)
    }

    /// Noise-free squashed value at a raw configuration.
    pub fn eval_config(&self, config: &RawConfig) -> Result<f64> {
        let u = self.space.unit_from_config(config)?;
        Ok(self.eval_unit(&u))
    }

    fn squash(&self, raw: f64) -> f64 {
        let span = self.raw_max - self.raw_min;
        if span <= 0.0 {
            return 0.5;
        }
        ((raw - self.raw_min) / span).clamp(0.0, 1.0)
    }
}

impl crate::attribution::ValueModel<f64> for SyntheticSurface {
    /// Evaluate at an encoded configuration (noise-free), so surfaces can
    /// back coalition games directly.
    fn predict_row(&self, x: &[f64]) -> f64 {
        let bounds = self.space.encoded_bounds();
        let u: Vec<f64> = x
            .iter()
            .zip(&bounds)
            .map(|(&e, &(lo, hi))| if hi > lo { (e - lo) / (hi - lo) } else { 0.0 })
            .collect();
        self.eval_unit(&u)
    }
}

/// Analytic ground truth for one surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-parameter variance contribution under uniform sampling, in
    /// squashed units; exactly 0 for null-term parameters. Interaction
    /// variance is split evenly between the two parameters of the pair.
    pub variance_contributions: Vec<f64>,
    pub optimum_config: RawConfig,
    pub optimum_value: f64,
    /// Raw-unit 50%-of-peak region per parameter name (relevant params only).
    pub good_regions: BTreeMap<String, (f64, f64)>,
}

impl GroundTruth {
    /// Parameter indices with positive variance contribution, descending.
    pub fn relevant_ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.variance_contributions.len())
            .filter(|&i| self.variance_contributions[i] > 0.0)
            .collect();
        idx.sort_by(|&a, &b| {
            self.variance_contributions[b]
                .partial_cmp(&self.variance_contributions[a])
                .expect("finite")
        });
        idx
    }
}

const RANGE_SCAN_POINTS: usize = 100_000;

fn unit_space(k: usize) -> HyperparameterSpace {
    HyperparameterSpace::new(
        (0..k)
            .map(|i| ParamSpec::continuous(&format!("p{}", i), 0.0, 1.0, false, 0.5))
            .collect(),
    )
    .expect("unit cube space is valid")
}

/// Sample a non-null shape for one relevant parameter.
fn sample_shape(rng: &mut impl Rng) -> ShapeFn {
    match rng.random_range(0..3u32) {
        0 => ShapeFn::QuadBump {
            center: 0.25 + 0.5 * rng.random::<f64>(),
            width: 0.2 + 0.2 * rng.random::<f64>(),
        },
        1 => ShapeFn::LogisticRamp {
            center: 0.3 + 0.4 * rng.random::<f64>(),
            steepness: 8.0 + 6.0 * rng.random::<f64>(),
        },
        _ => ShapeFn::Step {
            threshold: 0.3 + 0.4 * rng.random::<f64>(),
        },
    }
}

fn finish_surface(
    space: HyperparameterSpace,
    shapes: Vec<ShapeFn>,
    weights: Vec<f64>,
    pairs: Vec<PairTerm>,
    noise_sigma: f64,
) -> (SyntheticSurface, GroundTruth) {
    let k = space.len();
    let mut surface = SyntheticSurface {
        space,
        shapes,
        weights,
        pairs,
        noise_sigma,
        raw_min: 0.0,
        raw_max: 1.0,
    };

    // Quasi-random scan bounds the affine rescaling.
    let mut raw_min = f64::INFINITY;
    let mut raw_max = f64::NEG_INFINITY;
    for i in 0..RANGE_SCAN_POINTS {
        let u: Vec<f64> = design::halton_point(1 + i as u64, k);
        let v = surface.raw_eval(&u);
        raw_min = raw_min.min(v);
        raw_max = raw_max.max(v);
    }
    // Include the separable candidate optimum in the scan.
    let sep: Vec<f64> = surface.shapes.iter().map(|s| s.argmax()).collect();
    let v = surface.raw_eval(&sep);
    raw_min = raw_min.min(v);
    raw_max = raw_max.max(v);
    surface.raw_min = raw_min;
    surface.raw_max = raw_max;

    let span = (raw_max - raw_min).max(f64::MIN_POSITIVE);
    let span2 = span * span;

    let mut contributions = vec![0.0; k];
    for i in 0..k {
        contributions[i] += surface.weights[i] * surface.weights[i] * surface.shapes[i].variance();
    }
    for pair in &surface.pairs {
        let v = pair.weight * pair.weight * VAR_H * VAR_H;
        contributions[pair.i] += v / 2.0;
        contributions[pair.j] += v / 2.0;
    }
    for c in &mut contributions {
        *c /= span2;
    }

    // Optimum: separable argmax, refined by coordinate ascent when pairwise
    // terms couple the dimensions.
    let mut u_opt = sep;
    if !surface.pairs.is_empty() {
        let grid = 201usize;
        for _ in 0..8 {
            for d in 0..k {
                let mut best_u = u_opt[d];
                let mut best_v = surface.raw_eval(&u_opt);
                for g in 0..grid {
                    let cand = g as f64 / (grid - 1) as f64;
                    let mut probe = u_opt.clone();
                    probe[d] = cand;
                    let v = surface.raw_eval(&probe);
                    if v > best_v {
                        best_v = v;
                        best_u = cand;
                    }
                }
                u_opt[d] = best_u;
            }
        }
    }
    let optimum_value = surface.squash(surface.raw_eval(&u_opt));
    let optimum_config = surface.space.config_from_unit(&u_opt).expect("dims match");

    let mut good_regions = BTreeMap::new();
    for (i, shape) in surface.shapes.iter().enumerate() {
        if let Some((lo_u, hi_u)) = shape.good_region() {
            let (lo_b, hi_b) = surface.space.params[i].numeric_bounds();
            good_regions.insert(
                surface.space.params[i].name.clone(),
                (lo_b + lo_u * (hi_b - lo_b), lo_b + hi_u * (hi_b - lo_b)),
            );
        }
    }

    let truth = GroundTruth {
        variance_contributions: contributions,
        optimum_config,
        optimum_value,
        good_regions,
    };
    (surface, truth)
}

/// Build a random surface: `n_relevant` parameters get non-null shapes with
/// geometrically decaying weights (1, 0.5, 0.25, ...); `interaction_pairs`
/// product terms couple relevant parameters. Deterministic per seed.
pub fn make_surface(
    k: usize,
    n_relevant: usize,
    interaction_pairs: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SyntheticSurface, GroundTruth)> {
    validate_counts(k, n_relevant, interaction_pairs)?;
    let mut rng = seeding::stream(seed, "surface", 0);
    let mut dims: Vec<usize> = (0..k).collect();
    for i in 0..n_relevant {
        let j = rng.random_range(i..k);
        dims.swap(i, j);
    }
    let relevant = &dims[..n_relevant];

    let mut shapes = vec![ShapeFn::Null; k];
    let mut weights = vec![0.0; k];
    for (rank, &d) in relevant.iter().enumerate() {
        shapes[d] = sample_shape(&mut rng);
        weights[d] = 0.5f64.powi(rank as i32);
    }

    let mut all_pairs: Vec<(usize, usize)> = Vec::new();
    for a in 0..n_relevant {
        for b in (a + 1)..n_relevant {
            all_pairs.push((relevant[a], relevant[b]));
        }
    }
    for i in 0..interaction_pairs.min(all_pairs.len()) {
        let j = rng.random_range(i..all_pairs.len());
        all_pairs.swap(i, j);
    }
    let pairs: Vec<PairTerm> = all_pairs[..interaction_pairs]
        .iter()
        .enumerate()
        .map(|(t, &(i, j))| PairTerm {
            i,
            j,
            weight: 0.3 * 0.6f64.powi(t as i32),
        })
        .collect();

    Ok(finish_surface(unit_space(k), shapes, weights, pairs, noise_sigma))
}

/// Bump-only surface (every relevant shape a quadratic bump): closed-form
/// moments throughout.
pub fn make_quadratic_surface(
    k: usize,
    n_relevant: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SyntheticSurface, GroundTruth)> {
    validate_counts(k, n_relevant, 0)?;
    let mut rng = seeding::stream(seed, "quad-surface", 0);
    let mut shapes = vec![ShapeFn::Null; k];
    let mut weights = vec![0.0; k];
    for rank in 0..n_relevant {
        shapes[rank] = ShapeFn::QuadBump {
            center: 0.25 + 0.5 * rng.random::<f64>(),
            width: 0.2 + 0.2 * rng.random::<f64>(),
        };
        weights[rank] = 0.5f64.powi(rank as i32);
    }
    Ok(finish_surface(unit_space(k), shapes, weights, Vec::new(), noise_sigma))
}

fn validate_counts(k: usize, n_relevant: usize, interaction_pairs: usize) -> Result<()> {
    if k == 0 || n_relevant == 0 || n_relevant > k {
        return Err(Error::validation(
            Stage::Benchgen,
            format!("need 1 <= n_relevant <= k, got n_relevant={} k={}", n_relevant, k),
        ));
    }
    let max_pairs = n_relevant * (n_relevant - 1) / 2;
    if interaction_pairs > max_pairs {
        return Err(Error::validation(
            Stage::Benchgen,
            format!("interaction_pairs={} exceeds C({}, 2)={}", interaction_pairs, n_relevant, max_pairs),
        ));
    }
    Ok(())
}

/// Noisy objective over a synthetic surface; deterministic given its seed.
pub struct SurfaceObjective {
    surface: SyntheticSurface,
    noise_sigma: f64,
    rng: rand_chacha::ChaCha8Rng,
    evaluations: usize,
}

impl SurfaceObjective {
    pub fn new(surface: SyntheticSurface, noise_sigma: f64, seed: u64) -> Self {
        SurfaceObjective {
            surface,
            noise_sigma,
            rng: seeding::stream(seed, "surface-objective", 0),
            evaluations: 0,
        }
    }
}

impl Objective for SurfaceObjective {
    fn evaluate(&mut self, config: &RawConfig) -> Result<f64> {
        self.evaluations += 1;
        let clean = self.surface.eval_config(config)?;
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("valid sigma");
            Ok((clean + normal.sample(&mut self.rng)).clamp(0.0, 1.0))
        } else {
            Ok(clean)
        }
    }

    fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Configuration of the synthetic KB generator.
#[derive(Debug, Clone, Serialize)]
pub struct KbGenConfig {
    pub n_datasets: usize,
    pub configs_per_dataset: usize,
    pub k: usize,
    pub n_relevant: usize,
    pub interaction_pairs: usize,
    pub noise_sigma: f64,
    pub n_clusters: usize,
    pub algorithm_id: String,
    pub seed: u64,
}

impl Default for KbGenConfig {
    fn default() -> Self {
        KbGenConfig {
            n_datasets: 10,
            configs_per_dataset: 400,
            k: 8,
            n_relevant: 3,
            interaction_pairs: 0,
            noise_sigma: 0.01,
            n_clusters: 2,
            algorithm_id: "synth_model".to_string(),
            seed: 42,
        }
    }
}

/// Ground truth for one generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub dataset_id: String,
    pub cluster: usize,
    pub surface: SyntheticSurface,
    pub truth: GroundTruth,
}

/// Per-entry legal ranges for synthesized meta-feature vectors.
fn meta_feature_ranges() -> [(f64, f64); N_META_FEATURES] {
    [
        (100.0, 50_000.0),  // n_instances
        (5.0, 200.0),       // n_features
        (2.0, 10.0),        // n_classes
        (0.0, 9.0),         // log_instances_per_feature (derived)
        (0.1, 2.3),         // class_entropy
        (1.0, 20.0),        // class_imbalance_ratio
        (-5.0, 5.0),        // mean_of_feature_means
        (0.1, 10.0),        // mean_of_feature_stds
        (-2.0, 2.0),        // mean_feature_skewness
        (-1.0, 5.0),        // mean_feature_kurtosis
        (0.5, 2.3),         // mean_feature_entropy
        (0.0, 0.5),         // mean_mutual_information_with_target
        (0.0, 1.0),         // max_mutual_information_with_target
        (0.0, 1.0),         // fraction_categorical
        (0.0, 0.2),         // fraction_missing
        (0.3, 1.0),         // landmark_1nn_accuracy
        (0.3, 1.0),         // landmark_stump_accuracy
        (0.1, 1.0),         // landmark_majority_accuracy
    ]
}

/// Synthesize a clustered meta-feature vector: cluster centroid plus small
/// per-dataset noise, clipped into legal ranges.
fn synth_meta_vector(centroid: &[f64], rng: &mut impl Rng) -> MetaFeatureVector {
    let ranges = meta_feature_ranges();
    let mut values: Vec<f64> = centroid
        .iter()
        .enumerate()
        .map(|(d, &c)| {
            let (lo, hi) = ranges[d];
            let noise = (rng.random::<f64>() - 0.5) * 0.03 * (hi - lo);
            (c + noise).clamp(lo, hi)
        })
        .collect();
    // Keep the derived entry consistent with instances/features.
    values[3] = (values[0] / values[1]).ln();
    // max MI must dominate mean MI.
    values[12] = values[12].max(values[11]);
    MetaFeatureVector::from_values(values).expect("synthesized vector is legal")
}

fn cluster_centroid(family_rng: &mut impl Rng, cluster: usize) -> Vec<f64> {
    let ranges = meta_feature_ranges();
    ranges
        .iter()
        .enumerate()
        .map(|(d, &(lo, hi))| {
            let base = lo + (0.3 + 0.4 * family_rng.random::<f64>()) * (hi - lo);
            // Well-separated clusters: alternate large offsets per cluster.
            let direction = if (d + cluster) % 2 == 0 { 1.0 } else { -1.0 };
            let offset = direction * 0.35 * (hi - lo) * cluster as f64;
            (base + offset).clamp(lo, hi)
        })
        .collect()
}

/// Generate a synthetic KB: datasets grouped into clusters that share their
/// relevance structure (which parameters matter, with weights perturbed per
/// dataset), meta-feature vectors clustered accordingly, configurations
/// Latin-hypercube sampled, performances noisy surface values clipped to
/// [0, 1].
pub fn generate_kb(cfg: &KbGenConfig) -> Result<(KnowledgeBase, Vec<DatasetTruth>)> {
    if cfg.n_datasets < 2 {
        return Err(Error::validation(Stage::Benchgen, "need at least 2 datasets"));
    }
    if cfg.n_clusters == 0 || cfg.n_clusters > cfg.n_datasets {
        return Err(Error::validation(Stage::Benchgen, "need 1 <= clusters <= datasets"));
    }
    validate_counts(cfg.k, cfg.n_relevant, cfg.interaction_pairs)?;

    let space = unit_space(cfg.k);

    // Per-cluster relevance structure: disjoint blocks of relevant dims when
    // they fit, rotated otherwise.
    struct Cluster {
        shapes: Vec<ShapeFn>,
        weights: Vec<f64>,
        pairs: Vec<PairTerm>,
        centroid: Vec<f64>,
    }
    let mut family_rng = seeding::stream(cfg.seed, "kb-family", 0);
    let mut clusters = Vec::with_capacity(cfg.n_clusters);
    for c in 0..cfg.n_clusters {
        let mut shapes = vec![ShapeFn::Null; cfg.k];
        let mut weights = vec![0.0; cfg.k];
        let mut relevant = Vec::with_capacity(cfg.n_relevant);
        for rank in 0..cfg.n_relevant {
            let d = (c * cfg.n_relevant + rank) % cfg.k;
            shapes[d] = sample_shape(&mut family_rng);
            weights[d] = 0.5f64.powi(rank as i32);
            relevant.push(d);
        }
        let mut pairs = Vec::new();
        'outer: for a in 0..cfg.n_relevant {
            for b in (a + 1)..cfg.n_relevant {
                if pairs.len() >= cfg.interaction_pairs {
                    break 'outer;
                }
                pairs.push(PairTerm {
                    i: relevant[a],
                    j: relevant[b],
                    weight: 0.3 * 0.6f64.powi(pairs.len() as i32),
                });
            }
        }
        let centroid = cluster_centroid(&mut family_rng, c);
        clusters.push(Cluster {
            shapes,
            weights,
            pairs,
            centroid,
        });
    }

    let mut records = Vec::with_capacity(cfg.n_datasets * cfg.configs_per_dataset);
    let mut registry = BTreeMap::new();
    let mut truths = Vec::with_capacity(cfg.n_datasets);
    for d in 0..cfg.n_datasets {
        let dataset_id = format!("d{:02}", d);
        let cluster_idx = d * cfg.n_clusters / cfg.n_datasets;
        let cluster = &clusters[cluster_idx];
        let mut ds_rng = seeding::stream(cfg.seed, "kb-dataset", d as u64);

        // Weights perturbed within the cluster; shapes shared.
        let weights: Vec<f64> = cluster
            .weights
            .iter()
            .map(|&w| if w > 0.0 { w * (0.9 + 0.2 * ds_rng.random::<f64>()) } else { 0.0 })
            .collect();
        let pairs: Vec<PairTerm> = cluster
            .pairs
            .iter()
            .map(|p| PairTerm {
                i: p.i,
                j: p.j,
                weight: p.weight * (0.9 + 0.2 * ds_rng.random::<f64>()),
            })
            .collect();
        let (surface, truth) =
            finish_surface(space.clone(), cluster.shapes.clone(), weights, pairs, cfg.noise_sigma);

        registry.insert(dataset_id.clone(), synth_meta_vector(&cluster.centroid, &mut ds_rng));

        let mut lhs_rng = seeding::stream(cfg.seed, "kb-configs", d as u64);
        let unit_points: Vec<Vec<f64>> =
            design::latin_hypercube(cfg.configs_per_dataset, cfg.k, &mut lhs_rng);
        let normal = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        for u in unit_points {
            let config = space.config_from_unit(&u)?;
            let clean = surface.eval_unit(&u);
            let noisy = if cfg.noise_sigma > 0.0 {
                (clean + normal.sample(&mut ds_rng)).clamp(0.0, 1.0)
            } else {
                clean
            };
            records.push(KbRecord {
                dataset_id: dataset_id.clone(),
                algorithm_id: cfg.algorithm_id.clone(),
                config,
                performance: noisy,
            });
        }

        truths.push(DatasetTruth {
            dataset_id,
            cluster: cluster_idx,
            surface,
            truth,
        });
    }

    let mut spaces = BTreeMap::new();
    spaces.insert(cfg.algorithm_id.clone(), space);
    let kb = KnowledgeBase::new(records, registry, spaces, "accuracy")?;
    Ok((kb, truths))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub schema_version: String,
    pub datasets: BTreeMap<String, DatasetTruth>,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GROUND_TRUTH_SCHEMA: &str = "ground-truth/v1";

/// Write ground truth next to a KB bundle (test consumption only).
pub fn save_ground_truth(truths: &[DatasetTruth], dir: &Path) -> Result<()> {
    let file = GroundTruthFile {
        schema_version: GROUND_TRUTH_SCHEMA.to_string(),
        datasets: truths.iter().map(|t| (t.dataset_id.clone(), t.clone())).collect(),
    };
    crate::jsonfmt::write_canonical(&file, &dir.join(GROUND_TRUTH_FILE))
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(Stage::Benchgen, path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::validation(Stage::Benchgen, format!("{}: {}", path.display(), e)))
}
