//! End-to-end orchestration: extract or look up the target's meta-features,
//! retrieve its neighborhood, pool the records into a surrogate training set,
//! attribute performance to hyperparameters, build the tuning report, and
//! (for comparisons) run vanilla and guided optimization with paired seeds.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::attribution::{attribution_to_json, global_attribution, AttributionResult, InteractionMatrix};
use crate::benchgen::SurfaceObjective;
use crate::error::{Error, Result, Stage};
use crate::insights::{build_report, RangeCurve, TuningReport};
use crate::jsonfmt;
use crate::kb::KnowledgeBase;
use crate::metafeatures::MetaFeatureVector;
use crate::optimizer::{bo_run, guided_bo_run, write_trace_csv, BoConfig, BoTrace, FnObjective, Objective};
use crate::retrieval::{build_meta_dataset, knn, normalize, Neighborhood};
use crate::seeding;
use crate::space::RawConfig;
use crate::surrogate::SurrogateModel;

pub const REPORT_SCHEMA: &str = "tuning-report/v1";
pub const ATTRIBUTION_SCHEMA: &str = "attribution/v1";
pub const SUMMARY_SCHEMA: &str = "compare-summary/v1";

/// Knobs of the recommendation pipeline, all seeded and defaulted.
#[derive(Debug, Clone, Serialize)]
pub struct RecommendParams {
    pub algorithm_id: String,
    pub k_neighbors: usize,
    pub top_m: usize,
    pub n_trees: usize,
    pub seed: u64,
    pub window_fraction: f64,
    pub tau: f64,
    pub background_size: usize,
    pub explain_size: usize,
}

impl RecommendParams {
    pub fn new(algorithm_id: &str) -> Self {
        RecommendParams {
            algorithm_id: algorithm_id.to_string(),
            k_neighbors: 5,
            top_m: 3,
            n_trees: 100,
            seed: 42,
            window_fraction: 0.05,
            tau: 0.5,
            background_size: 256,
            explain_size: 512,
        }
    }
}

/// Everything the recommendation pipeline produces.
pub struct RecommendOutcome {
    pub report: TuningReport,
    pub attribution: AttributionResult,
    pub interactions: InteractionMatrix,
    pub neighborhood: Neighborhood,
    pub surrogate: SurrogateModel,
    /// Best-performing retrieved configuration (warm start for guided BO).
    pub warm_start: RawConfig,
    pub range_curves: BTreeMap<String, RangeCurve>,
}

/// Run the recommendation pipeline for a target described by its
/// meta-feature vector. `exclude_id` enables leave-one-out evaluation when
/// the target itself is part of the registry.
pub fn recommend(
    kb: &KnowledgeBase,
    query: &MetaFeatureVector,
    exclude_id: Option<&str>,
    params: &RecommendParams,
) -> Result<RecommendOutcome> {
    let space = kb
        .spaces
        .get(&params.algorithm_id)
        .ok_or_else(|| Error::validation(Stage::Kb, format!("unknown algorithm id '{}'", params.algorithm_id)))?
        .clone();

    let (normalized, stats) = normalize(&kb.meta_registry)?;
    let neighborhood = knn(query, &normalized, &stats, params.k_neighbors, exclude_id)?;
    let meta_dataset = build_meta_dataset(kb, &neighborhood, &params.algorithm_id)?;

    let surrogate = crate::surrogate::fit(&meta_dataset, params.seed, params.n_trees)?;

    let background = subsample_rows(&meta_dataset.rows, params.background_size, params.seed, "background");
    let explain = subsample_rows(&meta_dataset.rows, params.explain_size, params.seed, "explain");
    let (attribution, interactions) =
        global_attribution(&surrogate, &space, &background, &explain, params.seed)?;

    let (mut report, range_curves) = build_report(
        &attribution,
        &interactions,
        &space,
        params.top_m,
        None,
        params.window_fraction,
        params.tau,
    )?;
    report.algorithm = params.algorithm_id.clone();
    report.surrogate_r2 = surrogate.holdout_r2;

    let best = meta_dataset.best_row().expect("meta-dataset nonempty");
    let warm_start = space.decode(&meta_dataset.rows[best].0)?;

    Ok(RecommendOutcome {
        report,
        attribution,
        interactions,
        neighborhood,
        surrogate,
        warm_start,
        range_curves,
    })
}

/// Order-preserving deterministic subsample of at most `limit` rows.
fn subsample_rows(rows: &[(Vec<f64>, f64)], limit: usize, seed: u64, tag: &str) -> Vec<Vec<f64>> {
    if rows.len() <= limit {
        return rows.iter().map(|(x, _)| x.clone()).collect();
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let mut rng = seeding::stream(seed, tag, 0);
    idx.shuffle(&mut rng);
    let mut chosen: Vec<usize> = idx[..limit].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| rows[i].0.clone()).collect()
}

/// Flag provenance attached to every output file.
fn provenance(params: &RecommendParams, neighborhood: &Neighborhood) -> serde_json::Value {
    serde_json::json!({
        "k_neighbors": params.k_neighbors,
        "top_m": params.top_m,
        "n_trees": params.n_trees,
        "seed": params.seed,
        "window_fraction": params.window_fraction,
        "tau": params.tau,
        "background_size": params.background_size,
        "explain_size": params.explain_size,
        "neighbors": neighborhood.entries.iter().map(|(id, d)| {
            serde_json::json!({"dataset_id": id, "distance": d})
        }).collect::<Vec<_>>(),
    })
}

/// Write report JSON, attribution JSON, and one plot-ready CSV per selected
/// parameter (columns: value, phi, smoothed_phi).
pub fn write_recommend_outputs(
    outcome: &RecommendOutcome,
    params: &RecommendParams,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(Stage::Cli, out_dir.display().to_string(), e))?;

    let mut report_json = serde_json::to_value(&outcome.report).expect("report serializes");
    report_json["schema_version"] = serde_json::json!(REPORT_SCHEMA);
    report_json["provenance"] = provenance(params, &outcome.neighborhood);
    report_json["warm_start"] = serde_json::to_value(&outcome.warm_start).expect("config serializes");
    jsonfmt::write_canonical(&report_json, &out_dir.join("report.json"))?;

    let mut attr_json = attribution_to_json(&outcome.attribution, &outcome.interactions);
    attr_json["schema_version"] = serde_json::json!(ATTRIBUTION_SCHEMA);
    attr_json["provenance"] = provenance(params, &outcome.neighborhood);
    jsonfmt::write_canonical(&attr_json, &out_dir.join("attribution.json"))?;

    for (name, curve) in &outcome.range_curves {
        let path = out_dir.join(format!("range_{}.csv", name));
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::runtime(Stage::Cli, format!("{}: {}", path.display(), e)))?;
        w.write_record(["value", "phi", "smoothed_phi"])
            .map_err(|e| Error::runtime(Stage::Cli, e.to_string()))?;
        for i in 0..curve.values.len() {
            w.write_record([
                jsonfmt::format_float(curve.values[i]),
                jsonfmt::format_float(curve.phi[i]),
                jsonfmt::format_float(curve.smoothed[i]),
            ])
            .map_err(|e| Error::runtime(Stage::Cli, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::runtime(Stage::Cli, e.to_string()))?;
    }
    Ok(())
}

/// What the comparison optimizes.
pub enum ObjectiveSpec {
    /// A synthetic surface with optional observation noise.
    Surface {
        surface: crate::benchgen::SyntheticSurface,
        noise_sigma: f64,
        /// Analytic optimum when known; reference for iterations-to-epsilon.
        optimum: Option<f64>,
    },
    /// Constant value (degenerate baseline).
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct CompareParams {
    pub budget: usize,
    pub init_vanilla: usize,
    pub init_guided: usize,
    pub epsilon: f64,
    /// Paired seeds: each runs both modes.
    pub seeds: Vec<u64>,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            budget: 30,
            init_vanilla: 5,
            init_guided: 3,
            epsilon: 0.02,
            seeds: vec![42],
        }
    }
}

pub struct CompareOutcome {
    pub vanilla: Vec<BoTrace>,
    pub guided: Vec<BoTrace>,
    pub summary: serde_json::Value,
}

fn make_objective(spec: &ObjectiveSpec, seed: u64) -> Box<dyn Objective> {
    match spec {
        ObjectiveSpec::Surface {
            surface, noise_sigma, ..
        } => Box::new(SurfaceObjective::new(surface.clone(), *noise_sigma, seed)),
        ObjectiveSpec::Constant(v) => {
            let value = *v;
            Box::new(FnObjective::new(move |_: &RawConfig| value))
        }
    }
}

/// Run vanilla and guided BO with paired seeds against the same objective
/// and summarize best-so-far series, iterations-to-within-epsilon, and the
/// median speedup ratio.
pub fn compare(
    kb: &KnowledgeBase,
    query: &MetaFeatureVector,
    exclude_id: Option<&str>,
    recommend_params: &RecommendParams,
    compare_params: &CompareParams,
    objective_spec: &ObjectiveSpec,
) -> Result<(RecommendOutcome, CompareOutcome)> {
    let outcome = recommend(kb, query, exclude_id, recommend_params)?;
    let space = kb.spaces[&recommend_params.algorithm_id].clone();

    let mut vanilla = Vec::with_capacity(compare_params.seeds.len());
    let mut guided = Vec::with_capacity(compare_params.seeds.len());
    for &seed in &compare_params.seeds {
        let mut obj_v = make_objective(objective_spec, seeding::subseed(seed, "objective-vanilla", 0));
        let cfg_v = BoConfig {
            budget: compare_params.budget,
            init: compare_params.init_vanilla,
            seed,
            ..Default::default()
        };
        vanilla.push(bo_run(obj_v.as_mut(), &space, &cfg_v)?);

        let mut obj_g = make_objective(objective_spec, seeding::subseed(seed, "objective-guided", 0));
        let cfg_g = BoConfig {
            budget: compare_params.budget,
            init: compare_params.init_guided,
            seed,
            ..Default::default()
        };
        guided.push(guided_bo_run(
            obj_g.as_mut(),
            &space,
            &outcome.report,
            Some(&outcome.warm_start),
            &cfg_g,
        )?);
    }

    let summary = summarize(&vanilla, &guided, compare_params, objective_spec);
    Ok((outcome, CompareOutcome { vanilla, guided, summary }))
}

/// Iterations to reach within epsilon of the reference; runs that never get
/// there are censored at budget + 1.
fn iterations_to_eps(trace: &BoTrace, reference: f64, epsilon: f64) -> (Option<usize>, usize) {
    let reached = trace.first_iteration_reaching(reference - epsilon);
    (reached, reached.unwrap_or(trace.budget + 1))
}

fn median_usize(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

fn summarize(
    vanilla: &[BoTrace],
    guided: &[BoTrace],
    params: &CompareParams,
    spec: &ObjectiveSpec,
) -> serde_json::Value {
    // Reference: analytic optimum when known, otherwise the best value ever
    // observed across all traces.
    let observed_best = vanilla
        .iter()
        .chain(guided)
        .map(|t| t.best())
        .fold(f64::NEG_INFINITY, f64::max);
    let (reference, reference_kind) = match spec {
        ObjectiveSpec::Surface {
            optimum: Some(opt), ..
        } => (*opt, "analytic_optimum"),
        _ => (observed_best, "best_observed"),
    };

    let mode_summary = |traces: &[BoTrace]| -> (serde_json::Value, Vec<usize>) {
        let mut censored = Vec::new();
        let per_seed: Vec<serde_json::Value> = traces
            .iter()
            .zip(&params.seeds)
            .map(|(t, &seed)| {
                let (reached, cens) = iterations_to_eps(t, reference, params.epsilon);
                censored.push(cens);
                serde_json::json!({
                    "seed": seed,
                    "best_so_far": t.points.iter().map(|p| p.best_so_far).collect::<Vec<_>>(),
                    "iterations_to_eps": reached,
                    "final_best": t.best(),
                    "notes": t.notes,
                })
            })
            .collect();
        (serde_json::Value::Array(per_seed), censored)
    };

    let (vanilla_json, mut vanilla_iters) = mode_summary(vanilla);
    let (guided_json, mut guided_iters) = mode_summary(guided);
    let median_vanilla = median_usize(&mut vanilla_iters);
    let median_guided = median_usize(&mut guided_iters);
    let speedup = if median_guided > 0.0 {
        median_vanilla / median_guided
    } else {
        1.0
    };

    serde_json::json!({
        "schema_version": SUMMARY_SCHEMA,
        "budget": params.budget,
        "init": {"vanilla": params.init_vanilla, "guided": params.init_guided},
        "epsilon": params.epsilon,
        "reference": reference,
        "reference_kind": reference_kind,
        "seeds": params.seeds,
        "modes": {
            "vanilla": vanilla_json,
            "guided": guided_json,
        },
        "median_iterations_to_eps": {
            "vanilla": median_vanilla,
            "guided": median_guided,
        },
        "speedup_ratio": speedup,
    })
}

/// Write the paired trace CSVs and the summary JSON.
pub fn write_compare_outputs(
    compare_outcome: &CompareOutcome,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(Stage::Cli, out_dir.display().to_string(), e))?;
    for (trace, &seed) in compare_outcome.vanilla.iter().zip(seeds) {
        write_trace_csv(trace, &out_dir.join(format!("trace_vanilla_{}.csv", seed)))?;
    }
    for (trace, &seed) in compare_outcome.guided.iter().zip(seeds) {
        write_trace_csv(trace, &out_dir.join(format!("trace_guided_{}.csv", seed)))?;
    }
    jsonfmt::write_canonical(&compare_outcome.summary, &out_dir.join("summary.json"))
}
