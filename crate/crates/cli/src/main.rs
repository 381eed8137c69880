//! `hpguide`: dataset-aware hyperparameter importance and guided tuning.
//!
//! Subcommands: `ingest` (validate/copy a KB bundle), `metafeatures`
//! (describe a dataset), `benchgen` (synthetic KB with ground truth),
//! `recommend` (full pipeline to a tuning report), and `compare` (vanilla vs
//! guided optimization with paired seeds).
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpguide::benchgen::{self, KbGenConfig};
use hpguide::error::{Error, Stage};
use hpguide::jsonfmt;
use hpguide::kb::{load_kb, save_kb};
use hpguide::metafeatures::{extract, MetaFeatureVector, SCHEMA_NAMES, SCHEMA_VERSION};
use hpguide::pipeline::{
    compare, recommend, write_compare_outputs, write_recommend_outputs, CompareParams, ObjectiveSpec,
    RecommendParams,
};

#[derive(Parser)]
#[command(name = "hpguide", version, about = "Hyperparameter importance analysis and guided optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a KB bundle; optionally re-save a normalized copy.
    Ingest {
        /// KB bundle directory.
        #[arg(long)]
        kb: PathBuf,
        /// Re-save the validated bundle here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the meta-feature vector of a dataset CSV.
    Metafeatures {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the vector as JSON here (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic KB bundle with analytic ground truth.
    Benchgen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        datasets: usize,
        #[arg(long, default_value_t = 400)]
        configs: usize,
        /// Hyperparameter count of the synthetic algorithm.
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        relevant: usize,
        #[arg(long, default_value_t = 0)]
        interactions: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, default_value = "synth_model")]
        algorithm: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Full pipeline: retrieve, fit, attribute, and write a tuning report.
    Recommend {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        algorithm: String,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        tuning: TuningFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vanilla vs guided optimization with paired seeds.
    Compare {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        algorithm: String,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        tuning: TuningFlags,
        /// Objective: "surface:<ground_truth.json>:<dataset_id>" or
        /// "constant:<value>". Defaults to the target's surface when
        /// --dataset-id points into a benchgen bundle.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long, default_value_t = 30)]
        budget: usize,
        /// Initial design size of the vanilla runs.
        #[arg(long, default_value_t = 5)]
        init_vanilla: usize,
        /// Initial design size of the guided runs (includes the warm start).
        #[arg(long, default_value_t = 3)]
        init_guided: usize,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        /// Number of paired seeds (seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        paired_runs: usize,
        /// Observation noise added to surface objectives.
        #[arg(long, default_value_t = 0.0)]
        objective_noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    dataset: PathBuf,
    /// Name of the class column.
    #[arg(long)]
    target_col: String,
    /// Comma-separated feature columns to force categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
}

#[derive(Args)]
struct QueryArgs {
    /// Target dataset CSV (mutually exclusive with --dataset-id).
    #[arg(long, conflicts_with = "dataset_id")]
    dataset: Option<PathBuf>,
    /// Name of the class column in --dataset.
    #[arg(long)]
    target_col: Option<String>,
    /// Comma-separated feature columns to force categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Use a registry dataset as the target (leave-one-out retrieval).
    #[arg(long)]
    dataset_id: Option<String>,
}

#[derive(Args)]
struct TuningFlags {
    #[arg(long, default_value_t = 5)]
    k_neighbors: usize,
    #[arg(long, default_value_t = 3)]
    top_m: usize,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    window_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

impl TuningFlags {
    fn params(&self, algorithm: &str) -> RecommendParams {
        let mut p = RecommendParams::new(algorithm);
        p.k_neighbors = self.k_neighbors;
        p.top_m = self.top_m;
        p.n_trees = self.n_trees;
        p.seed = self.seed;
        p.window_fraction = self.window_fraction;
        p.tau = self.tau;
        p
    }
}

/// Resolve the query meta-features: extracted from a CSV, or looked up in
/// the registry (enabling leave-one-out exclusion).
fn resolve_query(
    kb: &hpguide::kb::KnowledgeBase,
    query: &QueryArgs,
    seed: u64,
) -> Result<(MetaFeatureVector, Option<String>), Error> {
    if let Some(id) = &query.dataset_id {
        let mfv = kb
            .meta_registry
            .get(id)
            .cloned()
            .ok_or_else(|| Error::validation(Stage::Kb, format!("dataset id '{}' not in registry", id)))?;
        return Ok((mfv, Some(id.clone())));
    }
    let path = query.dataset.as_ref().ok_or_else(|| {
        Error::validation(Stage::Cli, "either --dataset with --target-col or --dataset-id is required")
    })?;
    let target_col = query
        .target_col
        .as_ref()
        .ok_or_else(|| Error::validation(Stage::Metafeatures, "--target-col is required with --dataset"))?;
    let ds = hpguide::dataset::load_csv(path, target_col, &query.categorical)?;
    Ok((extract(&ds, seed)?, None))
}

fn parse_objective(
    spec: &Option<String>,
    query: &QueryArgs,
    kb_dir: &std::path::Path,
    noise: f64,
) -> Result<ObjectiveSpec, Error> {
    let build_surface = |path: &std::path::Path, id: &str| -> Result<ObjectiveSpec, Error> {
        let gt = benchgen::load_ground_truth(path)?;
        let truth = gt
            .datasets
            .get(id)
            .ok_or_else(|| Error::validation(Stage::Benchgen, format!("dataset id '{}' not in {}", id, path.display())))?;
        Ok(ObjectiveSpec::Surface {
            surface: truth.surface.clone(),
            noise_sigma: noise,
            optimum: Some(truth.truth.optimum_value),
        })
    };
    match spec {
        Some(text) => {
            if let Some(value) = text.strip_prefix("constant:") {
                let v: f64 = value
                    .parse()
                    .map_err(|_| Error::validation(Stage::Cli, format!("bad constant objective '{}'", text)))?;
                Ok(ObjectiveSpec::Constant(v))
            } else if let Some(rest) = text.strip_prefix("surface:") {
                let (path, id) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| Error::validation(Stage::Cli, "surface objective needs surface:<path>:<dataset_id>"))?;
                build_surface(std::path::Path::new(path), id)
            } else {
                Err(Error::validation(Stage::Cli, format!("unknown objective spec '{}'", text)))
            }
        }
        None => {
            // Default: the target's own surface from the bundle's ground truth.
            let id = query.dataset_id.as_ref().ok_or_else(|| {
                Error::validation(
                    Stage::Cli,
                    "compare needs --objective, or --dataset-id pointing into a benchgen bundle with ground_truth.json",
                )
            })?;
            build_surface(&kb_dir.join(benchgen::GROUND_TRUTH_FILE), id)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { kb, out } => {
            let loaded = load_kb(&kb)?;
            println!(
                "kb ok: {} records, {} datasets, {} algorithms, metric '{}'",
                loaded.len(),
                loaded.meta_registry.len(),
                loaded.spaces.len(),
                loaded.metric
            );
            for (algorithm, counts) in loaded.spaces.keys().map(|a| (a, loaded.counts_by_dataset(a))) {
                let total: usize = counts.values().sum();
                println!("  {}: {} records over {} datasets", algorithm, total, counts.len());
            }
            if let Some(out) = out {
                save_kb(&loaded, &out)?;
                println!("saved normalized bundle to {}", out.display());
            }
            Ok(())
        }
        Command::Metafeatures { dataset, seed, out } => {
            let ds = hpguide::dataset::load_csv(&dataset.dataset, &dataset.target_col, &dataset.categorical)?;
            let mfv = extract(&ds, seed)?;
            let json = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "names": SCHEMA_NAMES,
                "values": mfv.values(),
                "provenance": {"seed": seed, "dataset": dataset.dataset.display().to_string(), "target_col": dataset.target_col},
            });
            match out {
                Some(path) => jsonfmt::write_canonical(&json, &path)?,
                None => print!("{}", jsonfmt::canonical_string(&json)),
            }
            Ok(())
        }
        Command::Benchgen {
            out,
            datasets,
            configs,
            k,
            relevant,
            interactions,
            noise,
            clusters,
            algorithm,
            seed,
        } => {
            let cfg = KbGenConfig {
                n_datasets: datasets,
                configs_per_dataset: configs,
                k,
                n_relevant: relevant,
                interaction_pairs: interactions,
                noise_sigma: noise,
                n_clusters: clusters,
                algorithm_id: algorithm,
                seed,
            };
            let (kb, truths) = benchgen::generate_kb(&cfg)?;
            save_kb(&kb, &out)?;
            benchgen::save_ground_truth(&truths, &out)?;
            println!(
                "generated {} records over {} datasets into {}",
                kb.len(),
                kb.meta_registry.len(),
                out.display()
            );
            Ok(())
        }
        Command::Recommend {
            kb,
            algorithm,
            query,
            tuning,
            out,
        } => {
            let loaded = load_kb(&kb)?;
            let params = tuning.params(&algorithm);
            let (mfv, exclude) = resolve_query(&loaded, &query, params.seed)?;
            let mut outcome = recommend(&loaded, &mfv, exclude.as_deref(), &params)?;
            outcome.report.dataset = exclude.unwrap_or_else(|| {
                query
                    .dataset
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            });
            write_recommend_outputs(&outcome, &params, &out)?;
            println!(
                "report written to {}; selected: {}",
                out.display(),
                outcome.report.selected.join(", ")
            );
            Ok(())
        }
        Command::Compare {
            kb,
            algorithm,
            query,
            tuning,
            objective,
            budget,
            init_vanilla,
            init_guided,
            epsilon,
            paired_runs,
            objective_noise,
            out,
        } => {
            let loaded = load_kb(&kb)?;
            let params = tuning.params(&algorithm);
            let (mfv, exclude) = resolve_query(&loaded, &query, params.seed)?;
            let objective_spec = parse_objective(&objective, &query, &kb, objective_noise)?;
            let compare_params = CompareParams {
                budget,
                init_vanilla,
                init_guided,
                epsilon,
                seeds: (0..paired_runs as u64).map(|i| params.seed + i).collect(),
            };
            let (mut rec, cmp) =
                compare(&loaded, &mfv, exclude.as_deref(), &params, &compare_params, &objective_spec)?;
            rec.report.dataset = exclude.unwrap_or_default();
            write_recommend_outputs(&rec, &params, &out)?;
            write_compare_outputs(&cmp, &compare_params.seeds, &out)?;
            println!(
                "comparison written to {}; speedup ratio {}",
                out.display(),
                cmp.summary["speedup_ratio"]
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
