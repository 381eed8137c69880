//! Gaussian-process Bayesian optimization over a hyperparameter space, in
//! vanilla (full space) and guided (restricted space, defaults elsewhere)
//! modes.
//!
//! One run is strictly sequential: Latin-hypercube initialization, then
//! fit-GP / maximize-EI / evaluate steps until the budget is spent. The
//! acquisition is maximized by candidate enumeration (Halton batch plus local
//! perturbations of the incumbent), which is robust for mixed spaces and
//! deterministic. Guided mode narrows selected parameters to their
//! recommended intervals, pins the rest to defaults, and can warm-start from
//! the best configuration retrieved from the knowledge base.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::design;
use crate::error::{Error, Result, Stage};
use crate::gp::{expected_improvement, gp_fit_with, GpConfig};
use crate::insights::TuningReport;
use crate::seeding;
use crate::space::{HyperparameterSpace, ParamKind, RawConfig, RawValue};

/// A black-box performance function with an evaluation counter.
pub trait Objective {
    fn evaluate(&mut self, config: &RawConfig) -> Result<f64>;
    fn evaluations(&self) -> usize;
}

/// Objective wrapping a plain function.
pub struct FnObjective<F: FnMut(&RawConfig) -> f64> {
    f: F,
    count: usize,
}

impl<F: FnMut(&RawConfig) -> f64> FnObjective<F> {
    pub fn new(f: F) -> Self {
        FnObjective { f, count: 0 }
    }
}

impl<F: FnMut(&RawConfig) -> f64> Objective for FnObjective<F> {
    fn evaluate(&mut self, config: &RawConfig) -> Result<f64> {
        self.count += 1;
        Ok((self.f)(config))
    }

    fn evaluations(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoMode {
    Vanilla,
    Guided,
}

impl std::fmt::Display for BoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoMode::Vanilla => f.write_str("vanilla"),
            BoMode::Guided => f.write_str("guided"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub config: RawConfig,
    pub observed: f64,
    pub best_so_far: f64,
}

/// Iteration-by-iteration record of one optimization run.
#[derive(Debug, Clone, Serialize)]
pub struct BoTrace {
    pub points: Vec<TracePoint>,
    pub mode: BoMode,
    pub budget: usize,
    pub notes: Vec<String>,
}

impl BoTrace {
    pub fn best(&self) -> f64 {
        self.points.last().map_or(f64::NEG_INFINITY, |p| p.best_so_far)
    }

    /// 1-based iteration at which best_so_far first reaches `threshold`.
    pub fn first_iteration_reaching(&self, threshold: f64) -> Option<usize> {
        self.points.iter().position(|p| p.best_so_far >= threshold).map(|i| i + 1)
    }
}

#[derive(Debug, Clone)]
pub struct BoConfig {
    pub budget: usize,
    pub init: usize,
    pub seed: u64,
    pub n_candidates: usize,
    pub n_local: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 30,
            init: 5,
            seed: 0,
            n_candidates: 2048,
            n_local: 256,
        }
    }
}

/// The latent coordinate system a BO run searches in. Every latent point in
/// the unit cube maps to a valid configuration.
trait SearchSpace {
    fn dims(&self) -> usize;
    fn config_of(&self, u: &[f64]) -> Result<RawConfig>;
    /// Canonical latent coordinates of a config produced by `config_of`
    /// (inverse up to value quantization).
    fn latent_of(&self, config: &RawConfig) -> Result<Vec<f64>>;
}

struct FullSpace<'a> {
    space: &'a HyperparameterSpace,
}

impl SearchSpace for FullSpace<'_> {
    fn dims(&self) -> usize {
        self.space.len()
    }

    fn config_of(&self, u: &[f64]) -> Result<RawConfig> {
        self.space.config_from_unit(u)
    }

    fn latent_of(&self, config: &RawConfig) -> Result<Vec<f64>> {
        self.space.unit_from_config(config)
    }
}

/// One searched parameter of the restricted space.
#[derive(Debug, Clone)]
enum RestrictedParam {
    /// Encoded-scale intervals; the latent coordinate walks across them
    /// proportionally to width.
    Numeric {
        name: String,
        intervals: Vec<(f64, f64)>,
        total_width: f64,
    },
    /// Allowed category indices.
    Categorical { name: String, allowed: Vec<usize> },
}

/// Restriction of a space to the report's selected parameters within their
/// recommended intervals; everything else pinned to defaults.
struct RestrictedSpace<'a> {
    space: &'a HyperparameterSpace,
    params: Vec<RestrictedParam>,
    fixed: RawConfig,
}

impl RestrictedSpace<'_> {
    fn build<'a>(space: &'a HyperparameterSpace, report: &TuningReport) -> Result<(RestrictedSpace<'a>, Vec<String>)> {
        if report.selected.is_empty() {
            return Err(Error::validation(Stage::Optimizer, "report selects no parameters"));
        }
        let mut notes = Vec::new();
        let mut params = Vec::new();
        for name in &report.selected {
            let spec = space
                .param(name)
                .ok_or_else(|| Error::validation(Stage::Optimizer, format!("selected parameter '{}' not in space", name)))?;
            let range = report.ranges.iter().find(|r| &r.param_name == name);
            match &spec.kind {
                ParamKind::Categorical { categories } => {
                    let mut allowed: Vec<usize> = match range {
                        Some(r) if !r.categories.is_empty() => r
                            .categories
                            .iter()
                            .filter_map(|l| categories.iter().position(|c| c == l))
                            .collect(),
                        _ => Vec::new(),
                    };
                    if allowed.is_empty() {
                        notes.push(format!("selected parameter '{}' fell back to all categories", name));
                        allowed = (0..categories.len()).collect();
                    }
                    params.push(RestrictedParam::Categorical {
                        name: name.clone(),
                        allowed,
                    });
                }
                _ => {
                    let idx = space.index_of(name).expect("param exists");
                    let (enc_lo, enc_hi) = space.encoded_bounds()[idx];
                    let log_scale = matches!(spec.kind, ParamKind::Continuous { log_scale: true, .. });
                    let mut intervals: Vec<(f64, f64)> = match range {
                        Some(r) if !r.intervals.is_empty() => r
                            .intervals
                            .iter()
                            .map(|&(lo, hi)| {
                                if log_scale {
                                    (lo.log10(), hi.log10())
                                } else {
                                    (lo, hi)
                                }
                            })
                            .filter(|&(lo, hi)| hi > lo)
                            .collect(),
                        _ => Vec::new(),
                    };
                    if matches!(spec.kind, ParamKind::Integer { .. }) {
                        // Keep only intervals containing an integer.
                        intervals.retain(|&(lo, hi)| lo.ceil() <= hi.floor());
                    }
                    if intervals.is_empty() {
                        notes.push(format!("selected parameter '{}' fell back to full bounds", name));
                        intervals = vec![(enc_lo, enc_hi)];
                    }
                    let total_width: f64 = intervals.iter().map(|&(lo, hi)| hi - lo).sum();
                    params.push(RestrictedParam::Numeric {
                        name: name.clone(),
                        intervals,
                        total_width,
                    });
                }
            }
        }
        let mut fixed = RawConfig::new();
        for p in &space.params {
            if !report.selected.contains(&p.name) {
                let v = report
                    .fixed
                    .get(&p.name)
                    .cloned()
                    .unwrap_or_else(|| p.default.clone());
                fixed.insert(p.name.clone(), v);
            }
        }
        Ok((RestrictedSpace { space, params, fixed }, notes))
    }

    /// Clamp a full-space config into the restricted space (used for the
    /// warm-start transfer).
    fn project(&self, config: &RawConfig) -> Result<RawConfig> {
        let mut out = self.fixed.clone();
        for param in &self.params {
            match param {
                RestrictedParam::Numeric { name, intervals, .. } => {
                    let spec = self.space.param(name).expect("validated");
                    let idx = self.space.index_of(name).expect("validated");
                    let raw = config
                        .get(name)
                        .and_then(|v| v.as_number())
                        .ok_or_else(|| Error::validation(Stage::Optimizer, format!("missing numeric '{}' in warm start", name)))?;
                    let log_scale = matches!(spec.kind, ParamKind::Continuous { log_scale: true, .. });
                    let enc = if log_scale { raw.log10() } else { raw };
                    // Nearest point inside any interval.
                    let mut best = intervals[0].0;
                    let mut best_d = f64::INFINITY;
                    for &(lo, hi) in intervals {
                        let p = enc.clamp(lo, hi);
                        let d = (p - enc).abs();
                        if d < best_d {
                            best_d = d;
                            best = p;
                        }
                    }
                    let mut encoded_full = self.space.encode(&self.space.default_config())?;
                    encoded_full[idx] = best;
                    let decoded = self.space.decode(&encoded_full)?;
                    let mut value = decoded[name].clone();
                    if let (ParamKind::Integer { .. }, RawValue::Number(v)) = (&spec.kind, &value) {
                        value = RawValue::Number(snap_integer_into(*v, intervals));
                    }
                    out.insert(name.clone(), value);
                }
                RestrictedParam::Categorical { name, allowed } => {
                    let spec = self.space.param(name).expect("validated");
                    let ParamKind::Categorical { categories } = &spec.kind else {
                        unreachable!("restricted categorical over categorical spec")
                    };
                    let current = config
                        .get(name)
                        .and_then(|v| v.as_label())
                        .and_then(|l| categories.iter().position(|c| c == l))
                        .unwrap_or(allowed[0]);
                    let nearest = *allowed
                        .iter()
                        .min_by_key(|&&a| (a as i64 - current as i64).unsigned_abs())
                        .expect("allowed nonempty");
                    out.insert(name.clone(), RawValue::Label(categories[nearest].clone()));
                }
            }
        }
        Ok(out)
    }
}

impl SearchSpace for RestrictedSpace<'_> {
    fn dims(&self) -> usize {
        self.params.len()
    }

    fn config_of(&self, u: &[f64]) -> Result<RawConfig> {
        if u.len() != self.params.len() {
            return Err(Error::validation(Stage::Optimizer, "latent dimension mismatch"));
        }
        let mut out = self.fixed.clone();
        for (param, &ui) in self.params.iter().zip(u) {
            let ui = ui.clamp(0.0, 1.0);
            match param {
                RestrictedParam::Numeric {
                    name,
                    intervals,
                    total_width,
                } => {
                    // Walk across intervals proportionally to width.
                    let mut remaining = ui * total_width;
                    let mut enc = intervals[intervals.len() - 1].1;
                    for &(lo, hi) in intervals {
                        let width = hi - lo;
                        if remaining <= width || width == *total_width {
                            enc = lo + remaining.min(width);
                            break;
                        }
                        remaining -= width;
                    }
                    let spec = self.space.param(name).expect("validated");
                    let idx = self.space.index_of(name).expect("validated");
                    let mut encoded_full = self.space.encode(&self.space.default_config())?;
                    encoded_full[idx] = enc;
                    let decoded = self.space.decode(&encoded_full)?;
                    let mut value = decoded[name].clone();
                    if let (ParamKind::Integer { .. }, RawValue::Number(v)) = (&spec.kind, &value) {
                        // Rounding may exit a narrow interval; snap back inside.
                        let snapped = snap_integer_into(*v, intervals);
                        value = RawValue::Number(snapped);
                    }
                    out.insert(name.clone(), value);
                }
                RestrictedParam::Categorical { name, allowed } => {
                    let spec = self.space.param(name).expect("validated");
                    let ParamKind::Categorical { categories } = &spec.kind else {
                        unreachable!("restricted categorical over categorical spec")
                    };
                    let pos = ((ui * allowed.len() as f64).floor() as usize).min(allowed.len() - 1);
                    out.insert(name.clone(), RawValue::Label(categories[allowed[pos]].clone()));
                }
            }
        }
        Ok(out)
    }

    fn latent_of(&self, config: &RawConfig) -> Result<Vec<f64>> {
        let mut u = Vec::with_capacity(self.params.len());
        for param in &self.params {
            match param {
                RestrictedParam::Numeric {
                    name,
                    intervals,
                    total_width,
                } => {
                    let spec = self.space.param(name).expect("validated");
                    let raw = config
                        .get(name)
                        .and_then(|v| v.as_number())
                        .ok_or_else(|| Error::validation(Stage::Optimizer, format!("missing numeric '{}'", name)))?;
                    let log_scale = matches!(spec.kind, ParamKind::Continuous { log_scale: true, .. });
                    let enc = if log_scale { raw.log10() } else { raw };
                    let mut walked = 0.0;
                    let mut coord = 0.0;
                    for &(lo, hi) in intervals {
                        if enc <= hi || (lo, hi) == intervals[intervals.len() - 1] {
                            coord = walked + (enc.clamp(lo, hi) - lo);
                            break;
                        }
                        walked += hi - lo;
                    }
                    u.push(if *total_width > 0.0 { coord / total_width } else { 0.0 });
                }
                RestrictedParam::Categorical { name, allowed } => {
                    let spec = self.space.param(name).expect("validated");
                    let ParamKind::Categorical { categories } = &spec.kind else {
                        unreachable!("restricted categorical over categorical spec")
                    };
                    let idx = config
                        .get(name)
                        .and_then(|v| v.as_label())
                        .and_then(|l| categories.iter().position(|c| c == l))
                        .unwrap_or(allowed[0]);
                    let pos = allowed.iter().position(|&a| a == idx).unwrap_or(0);
                    u.push((pos as f64 + 0.5) / allowed.len() as f64);
                }
            }
        }
        Ok(u)
    }
}

fn snap_integer_into(v: f64, intervals: &[(f64, f64)]) -> f64 {
    for &(lo, hi) in intervals {
        if v >= lo && v <= hi {
            return v;
        }
    }
    let mut best = v;
    let mut best_d = f64::INFINITY;
    for &(lo, hi) in intervals {
        for cand in [lo.ceil(), hi.floor()] {
            let d = (cand - v).abs();
            if d < best_d {
                best_d = d;
                best = cand;
            }
        }
    }
    best
}

/// Standard BO over the full space: `init` Latin-hypercube configs, then
/// fit-GP / argmax-EI / evaluate until `budget` evaluations. Deterministic
/// given the seed.
pub fn bo_run(
    objective: &mut dyn Objective,
    space: &HyperparameterSpace,
    cfg: &BoConfig,
) -> Result<BoTrace> {
    let search = FullSpace { space };
    run_loop(objective, &search, cfg, BoMode::Vanilla, None, Vec::new())
}

/// Guided BO: restrict to the report's selected parameters within their
/// recommended intervals, pin the rest to defaults, and evaluate
/// `warm_start` (the best retrieved neighbor configuration, projected into
/// the restricted space) first.
pub fn guided_bo_run(
    objective: &mut dyn Objective,
    space: &HyperparameterSpace,
    report: &TuningReport,
    warm_start: Option<&RawConfig>,
    cfg: &BoConfig,
) -> Result<BoTrace> {
    let (search, notes) = RestrictedSpace::build(space, report)?;
    let seeded = warm_start.map(|c| search.project(c)).transpose()?;
    run_loop(objective, &search, cfg, BoMode::Guided, seeded, notes)
}

fn run_loop(
    objective: &mut dyn Objective,
    search: &dyn SearchSpace,
    cfg: &BoConfig,
    mode: BoMode,
    warm_start: Option<RawConfig>,
    mut notes: Vec<String>,
) -> Result<BoTrace> {
    if cfg.init < 2 || cfg.budget < cfg.init {
        return Err(Error::validation(
            Stage::Optimizer,
            format!("need budget >= init >= 2, got budget={} init={}", cfg.budget, cfg.init),
        ));
    }
    let dims = search.dims();
    let mut points: Vec<TracePoint> = Vec::with_capacity(cfg.budget);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(cfg.budget);
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.budget);
    let mut best = f64::NEG_INFINITY;

    let evaluate = |u: Vec<f64>,
                        points: &mut Vec<TracePoint>,
                        xs: &mut Vec<Vec<f64>>,
                        ys: &mut Vec<f64>,
                        best: &mut f64,
                        objective: &mut dyn Objective|
     -> Result<()> {
        let config = search.config_of(&u)?;
        let canonical = search.latent_of(&config)?;
        let observed = objective.evaluate(&config)?;
        *best = best.max(observed);
        points.push(TracePoint {
            config,
            observed,
            best_so_far: *best,
        });
        xs.push(canonical);
        ys.push(observed);
        Ok(())
    };

    // Initial design.
    let mut n_init = cfg.init.min(cfg.budget);
    if let Some(seed_config) = warm_start {
        notes.push("warm start from best retrieved configuration".to_string());
        let u = search.latent_of(&seed_config)?;
        evaluate(u, &mut points, &mut xs, &mut ys, &mut best, objective)?;
        n_init = n_init.saturating_sub(1);
    }
    let mut rng = seeding::stream(cfg.seed, "bo-init", 0);
    for u in design::latin_hypercube::<f64>(n_init, dims, &mut rng) {
        if points.len() >= cfg.budget {
            break;
        }
        evaluate(u, &mut points, &mut xs, &mut ys, &mut best, objective)?;
    }

    // BO steps.
    let mut iteration = 0u64;
    while points.len() < cfg.budget {
        iteration += 1;
        let u_next = propose(search, &xs, &ys, best, cfg, iteration)?;
        evaluate(u_next, &mut points, &mut xs, &mut ys, &mut best, objective)?;
    }

    Ok(BoTrace {
        points,
        mode,
        budget: cfg.budget,
        notes,
    })
}

/// Pick the next latent point by EI over a quasi-random candidate batch plus
/// local perturbations of the incumbent, skipping already-evaluated configs.
fn propose(
    search: &dyn SearchSpace,
    xs: &[Vec<f64>],
    ys: &[f64],
    best: f64,
    cfg: &BoConfig,
    iteration: u64,
) -> Result<Vec<f64>> {
    let dims = search.dims();
    let gp = gp_fit_with(
        xs,
        ys,
        &GpConfig {
            seed: seeding::subseed(cfg.seed, "gp", iteration),
            ..Default::default()
        },
    )?;

    let mut candidates: Vec<Vec<f64>> =
        design::halton_batch(1 + iteration * cfg.n_candidates as u64, cfg.n_candidates, dims);
    let incumbent = xs[ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(i, _)| i)
        .expect("nonempty")]
    .clone();
    let mut rng = seeding::stream(cfg.seed, "bo-local", iteration);
    let normal = Normal::new(0.0, 0.1).expect("valid sigma");
    for _ in 0..cfg.n_local {
        let u: Vec<f64> = incumbent
            .iter()
            .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        candidates.push(u);
    }

    // Canonicalize through the config quantization, score, dedupe, argmax.
    let seen: std::collections::BTreeSet<Vec<u64>> = xs.iter().map(|u| bits_of(u)).collect();
    let mut best_u: Option<Vec<f64>> = None;
    let mut best_ei = f64::NEG_INFINITY;
    for cand in candidates {
        let config = search.config_of(&cand)?;
        let canonical = search.latent_of(&config)?;
        if seen.contains(&bits_of(&canonical)) {
            continue;
        }
        let ei = expected_improvement(&gp, &canonical, best);
        if ei > best_ei {
            best_ei = ei;
            best_u = Some(canonical);
        }
    }
    if let Some(u) = best_u {
        return Ok(u);
    }
    // All candidates already evaluated (tiny discrete space): fall back to
    // seeded uniform draws, then to repeating the incumbent.
    for _ in 0..100 {
        let u: Vec<f64> = (0..dims).map(|_| rng.random()).collect();
        let config = search.config_of(&u)?;
        let canonical = search.latent_of(&config)?;
        if !seen.contains(&bits_of(&canonical)) {
            return Ok(canonical);
        }
    }
    Ok(incumbent)
}

fn bits_of(u: &[f64]) -> Vec<u64> {
    u.iter().map(|v| v.to_bits()).collect()
}

/// Plot-ready trace CSV: iteration, config (JSON-in-cell), observed,
/// best_so_far, mode.
pub fn write_trace_csv(trace: &BoTrace, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::runtime(Stage::Optimizer, format!("{}: {}", path.display(), e)))?;
    w.write_record(["iteration", "config", "observed", "best_so_far", "mode"])
        .map_err(|e| Error::runtime(Stage::Optimizer, e.to_string()))?;
    for (i, p) in trace.points.iter().enumerate() {
        let config_json = serde_json::to_string(&crate::jsonfmt::round_floats(
            serde_json::to_value(&p.config).expect("config serializes"),
        ))
        .expect("json renders");
        w.write_record([
            (i + 1).to_string(),
            config_json,
            crate::jsonfmt::format_float(p.observed),
            crate::jsonfmt::format_float(p.best_so_far),
            trace.mode.to_string(),
        ])
        .map_err(|e| Error::runtime(Stage::Optimizer, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::runtime(Stage::Optimizer, e.to_string()))?;
    Ok(())
}
