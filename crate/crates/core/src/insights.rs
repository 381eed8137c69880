//! From per-sample Shapley values to an actionable tuning report: ranked
//! hyperparameters, recommended value intervals for the top ones, and
//! fixed-default assignments for the rest.
//!
//! Range extraction sorts (value, phi) pairs by value, smooths phi with a
//! centered moving average (edges shrink), and keeps the regions where the
//! smoothed curve stays above `tau` times its positive peak. Regions of
//! maximal positive smoothed contribution are targeted deliberately: tuning
//! should seek beneficial values, and an absolute-value criterion would also
//! select harmful ones.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attribution::{AttributionResult, InteractionMatrix};
use crate::error::{Error, Result, Stage};
use crate::scalar::Real;
use crate::space::{HyperparameterSpace, ParamKind, ParamSpec, RawValue};

/// Pairs with |index| below this absolute floor are never highlighted, so an
/// additive surface (all indices at numerical noise) yields no highlights.
const INTERACTION_FLOOR: f64 = 1e-3;

/// Recommended value region for one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningRange {
    pub param_name: String,
    /// Disjoint sorted raw-unit intervals; empty when the parameter never
    /// shows a positive smoothed contribution.
    pub intervals: Vec<(f64, f64)>,
    /// For categorical parameters: the selected category labels (intervals
    /// stay empty).
    pub categories: Vec<String>,
    pub peak_smoothed_shap: f64,
    /// Samples falling inside the recommended region.
    pub support: usize,
}

/// Smoothed-curve data behind a [`TuningRange`], for plot output.
#[derive(Debug, Clone)]
pub struct RangeCurve {
    pub values: Vec<f64>,
    pub phi: Vec<f64>,
    pub smoothed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionHighlight {
    pub pair: (String, String),
    pub index: f64,
}

/// The actionable output of the pipeline, consumed by the guided optimizer.
#[derive(Debug, Clone, Serialize)]
pub struct TuningReport {
    pub algorithm: String,
    pub dataset: String,
    /// (param, global importance), descending, ties broken by name.
    pub ranking: Vec<(String, f64)>,
    pub selected: Vec<String>,
    pub ranges: Vec<TuningRange>,
    /// Non-selected parameters held at their defaults.
    pub fixed: BTreeMap<String, RawValue>,
    pub interaction_highlights: Vec<InteractionHighlight>,
    pub surrogate_r2: f64,
}

/// Centered moving average of width `w`; windows shrink at the edges instead
/// of inventing padding values.
pub fn moving_average<R: Real>(xs: &[R], w: usize) -> Vec<R> {
    let n = xs.len();
    let half_lo = (w.saturating_sub(1)) / 2;
    let half_hi = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi).min(n - 1);
            let mut s = R::zero();
            for &x in &xs[lo..=hi] {
                s = s + x;
            }
            s / R::from_usize_lossy(hi - lo + 1)
        })
        .collect()
}

/// Extract the recommended tuning region for one parameter from per-sample
/// raw values and matching Shapley values.
pub fn extract_ranges(
    param: &ParamSpec,
    values: &[f64],
    phi: &[f64],
    window_fraction: f64,
    tau: f64,
) -> Result<TuningRange> {
    Ok(extract_ranges_detailed(param, values, phi, window_fraction, tau)?.0)
}

/// As [`extract_ranges`], returning the sorted/smoothed curve too.
pub fn extract_ranges_detailed(
    param: &ParamSpec,
    values: &[f64],
    phi: &[f64],
    window_fraction: f64,
    tau: f64,
) -> Result<(TuningRange, RangeCurve)> {
    if values.len() != phi.len() {
        return Err(Error::validation(Stage::Insights, "values/phi length mismatch"));
    }
    let n = values.len();
    if n < 20 {
        return Err(Error::validation(
            Stage::Insights,
            format!("range extraction needs >= 20 samples, got {}", n),
        ));
    }
    let (lo_bound, hi_bound) = param.numeric_bounds();
    if values.iter().any(|&v| v < lo_bound || v > hi_bound) {
        return Err(Error::validation(Stage::Insights, format!("values outside bounds of '{}'", param.name)));
    }

    if let ParamKind::Categorical { categories } = &param.kind {
        return extract_categorical(param, categories, values, phi, tau);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let sorted_phi: Vec<f64> = order.iter().map(|&i| phi[i]).collect();

    let w = ((window_fraction * n as f64).ceil() as usize).max(5);
    let smoothed = moving_average(&sorted_phi, w);
    let peak = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let curve = RangeCurve {
        values: sorted_values.clone(),
        phi: sorted_phi,
        smoothed: smoothed.clone(),
    };

    if peak <= 0.0 {
        return Ok((
            TuningRange {
                param_name: param.name.clone(),
                intervals: Vec::new(),
                categories: Vec::new(),
                peak_smoothed_shap: peak,
                support: 0,
            },
            curve,
        ));
    }

    // Maximal runs where the smoothed curve clears the threshold.
    let threshold = tau * peak;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..n {
        let inside = smoothed[i] >= threshold && smoothed[i] > 0.0;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, n - 1));
    }

    // Merge runs separated by fewer than w samples.
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 - 1 < w => last.1 = run.1,
            _ => merged.push(run),
        }
    }

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for (s, e) in merged {
        let (lo, hi) = (sorted_values[s], sorted_values[e]);
        if lo < hi {
            intervals.push((lo, hi));
        }
    }
    let support = curve
        .values
        .iter()
        .filter(|&&v| intervals.iter().any(|&(lo, hi)| v >= lo && v <= hi))
        .count();

    Ok((
        TuningRange {
            param_name: param.name.clone(),
            intervals,
            categories: Vec::new(),
            peak_smoothed_shap: peak,
            support,
        },
        curve,
    ))
}

/// Categorical variant: the region degenerates to the category subset whose
/// mean Shapley value clears tau times the best category's mean; no
/// smoothing.
fn extract_categorical(
    param: &ParamSpec,
    categories: &[String],
    values: &[f64],
    phi: &[f64],
    tau: f64,
) -> Result<(TuningRange, RangeCurve)> {
    let m = categories.len();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&v, &p) in values.iter().zip(phi) {
        let idx = (v.round() as usize).min(m - 1);
        sums[idx] += p;
        counts[idx] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NEG_INFINITY })
        .collect();
    let peak = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let curve = RangeCurve {
        values: (0..m).map(|i| i as f64).collect(),
        phi: means.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect(),
        smoothed: means.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect(),
    };
    if peak <= 0.0 {
        return Ok((
            TuningRange {
                param_name: param.name.clone(),
                intervals: Vec::new(),
                categories: Vec::new(),
                peak_smoothed_shap: if peak.is_finite() { peak } else { 0.0 },
                support: 0,
            },
            curve,
        ));
    }
    let selected: Vec<usize> = (0..m).filter(|&i| means[i] >= tau * peak && means[i] > 0.0).collect();
    let support = selected.iter().map(|&i| counts[i]).sum();
    Ok((
        TuningRange {
            param_name: param.name.clone(),
            intervals: Vec::new(),
            categories: selected.iter().map(|&i| categories[i].clone()).collect(),
            peak_smoothed_shap: peak,
            support,
        },
        curve,
    ))
}

/// Assemble the report: rank by global importance, select the top `m`
/// (clamped to k), extract ranges for the selected parameters (full bounds
/// when a parameter never helps), fix the rest at defaults, and list the
/// strongest pairwise interactions.
pub fn build_report(
    attr: &AttributionResult,
    inter: &InteractionMatrix,
    space: &HyperparameterSpace,
    m: usize,
    interaction_threshold: Option<f64>,
    window_fraction: f64,
    tau: f64,
) -> Result<(TuningReport, BTreeMap<String, RangeCurve>)> {
    if m < 1 {
        return Err(Error::validation(Stage::Insights, "top-m must be >= 1"));
    }
    if attr.players != space.names() {
        return Err(Error::validation(Stage::Insights, "attribution players do not match space"));
    }
    let k = space.len();

    let mut ranking: Vec<(String, f64)> = attr
        .players
        .iter()
        .cloned()
        .zip(attr.global_importance.iter().cloned())
        .collect();
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite importances").then(a.0.cmp(&b.0)));

    let selected: Vec<String> = ranking.iter().take(m.min(k)).map(|(name, _)| name.clone()).collect();

    let mut ranges = Vec::new();
    let mut curves = BTreeMap::new();
    for name in &selected {
        let idx = space.index_of(name).expect("ranking names come from the space");
        let param = &space.params[idx];
        let values: Vec<f64> = attr
            .per_sample_values
            .iter()
            .map(|row| match &row[idx] {
                RawValue::Number(v) => Ok(*v),
                RawValue::Label(l) => {
                    if let ParamKind::Categorical { categories } = &param.kind {
                        Ok(categories.iter().position(|c| c == l).unwrap_or(0) as f64)
                    } else {
                        Err(Error::validation(Stage::Insights, "label value on numeric parameter"))
                    }
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let phi: Vec<f64> = attr.per_sample_phi.iter().map(|row| row[idx]).collect();
        let (mut range, curve) = extract_ranges_detailed(param, &values, &phi, window_fraction, tau)?;
        if range.intervals.is_empty() && range.categories.is_empty() {
            // Never-helpful parameter: fall back to its full bounds.
            match &param.kind {
                ParamKind::Categorical { categories } => range.categories = categories.clone(),
                _ => range.intervals = vec![param.numeric_bounds()],
            }
        }
        curves.insert(name.clone(), curve);
        ranges.push(range);
    }

    let fixed: BTreeMap<String, RawValue> = space
        .params
        .iter()
        .filter(|p| !selected.contains(&p.name))
        .map(|p| (p.name.clone(), p.default.clone()))
        .collect();

    let mut interaction_highlights = Vec::new();
    if inter.computed {
        let threshold = interaction_threshold
            .unwrap_or(0.25 * inter.max_abs_off_diagonal())
            .max(INTERACTION_FLOOR);
        for i in 0..k {
            for j in (i + 1)..k {
                let v = inter.values[i][j];
                if v.abs() >= threshold {
                    interaction_highlights.push(InteractionHighlight {
                        pair: (attr.players[i].clone(), attr.players[j].clone()),
                        index: v,
                    });
                }
            }
        }
        interaction_highlights.sort_by(|a, b| {
            b.index
                .abs()
                .partial_cmp(&a.index.abs())
                .expect("finite indices")
                .then(a.pair.cmp(&b.pair))
        });
    }

    Ok((
        TuningReport {
            algorithm: String::new(),
            dataset: String::new(),
            ranking,
            selected,
            ranges,
            fixed,
            interaction_highlights,
            surrogate_r2: 0.0,
        },
        curves,
    ))
}
