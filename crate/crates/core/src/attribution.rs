//! Shapley-value attribution of surrogate-predicted performance to individual
//! hyperparameters, with pairwise interaction indices.
//!
//! Hyperparameters are the players. The value of a coalition S is the mean
//! surrogate prediction over a background set of configurations in which the
//! dimensions in S are fixed to the target's values and the rest come from
//! the background row (interventional marginalization). Exact attribution
//! enumerates all 2^k coalitions (k <= 15); a permutation-sampling estimator
//! with standard errors covers larger spaces.
//!
//! Pairwise indices use the halved interaction weight |S|!(k-|S|-2)!/(2(k-1)!)
//! so that the matrix with diagonal phi_i minus its off-diagonal row sum adds
//! up to v(full) - v(empty) exactly.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, Stage};
use crate::scalar::Real;
use crate::seeding;
use crate::space::{HyperparameterSpace, RawValue};
use crate::surrogate::SurrogateModel;

/// Maximum player count for exact 2^k coalition enumeration.
pub const MAX_EXACT_PLAYERS: usize = 15;

/// Maximum player count for exact pairwise interaction indices.
pub const MAX_INTERACTION_PLAYERS: usize = 12;

/// A model the coalition game can evaluate.
pub trait ValueModel<R: Real>: Sync {
    fn predict_row(&self, x: &[R]) -> R;

    /// All 2^k coalition values in mask order. The default evaluates every
    /// hybrid point directly; tree ensembles override this with an exact
    /// shortcut.
    fn coalition_table(&self, target: &[R], background: &[Vec<R>]) -> Result<Vec<R>> {
        let k = target.len();
        if k > MAX_EXACT_PLAYERS {
            return Err(Error::validation(
                Stage::Attribution,
                format!("coalition enumeration supports k <= {}, got {}", MAX_EXACT_PLAYERS, k),
            ));
        }
        let mut table = Vec::with_capacity(1 << k);
        let mut hybrid = vec![R::zero(); k];
        for mask in 0u32..(1u32 << k) {
            let mut sum = R::zero();
            for b in background {
                for d in 0..k {
                    hybrid[d] = if mask & (1 << d) != 0 { target[d] } else { b[d] };
                }
                sum = sum + self.predict_row(&hybrid);
            }
            table.push(sum / R::from_usize_lossy(background.len()));
        }
        Ok(table)
    }
}

impl<R: Real> ValueModel<R> for crate::forest::RegressionForest<R> {
    fn predict_row(&self, x: &[R]) -> R {
        self.predict_unchecked(x)
    }

    fn coalition_table(&self, target: &[R], background: &[Vec<R>]) -> Result<Vec<R>> {
        RegressionForestTable::coalition_table(self, target, background)
    }
}

// Disambiguates the inherent method from the trait method.
struct RegressionForestTable;
impl RegressionForestTable {
    fn coalition_table<R: Real>(
        forest: &crate::forest::RegressionForest<R>,
        target: &[R],
        background: &[Vec<R>],
    ) -> Result<Vec<R>> {
        forest.coalition_table(target, background)
    }
}

impl ValueModel<f64> for SurrogateModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.forest.predict_unchecked(x)
    }

    fn coalition_table(&self, target: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.forest.coalition_table(target, background)
    }
}

/// One attribution problem: a model, a background set, and the target
/// configuration being explained.
pub struct CoalitionGame<'a, R: Real, M: ValueModel<R>> {
    model: &'a M,
    background: &'a [Vec<R>],
    target: Vec<R>,
    k: usize,
    cache: Option<Vec<R>>,
}

impl<'a, R: Real, M: ValueModel<R>> CoalitionGame<'a, R, M> {
    pub fn new(model: &'a M, background: &'a [Vec<R>], target: Vec<R>) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::validation(Stage::Attribution, "background set is empty"));
        }
        let k = target.len();
        if k == 0 || background.iter().any(|b| b.len() != k) {
            return Err(Error::validation(Stage::Attribution, "inconsistent player dimensions"));
        }
        Ok(CoalitionGame {
            model,
            background,
            target,
            k,
            cache: None,
        })
    }

    pub fn players(&self) -> usize {
        self.k
    }

    /// v(S): mean prediction over background rows with dimensions in S fixed
    /// to the target's values. v(empty) is the mean background prediction and
    /// v(full) the prediction at the target.
    pub fn coalition_value(&self, subset: &[usize]) -> Result<R> {
        let mut mask = 0u32;
        for &p in subset {
            if p >= self.k {
                return Err(Error::validation(
                    Stage::Attribution,
                    format!("player {} out of range for k={}", p, self.k),
                ));
            }
            mask |= 1 << p;
        }
        Ok(self.value_of_mask(mask))
    }

    fn value_of_mask(&self, mask: u32) -> R {
        if let Some(cache) = &self.cache {
            return cache[mask as usize];
        }
        let mut hybrid = vec![R::zero(); self.k];
        let mut sum = R::zero();
        for b in self.background {
            for d in 0..self.k {
                hybrid[d] = if mask & (1 << d) != 0 { self.target[d] } else { b[d] };
            }
            sum = sum + self.model.predict_row(&hybrid);
        }
        sum / R::from_usize_lossy(self.background.len())
    }

    /// Compute and retain all 2^k coalition values.
    pub fn ensure_cache(&mut self) -> Result<&[R]> {
        if self.k > MAX_EXACT_PLAYERS {
            return Err(Error::validation(
                Stage::Attribution,
                format!(
                    "exact enumeration supports k <= {}; use shapley_sampled for k = {}",
                    MAX_EXACT_PLAYERS, self.k
                ),
            ));
        }
        if self.cache.is_none() {
            self.cache = Some(self.model.coalition_table(&self.target, self.background)?);
        }
        Ok(self.cache.as_deref().expect("just filled"))
    }
}

/// Shapley values by full coalition enumeration (k <= 15).
pub fn shapley_exact<R: Real, M: ValueModel<R>>(game: &mut CoalitionGame<'_, R, M>) -> Result<Vec<R>> {
    let k = game.players();
    game.ensure_cache()?;
    let table = game.cache.as_deref().expect("cached");
    Ok(shapley_from_table(table, k))
}

/// Shapley values from a full table of 2^k coalition values (mask order).
pub fn shapley_from_table<R: Real>(table: &[R], k: usize) -> Vec<R> {
    assert_eq!(table.len(), 1 << k, "table must hold 2^k values");
    let weights: Vec<R> = (0..k)
        .map(|s| R::from_f64_lossy(factorial(s) * factorial(k - s - 1) / factorial(k)))
        .collect();
    let mut phi = vec![R::zero(); k];
    for mask in 0u32..(1u32 << k) {
        let size = mask.count_ones() as usize;
        for (i, phi_i) in phi.iter_mut().enumerate() {
            let bit = 1u32 << i;
            if mask & bit == 0 {
                let gain = table[(mask | bit) as usize] - table[mask as usize];
                *phi_i = *phi_i + weights[size] * gain;
            }
        }
    }
    phi
}

/// Permutation-sampling Shapley estimate with per-player standard errors.
/// For each sampled permutation the players are added in order and their
/// marginal contributions accumulated; deterministic given the seed.
pub fn shapley_sampled<R: Real, M: ValueModel<R>>(
    game: &mut CoalitionGame<'_, R, M>,
    n_permutations: usize,
    seed: u64,
) -> Result<(Vec<R>, Vec<R>)> {
    if n_permutations < 100 {
        return Err(Error::validation(
            Stage::Attribution,
            format!("n_permutations must be >= 100, got {}", n_permutations),
        ));
    }
    let k = game.players();
    if k <= MAX_EXACT_PLAYERS {
        // Value lookups hit the exact table; the estimator itself is unchanged.
        game.ensure_cache()?;
    }
    let mut rng = seeding::stream(seed, "shapley-perms", 0);
    let mut order: Vec<usize> = (0..k).collect();
    // Welford accumulators per player.
    let mut mean = vec![R::zero(); k];
    let mut m2 = vec![R::zero(); k];
    for t in 0..n_permutations {
        order.shuffle(&mut rng);
        let mut mask = 0u32;
        let mut prev = game.value_of_mask(0);
        for &p in &order {
            mask |= 1 << p;
            let cur = game.value_of_mask(mask);
            let marginal = cur - prev;
            prev = cur;
            let count = R::from_usize_lossy(t + 1);
            let delta = marginal - mean[p];
            mean[p] = mean[p] + delta / count;
            m2[p] = m2[p] + delta * (marginal - mean[p]);
        }
    }
    let n = R::from_usize_lossy(n_permutations);
    let se = m2
        .iter()
        .map(|&s| (s / (n - R::one())).sqrt() / n.sqrt())
        .collect();
    Ok((mean, se))
}

/// Pairwise Shapley interaction index for players i and j, i != j (k <= 12):
/// sum over S excluding both of |S|!(k-|S|-2)!/(2(k-1)!) times the mixed
/// second difference v(S+ij) - v(S+i) - v(S+j) + v(S).
pub fn interaction_exact<R: Real, M: ValueModel<R>>(
    game: &mut CoalitionGame<'_, R, M>,
    i: usize,
    j: usize,
) -> Result<R> {
    let k = game.players();
    if i == j {
        return Err(Error::validation(Stage::Attribution, "interaction requires i != j"));
    }
    if i >= k || j >= k {
        return Err(Error::validation(Stage::Attribution, "player index out of range"));
    }
    if k > MAX_INTERACTION_PLAYERS {
        return Err(Error::validation(
            Stage::Attribution,
            format!("exact interactions support k <= {}, got {}", MAX_INTERACTION_PLAYERS, k),
        ));
    }
    game.ensure_cache()?;
    let table = game.cache.as_deref().expect("cached");
    Ok(interaction_from_table(table, k, i, j))
}

/// Interaction index from a full coalition table.
pub fn interaction_from_table<R: Real>(table: &[R], k: usize, i: usize, j: usize) -> R {
    assert!(i != j && i < k && j < k);
    assert_eq!(table.len(), 1 << k);
    let weights: Vec<R> = (0..k.saturating_sub(1))
        .map(|s| R::from_f64_lossy(factorial(s) * factorial(k - s - 2) / (2.0 * factorial(k - 1))))
        .collect();
    let bi = 1u32 << i;
    let bj = 1u32 << j;
    let mut total = R::zero();
    for mask in 0u32..(1u32 << k) {
        if mask & (bi | bj) != 0 {
            continue;
        }
        let s = mask.count_ones() as usize;
        let delta = table[(mask | bi | bj) as usize] - table[(mask | bi) as usize]
            - table[(mask | bj) as usize]
            + table[mask as usize];
        total = total + weights[s] * delta;
    }
    total
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// How the per-sample Shapley values were computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AttributionMethod {
    Exact,
    Sampled { n_permutations: usize },
}

/// Per-sample Shapley values over an explain set plus their aggregate.
#[derive(Debug, Clone)]
pub struct AttributionResult {
    pub players: Vec<String>,
    /// phi[sample][player].
    pub per_sample_phi: Vec<Vec<f64>>,
    /// Raw (decoded) per-sample values, aligned with `per_sample_phi`.
    pub per_sample_values: Vec<Vec<RawValue>>,
    /// v(empty): mean background prediction, shared by all samples.
    pub base_value: f64,
    /// Mean |phi_i| over samples.
    pub global_importance: Vec<f64>,
    pub method: AttributionMethod,
}

/// Symmetric pairwise interaction matrix. The diagonal carries the main
/// effects: phi_i minus the off-diagonal row sum, which makes the full matrix
/// sum to v(full) - v(empty).
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    pub values: Vec<Vec<f64>>,
    /// False when k exceeded the exact-interaction limit and the matrix is
    /// all zeros.
    pub computed: bool,
}

impl InteractionMatrix {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.k() {
            for j in 0..self.k() {
                if i != j {
                    m = m.max(self.values[i][j].abs());
                }
            }
        }
        m
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }
}

/// Explain every sample in `explain` against `background`: per-sample Shapley
/// values (exact for k <= 15, sampled beyond), global importances as mean
/// |phi|, and the interaction matrix at the explain set's medoid.
pub fn global_attribution(
    model: &SurrogateModel,
    space: &HyperparameterSpace,
    background: &[Vec<f64>],
    explain: &[Vec<f64>],
    seed: u64,
) -> Result<(AttributionResult, InteractionMatrix)> {
    if explain.is_empty() {
        return Err(Error::validation(Stage::Attribution, "explain set is empty"));
    }
    let k = space.len();
    if background.is_empty() {
        return Err(Error::validation(Stage::Attribution, "background set is empty"));
    }
    if background.iter().chain(explain).any(|r| r.len() != k) {
        return Err(Error::validation(Stage::Attribution, "row width does not match space"));
    }

    let exact = k <= MAX_EXACT_PLAYERS;
    let n_permutations = 2000usize;
    let per_sample_phi: Vec<Vec<f64>> = explain
        .par_iter()
        .map(|x| -> Result<Vec<f64>> {
            let mut game = CoalitionGame::new(model, background, x.clone())?;
            if exact {
                shapley_exact(&mut game)
            } else {
                Ok(shapley_sampled(&mut game, n_permutations, seed)?.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let game0 = CoalitionGame::new(model, background, explain[0].clone())?;
    let base_value = game0.coalition_value(&[])?;

    let mut global_importance = vec![0.0; k];
    for phi in &per_sample_phi {
        for (g, &p) in global_importance.iter_mut().zip(phi) {
            *g += p.abs();
        }
    }
    for g in &mut global_importance {
        *g /= per_sample_phi.len() as f64;
    }

    let medoid = medoid_index(explain);
    let interactions = if k <= MAX_INTERACTION_PLAYERS {
        let mut game = CoalitionGame::new(model, background, explain[medoid].clone())?;
        let phi = shapley_exact(&mut game)?;
        let mut values = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let v = interaction_exact(&mut game, i, j)?;
                values[i][j] = v;
                values[j][i] = v;
            }
        }
        for i in 0..k {
            let row_sum: f64 = (0..k).filter(|&j| j != i).map(|j| values[i][j]).sum();
            values[i][i] = phi[i] - row_sum;
        }
        InteractionMatrix {
            values,
            computed: true,
        }
    } else {
        InteractionMatrix {
            values: vec![vec![0.0; k]; k],
            computed: false,
        }
    };

    let per_sample_values: Vec<Vec<RawValue>> = explain
        .iter()
        .map(|x| -> Result<Vec<RawValue>> {
            let cfg = space.decode(x)?;
            Ok(space.params.iter().map(|p| cfg[&p.name].clone()).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let result = AttributionResult {
        players: space.names(),
        per_sample_phi,
        per_sample_values,
        base_value,
        global_importance,
        method: if exact {
            AttributionMethod::Exact
        } else {
            AttributionMethod::Sampled { n_permutations }
        },
    };
    Ok((result, interactions))
}

/// Index of the sample minimizing total distance to the others (ties to the
/// lowest index).
fn medoid_index(rows: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_cost = f64::INFINITY;
    for (i, a) in rows.iter().enumerate() {
        let mut cost = 0.0;
        for b in rows {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            cost += d2.sqrt();
        }
        if cost < best_cost {
            best_cost = cost;
            best = i;
        }
    }
    best
}

/// Serialize an attribution result (with its interaction matrix) to the
/// published JSON shape.
pub fn attribution_to_json(attr: &AttributionResult, inter: &InteractionMatrix) -> serde_json::Value {
    let per_sample: Vec<serde_json::Value> = attr
        .per_sample_phi
        .iter()
        .zip(&attr.per_sample_values)
        .map(|(phi, values)| {
            serde_json::json!({
                "config_values": values,
                "phi": phi,
            })
        })
        .collect();
    serde_json::json!({
        "base_value": attr.base_value,
        "players": attr.players,
        "global_importance": attr.global_importance,
        "per_sample": per_sample,
        "interactions": inter.values,
        "method": serde_json::to_value(&attr.method).expect("method serializes"),
    })
}
