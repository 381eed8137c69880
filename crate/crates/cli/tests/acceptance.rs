//! Acceptance suite: one test per criterion, each printing a pass line with
//! its elapsed time and asserting the stated runtime budget.
//!
//! A global gate serializes the criteria so budgets are measured unshared;
//! criteria 4 and 5 reuse one 20-seed pipeline fixture built on first use.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use hpguide::attribution::{
    interaction_from_table, shapley_exact, shapley_from_table, shapley_sampled, CoalitionGame,
    ValueModel,
};
use hpguide::benchgen::{generate_kb, make_quadratic_surface, DatasetTruth, KbGenConfig};
use hpguide::design;
use hpguide::gp::{ei_closed_form, gp_fit};
use hpguide::insights::TuningReport;
use hpguide::pipeline::{compare, recommend, CompareParams, ObjectiveSpec, RecommendParams};
use hpguide::retrieval::{knn, normalize};
use hpguide::seeding;
use hpguide::stats::spearman;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn finish(name: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    println!("[PASS] {} ({:.1}s, budget {:.0}s)", name, elapsed.as_secs_f64(), budget.as_secs_f64());
    assert!(
        elapsed < budget,
        "{} exceeded its runtime budget: {:?} >= {:?}",
        name,
        elapsed,
        budget
    );
}

// ---------------------------------------------------------------------------
// Criterion 1: Shapley axioms on randomized games.
// ---------------------------------------------------------------------------

fn random_table(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..(1usize << k)).map(|_| rng.random::<f64>()).collect()
}

/// Swap the roles of players a and b in every coalition mask.
fn swap_players(table: &[f64], k: usize, a: usize, b: usize) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for mask in 0u32..(1u32 << k) {
        let bit_a = (mask >> a) & 1;
        let bit_b = (mask >> b) & 1;
        let mut swapped = mask & !((1 << a) | (1 << b));
        swapped |= bit_b << a;
        swapped |= bit_a << b;
        out[swapped as usize] = table[mask as usize];
    }
    out
}

#[test]
fn criterion_01_shapley_axioms() {
    let _g = gate();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for game in 0..60 {
        let k = 2 + (game % 9); // 2..=10
        let table = random_table(k, &mut rng);
        let phi = shapley_from_table(&table, k);

        // Efficiency.
        let total: f64 = phi.iter().sum();
        let expected = table[(1usize << k) - 1] - table[0];
        assert!((total - expected).abs() <= 1e-8, "efficiency: {} vs {}", total, expected);

        // Dummy: rebuild the table so player 0 never changes the value.
        let mut dummy = table.clone();
        for mask in 0u32..(1u32 << k) {
            dummy[mask as usize] = table[(mask & !1) as usize];
        }
        let phi_dummy = shapley_from_table(&dummy, k);
        assert_eq!(phi_dummy[0], 0.0, "dummy axiom");

        // Symmetry: symmetrize players 0 and 1.
        let swapped = swap_players(&table, k, 0, 1);
        let symmetric: Vec<f64> = table.iter().zip(&swapped).map(|(a, b)| (a + b) / 2.0).collect();
        let phi_sym = shapley_from_table(&symmetric, k);
        assert!((phi_sym[0] - phi_sym[1]).abs() <= 1e-10, "symmetry: {} vs {}", phi_sym[0], phi_sym[1]);

        // Linearity.
        let table2 = random_table(k, &mut rng);
        let (a, b) = (rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
        let combo: Vec<f64> = table.iter().zip(&table2).map(|(x, y)| a * x + b * y).collect();
        let phi2 = shapley_from_table(&table2, k);
        let phi_combo = shapley_from_table(&combo, k);
        for i in 0..k {
            let lin = a * phi[i] + b * phi2[i];
            assert!((phi_combo[i] - lin).abs() <= 1e-10, "linearity at {}: {} vs {}", i, phi_combo[i], lin);
        }
    }
    finish("criterion 1: shapley axioms", t0, Duration::from_secs(60));
}

// ---------------------------------------------------------------------------
// Criterion 2: brute-force oracle equivalence.
// ---------------------------------------------------------------------------

/// Independent direct-formula enumerator (the oracle).
fn shapley_oracle(table: &[f64], k: usize) -> Vec<f64> {
    fn fact(n: usize) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }
    (0..k)
        .map(|i| {
            let mut phi = 0.0;
            for mask in 0u32..(1u32 << k) {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                let w = fact(s) * fact(k - s - 1) / fact(k);
                phi += w * (table[(mask | (1 << i)) as usize] - table[mask as usize]);
            }
            phi
        })
        .collect()
}

#[test]
fn criterion_02_brute_force_oracle_equivalence() {
    let _g = gate();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    for k in 1..=6usize {
        for _ in 0..10 {
            let table = random_table(k, &mut rng);
            let phi = shapley_from_table(&table, k);
            let oracle = shapley_oracle(&table, k);
            for i in 0..k {
                assert!(
                    (phi[i] - oracle[i]).abs() <= 1e-12,
                    "k={} player {}: {} vs {}",
                    k,
                    i,
                    phi[i],
                    oracle[i]
                );
            }
        }
    }
    // k=2 interaction: the only coalition is the empty set, so the index is
    // half the mixed second difference - enumerated here by hand.
    for _ in 0..10 {
        let t = random_table(2, &mut rng);
        let hand = 0.5 * (t[0b11] - t[0b01] - t[0b10] + t[0b00]);
        let got = interaction_from_table(&t, 2, 0, 1);
        assert!((got - hand).abs() <= 1e-12, "{} vs {}", got, hand);
    }
    finish("criterion 2: brute-force oracle equivalence", t0, Duration::from_secs(60));
}

// ---------------------------------------------------------------------------
// Criterion 3: sampling consistency.
// ---------------------------------------------------------------------------

struct TableModel {
    table: Vec<f64>,
}

impl ValueModel<f64> for TableModel {
    fn predict_row(&self, _x: &[f64]) -> f64 {
        unreachable!("tabulated game")
    }

    fn coalition_table(&self, _t: &[f64], _b: &[Vec<f64>]) -> hpguide::Result<Vec<f64>> {
        Ok(self.table.clone())
    }
}

#[test]
fn criterion_03_sampling_consistency() {
    let _g = gate();
    let t0 = Instant::now();

    // Forest-backed benchgen game at k=4: estimator within 3 SE of exact.
    let cfg = KbGenConfig {
        n_datasets: 4,
        configs_per_dataset: 150,
        k: 4,
        n_relevant: 2,
        seed: 3003,
        ..Default::default()
    };
    let (kb, _) = generate_kb(&cfg).unwrap();
    let query = kb.meta_registry["d00"].clone();
    let mut params = RecommendParams::new(&cfg.algorithm_id);
    params.k_neighbors = 2;
    params.background_size = 64;
    params.explain_size = 64;
    let outcome = recommend(&kb, &query, Some("d00"), &params).unwrap();
    let background: Vec<Vec<f64>> = (0..32).map(|i| design::halton_point(1 + i as u64, 4)).collect();
    let target = design::halton_point(77, 4);
    let mut game = CoalitionGame::new(&outcome.surrogate, &background, target).unwrap();
    let exact = shapley_exact(&mut game).unwrap();
    let (est, se) = shapley_sampled(&mut game, 2000, 31).unwrap();
    for i in 0..4 {
        let tol = 3.0 * se[i] + 1e-12;
        assert!(
            (est[i] - exact[i]).abs() <= tol,
            "player {}: sampled {} exact {} se {}",
            i,
            est[i],
            exact[i],
            se[i]
        );
    }

    // Tabulated games k <= 6, same 3-SE bound.
    let mut rng = ChaCha8Rng::seed_from_u64(3030);
    for k in 2..=6usize {
        let model = TableModel {
            table: random_table(k, &mut rng),
        };
        let bg = vec![vec![0.0; k]];
        let mut game = CoalitionGame::new(&model, &bg, vec![0.0; k]).unwrap();
        let exact = shapley_exact(&mut game).unwrap();
        let (est, se) = shapley_sampled(&mut game, 2000, k as u64).unwrap();
        for i in 0..k {
            assert!((est[i] - exact[i]).abs() <= 3.0 * se[i] + 1e-12, "k={} player {}", k, i);
        }
    }

    // SE scales as 1/sqrt(n) within 20% across a 4x sweep, averaged over 10
    // seeds.
    let model = TableModel {
        table: random_table(5, &mut rng),
    };
    let bg = vec![vec![0.0; 5]];
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let mut game = CoalitionGame::new(&model, &bg, vec![0.0; 5]).unwrap();
        let (_, se_small) = shapley_sampled(&mut game, 500, 100 + seed).unwrap();
        let (_, se_big) = shapley_sampled(&mut game, 2000, 200 + seed).unwrap();
        ratios.push(hpguide::stats::mean(&se_small) / hpguide::stats::mean(&se_big));
    }
    let mean_ratio = hpguide::stats::mean(&ratios);
    assert!(
        (mean_ratio / 2.0 - 1.0).abs() <= 0.2,
        "4x sweep SE ratio {} (expected ~2)",
        mean_ratio
    );
    finish("criterion 3: sampling consistency", t0, Duration::from_secs(120));
}

// ---------------------------------------------------------------------------
// Criteria 4 & 5: shared 20-seed full-pipeline fixture.
// ---------------------------------------------------------------------------

struct SeedRun {
    importances: Vec<f64>,
    report: TuningReport,
    truth: DatasetTruth,
}

static FIXTURE: OnceLock<Vec<SeedRun>> = OnceLock::new();

fn fixture() -> &'static [SeedRun] {
    FIXTURE.get_or_init(|| {
        (0..20u64)
            .map(|seed| {
                let cfg = KbGenConfig {
                    seed,
                    ..Default::default()
                }; // k=8, n_relevant=3, noise 0.01, 10 x 400
                let (kb, truths) = generate_kb(&cfg).unwrap();
                let target = "d00";
                let query = kb.meta_registry[target].clone();
                let mut params = RecommendParams::new(&cfg.algorithm_id);
                params.k_neighbors = 4; // the target's cluster, minus itself
                params.seed = 1000 + seed;
                let outcome = recommend(&kb, &query, Some(target), &params).unwrap();
                let truth = truths.into_iter().find(|t| t.dataset_id == target).unwrap();
                SeedRun {
                    importances: outcome.attribution.global_importance.clone(),
                    report: outcome.report,
                    truth,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_04_importance_ranking_recovery() {
    let _g = gate();
    let t0 = Instant::now();
    // Ground-truth contributions of irrelevant parameters are exactly zero;
    // tie-aware Spearman needs matching ties on the recovered side, so
    // importances below 5% of the per-run maximum are treated as zero.
    let mut rhos: Vec<f64> = fixture()
        .iter()
        .map(|run| {
            let max = run.importances.iter().cloned().fold(0.0f64, f64::max);
            let floored: Vec<f64> = run
                .importances
                .iter()
                .map(|&g| if g < 0.05 * max { 0.0 } else { g })
                .collect();
            spearman(&floored, &run.truth.truth.variance_contributions)
        })
        .collect();
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = rhos[rhos.len() / 2];
    println!("  spearman rho per seed: median {:.3}, min {:.3}", median, rhos[0]);
    assert!(median >= 0.9, "median spearman {} < 0.9", median);
    finish("criterion 4: importance-ranking recovery", t0, Duration::from_secs(300));
}

fn jaccard(intervals: &[(f64, f64)], region: (f64, f64)) -> f64 {
    let (glo, ghi) = region;
    let mut inter = 0.0;
    let mut ivs_len = 0.0;
    for &(lo, hi) in intervals {
        inter += (hi.min(ghi) - lo.max(glo)).max(0.0);
        ivs_len += hi - lo;
    }
    let union = ivs_len + (ghi - glo) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[test]
fn criterion_05_tuning_range_recovery() {
    let _g = gate();
    let t0 = Instant::now();
    let mut scores: Vec<f64> = Vec::new();
    for run in fixture() {
        for (name, &region) in &run.truth.truth.good_regions {
            let intervals: Vec<(f64, f64)> = run
                .report
                .ranges
                .iter()
                .find(|r| &r.param_name == name)
                .map(|r| r.intervals.clone())
                .unwrap_or_default();
            scores.push(jaccard(&intervals, region));
        }
    }
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = scores[scores.len() / 2];
    println!("  jaccard overlap: median {:.3}, min {:.3}, n={}", median, scores[0], scores.len());
    assert!(median >= 0.5, "median jaccard {} < 0.5", median);
    finish("criterion 5: tuning-range recovery", t0, Duration::from_secs(180));
}

// ---------------------------------------------------------------------------
// Criterion 6: guided-BO speedup.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_guided_bo_speedup() {
    let _g = gate();
    let t0 = Instant::now();
    let cfg = KbGenConfig {
        n_relevant: 2,
        seed: 11,
        ..Default::default()
    }; // 8 params, 2 relevant
    let (kb, truths) = generate_kb(&cfg).unwrap();
    let target = "d00";
    let truth = truths.iter().find(|t| t.dataset_id == target).unwrap();
    let query = kb.meta_registry[target].clone();
    let mut params = RecommendParams::new(&cfg.algorithm_id);
    params.k_neighbors = 4;
    params.seed = 77;
    let compare_params = CompareParams {
        budget: 30,
        epsilon: 0.02,
        seeds: (100..120).collect(),
        ..Default::default()
    };
    let spec = ObjectiveSpec::Surface {
        surface: truth.surface.clone(),
        noise_sigma: 0.0,
        optimum: Some(truth.truth.optimum_value),
    };
    let (_, outcome) = compare(&kb, &query, Some(target), &params, &compare_params, &spec).unwrap();

    let optimum = truth.truth.optimum_value;
    let iters = |traces: &[hpguide::optimizer::BoTrace]| -> Vec<usize> {
        traces
            .iter()
            .map(|t| t.first_iteration_reaching(optimum - 0.02).unwrap_or(t.budget + 1))
            .collect()
    };
    let mut vanilla = iters(&outcome.vanilla);
    let mut guided = iters(&outcome.guided);
    vanilla.sort_unstable();
    guided.sort_unstable();
    let median_vanilla = vanilla[vanilla.len() / 2] as f64;
    let median_guided = guided[guided.len() / 2] as f64;
    println!("  median iterations to within 0.02: vanilla {}, guided {}", median_vanilla, median_guided);
    assert!(
        median_guided <= 0.5 * median_vanilla,
        "guided median {} > half of vanilla median {}",
        median_guided,
        median_vanilla
    );

    // Warm-start analog: first guided evaluation lands near the optimum.
    for trace in &outcome.guided {
        let first = trace.points[0].best_so_far;
        assert!(
            first >= optimum - 0.05,
            "guided first evaluation {} below optimum {} - 0.05",
            first,
            optimum
        );
    }
    finish("criterion 6: guided-BO speedup", t0, Duration::from_secs(600));
}

// ---------------------------------------------------------------------------
// Criterion 7: search-space reduction.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_search_space_reduction() {
    let _g = gate();
    let t0 = Instant::now();
    for k in [8usize, 10, 12] {
        let cfg = KbGenConfig {
            k,
            n_relevant: 3,
            configs_per_dataset: 150,
            seed: 700 + k as u64,
            ..Default::default()
        };
        let (kb, _) = generate_kb(&cfg).unwrap();
        let query = kb.meta_registry["d00"].clone();
        let mut params = RecommendParams::new(&cfg.algorithm_id);
        params.k_neighbors = 4;
        params.background_size = 96;
        params.explain_size = 96;
        let outcome = recommend(&kb, &query, Some("d00"), &params).unwrap();
        assert_eq!(outcome.report.selected.len(), 3, "k={}", k);
        let reduction = 1.0 - 3.0 / k as f64;
        println!("  k={}: selected 3, search-space reduction {:.0}%", k, reduction * 100.0);
        assert!(reduction >= 0.6, "k={}: reduction {:.2} < 60%", k, reduction);
        // Selected and fixed partition the space.
        assert_eq!(outcome.report.selected.len() + outcome.report.fixed.len(), k);
    }
    finish("criterion 7: search-space reduction", t0, Duration::from_secs(60));
}

// ---------------------------------------------------------------------------
// Criterion 8: surrogate and GP sanity.
// ---------------------------------------------------------------------------

/// Numeric EI oracle: Simpson integration of the improvement integral.
fn ei_quadrature(mu: f64, sigma: f64, best: f64) -> f64 {
    let lo = ((best - mu) / sigma).max(-12.0);
    let hi = 12.0f64;
    let n = 40_000usize;
    let h = (hi - lo) / n as f64;
    let integrand = |z: f64| -> f64 {
        let improvement = (mu + sigma * z - best).max(0.0);
        improvement * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut s = integrand(lo) + integrand(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn criterion_08_surrogate_and_gp_sanity() {
    let _g = gate();
    let t0 = Instant::now();

    // Forest holdout R^2 on the benchgen quadratic, 2000 rows, noise 0.01.
    let (surface, _) = make_quadratic_surface(4, 3, 0.01, 3).unwrap();
    let mut rng = seeding::stream(5, "rows", 0);
    let rows: Vec<Vec<f64>> = design::latin_hypercube(2000, 4, &mut rng);
    use rand_distr::Distribution;
    let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
    let y: Vec<f64> = rows
        .iter()
        .map(|u| (surface.eval_unit(u) + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    let model = hpguide::surrogate::fit_rows_with(&rows, &y, 0, 9, &Default::default()).unwrap();
    println!("  forest holdout r2 = {:.4}", model.holdout_r2);
    assert!(model.holdout_r2 >= 0.8, "holdout r2 {}", model.holdout_r2);

    // GP interpolates noiseless training points within 1e-3.
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
    let fy: Vec<f64> = x.iter().map(|p| 0.5 + 0.3 * (3.0 * p[0]).sin()).collect();
    let gp = gp_fit(&x, &fy, 2).unwrap();
    for (p, &target) in x.iter().zip(&fy) {
        let (mu, _) = gp.posterior(p);
        assert!((mu - target).abs() <= 1e-3, "GP at {:?}: {} vs {}", p, mu, target);
    }

    // EI closed form matches quadrature within 1e-6 at 20 probe points.
    let probes = [
        (0.3, 0.5, 0.4),
        (0.4, 0.5, 0.4),
        (0.5, 0.5, 0.4),
        (0.9, 0.5, 0.4),
        (0.1, 0.05, 0.4),
        (0.4, 0.05, 0.4),
        (0.41, 0.05, 0.4),
        (0.6, 0.05, 0.4),
        (0.0, 1.0, 0.0),
        (0.5, 1.0, 0.0),
        (-0.5, 1.0, 0.0),
        (1.5, 1.0, 0.0),
        (0.2, 0.01, 0.25),
        (0.25, 0.01, 0.25),
        (0.3, 0.01, 0.25),
        (0.7, 2.0, 0.4),
        (-1.0, 0.3, 0.4),
        (0.45, 0.2, 0.4),
        (0.35, 0.2, 0.4),
        (1.0, 0.001, 0.4),
    ];
    assert_eq!(probes.len(), 20);
    for (mu, sigma, best) in probes {
        let closed = ei_closed_form(mu, sigma, best);
        let numeric = ei_quadrature(mu, sigma, best);
        assert!(
            (closed - numeric).abs() <= 1e-6,
            "EI(mu={}, sigma={}, best={}): closed {} vs quadrature {}",
            mu,
            sigma,
            best,
            closed,
            numeric
        );
    }
    finish("criterion 8: surrogate and GP sanity", t0, Duration::from_secs(120));
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism of the CLI commands.
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_hpguide"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().to_string(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_09_byte_identical_outputs() {
    let _g = gate();
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let kb_dir = tmp.path().join("kb");
    let status = run_cli(&["benchgen", "--out", kb_dir.to_str().unwrap(), "--seed", "9"]);
    assert!(status.status.success(), "benchgen failed: {}", String::from_utf8_lossy(&status.stderr));

    for (command, extra) in [
        ("recommend", Vec::new()),
        ("compare", vec!["--budget", "30", "--paired-runs", "1"]),
    ] {
        let out_a = tmp.path().join(format!("{}_a", command));
        let out_b = tmp.path().join(format!("{}_b", command));
        for out in [&out_a, &out_b] {
            let mut args = vec![
                command,
                "--kb",
                kb_dir.to_str().unwrap(),
                "--algorithm",
                "synth_model",
                "--dataset-id",
                "d03",
                "--k-neighbors",
                "4",
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ];
            args.extend(extra.iter());
            let output = run_cli(&args);
            assert!(
                output.status.success(),
                "{} failed: {}",
                command,
                String::from_utf8_lossy(&output.stderr)
            );
        }
        let a = dir_bytes(&out_a);
        let b = dir_bytes(&out_b);
        assert_eq!(a.len(), b.len());
        for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
            assert_eq!(name_a, name_b);
            assert_eq!(bytes_a, bytes_b, "{} {} differs between runs", command, name_a);
        }
        println!("  {}: {} files byte-identical", command, a.len());
    }
    finish("criterion 9: determinism", t0, Duration::from_secs(300));
}

// ---------------------------------------------------------------------------
// Criterion 10: retrieval correctness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_retrieval_correctness() {
    let _g = gate();
    let t0 = Instant::now();
    let cfg = KbGenConfig {
        configs_per_dataset: 20,
        seed: 1010,
        ..Default::default()
    };
    let (kb, truths) = generate_kb(&cfg).unwrap();
    let (normalized, stats) = normalize(&kb.meta_registry).unwrap();
    let cluster_of: std::collections::BTreeMap<&str, usize> =
        truths.iter().map(|t| (t.dataset_id.as_str(), t.cluster)).collect();

    for t in &truths {
        // Self-retrieval at distance zero.
        let nbhd = knn(&kb.meta_registry[&t.dataset_id], &normalized, &stats, 1, None).unwrap();
        assert_eq!(nbhd.entries[0].0, t.dataset_id);
        assert_eq!(nbhd.entries[0].1, 0.0);

        // Leave-one-out exclusion plus 100% cluster purity.
        let nbhd = knn(&kb.meta_registry[&t.dataset_id], &normalized, &stats, 4, Some(&t.dataset_id)).unwrap();
        assert_eq!(nbhd.entries.len(), 4);
        for (id, _) in &nbhd.entries {
            assert_ne!(id, &t.dataset_id, "leave-one-out exclusion failed");
            assert_eq!(
                cluster_of[id.as_str()],
                t.cluster,
                "query {} pulled {} from another cluster",
                t.dataset_id,
                id
            );
        }
    }
    println!("  purity 100% over {} leave-one-out queries", truths.len());
    finish("criterion 10: retrieval correctness", t0, Duration::from_secs(60));
}
