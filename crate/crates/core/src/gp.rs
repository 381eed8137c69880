//! Gaussian process regression with a squared-exponential ARD kernel,
//! constant mean, and expected improvement for maximization.
//!
//! Hyperparameters (per-dimension length scales, signal variance, noise) are
//! set by maximizing the log marginal likelihood with a multi-start
//! Nelder-Mead search clamped to a log-space box. Inputs are expected in the
//! unit cube.

use rand::Rng;

use crate::error::{Error, Result, Stage};
use crate::scalar::Real;
use crate::seeding;
use crate::stats::{normal_cdf, normal_pdf};

const BASE_JITTER: f64 = 1e-6;
const NOISE_LO: f64 = 1e-6;
const NOISE_HI: f64 = 1e-2;
const LS_LO: f64 = 0.03;
const LS_HI: f64 = 30.0;
const SIGNAL_LO: f64 = 1e-4;
const SIGNAL_HI: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct GpConfig {
    pub restarts: usize,
    pub max_opt_iters: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 8,
            max_opt_iters: 120,
            seed: 0,
        }
    }
}

/// Fitted Gaussian process.
#[derive(Debug, Clone)]
pub struct GaussianProcess<R> {
    x: Vec<Vec<R>>,
    mean: R,
    chol: Cholesky<R>,
    alpha: Vec<R>,
    pub length_scales: Vec<R>,
    pub signal_var: R,
    pub noise_var: R,
    pub log_marginal_likelihood: R,
}

#[derive(Debug, Clone)]
struct Cholesky<R> {
    l: Vec<R>,
    n: usize,
}

impl<R: Real> Cholesky<R> {
    /// Lower-triangular factorization; None when the matrix is not positive
    /// definite.
    fn factor(a: &[R], n: usize) -> Option<Self> {
        let mut l = vec![R::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for t in 0..j {
                    s = s - l[i * n + t] * l[j * n + t];
                }
                if i == j {
                    if s <= R::zero() {
                        return None;
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { l, n })
    }

    fn solve_lower(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        let mut y = vec![R::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for t in 0..i {
                s = s - self.l[i * n + t] * y[t];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solve (L L^T) x = b.
    fn solve(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        let mut y = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = y[i];
            for t in (i + 1)..n {
                s = s - self.l[t * n + i] * y[t];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    fn log_det_half(&self) -> R {
        let mut s = R::zero();
        for i in 0..self.n {
            s = s + self.l[i * self.n + i].ln();
        }
        s
    }
}

fn kernel<R: Real>(a: &[R], b: &[R], ls: &[R], signal: R) -> R {
    let mut s = R::zero();
    for d in 0..a.len() {
        let diff = (a[d] - b[d]) / ls[d];
        s = s + diff * diff;
    }
    signal * (-s / R::from_f64_lossy(2.0)).exp()
}

struct Prepared<R> {
    chol: Cholesky<R>,
    alpha: Vec<R>,
    lml: R,
}

/// Build K + (noise + jitter) I and factor it, escalating jitter on failure.
fn prepare<R: Real>(
    x: &[Vec<R>],
    y_centered: &[R],
    ls: &[R],
    signal: R,
    noise: R,
) -> Option<(Prepared<R>, R)> {
    let n = x.len();
    let mut k = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(&x[i], &x[j], ls, signal);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let mut jitter = R::from_f64_lossy(BASE_JITTER);
    let max_jitter = R::from_f64_lossy(NOISE_HI);
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[i * n + i] = kj[i * n + i] + noise + jitter;
        }
        if let Some(chol) = Cholesky::factor(&kj, n) {
            let alpha = chol.solve(y_centered);
            let mut fit = R::zero();
            for i in 0..n {
                fit = fit + y_centered[i] * alpha[i];
            }
            let half = R::from_f64_lossy(0.5);
            let lml = -half * fit
                - chol.log_det_half()
                - R::from_usize_lossy(n) * half * R::from_f64_lossy((2.0 * std::f64::consts::PI).ln());
            return Some((Prepared { chol, alpha, lml }, jitter));
        }
        jitter = jitter * R::from_f64_lossy(10.0);
        if jitter > max_jitter {
            return None;
        }
    }
}

/// Fit hyperparameters by maximizing log marginal likelihood; multi-start
/// Nelder-Mead over log parameters, deterministic given the seed.
pub fn gp_fit<R: Real>(x: &[Vec<R>], y: &[R], seed: u64) -> Result<GaussianProcess<R>> {
    gp_fit_with(x, y, &GpConfig { seed, ..Default::default() })
}

pub fn gp_fit_with<R: Real>(x: &[Vec<R>], y: &[R], cfg: &GpConfig) -> Result<GaussianProcess<R>> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::validation(Stage::Optimizer, "GP needs >= 2 points with matching targets"));
    }
    let dims = x[0].len();
    if dims == 0 || x.iter().any(|r| r.len() != dims) {
        return Err(Error::validation(Stage::Optimizer, "ragged GP inputs"));
    }

    let mean = crate::stats::mean(y);
    let yc: Vec<R> = y.iter().map(|&v| v - mean).collect();
    let y_var = crate::stats::variance(&yc).to_f64_lossy().max(SIGNAL_LO);

    // theta = [ln ls_1.., ln signal_var, ln noise_var]
    let n_params = dims + 2;
    let lo: Vec<f64> = (0..n_params)
        .map(|i| {
            if i < dims {
                LS_LO.ln()
            } else if i == dims {
                SIGNAL_LO.ln()
            } else {
                NOISE_LO.ln()
            }
        })
        .collect();
    let hi: Vec<f64> = (0..n_params)
        .map(|i| {
            if i < dims {
                LS_HI.ln()
            } else if i == dims {
                SIGNAL_HI.ln()
            } else {
                NOISE_HI.ln()
            }
        })
        .collect();

    let objective = |theta: &[f64]| -> f64 {
        let ls: Vec<R> = theta[..dims].iter().map(|&t| R::from_f64_lossy(t.exp())).collect();
        let signal = R::from_f64_lossy(theta[dims].exp());
        let noise = R::from_f64_lossy(theta[dims + 1].exp());
        match prepare(x, &yc, &ls, signal, noise) {
            Some((p, _)) => -p.lml.to_f64_lossy(),
            None => f64::INFINITY,
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts.max(1));
    // Heuristic first start: moderate length scales, signal at the target
    // variance, low noise.
    let mut first = vec![0.5f64.ln(); dims];
    first.push(y_var.ln());
    first.push(1e-4f64.ln());
    starts.push(clamp_theta(first, &lo, &hi));
    let mut rng = seeding::stream(cfg.seed, "gp-restarts", 0);
    while starts.len() < cfg.restarts.max(1) {
        let theta: Vec<f64> = (0..n_params)
            .map(|i| lo[i] + rng.random::<f64>() * (hi[i] - lo[i]))
            .collect();
        starts.push(theta);
    }

    let mut best_theta = starts[0].clone();
    let mut best_val = f64::INFINITY;
    for start in starts {
        let (theta, val) = nelder_mead(&objective, &start, &lo, &hi, cfg.max_opt_iters);
        if val < best_val {
            best_val = val;
            best_theta = theta;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::runtime(Stage::Optimizer, "kernel matrix singular after jitter escalation"));
    }

    let ls: Vec<R> = best_theta[..dims].iter().map(|&t| R::from_f64_lossy(t.exp())).collect();
    let signal = R::from_f64_lossy(best_theta[dims].exp());
    let noise = R::from_f64_lossy(best_theta[dims + 1].exp());
    let (prepared, jitter) = prepare(x, &yc, &ls, signal, noise)
        .ok_or_else(|| Error::runtime(Stage::Optimizer, "kernel matrix singular after jitter escalation"))?;

    Ok(GaussianProcess {
        x: x.to_vec(),
        mean,
        chol: prepared.chol,
        alpha: prepared.alpha,
        length_scales: ls,
        signal_var: signal,
        noise_var: noise + jitter,
        log_marginal_likelihood: prepared.lml,
    })
}

fn clamp_theta(mut theta: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    for i in 0..theta.len() {
        theta[i] = theta[i].clamp(lo[i], hi[i]);
    }
    theta
}

/// Nelder-Mead with box clamping; returns (argmin, min).
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        let step = 0.25 * (hi[i] - lo[i]).max(1e-3);
        v[i] = (v[i] + step).clamp(lo[i], hi[i]);
        if (v[i] - start[i]).abs() < 1e-12 {
            v[i] = (start[i] - step).clamp(lo[i], hi[i]);
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iters {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        if (values[n] - values[0]).abs() < 1e-10 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|d| (centroid[d] + (centroid[d] - worst[d])).clamp(lo[d], hi[d]))
            .collect();
        let fr = f(&reflect);
        if fr < values[0] {
            let expand: Vec<f64> = (0..n)
                .map(|d| (centroid[d] + 2.0 * (centroid[d] - worst[d])).clamp(lo[d], hi[d]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[n] = expand;
                values[n] = fe;
            } else {
                simplex[n] = reflect;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflect;
            values[n] = fr;
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|d| (centroid[d] + 0.5 * (worst[d] - centroid[d])).clamp(lo[d], hi[d]))
                .collect();
            let fc = f(&contract);
            if fc < values[n] {
                simplex[n] = contract;
                values[n] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    let best = simplex[0].clone();
                    for d in 0..n {
                        simplex[i][d] = best[d] + 0.5 * (simplex[i][d] - best[d]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

impl<R: Real> GaussianProcess<R> {
    pub fn n_points(&self) -> usize {
        self.x.len()
    }

    /// Posterior mean and variance of the latent function at `q` (variance
    /// clamped at zero).
    pub fn posterior(&self, q: &[R]) -> (R, R) {
        let n = self.x.len();
        let mut k_star = vec![R::zero(); n];
        for i in 0..n {
            k_star[i] = kernel(&self.x[i], q, &self.length_scales, self.signal_var);
        }
        let mut mean = self.mean;
        for i in 0..n {
            mean = mean + k_star[i] * self.alpha[i];
        }
        let v = self.chol.solve_lower(&k_star);
        let mut explained = R::zero();
        for vi in &v {
            explained = explained + *vi * *vi;
        }
        let var = (self.signal_var - explained).max(R::zero());
        (mean, var)
    }
}

/// Closed-form expected improvement for maximization. With vanishing
/// posterior deviation this degenerates to max(mu - best, 0).
pub fn expected_improvement<R: Real>(gp: &GaussianProcess<R>, q: &[R], best: R) -> R {
    let (mu, var) = gp.posterior(q);
    ei_closed_form(mu, var.sqrt(), best)
}

/// EI(mu, sigma, best) = (mu - best) Phi(z) + sigma phi(z), z = (mu-best)/sigma.
pub fn ei_closed_form<R: Real>(mu: R, sigma: R, best: R) -> R {
    if sigma < R::from_f64_lossy(1e-12) {
        return (mu - best).max(R::zero());
    }
    let z = (mu - best) / sigma;
    let ei = (mu - best) * normal_cdf(z) + sigma * normal_pdf(z);
    ei.max(R::zero())
}
