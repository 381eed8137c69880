//! Small statistics kernel: moments, discrete entropy / mutual information,
//! Gaussian density helpers, and rank correlation.

use crate::scalar::Real;

pub fn mean<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        return R::zero();
    }
    let mut s = R::zero();
    for &x in xs {
        s = s + x;
    }
    s / R::from_usize_lossy(xs.len())
}

/// Population variance (divides by n).
pub fn variance<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        return R::zero();
    }
    let m = mean(xs);
    let mut s = R::zero();
    for &x in xs {
        let d = x - m;
        s = s + d * d;
    }
    s / R::from_usize_lossy(xs.len())
}

pub fn std_dev<R: Real>(xs: &[R]) -> R {
    variance(xs).sqrt()
}

/// Population skewness m3 / m2^(3/2); 0 for zero-variance input.
pub fn skewness<R: Real>(xs: &[R]) -> R {
    let n = xs.len();
    if n == 0 {
        return R::zero();
    }
    let m = mean(xs);
    let mut m2 = R::zero();
    let mut m3 = R::zero();
    for &x in xs {
        let d = x - m;
        m2 = m2 + d * d;
        m3 = m3 + d * d * d;
    }
    let nn = R::from_usize_lossy(n);
    m2 = m2 / nn;
    m3 = m3 / nn;
    if m2 <= R::zero() {
        return R::zero();
    }
    m3 / (m2 * m2.sqrt())
}

/// Population excess kurtosis m4 / m2^2 - 3; 0 for zero-variance input.
pub fn kurtosis<R: Real>(xs: &[R]) -> R {
    let n = xs.len();
    if n == 0 {
        return R::zero();
    }
    let m = mean(xs);
    let mut m2 = R::zero();
    let mut m4 = R::zero();
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 = m2 + d2;
        m4 = m4 + d2 * d2;
    }
    let nn = R::from_usize_lossy(n);
    m2 = m2 / nn;
    m4 = m4 / nn;
    if m2 <= R::zero() {
        return R::zero();
    }
    m4 / (m2 * m2) - R::from_f64_lossy(3.0)
}

/// Shannon entropy in nats of a count histogram.
pub fn entropy_nats(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.ln();
        }
    }
    h
}

/// Assign each value to one of `bins` equal-width bins over [min, max].
/// A constant column maps everything to bin 0.
pub fn equal_width_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let width = (hi - lo) / bins as f64;
    values
        .iter()
        .map(|&v| (((v - lo) / width) as usize).min(bins - 1))
        .collect()
}

/// Plug-in mutual information I(X;Y) in nats from two discrete codings.
pub fn mutual_information(xs: &[usize], ys: &[usize], nx: usize, ny: usize) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint = vec![0usize; nx * ny];
    let mut mx = vec![0usize; nx];
    let mut my = vec![0usize; ny];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * ny + y] += 1;
        mx[x] += 1;
        my[y] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let c = joint[x * ny + y];
            if c > 0 {
                let pxy = c as f64 / nf;
                let px = mx[x] as f64 / nf;
                let py = my[y] as f64 / nf;
                mi += pxy * (pxy / (px * py)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Standard normal density.
pub fn normal_pdf<R: Real>(z: R) -> R {
    let inv_sqrt_2pi = R::from_f64_lossy(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-z * z / R::from_f64_lossy(2.0)).exp()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf<R: Real>(z: R) -> R {
    let z64 = z.to_f64_lossy();
    let v = 0.5 * statrs::function::erf::erfc(-z64 / std::f64::consts::SQRT_2);
    R::from_f64_lossy(v)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

/// Average (midrank) ranks, 1-based.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da <= 0.0 || db <= 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}
