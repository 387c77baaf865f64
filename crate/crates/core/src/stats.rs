//! Small nonparametric test kit used by the evaluation harness and the
//! acceptance suite: exact Wilcoxon signed-rank for paired seeds and a
//! normal-approximation Mann-Whitney U for unpaired trend checks.

use crate::Real;

/// Average ranks of the absolute values, ties shared.
fn ranks(values: &[Real]) -> Vec<Real> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as Real / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// One-sided exact Wilcoxon signed-rank test of H1: `x` tends to be smaller
/// than `y`, over paired samples. Zero differences are dropped. The null
/// distribution is enumerated exactly (2^n sign patterns), so keep n <= 25.
pub fn wilcoxon_signed_rank_less(x: &[Real], y: &[Real]) -> Real {
    assert_eq!(x.len(), y.len(), "paired test needs equal lengths");
    let diffs: Vec<Real> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return 1.0;
    }
    assert!(n <= 25, "exact enumeration limited to 25 pairs");
    let abs: Vec<Real> = diffs.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    // W+ = rank sum of positive differences; small W+ favors x < y.
    let w_obs: Real = diffs
        .iter()
        .zip(&r)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &rk)| rk)
        .sum();
    let mut le = 0u64;
    let total = 1u64 << n;
    for mask in 0..total {
        let mut w = 0.0;
        for (bit, &rk) in r.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                w += rk;
            }
        }
        if w <= w_obs {
            le += 1;
        }
    }
    le as Real / total as Real
}

/// Standard normal CDF via erf-free Abramowitz-Stegun approximation.
fn phi(z: Real) -> Real {
    // A&S 26.2.17, |error| < 7.5e-8.
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let cdf = 0.5 * (1.0 + erf);
    if z >= 0.0 {
        cdf
    } else {
        1.0 - cdf
    }
}

/// One-sided Mann-Whitney U test of H1: `x` tends to be smaller than `y`.
/// Normal approximation with tie correction and continuity correction.
pub fn mann_whitney_less(x: &[Real], y: &[Real]) -> Real {
    let n1 = x.len() as Real;
    let n2 = y.len() as Real;
    assert!(n1 > 0.0 && n2 > 0.0);
    let mut all: Vec<Real> = x.iter().chain(y).copied().collect();
    let r = ranks(&all);
    let r1: Real = r[..x.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    // Tie correction for the variance.
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = n1 + n2;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1] == all[i] {
            j += 1;
        }
        let t = (j - i + 1) as Real;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u1 - mean + 0.5) / var.sqrt();
    phi(z)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[Real]) -> (Real, Real) {
    let n = values.len() as Real;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<Real>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (n - 1.0);
    (mean, var.sqrt())
}
