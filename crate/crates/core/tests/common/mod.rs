#![allow(dead_code)]

use specbreak::ar::AutocovarianceSeq;
use specbreak::linalg::Matrix;

pub type Dense = Vec<Vec<f64>>;

fn mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Population autocovariances `Γ(h) = E[X_{t+h} X_tᵀ]` of
/// `X_t = Σ_j A_j X_{t-j} + ε_t`, `Cov ε = Σ`: the stationary covariance `P`
/// of the companion state solves `P = F P Fᵀ + Q`, found by fixed-point
/// iteration, and `Γ(h)` is the leading block of `Fʰ P`.
pub fn exact_acvs(coeffs: &[Dense], sigma: &Dense, lags: usize) -> AutocovarianceSeq<f64> {
    let d = sigma.len();
    let p = coeffs.len();
    let dim = d * p;
    let mut f = vec![vec![0.0; dim]; dim];
    for (j, a) in coeffs.iter().enumerate() {
        for r in 0..d {
            for s in 0..d {
                f[r][j * d + s] = a[r][s];
            }
        }
    }
    for i in d..dim {
        f[i][i - d] = 1.0;
    }
    let mut q = vec![vec![0.0; dim]; dim];
    for r in 0..d {
        for s in 0..d {
            q[r][s] = sigma[r][s];
        }
    }
    let ft = transpose(&f);
    let mut state = q.clone();
    for _ in 0..5000 {
        let next = mul(&mul(&f, &state), &ft);
        state = next.iter().zip(&q).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    }
    let mut power = state;
    let mut out = Vec::new();
    for _ in 0..=lags {
        out.push(Matrix::from_fn(d, d, |a, b| power[a][b]));
        power = mul(&f, &power);
    }
    AutocovarianceSeq { lags: out, len: usize::MAX }
}

