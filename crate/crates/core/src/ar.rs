//! Multivariate autoregressive sieve: Yule–Walker fits, Whittle-AIC order
//! selection, residuals and simulation of fitted models.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix, LinalgError, Matrix};
use crate::rng::{standard_normal, stream_rng};
use crate::scalar::Scalar;
use crate::series::TimeSeries;
use crate::sim::burn_in;

/// Biased sample autocovariances `Γ̂(h) = (1/T) Σ_{t=1}^{T-h} X_{t+h} X_tᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSeq<S: Scalar> {
    pub lags: Vec<Matrix<S>>,
    pub len: usize,
}

impl<S: Scalar> AutocovarianceSeq<S> {
    pub fn dim(&self) -> usize {
        self.lags[0].rows()
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    /// `Γ(h)` for any integer lag, using `Γ(-h) = Γ(h)ᵀ`.
    pub fn at(&self, h: isize) -> Matrix<S> {
        if h >= 0 {
            self.lags[h as usize].clone()
        } else {
            self.lags[(-h) as usize].transpose()
        }
    }

    /// The `dp × dp` block-Toeplitz matrix with block `(i, j) = Γ(j - i)`.
    pub fn block_toeplitz(&self, p: usize) -> Matrix<S> {
        let d = self.dim();
        let mut out = Matrix::zeros(d * p, d * p);
        for i in 0..p {
            for j in 0..p {
                let g = self.at(j as isize - i as isize);
                for a in 0..d {
                    for b in 0..d {
                        out[(i * d + a, j * d + b)] = g[(a, b)];
                    }
                }
            }
        }
        out
    }
}

pub fn autocovariances<S: Scalar>(series: &TimeSeries<S>, max_lag: usize) -> Result<AutocovarianceSeq<S>> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::Parameter(format!(
            "maximal lag {max_lag} must be smaller than the series length {n}"
        )));
    }
    let d = series.dim();
    let inv = S::one() / S::of_usize(n);
    let lags = (0..=max_lag)
        .map(|h| {
            let mut g = Matrix::zeros(d, d);
            for t in 0..n - h {
                let ahead = series.row(t + h);
                let now = series.row(t);
                for a in 0..d {
                    for b in 0..d {
                        g[(a, b)] += ahead[a] * now[b];
                    }
                }
            }
            g.scale(inv)
        })
        .collect();
    Ok(AutocovarianceSeq { lags, len: n })
}

/// `X_t = Σ_{j=1}^p A_j X_{t-j} + Σ^{1/2} Z_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ARModel<S: Scalar> {
    pub order: usize,
    pub coefficients: Vec<Matrix<S>>,
    pub innovation_cov: Matrix<S>,
}

impl<S: Scalar> ARModel<S> {
    pub fn new(coefficients: Vec<Matrix<S>>, innovation_cov: Matrix<S>) -> Result<Self> {
        let d = innovation_cov.rows();
        if !innovation_cov.is_square()
            || coefficients.iter().any(|a| a.rows() != d || a.cols() != d)
        {
            return Err(Error::Config("AR coefficient shapes do not match the covariance".into()));
        }
        Ok(Self {
            order: coefficients.len(),
            coefficients,
            innovation_cov,
        })
    }

    /// White noise with the given covariance.
    pub fn white_noise(innovation_cov: Matrix<S>) -> Self {
        Self {
            order: 0,
            coefficients: Vec::new(),
            innovation_cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.innovation_cov.rows()
    }

    pub fn companion(&self) -> Matrix<S> {
        let d = self.dim();
        let p = self.order;
        let mut c = Matrix::zeros(d * p, d * p);
        for (j, a) in self.coefficients.iter().enumerate() {
            for r in 0..d {
                for s in 0..d {
                    c[(r, j * d + s)] = a[(r, s)];
                }
            }
        }
        for i in d..d * p {
            c[(i, i - d)] = S::one();
        }
        c
    }

    pub fn spectral_radius(&self) -> S {
        if self.order == 0 {
            S::zero()
        } else {
            self.companion().spectral_radius()
        }
    }

    /// `det(I - Σ_j z^j A_j) ≠ 0` for `|z| ≤ 1`.
    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < S::one()
    }

    fn check_stable(&self) -> Result<()> {
        let rho = self.spectral_radius();
        if rho < S::one() {
            Ok(())
        } else {
            Err(Error::Unstable(rho.as_f64()))
        }
    }

    /// `A(e^{-iλ}) = I - Σ_j A_j e^{-iλj}`.
    pub fn transfer(&self, lambda: S) -> CMatrix<S> {
        transfer(&self.coefficients, self.dim(), lambda)
    }
}

fn transfer<S: Scalar>(coefficients: &[Matrix<S>], d: usize, lambda: S) -> CMatrix<S> {
    let mut a = CMatrix::identity(d);
    for (j, m) in coefficients.iter().enumerate() {
        let w = cis(-lambda * S::of_usize(j + 1));
        for r in 0..d {
            for s in 0..d {
                a[(r, s)] -= w * m[(r, s)];
            }
        }
    }
    a
}

/// `f(λ) = (1/2π) A(e^{-iλ})⁻¹ Σ A(e^{-iλ})⁻ᴴ`.
pub(crate) fn ar_spectrum_at<S: Scalar>(
    coefficients: &[Matrix<S>],
    innovation_cov: &Matrix<S>,
    lambda: S,
) -> Result<CMatrix<S>> {
    let d = innovation_cov.rows();
    let a_inv = transfer(coefficients, d, lambda).inverse()?;
    let f = &(&a_inv * &innovation_cov.to_complex()) * &a_inv.adjoint();
    Ok(f.scale(Complex::new(S::one() / S::TAU(), S::zero())).hermitian_part())
}

/// Spectral density of a stable AR model.
#[derive(Debug, Clone)]
pub struct ArSpectralDensity<S: Scalar> {
    model: ARModel<S>,
}

impl<S: Scalar> ArSpectralDensity<S> {
    pub fn eval(&self, lambda: S) -> CMatrix<S> {
        ar_spectrum_at(&self.model.coefficients, &self.model.innovation_cov, lambda)
            .expect("stable model has an invertible transfer function")
    }
}

pub fn ar_spectral_density<S: Scalar>(model: &ARModel<S>) -> Result<ArSpectralDensity<S>> {
    model.check_stable()?;
    Ok(ArSpectralDensity {
        model: model.clone(),
    })
}

fn fit_error(e: LinalgError, what: &str) -> Error {
    match e {
        LinalgError::Singular { condition } => Error::Fit {
            message: format!("{what} is singular"),
            condition,
        },
        other => Error::Linalg(other),
    }
}

/// `X` with `X U = Δ` for symmetric `U`.
fn right_divide<S: Scalar>(delta: &Matrix<S>, u: &Matrix<S>) -> std::result::Result<Matrix<S>, LinalgError> {
    Ok(u.transpose().solve(&delta.transpose())?.transpose())
}

/// Yule–Walker fits of orders `0..=max_order` by the multivariate
/// Levinson (Whittle) recursion, which runs forward and backward
/// predictors side by side.
pub fn yule_walker_path<S: Scalar>(acvs: &AutocovarianceSeq<S>, max_order: usize) -> Result<Vec<ARModel<S>>> {
    if max_order > acvs.max_lag() {
        return Err(Error::Parameter(format!(
            "order {max_order} exceeds the available lags {}",
            acvs.max_lag()
        )));
    }
    let g0 = acvs.lags[0].hermitian_part();
    let mut forward: Vec<Matrix<S>> = Vec::new();
    let mut backward: Vec<Matrix<S>> = Vec::new();
    let mut v = g0.clone();
    let mut u = g0.clone();
    let mut path = vec![ARModel::white_noise(g0)];
    for k in 1..=max_order {
        let mut delta = acvs.lags[k].clone();
        for (j, a) in forward.iter().enumerate() {
            delta = &delta - &(a * &acvs.lags[k - j - 1]);
        }
        let a_kk = right_divide(&delta, &u).map_err(|e| fit_error(e, "backward prediction covariance"))?;
        let b_kk = right_divide(&delta.transpose(), &v).map_err(|e| fit_error(e, "forward prediction covariance"))?;
        let mut next_f = Vec::with_capacity(k);
        let mut next_b = Vec::with_capacity(k);
        for j in 1..k {
            next_f.push(&forward[j - 1] - &(&a_kk * &backward[k - j - 1]));
            next_b.push(&backward[j - 1] - &(&b_kk * &forward[k - j - 1]));
        }
        next_f.push(a_kk.clone());
        next_b.push(b_kk.clone());
        v = (&v - &(&a_kk * &delta.transpose())).hermitian_part();
        u = (&u - &(&b_kk * &delta)).hermitian_part();
        forward = next_f;
        backward = next_b;
        path.push(ARModel::new(forward.clone(), v.clone())?);
    }
    Ok(path)
}

/// Yule–Walker AR(`p`) fit. Falls back to the direct block-Toeplitz solve if
/// the recursion meets a singular prediction covariance.
pub fn yule_walker<S: Scalar>(acvs: &AutocovarianceSeq<S>, p: usize) -> Result<ARModel<S>> {
    let model = match yule_walker_path(acvs, p) {
        Ok(mut path) => path.pop().expect("path has p+1 entries"),
        Err(Error::Fit { .. }) => yule_walker_direct(acvs, p)?,
        Err(e) => return Err(e),
    };
    model.check_stable()?;
    Ok(model)
}

/// Solves `[A_1 … A_p] R = [Γ(1) … Γ(p)]` directly, `R` the block-Toeplitz
/// autocovariance matrix, and sets `Σ = Γ(0) - Σ_j A_j Γ(j)ᵀ`.
pub fn yule_walker_direct<S: Scalar>(acvs: &AutocovarianceSeq<S>, p: usize) -> Result<ARModel<S>> {
    if p > acvs.max_lag() {
        return Err(Error::Parameter(format!(
            "order {p} exceeds the available lags {}",
            acvs.max_lag()
        )));
    }
    let d = acvs.dim();
    if p == 0 {
        return Ok(ARModel::white_noise(acvs.lags[0].hermitian_part()));
    }
    let r = acvs.block_toeplitz(p);
    // R is symmetric, so R Xᵀ = Gᵀ with X = [A_1 … A_p].
    let rhs = Matrix::from_fn(d * p, d, |i, j| acvs.lags[i / d + 1][(j, i % d)]);
    let lu = r.lu().map_err(|e| fit_error(e, "block-Toeplitz autocovariance matrix"))?;
    let xt = lu.solve(&rhs)?;
    let coefficients: Vec<Matrix<S>> = (0..p)
        .map(|j| Matrix::from_fn(d, d, |a, b| xt[(j * d + b, a)]))
        .collect();
    let mut sigma = acvs.lags[0].clone();
    for (j, a) in coefficients.iter().enumerate() {
        sigma = &sigma - &(a * &acvs.lags[j + 1].transpose());
    }
    ARModel::new(coefficients, sigma.hermitian_part())
}

/// Default sieve orders `1..=min(⌈10·log10 T⌉, ⌊T/20⌋)` (at least `{1}`).
pub fn default_order_candidates(len: usize) -> Vec<usize> {
    let by_log = (10.0 * (len as f64).log10()).ceil() as usize;
    let upper = by_log.min(len / 20).max(1);
    (1..=upper).collect()
}

/// DFT vectors `J(λ_k) = Σ_t X_t e^{-iλ_k (t-1)}` at `λ_k = 2πk/T`,
/// `k = 1..=⌊T/2⌋`, laid out `[k][component]`.
pub(crate) fn full_sample_dft<S: Scalar>(series: &TimeSeries<S>) -> Vec<Complex<S>> {
    let n = series.len();
    let d = series.dim();
    let half = n / 2;
    let fft = FftPlanner::<S>::new().plan_fft_forward(n);
    let mut out = vec![Complex::new(S::zero(), S::zero()); half * d];
    let mut buf = vec![Complex::new(S::zero(), S::zero()); n];
    for a in 0..d {
        for (t, z) in buf.iter_mut().enumerate() {
            *z = Complex::new(series.get(t, a), S::zero());
        }
        fft.process(&mut buf);
        for k in 1..=half {
            out[(k - 1) * d + a] = buf[k];
        }
    }
    out
}

/// Result of Whittle-AIC order selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OrderSelection<S: Scalar> {
    pub order: usize,
    /// `(p, AIC(p))` in increasing `p`.
    pub scores: Vec<(usize, S)>,
}

/// Whittle AIC of a fitted model against the full-sample periodogram:
/// `(2π/T) Σ_{k=1}^{⌊T/2⌋} [log det f(λ_k) + tr(f(λ_k)⁻¹ I_T(λ_k))] + p/T`.
fn whittle_aic<S: Scalar>(model: &ARModel<S>, dft: &[Complex<S>], len: usize) -> Result<S> {
    let d = model.dim();
    let n = S::of_usize(len);
    let tau = S::TAU();
    let sigma = model.innovation_cov.to_complex();
    let sigma_lu = sigma.lu().map_err(|e| fit_error(e, "innovation covariance"))?;
    let sigma_inv = sigma_lu.solve(&CMatrix::identity(d))?;
    let log_det_sigma = sigma_lu.determinant().re.ln();
    let mut total = S::zero();
    for (k, j) in dft.chunks(d).enumerate() {
        let lambda = tau * S::of_usize(k + 1) / n;
        let a = model.transfer(lambda);
        let det_a = a.determinant().norm();
        if !(det_a > S::zero()) || !log_det_sigma.is_finite() {
            return Err(Error::Fit {
                message: format!("fitted spectrum is not invertible at frequency {}", lambda.as_f64()),
                condition: f64::INFINITY,
            });
        }
        // f⁻¹ = 2π Aᴴ Σ⁻¹ A, log det f = log det Σ - 2 log|det A| - d log 2π
        let log_det_f = log_det_sigma - S::of(2.0) * det_a.ln() - S::of_usize(d) * tau.ln();
        // tr(f⁻¹ I) with I = J Jᴴ/(2πT) equals (A J)ᴴ Σ⁻¹ (A J) / T.
        let aj: Vec<Complex<S>> = (0..d)
            .map(|r| (0..d).fold(Complex::new(S::zero(), S::zero()), |s, c| s + a[(r, c)] * j[c]))
            .collect();
        let mut quad = Complex::new(S::zero(), S::zero());
        for r in 0..d {
            for c in 0..d {
                quad += aj[r].conj() * sigma_inv[(r, c)] * aj[c];
            }
        }
        total += log_det_f + quad.re / n;
    }
    Ok(tau / n * total + S::of_usize(model.order) / n)
}

/// Selects the AR order minimizing the Whittle AIC; ties go to the smaller order.
pub fn aic_order<S: Scalar>(series: &TimeSeries<S>, candidates: &[usize]) -> Result<OrderSelection<S>> {
    let mut orders = candidates.to_vec();
    orders.sort_unstable();
    orders.dedup();
    let max_order = *orders
        .last()
        .ok_or_else(|| Error::Parameter("no candidate AR orders".into()))?;
    if max_order >= series.len() {
        return Err(Error::Parameter(format!(
            "AR order {max_order} is not smaller than the series length"
        )));
    }
    let acvs = autocovariances(series, max_order)?;
    let path = yule_walker_path(&acvs, max_order)?;
    let dft = Arc::new(full_sample_dft(series));
    let scores: Vec<(usize, S)> = orders
        .par_iter()
        .map(|&p| whittle_aic(&path[p], &dft, series.len()).map(|s| (p, s)))
        .collect::<Result<_>>()?;
    let mut best = scores[0];
    for &(p, s) in &scores[1..] {
        if s < best.1 {
            best = (p, s);
        }
    }
    Ok(OrderSelection {
        order: best.0,
        scores,
    })
}

/// Residuals of an AR fit, their mean, and their centered covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals<S: Scalar> {
    /// `ẑ_{p+1}, …, ẑ_T` row-major.
    pub residuals: Vec<S>,
    pub mean: Vec<S>,
    /// `(1/(T-p)) Σ (ẑ_j - z̄)(ẑ_j - z̄)ᵀ`.
    pub covariance: Matrix<S>,
}

pub fn residuals_and_cov<S: Scalar>(series: &TimeSeries<S>, model: &ARModel<S>) -> Result<Residuals<S>> {
    let n = series.len();
    let d = series.dim();
    let p = model.order;
    if d != model.dim() {
        return Err(Error::Parameter("model and series dimensions differ".into()));
    }
    if n <= p {
        return Err(Error::Parameter(format!("series length {n} must exceed the AR order {p}")));
    }
    let mut residuals = Vec::with_capacity((n - p) * d);
    for t in p..n {
        let x = series.row(t);
        for a in 0..d {
            let mut z = x[a];
            for (i, coef) in model.coefficients.iter().enumerate() {
                let lagged = series.row(t - i - 1);
                for b in 0..d {
                    z -= coef[(a, b)] * lagged[b];
                }
            }
            residuals.push(z);
        }
    }
    let m = S::of_usize(n - p);
    let mut mean = vec![S::zero(); d];
    for row in residuals.chunks(d) {
        for (acc, &z) in mean.iter_mut().zip(row) {
            *acc += z;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut covariance = Matrix::zeros(d, d);
    for row in residuals.chunks(d) {
        for a in 0..d {
            for b in 0..d {
                covariance[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    Ok(Residuals {
        residuals,
        mean,
        covariance: covariance.scale(S::one() / m),
    })
}

/// Simulator for a fitted AR model with Gaussian innovations `Σ^{1/2} Z_t`.
#[derive(Debug, Clone)]
pub struct ArGenerator<S: Scalar> {
    model: ARModel<S>,
    sqrt_cov: Matrix<S>,
}

impl<S: Scalar> ArGenerator<S> {
    pub fn new(model: &ARModel<S>) -> Result<Self> {
        model.check_stable()?;
        let sqrt_cov = model.innovation_cov.psd_sqrt()?;
        Ok(Self {
            model: model.clone(),
            sqrt_cov,
        })
    }

    pub fn sqrt_cov(&self) -> &Matrix<S> {
        &self.sqrt_cov
    }

    /// Runs the recursion from zero initial values, discarding the burn-in.
    pub fn generate<R: Rng>(&self, len: usize, rng: &mut R) -> Result<TimeSeries<S>> {
        let d = self.model.dim();
        let p = self.model.order;
        let burn = burn_in(p);
        let total = burn + len;
        let mut x = vec![S::zero(); (total + p) * d];
        let mut z = vec![S::zero(); d];
        for t in p..total + p {
            for v in z.iter_mut() {
                *v = standard_normal(rng);
            }
            let (past, rest) = x.split_at_mut(t * d);
            let out = &mut rest[..d];
            for a in 0..d {
                let mut s = S::zero();
                for b in 0..d {
                    s += self.sqrt_cov[(a, b)] * z[b];
                }
                for (j, coef) in self.model.coefficients.iter().enumerate() {
                    let lagged = &past[(t - j - 1) * d..(t - j) * d];
                    for b in 0..d {
                        s += coef[(a, b)] * lagged[b];
                    }
                }
                out[a] = s;
            }
        }
        TimeSeries::new(x[(burn + p) * d..].to_vec(), len, d)
    }
}

pub fn ar_simulate<S: Scalar>(model: &ARModel<S>, len: usize, seed: u64) -> Result<TimeSeries<S>> {
    ArGenerator::new(model)?.generate(len, &mut stream_rng(seed, 0))
}
