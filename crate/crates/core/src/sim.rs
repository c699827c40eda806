//! Piecewise-stationary multivariate linear processes with Gaussian innovations.
//!
//! A model is a list of break points `0 < b_1 < … < b_K < 1` and one
//! coefficient description per segment. Time `t ∈ 1..=T` belongs to segment
//! `j` iff `b_j < t/T ≤ b_{j+1}`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::ar::ar_spectrum_at;
use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix, Matrix};
use crate::rng::{standard_normal, stream_rng};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Burn-in for recursively defined (autoregressive) processes.
pub fn burn_in(order: usize) -> usize {
    500 + 10 * order
}

fn check_breakpoints(breakpoints: &[f64]) -> Result<()> {
    for (i, &b) in breakpoints.iter().enumerate() {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Config(format!("break point {b} is not in (0, 1)")));
        }
        if i > 0 && breakpoints[i - 1] >= b {
            return Err(Error::Config("break points must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// Index of the segment containing 1-based time `t` of a length-`len` sample.
pub fn segment_of_time(breakpoints: &[f64], t: usize, len: usize) -> usize {
    let t = t as f64;
    let n = len as f64;
    breakpoints.iter().take_while(|&&b| b * n < t).count()
}

/// Index of the segment containing rescaled time `u`.
pub fn segment_of(breakpoints: &[f64], u: f64) -> usize {
    breakpoints.iter().take_while(|&&b| b < u).count()
}

/// `X_t = Σ_l Ψ_l(t/T) Z_{t-l}` with a finite MA truncation per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PiecewiseLinearModel<S: Scalar> {
    pub name: String,
    pub dim: usize,
    pub breakpoints: Vec<f64>,
    /// `segments[j][l]` is `Ψ_l^{(j)}`.
    pub segments: Vec<Vec<Matrix<S>>>,
}

impl<S: Scalar> PiecewiseLinearModel<S> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        breakpoints: Vec<f64>,
        segments: Vec<Vec<Matrix<S>>>,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            dim,
            breakpoints,
            segments,
        };
        model.validate()?;
        Ok(model)
    }

    /// Stationary model with a single segment.
    pub fn stationary(name: impl Into<String>, coefficients: Vec<Matrix<S>>) -> Result<Self> {
        let dim = coefficients.first().map_or(0, Matrix::rows);
        Self::new(name, dim, Vec::new(), vec![coefficients])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        check_breakpoints(&self.breakpoints)?;
        if self.segments.len() != self.breakpoints.len() + 1 {
            return Err(Error::Config(format!(
                "{} break points need {} segments, got {}",
                self.breakpoints.len(),
                self.breakpoints.len() + 1,
                self.segments.len()
            )));
        }
        for (j, seg) in self.segments.iter().enumerate() {
            if seg.is_empty() {
                return Err(Error::Config(format!("segment {j} has no coefficient matrices")));
            }
            for m in seg {
                if m.rows() != self.dim || m.cols() != self.dim {
                    return Err(Error::Config(format!(
                        "segment {j}: coefficient is {}x{}, expected {d}x{d}",
                        m.rows(),
                        m.cols(),
                        d = self.dim
                    )));
                }
                if !m.is_finite() {
                    return Err(Error::Config(format!("segment {j}: non-finite coefficient")));
                }
            }
        }
        for j in 1..self.segments.len() {
            if same_coefficients(&self.segments[j - 1], &self.segments[j], self.dim) {
                return Err(Error::Config(format!(
                    "segments {} and {} are identical, so break point {} is not a break",
                    j - 1,
                    j,
                    self.breakpoints[j - 1]
                )));
            }
        }
        Ok(())
    }

    /// Largest MA lag over all segments.
    pub fn max_lag(&self) -> usize {
        self.segments.iter().map(|s| s.len() - 1).max().unwrap_or(0)
    }

    pub fn num_breaks(&self) -> usize {
        self.breakpoints.len()
    }
}

fn same_coefficients<S: Scalar>(a: &[Matrix<S>], b: &[Matrix<S>], dim: usize) -> bool {
    let zero = Matrix::zeros(dim, dim);
    (0..a.len().max(b.len())).all(|l| a.get(l).unwrap_or(&zero) == b.get(l).unwrap_or(&zero))
}

/// `X_t = Φ(t/T) X_{t-1} + Z_t` with one VAR(1) matrix per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PiecewiseVarModel<S: Scalar> {
    pub name: String,
    pub dim: usize,
    pub breakpoints: Vec<f64>,
    pub matrices: Vec<Matrix<S>>,
}

impl<S: Scalar> PiecewiseVarModel<S> {
    pub fn new(
        name: impl Into<String>,
        breakpoints: Vec<f64>,
        matrices: Vec<Matrix<S>>,
    ) -> Result<Self> {
        let dim = matrices.first().map_or(0, Matrix::rows);
        let model = Self {
            name: name.into(),
            dim,
            breakpoints,
            matrices,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        check_breakpoints(&self.breakpoints)?;
        if self.matrices.len() != self.breakpoints.len() + 1 {
            return Err(Error::Config(format!(
                "{} break points need {} AR matrices, got {}",
                self.breakpoints.len(),
                self.breakpoints.len() + 1,
                self.matrices.len()
            )));
        }
        for (j, m) in self.matrices.iter().enumerate() {
            if m.rows() != self.dim || m.cols() != self.dim {
                return Err(Error::Config(format!("segment {j}: AR matrix has wrong shape")));
            }
            let rho = m.spectral_radius();
            if !(rho < S::one()) {
                return Err(Error::Unstable(rho.as_f64()));
            }
        }
        for j in 1..self.matrices.len() {
            if self.matrices[j - 1] == self.matrices[j] {
                return Err(Error::Config(format!(
                    "segments {} and {} have the same AR matrix",
                    j - 1,
                    j
                )));
            }
        }
        Ok(())
    }
}

/// Any process the simulator can generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessModel<S: Scalar> {
    Linear(PiecewiseLinearModel<S>),
    Var(PiecewiseVarModel<S>),
}

impl<S: Scalar> ProcessModel<S> {
    pub fn name(&self) -> &str {
        match self {
            Self::Linear(m) => &m.name,
            Self::Var(m) => &m.name,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear(m) => m.dim,
            Self::Var(m) => m.dim,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Linear(m) => &m.breakpoints,
            Self::Var(m) => &m.breakpoints,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Linear(m) => m.validate(),
            Self::Var(m) => m.validate(),
        }
    }

    pub fn simulate(&self, len: usize, seed: u64) -> Result<TimeSeries<S>> {
        match self {
            Self::Linear(m) => simulate(m, len, seed),
            Self::Var(m) => simulate_piecewise_var(m, len, seed),
        }
    }

    pub fn spectral_density(&self) -> Result<SpectralDensityFn<S>> {
        match self {
            Self::Linear(m) => spectral_density(m),
            Self::Var(m) => {
                m.validate()?;
                Ok(SpectralDensityFn {
                    breakpoints: m.breakpoints.clone(),
                    segments: m
                        .matrices
                        .iter()
                        .map(|phi| SegmentSpectrum::Ar {
                            coefficients: vec![phi.clone()],
                            innovation_cov: Matrix::identity(m.dim),
                        })
                        .collect(),
                })
            }
        }
    }
}

/// Simulates a piecewise linear process.
///
/// Innovations `Z_{1-L}, …, Z_T` are drawn in time order (`L` the largest lag),
/// so every observation sees a full coefficient window.
pub fn simulate<S: Scalar>(
    model: &PiecewiseLinearModel<S>,
    len: usize,
    seed: u64,
) -> Result<TimeSeries<S>> {
    model.validate()?;
    let lag = model.max_lag();
    if len == 0 || len < 2 * lag {
        return Err(Error::Parameter(format!(
            "series length {len} too short for MA lag {lag}"
        )));
    }
    let d = model.dim;
    let mut rng = stream_rng(seed, 0);
    let innovations: Vec<S> = (0..(len + lag) * d)
        .map(|_| standard_normal(&mut rng))
        .collect();
    let mut values = vec![S::zero(); len * d];
    for t in 1..=len {
        let seg = &model.segments[segment_of_time(&model.breakpoints, t, len)];
        let out = &mut values[(t - 1) * d..t * d];
        for (l, psi) in seg.iter().enumerate() {
            // Z_{t-l} sits at offset (t - l - 1 + lag).
            let z = &innovations[(t + lag - l - 1) * d..(t + lag - l) * d];
            for a in 0..d {
                let mut s = S::zero();
                for b in 0..d {
                    s += psi[(a, b)] * z[b];
                }
                out[a] += s;
            }
        }
    }
    TimeSeries::new(values, len, d)
}

/// Stationary VAR(1): `X_t = Φ X_{t-1} + Z_t`.
pub fn simulate_var1<S: Scalar>(phi: &Matrix<S>, len: usize, seed: u64) -> Result<TimeSeries<S>> {
    let model = PiecewiseVarModel::new("var1", Vec::new(), vec![phi.clone()])?;
    simulate_piecewise_var(&model, len, seed)
}

pub fn simulate_piecewise_var<S: Scalar>(
    model: &PiecewiseVarModel<S>,
    len: usize,
    seed: u64,
) -> Result<TimeSeries<S>> {
    Ok(simulate_piecewise_var_traced(model, len, seed)?.0)
}

/// Like [`simulate_piecewise_var`] but also returns the innovations
/// `Z_1, …, Z_T` (row-major, `T × d`) that drove the retained sample.
pub fn simulate_piecewise_var_traced<S: Scalar>(
    model: &PiecewiseVarModel<S>,
    len: usize,
    seed: u64,
) -> Result<(TimeSeries<S>, Vec<S>)> {
    model.validate()?;
    if len == 0 {
        return Err(Error::Parameter("series length must be positive".into()));
    }
    let d = model.dim;
    let burn = burn_in(1);
    let mut rng = stream_rng(seed, 0);
    let mut state = vec![S::zero(); d];
    let mut next = vec![S::zero(); d];
    let mut values = Vec::with_capacity(len * d);
    let mut innovations = Vec::with_capacity(len * d);
    for step in 0..burn + len {
        let phi = if step < burn {
            &model.matrices[0]
        } else {
            let t = step - burn + 1;
            &model.matrices[segment_of_time(&model.breakpoints, t, len)]
        };
        for a in 0..d {
            let mut s = S::zero();
            for b in 0..d {
                s += phi[(a, b)] * state[b];
            }
            next[a] = s;
        }
        for a in 0..d {
            let z: S = standard_normal(&mut rng);
            next[a] += z;
            if step >= burn {
                innovations.push(z);
            }
        }
        std::mem::swap(&mut state, &mut next);
        if step >= burn {
            values.extend_from_slice(&state);
        }
    }
    Ok((TimeSeries::new(values, len, d)?, innovations))
}

/// Spectral description of one stationary segment.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSpectrum<S: Scalar> {
    /// Finite MA filter `Ψ_0, …, Ψ_L` driven by unit white noise.
    Ma(Vec<Matrix<S>>),
    /// Stable autoregression with innovation covariance.
    Ar {
        coefficients: Vec<Matrix<S>>,
        innovation_cov: Matrix<S>,
    },
}

impl<S: Scalar> SegmentSpectrum<S> {
    pub fn eval(&self, lambda: S) -> CMatrix<S> {
        match self {
            Self::Ma(psi) => {
                let d = psi[0].rows();
                // Ψ(e^{-iλ}) = Σ_l Ψ_l e^{-iλl}; f = Ψ Ψᴴ / 2π.
                let mut transfer = CMatrix::zeros(d, d);
                for (l, m) in psi.iter().enumerate() {
                    let w = cis(-lambda * S::of_usize(l));
                    for a in 0..d {
                        for b in 0..d {
                            transfer[(a, b)] += w * m[(a, b)];
                        }
                    }
                }
                let f = &transfer * &transfer.adjoint();
                f.scale(Complex::new(S::one() / (S::TAU()), S::zero()))
            }
            Self::Ar {
                coefficients,
                innovation_cov,
            } => ar_spectrum_at(coefficients, innovation_cov, lambda)
                .expect("stable AR segment has invertible transfer function"),
        }
    }
}

/// Time-varying spectral density `f(u, λ)`, piecewise constant in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityFn<S: Scalar> {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<SegmentSpectrum<S>>,
}

impl<S: Scalar> SpectralDensityFn<S> {
    pub fn eval(&self, u: f64, lambda: S) -> CMatrix<S> {
        self.segments[segment_of(&self.breakpoints, u)].eval(lambda)
    }

    /// Spectral density of segment `j`.
    pub fn segment(&self, j: usize) -> &SegmentSpectrum<S> {
        &self.segments[j]
    }
}

/// `f(u,λ) = (1/2π) Σ_{l,m} Ψ_l(u) Ψ_m(u)ᵀ e^{-iλ(l-m)}`.
pub fn spectral_density<S: Scalar>(model: &PiecewiseLinearModel<S>) -> Result<SpectralDensityFn<S>> {
    model.validate()?;
    Ok(SpectralDensityFn {
        breakpoints: model.breakpoints.clone(),
        segments: model.segments.iter().cloned().map(SegmentSpectrum::Ma).collect(),
    })
}

/// The models used in the simulation studies.
pub mod catalog {
    use super::*;

    fn m2<S: Scalar>(a: f64, b: f64, c: f64, d: f64) -> Matrix<S> {
        Matrix::from_rows(&[vec![S::of(a), S::of(b)], vec![S::of(c), S::of(d)]]).expect("2x2")
    }

    /// `X_t = Z_t + [[θ, 0.2], [0.2, θ]] Z_{t-1}`.
    pub fn ma1_cross<S: Scalar>(theta: f64) -> Result<ProcessModel<S>> {
        Ok(ProcessModel::Linear(PiecewiseLinearModel::stationary(
            "model-6.1",
            vec![Matrix::identity(2), m2(theta, 0.2, 0.2, theta)],
        )?))
    }

    /// `X_t = [[φ, 0.2], [0.2, φ]] X_{t-1} + Z_t`.
    pub fn var1_cross<S: Scalar>(phi: f64) -> Result<ProcessModel<S>> {
        Ok(ProcessModel::Var(PiecewiseVarModel::new(
            "model-6.2",
            Vec::new(),
            vec![m2(phi, 0.2, 0.2, phi)],
        )?))
    }

    /// Piecewise VAR(1) with `[[φ_l, 0.1], [0.1, φ_l]]` on segment `l`.
    pub fn switching_var1<S: Scalar>(breakpoints: Vec<f64>, phis: &[f64]) -> Result<ProcessModel<S>> {
        Ok(ProcessModel::Var(PiecewiseVarModel::new(
            "model-6.3",
            breakpoints,
            phis.iter().map(|&p| m2(p, 0.1, 0.1, p)).collect(),
        )?))
    }

    /// Piecewise MA(1) with `Ψ_1 = [[θ_l, 0.1], [0.1, θ_l]]` on segment `l`.
    pub fn switching_ma1<S: Scalar>(breakpoints: Vec<f64>, thetas: &[f64]) -> Result<ProcessModel<S>> {
        Ok(ProcessModel::Linear(PiecewiseLinearModel::new(
            "model-6.4",
            2,
            breakpoints,
            thetas
                .iter()
                .map(|&t| vec![Matrix::identity(2), m2(t, 0.1, 0.1, t)])
                .collect(),
        )?))
    }

    /// Piecewise scaled white noise `[[σ_l, 0.2], [0.2, σ_l]] Z_t`.
    pub fn switching_scale<S: Scalar>(breakpoints: Vec<f64>, sigmas: &[f64]) -> Result<ProcessModel<S>> {
        Ok(ProcessModel::Linear(PiecewiseLinearModel::new(
            "model-6.5",
            2,
            breakpoints,
            sigmas.iter().map(|&s| vec![m2(s, 0.2, 0.2, s)]).collect(),
        )?))
    }

    /// Three breaks at ¼, ½, ¾ touching `f_11`, then `f_22`, then only the cross spectrum.
    pub fn four_regimes<S: Scalar>() -> Result<ProcessModel<S>> {
        let r2 = 2f64.sqrt();
        Ok(ProcessModel::Linear(PiecewiseLinearModel::new(
            "model-4.4",
            2,
            vec![0.25, 0.5, 0.75],
            vec![
                vec![m2(1.0, 0.0, 0.0, 1.0)],
                vec![m2(2.0, 0.0, 0.0, 1.0)],
                vec![m2(2.0, 0.0, 0.0, 2.0)],
                vec![m2(r2, r2, 0.0, 2.0)],
            ],
        )?))
    }
}
