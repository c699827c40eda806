//! Local periodograms, the cumulated periodogram-difference process `D̂_T(v, ω)`,
//! its sup statistics, and the Gaussian limit covariance kernel.
//!
//! Time indices in this module follow the 1-based convention of the model:
//! the grid point `m = ⌊vT⌋` compares samples `m-N+1..=m` (left block) with
//! `m+1..=m+N` (right block). Frequencies are the Fourier frequencies
//! `λ_k = 2πk/N`, `k = 1..=N/2`, and `ω ∈ [0, 1]` corresponds to `k = ⌊ωN/2⌋`.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Grid points processed from one fresh FFT before the DFTs are recomputed.
const CHUNK: usize = 64;

fn czero<S: Scalar>() -> Complex<S> {
    Complex::new(S::zero(), S::zero())
}

/// Periodogram of the `N` observations centered at `j0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPeriodogram<S: Scalar> {
    pub center: usize,
    pub n: usize,
    /// `I_N(λ_k)` for `k = 1..=N/2`.
    pub matrices: Vec<CMatrix<S>>,
}

impl<S: Scalar> LocalPeriodogram<S> {
    /// `I_N(λ_k)`, `1 ≤ k ≤ N/2`.
    pub fn at(&self, k: usize) -> &CMatrix<S> {
        &self.matrices[k - 1]
    }

    pub fn frequency(&self, k: usize) -> S {
        S::TAU() * S::of_usize(k) / S::of_usize(self.n)
    }
}

fn check_window(n: usize, len: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Parameter(format!("window length N={n} must be even and positive")));
    }
    if n > len {
        return Err(Error::Parameter(format!("window length N={n} exceeds the series length {len}")));
    }
    Ok(())
}

fn plan<S: Scalar>(len: usize) -> Arc<dyn Fft<S>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// DFT `Σ_r X_{first+r} e^{-iλ_k r}` (0-based `first`, zero padding outside
/// the sample) for `k = 1..=kmax`, laid out `[k-1][component]`.
fn window_dft<S: Scalar>(
    series: &TimeSeries<S>,
    first: isize,
    window: usize,
    kmax: usize,
    fft: &dyn Fft<S>,
) -> Vec<Complex<S>> {
    let d = series.dim();
    let mut out = vec![czero(); kmax * d];
    let mut buf = vec![czero(); window];
    for a in 0..d {
        for (r, z) in buf.iter_mut().enumerate() {
            *z = Complex::new(series.get_padded(first + r as isize, a), S::zero());
        }
        fft.process(&mut buf);
        for k in 1..=kmax {
            out[(k - 1) * d + a] = buf[k];
        }
    }
    out
}

/// `I_N(u, λ_k) = J Jᴴ / (2πN)` with `j0 = ⌊uT⌋ = center`.
pub fn local_periodogram<S: Scalar>(series: &TimeSeries<S>, center: usize, n: usize) -> Result<LocalPeriodogram<S>> {
    check_window(n, series.len())?;
    let d = series.dim();
    let first = center as isize - (n / 2) as isize;
    let dft = window_dft(series, first, n, n / 2, plan::<S>(n).as_ref());
    let scale = S::one() / (S::TAU() * S::of_usize(n));
    let matrices = dft
        .chunks(d)
        .map(|j| CMatrix::from_fn(d, d, |a, b| j[a] * j[b].conj() * scale))
        .collect();
    Ok(LocalPeriodogram { center, n, matrices })
}

/// DFT of a window that advances one sample at a time:
/// `J_{s+1}(k) = (J_s(k) - x_s + x_{s+L}) e^{iλ_k}`.
struct Slider<S: Scalar> {
    window: usize,
    dim: usize,
    twiddle: Vec<Complex<S>>,
    dft: Vec<Complex<S>>,
    start: usize,
}

impl<S: Scalar> Slider<S> {
    fn new(series: &TimeSeries<S>, window: usize, kmax: usize, start: usize, fft: &dyn Fft<S>) -> Self {
        let twiddle = (1..=kmax)
            .map(|k| cis(S::TAU() * S::of_usize(k) / S::of_usize(window)))
            .collect();
        Self {
            window,
            dim: series.dim(),
            twiddle,
            dft: window_dft(series, start as isize, window, kmax, fft),
            start,
        }
    }

    fn advance(&mut self, series: &TimeSeries<S>) {
        let d = self.dim;
        let old = series.row(self.start);
        let new = series.row(self.start + self.window);
        for (k, w) in self.twiddle.iter().enumerate() {
            for a in 0..d {
                let j = &mut self.dft[k * d + a];
                *j = (*j + (new[a] - old[a])) * w;
            }
        }
        self.start += 1;
    }

    fn at(&self, k: usize) -> &[Complex<S>] {
        &self.dft[(k - 1) * self.dim..k * self.dim]
    }
}

/// Runs `visit(m, prefix_block, out)` for every grid point `m = N..=T-N`,
/// where `prefix_block` holds `P(m, k)` for `k = 0..=N/2` (each `d × d`,
/// row-major) and `out` is the `stride`-long output slot of `m`.
///
/// Grid points are processed in fixed chunks, each starting from fresh FFTs,
/// so the result does not depend on the number of worker threads.
fn scan_grid<S, X, F>(series: &TimeSeries<S>, n: usize, stride: usize, visit: F) -> Result<Vec<X>>
where
    S: Scalar,
    X: Copy + Default + Send,
    F: Fn(usize, &[Complex<S>], &mut [X]) + Sync,
{
    check_window(n, series.len())?;
    let len = series.len();
    if 2 * n > len {
        return Err(Error::Parameter(format!("need 2N ≤ T, got N={n}, T={len}")));
    }
    let d = series.dim();
    let half = n / 2;
    let points = len - 2 * n + 1;
    let fft = plan::<S>(n);
    let scale = S::one() / (S::TAU() * S::of_usize(n) * S::of_usize(n));
    let mut out = vec![X::default(); points * stride];
    out.par_chunks_mut(CHUNK * stride)
        .enumerate()
        .for_each(|(c, slots)| {
            let m0 = n + c * CHUNK;
            let mut left = Slider::new(series, n, half, m0 - n, fft.as_ref());
            let mut right = Slider::new(series, n, half, m0, fft.as_ref());
            let mut block = vec![czero::<S>(); (half + 1) * d * d];
            let count = slots.len() / stride;
            for i in 0..count {
                if i > 0 {
                    left.advance(series);
                    right.advance(series);
                }
                for k in 1..=half {
                    let (jl, jr) = (left.at(k), right.at(k));
                    let (prev, cur) = block.split_at_mut(k * d * d);
                    let prev = &prev[(k - 1) * d * d..];
                    for a in 0..d {
                        for b in a..d {
                            let diff = jr[a] * jr[b].conj() - jl[a] * jl[b].conj();
                            cur[a * d + b] = prev[a * d + b] + diff * scale;
                            cur[b * d + a] = cur[a * d + b].conj();
                        }
                    }
                }
                visit(m0 + i, &block, &mut slots[i * stride..(i + 1) * stride]);
            }
        });
    Ok(out)
}

/// `D̂_T(v, ω)` on the lattice `m = ⌊vT⌋ ∈ {N, …, T-N}`, `k = 0..=N/2`, stored
/// as prefix sums `P(m, k) = (1/N) Σ_{κ ≤ k} [I_N(right, λ_κ) - I_N(left, λ_κ)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DGrid<S: Scalar> {
    n: usize,
    len: usize,
    dim: usize,
    prefix: Vec<Complex<S>>,
}

pub fn d_grid<S: Scalar>(series: &TimeSeries<S>, n: usize) -> Result<DGrid<S>> {
    let d = series.dim();
    let stride = (n / 2 + 1) * d * d;
    let prefix = scan_grid(series, n, stride, |_, block, out| out.copy_from_slice(block))?;
    Ok(DGrid {
        n,
        len: series.len(),
        dim: d,
        prefix,
    })
}

impl<S: Scalar> DGrid<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest frequency index `N/2`.
    pub fn half(&self) -> usize {
        self.n / 2
    }

    /// Grid indices `m = N..=T-N`.
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.n..=self.len - self.n
    }

    pub fn num_points(&self) -> usize {
        self.len - 2 * self.n + 1
    }

    fn offset(&self, m: usize, k: usize) -> usize {
        assert!(self.indices().contains(&m), "grid index {m} outside {:?}", self.indices());
        assert!(k <= self.half(), "frequency index {k} exceeds N/2");
        ((m - self.n) * (self.half() + 1) + k) * self.dim * self.dim
    }

    pub fn entry(&self, m: usize, k: usize, a: usize, b: usize) -> Complex<S> {
        self.prefix[self.offset(m, k) + a * self.dim + b]
    }

    /// `P(m, k)` as a matrix.
    pub fn prefix(&self, m: usize, k: usize) -> CMatrix<S> {
        let o = self.offset(m, k);
        let d = self.dim;
        CMatrix::from_fn(d, d, |a, b| self.prefix[o + a * d + b])
    }

    /// Grid index for rescaled time `v`, clamped to `[N/T, 1-N/T]`.
    pub fn index_of(&self, v: f64) -> usize {
        let m = rescaled_floor(v, self.len);
        m.clamp(self.n as i64, (self.len - self.n) as i64) as usize
    }

    /// `D̂_T(v, ω)` for any `(v, ω) ∈ [0, 1]²`.
    pub fn at(&self, v: f64, omega: f64) -> CMatrix<S> {
        let k = rescaled_floor(omega, self.half()).clamp(0, self.half() as i64) as usize;
        self.prefix(self.index_of(v), k)
    }

    /// `sup_ω |[D̂_T(m/T, ω)]_{ab}|`.
    pub fn sup_over_omega(&self, m: usize, a: usize, b: usize) -> S {
        (0..=self.half())
            .fold(S::zero(), |acc, k| acc.max(self.entry(m, k, a, b).norm_sqr()))
            .sqrt()
    }

    /// `sup_{v,ω} ‖D̂_T(v, ω)‖_∞`.
    pub fn sup_statistic(&self) -> S {
        self.prefix.iter().fold(S::zero(), |acc, z| acc.max(z.norm_sqr())).sqrt()
    }

    pub fn profile(&self) -> SupProfile<S> {
        let d = self.dim;
        let mut values = Vec::with_capacity(self.num_points() * d * d);
        for m in self.indices() {
            for a in 0..d {
                for b in 0..d {
                    values.push(self.sup_over_omega(m, a, b));
                }
            }
        }
        SupProfile {
            n: self.n,
            len: self.len,
            dim: d,
            values,
        }
    }

    /// `{N, T, d, v: [...], entries: [v][k][a][b] as [re, im]}`.
    pub fn to_json(&self) -> Value {
        let d = self.dim;
        let entries: Vec<Value> = self
            .indices()
            .map(|m| {
                Value::Array(
                    (0..=self.half())
                        .map(|k| {
                            let o = self.offset(m, k);
                            json!((0..d)
                                .map(|a| {
                                    (0..d)
                                        .map(|b| {
                                            let z = self.prefix[o + a * d + b];
                                            [z.re.as_f64(), z.im.as_f64()]
                                        })
                                        .collect::<Vec<_>>()
                                })
                                .collect::<Vec<_>>())
                        })
                        .collect(),
                )
            })
            .collect();
        json!({
            "N": self.n,
            "T": self.len,
            "d": d,
            "v": self.indices().map(|m| m as f64 / self.len as f64).collect::<Vec<_>>(),
            "entries": entries,
        })
    }
}

/// `⌊x·scale⌋`, robust to `x` being a rounded ratio `m/scale`.
fn rescaled_floor(x: f64, scale: usize) -> i64 {
    (x * scale as f64 + 1e-9).floor() as i64
}

/// `sup_ω |[D̂_T(m/T, ω)]_{ab}|` for every grid point and component, computed
/// without storing the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SupProfile<S: Scalar> {
    n: usize,
    len: usize,
    dim: usize,
    values: Vec<S>,
}

impl<S: Scalar> SupProfile<S> {
    pub fn compute(series: &TimeSeries<S>, n: usize) -> Result<Self> {
        let d = series.dim();
        let half = n / 2;
        let values = scan_grid(series, n, d * d, |_, block, out: &mut [S]| {
            // [P]_{ba} is the exact conjugate of [P]_{ab}, so only a ≤ b is scanned.
            for a in 0..d {
                for b in a..d {
                    let sq = (0..=half).fold(S::zero(), |acc, k| acc.max(block[k * d * d + a * d + b].norm_sqr()));
                    out[a * d + b] = sq.sqrt();
                    out[b * d + a] = out[a * d + b];
                }
            }
        })?;
        Ok(Self {
            n,
            len: series.len(),
            dim: d,
            values,
        })
    }

    /// Profile from precomputed values laid out `[m-N][a·d+b]`.
    pub fn from_values(n: usize, len: usize, dim: usize, values: Vec<S>) -> Result<Self> {
        if 2 * n > len || values.len() != (len - 2 * n + 1) * dim * dim {
            return Err(Error::Parameter("profile values do not match (N, T, d)".into()));
        }
        Ok(Self { n, len, dim, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.n..=self.len - self.n
    }

    pub fn num_points(&self) -> usize {
        self.len - 2 * self.n + 1
    }

    /// `sup_ω |[D̂_T(m/T, ω)]_{ab}|`.
    pub fn value(&self, m: usize, a: usize, b: usize) -> S {
        self.values[(m - self.n) * self.dim * self.dim + a * self.dim + b]
    }

    /// All `d²` component values at grid index `m`, row-major.
    pub fn at(&self, m: usize) -> &[S] {
        let dd = self.dim * self.dim;
        &self.values[(m - self.n) * dd..(m - self.n + 1) * dd]
    }

    /// The sup statistic `D̂_T`.
    pub fn max(&self) -> S {
        self.values.iter().fold(S::zero(), |acc, &x| acc.max(x))
    }

    /// `v ↦ N^γ sup_ω |[D̂_T(v, ω)]_{ab}|` over the grid.
    pub fn curve(&self, a: usize, b: usize, gamma: f64) -> Vec<(f64, S)> {
        let w = S::of((self.n as f64).powf(gamma));
        self.indices()
            .map(|m| (m as f64 / self.len as f64, w * self.value(m, a, b)))
            .collect()
    }

    /// Curve CSV with columns `component,v,value` (1-based component labels).
    pub fn to_curve_csv(&self, gamma: f64) -> String {
        let mut out = String::from("component,v,value\n");
        for a in 0..self.dim {
            for b in 0..self.dim {
                for (v, x) in self.curve(a, b, gamma) {
                    out.push_str(&format!("\"{},{}\",{v},{x}\n", a + 1, b + 1));
                }
            }
        }
        out
    }
}

/// `D̂_T` without materializing the grid.
pub fn sup_statistic<S: Scalar>(series: &TimeSeries<S>, n: usize) -> Result<S> {
    Ok(SupProfile::compute(series, n)?.max())
}

/// Local variance estimates
/// `M_{ab}(m) = (1/N) Σ_{k=1}^{N} [I_{2N}(m, λ_{k,2N})]_{aa} [I_{2N}(m, λ_{k,2N})]_{bb}`
/// on the length-`2N` block centered at each grid point, laid out `[m-N][a·d+b]`.
pub fn local_variance_field<S: Scalar>(series: &TimeSeries<S>, n: usize) -> Result<Vec<S>> {
    check_window(n, series.len())?;
    let len = series.len();
    if 2 * n > len {
        return Err(Error::Parameter(format!("need 2N ≤ T, got N={n}, T={len}")));
    }
    let d = series.dim();
    let window = 2 * n;
    let points = len - 2 * n + 1;
    let fft = plan::<S>(window);
    let scale = S::one() / (S::TAU() * S::of_usize(window));
    let inv_n = S::one() / S::of_usize(n);
    let mut out = vec![S::zero(); points * d * d];
    out.par_chunks_mut(CHUNK * d * d).enumerate().for_each(|(c, slots)| {
        let m0 = n + c * CHUNK;
        let mut slider = Slider::new(series, window, n, m0 - n, fft.as_ref());
        let mut diag = vec![S::zero(); d];
        for (i, slot) in slots.chunks_mut(d * d).enumerate() {
            if i > 0 {
                slider.advance(series);
            }
            slot.fill(S::zero());
            for k in 1..=n {
                for (a, p) in diag.iter_mut().enumerate() {
                    *p = slider.at(k)[a].norm_sqr() * scale;
                }
                for a in 0..d {
                    for b in 0..d {
                        slot[a * d + b] += diag[a] * diag[b];
                    }
                }
            }
            for x in slot.iter_mut() {
                *x *= inv_n;
            }
        }
    });
    Ok(out)
}

/// Points and components at which the limit covariance kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// `c = lim T/N`, at least 2.
    pub c: f64,
    /// `(a₁, b₁, a₂, b₂)`, 0-based.
    pub components: [usize; 4],
    pub v1: f64,
    pub omega1: f64,
    pub v2: f64,
    pub omega2: f64,
}

impl KernelSpec {
    /// Diagonal entry `(0,0)` at a single point.
    pub fn variance(c: f64, v: f64, omega: f64) -> Self {
        Self {
            c,
            components: [0; 4],
            v1: v,
            omega1: omega,
            v2: v,
            omega2: omega,
        }
    }
}

/// `Cov([G(v₁,ω₁)]_{a₁b₁}, [G(v₂,ω₂)]_{a₂b₂})` of the Gaussian limit of
/// `√N D̂_T` under a stationary spectral density `f`:
///
/// * `0` if `|Δv| ≥ 2/c`,
/// * `-[2 - |Δv|c] (1/π) ∫₀^{min(ω₁,ω₂)π} ρ(λ) dλ` if `1/c ≤ |Δv| ≤ 2/c`,
/// * `[2 - 3|Δv|c] (1/π) ∫₀^{min(ω₁,ω₂)π} ρ(λ) dλ` if `|Δv| ≤ 1/c`,
///
/// with `ρ(λ) = f_{a₁a₂}(λ) f_{b₁b₂}(-λ) + f_{a₁b₂}(λ) f_{b₁a₂}(-λ)` and both
/// `v` clamped to `[1/c, 1-1/c]`.
pub fn limit_kernel<S: Scalar>(f: impl Fn(S) -> CMatrix<S>, spec: &KernelSpec) -> Result<Complex<S>> {
    if !(spec.c >= 2.0) {
        return Err(Error::Parameter(format!("kernel ratio c={} must be at least 2", spec.c)));
    }
    let clamp = |v: f64| v.max(1.0 / spec.c).min(1.0 - 1.0 / spec.c);
    let dv = (clamp(spec.v2) - clamp(spec.v1)).abs();
    let weight = if dv * spec.c >= 2.0 {
        return Ok(czero());
    } else if dv * spec.c >= 1.0 {
        -(2.0 - dv * spec.c)
    } else {
        2.0 - 3.0 * dv * spec.c
    };
    let upper = spec.omega1.min(spec.omega2).clamp(0.0, 1.0) * std::f64::consts::PI;
    if upper == 0.0 {
        return Ok(czero());
    }
    let [a1, b1, a2, b2] = spec.components;
    let rho = |lambda: S| {
        let m = f(lambda);
        // f(-λ) = conj(f(λ)) for a real-valued process
        m[(a1, a2)] * m[(b1, b2)].conj() + m[(a1, b2)] * m[(b1, a2)].conj()
    };
    let integral = adaptive_simpson(&rho, S::zero(), S::of(upper), 1e-8);
    Ok(integral * S::of(weight / std::f64::consts::PI))
}

/// Adaptive Simpson quadrature of a complex integrand to relative tolerance `rel`.
pub fn adaptive_simpson<S: Scalar>(f: &impl Fn(S) -> Complex<S>, a: S, b: S, rel: f64) -> Complex<S> {
    // coarse composite estimate sets the absolute tolerance scale
    let panels = 64;
    let h = (b - a) / S::of_usize(panels);
    let mut coarse = czero::<S>();
    for i in 0..panels {
        let x0 = a + h * S::of_usize(i);
        let x1 = x0 + h;
        coarse += (f(x0) + f((x0 + x1) / S::of(2.0)) * S::of(4.0) + f(x1)) * (h / S::of(6.0));
    }
    let tol = S::of(rel) * coarse.norm().max(S::of(1e-300));
    let fa = f(a);
    let fb = f(b);
    let mid = (a + b) / S::of(2.0);
    let fm = f(mid);
    let whole = (fa + fm * S::of(4.0) + fb) * ((b - a) / S::of(6.0));
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<S: Scalar>(
    f: &impl Fn(S) -> Complex<S>,
    a: S,
    b: S,
    fa: Complex<S>,
    fm: Complex<S>,
    fb: Complex<S>,
    whole: Complex<S>,
    tol: S,
    depth: u32,
) -> Complex<S> {
    let two = S::of(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm * S::of(4.0) + fm) * ((m - a) / S::of(6.0));
    let right = (fm + frm * S::of(4.0) + fb) * ((b - m) / S::of(6.0));
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= S::of(15.0) * tol {
        return left + right + delta / S::of(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}
