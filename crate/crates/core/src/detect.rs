//! Break detection: the bootstrap test for the existence of breaks, the
//! hard-threshold candidate scan, iterative localization with component
//! attribution, and the data-driven window choice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::{aic_order, autocovariances, default_order_candidates, residuals_and_cov, yule_walker, ARModel, ArGenerator};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::series::TimeSeries;
use crate::spectral::{local_variance_field, sup_statistic, SupProfile};

pub const DEFAULT_GAMMA: f64 = 0.49;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPLICATES: usize = 300;
pub const DEFAULT_SEED: u64 = 20_130_501;

/// Outcome of the AR-sieve bootstrap test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult<S: Scalar> {
    pub statistic: S,
    /// Bootstrap statistics in increasing order.
    pub replicates: Vec<S>,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    /// `D̂*_{(⌊(1-α)B⌋)}`, the order statistic the test compares against.
    pub critical_value: S,
    pub n: usize,
    pub seed: u64,
    /// Sieve model driving the replicates (innovation covariance from residuals).
    pub model: ARModel<S>,
}

impl<S: Scalar> TestResult<S> {
    pub fn replications(&self) -> usize {
        self.replicates.len()
    }
}

/// Rejection decision and p-value from bootstrap replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapDecision<S> {
    pub p_value: f64,
    pub reject: bool,
    pub critical_value: S,
}

/// `reject ⇔ statistic > D̂*_{(⌊(1-α)B⌋)}` (1-based order statistic, at least the
/// first) and `p = (#{D̂* ≥ statistic} + 1)/(B + 1)`.
pub fn bootstrap_decision<S: Scalar>(statistic: S, replicates: &[S], alpha: f64) -> Result<BootstrapDecision<S>> {
    check_alpha(alpha)?;
    if replicates.is_empty() {
        return Err(Error::Parameter("at least one bootstrap replicate is required".into()));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap statistics"));
    let b = sorted.len();
    let rank = (((1.0 - alpha) * b as f64) + 1e-9).floor() as usize;
    let critical_value = sorted[rank.clamp(1, b) - 1];
    let exceed = sorted.iter().filter(|&&x| x >= statistic).count();
    Ok(BootstrapDecision {
        p_value: (exceed + 1) as f64 / (b + 1) as f64,
        reject: statistic > critical_value,
        critical_value,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha={alpha} must lie in (0, 1)")))
    }
}

/// Yule–Walker AR(`p`) sieve with `p` from the Whittle AIC unless given, and
/// innovation covariance replaced by the centered residual covariance.
pub fn fit_sieve<S: Scalar>(series: &TimeSeries<S>, order: Option<usize>) -> Result<ARModel<S>> {
    let p = match order {
        Some(p) => p,
        None => aic_order(series, &default_order_candidates(series.len()))?.order,
    };
    if p >= series.len() {
        return Err(Error::Parameter(format!("AR order {p} must be below the series length")));
    }
    let fit = yule_walker(&autocovariances(series, p)?, p)?;
    let residuals = residuals_and_cov(series, &fit)?;
    ARModel::new(fit.coefficients, residuals.covariance)
}

/// Step I: AR-sieve bootstrap test of `H₀: no break` with window length `n`.
///
/// Replicate `r` is generated from substream `r` of `seed`.
pub fn bootstrap_test<S: Scalar>(
    series: &TimeSeries<S>,
    n: usize,
    alpha: f64,
    replications: usize,
    seed: u64,
    order: Option<usize>,
) -> Result<TestResult<S>> {
    check_alpha(alpha)?;
    if replications == 0 {
        return Err(Error::Parameter("B must be at least 1".into()));
    }
    series.check_nondegenerate()?;
    let statistic = sup_statistic(series, n)?;
    let model = fit_sieve(series, order)?;
    let generator = ArGenerator::new(&model)?;
    let len = series.len();
    let mut replicates = (0..replications)
        .into_par_iter()
        .map(|r| {
            let x = generator.generate(len, &mut stream_rng(seed, r as u64))?;
            sup_statistic(&x, n)
        })
        .collect::<Result<Vec<S>>>()?;
    let decision = bootstrap_decision(statistic, &replicates, alpha)?;
    replicates.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap statistics"));
    Ok(TestResult {
        statistic,
        replicates,
        p_value: decision.p_value,
        reject: decision.reject,
        alpha,
        critical_value: decision.critical_value,
        n,
        seed,
        model,
    })
}

/// `ε = √(2 M log(d(d+1)T/(2N)))`.
pub fn threshold_from_variance<S: Scalar>(m: S, dim: usize, len: usize, n: usize) -> S {
    let factor = (dim * (dim + 1)) as f64 * len as f64 / (2 * n) as f64;
    (S::of(2.0 * factor.ln()) * m).max(S::zero()).sqrt()
}

/// Local variance estimates `M_{ab}(v, 1)` and thresholds `ε_{ab}(v)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdField<S: Scalar> {
    n: usize,
    len: usize,
    dim: usize,
    variance: Vec<S>,
    epsilon: Vec<S>,
}

pub fn threshold_field<S: Scalar>(series: &TimeSeries<S>, n: usize) -> Result<ThresholdField<S>> {
    let variance = local_variance_field(series, n)?;
    let (d, len) = (series.dim(), series.len());
    let epsilon = variance.iter().map(|&m| threshold_from_variance(m, d, len, n)).collect();
    Ok(ThresholdField {
        n,
        len,
        dim: d,
        variance,
        epsilon,
    })
}

impl<S: Scalar> ThresholdField<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.variance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, m: usize, a: usize, b: usize) -> usize {
        (m - self.n) * self.dim * self.dim + a * self.dim + b
    }

    /// `M_{ab}(m/T, 1)`.
    pub fn variance(&self, m: usize, a: usize, b: usize) -> S {
        self.variance[self.slot(m, a, b)]
    }

    /// `ε_{ab}(m/T)`.
    pub fn epsilon(&self, m: usize, a: usize, b: usize) -> S {
        self.epsilon[self.slot(m, a, b)]
    }
}

fn check_compatible<S: Scalar>(profile: &SupProfile<S>, thresholds: &ThresholdField<S>) -> Result<()> {
    if profile.n() != thresholds.n || profile.len() != thresholds.len || profile.dim() != thresholds.dim {
        return Err(Error::Parameter("statistic grid and thresholds differ in (N, T, d)".into()));
    }
    Ok(())
}

fn weight<S: Scalar>(n: usize, gamma: f64) -> S {
    S::of((n as f64).powf(gamma))
}

/// Grid points `m` with `N^γ sup_ω |[D̂(m/T, ω)]_{ab}| > ε_{ab}(m/T)` for some `(a, b)`.
pub fn exceedances<S: Scalar>(profile: &SupProfile<S>, thresholds: &ThresholdField<S>, gamma: f64) -> Result<Vec<bool>> {
    check_compatible(profile, thresholds)?;
    let w: S = weight(profile.n(), gamma);
    let d = profile.dim();
    Ok(profile
        .indices()
        .map(|m| (0..d).any(|a| (0..d).any(|b| w * profile.value(m, a, b) > thresholds.epsilon(m, a, b))))
        .collect())
}

/// Step II: maximal runs `[m_start, m_end]` of consecutive exceeding grid points.
pub fn candidate_sets<S: Scalar>(
    profile: &SupProfile<S>,
    thresholds: &ThresholdField<S>,
    gamma: f64,
) -> Result<Vec<(usize, usize)>> {
    let hits = exceedances(profile, thresholds, gamma)?;
    Ok(runs(&hits, profile.n()))
}

fn runs(hits: &[bool], offset: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &h) in hits.iter().enumerate() {
        match (h, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s + offset, i - 1 + offset));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + offset, hits.len() - 1 + offset));
    }
    out
}

/// A localized break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedBreak {
    /// Rescaled location `m/T`.
    pub b: f64,
    /// Grid index `m`.
    pub index: usize,
    /// `components[a][b]`: whether entry `(a, b)` exceeds its threshold at the break.
    pub components: Vec<Vec<bool>>,
}

/// Output of Steps II–III.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub candidates: Vec<(usize, usize)>,
    pub breaks: Vec<DetectedBreak>,
}

impl Localization {
    pub fn count(&self) -> usize {
        self.breaks.len()
    }
}

/// Step III: repeatedly takes the exceeding grid point with the largest
/// `max_{ab} N^γ sup_ω |[D̂]_{ab}|` (ties to the smallest index) and deletes all
/// points within `N` of it. Breaks are returned in increasing order with
/// their component masks.
pub fn localize_breaks<S: Scalar>(
    profile: &SupProfile<S>,
    thresholds: &ThresholdField<S>,
    gamma: f64,
) -> Result<Localization> {
    let mut remaining = exceedances(profile, thresholds, gamma)?;
    let candidates = runs(&remaining, profile.n());
    let n = profile.n();
    let d = profile.dim();
    let w: S = weight(n, gamma);
    let scores: Vec<S> = profile
        .indices()
        .map(|m| profile.at(m).iter().fold(S::zero(), |acc, &x| acc.max(w * x)))
        .collect();
    let mut chosen = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for (i, &alive) in remaining.iter().enumerate() {
            if alive && best.is_none_or(|j| scores[i] > scores[j]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        chosen.push(i + n);
        let lo = i.saturating_sub(n);
        let hi = (i + n).min(remaining.len() - 1);
        remaining[lo..=hi].fill(false);
    }
    chosen.sort_unstable();
    let breaks = chosen
        .into_iter()
        .map(|m| DetectedBreak {
            b: m as f64 / profile.len() as f64,
            index: m,
            components: (0..d)
                .map(|a| (0..d).map(|b| w * profile.value(m, a, b) > thresholds.epsilon(m, a, b)).collect())
                .collect(),
        })
        .collect();
    Ok(Localization { candidates, breaks })
}

/// Steps II–III for window length `n`.
pub fn detect<S: Scalar>(series: &TimeSeries<S>, n: usize, gamma: f64) -> Result<(SupProfile<S>, ThresholdField<S>, Localization)> {
    let profile = SupProfile::compute(series, n)?;
    let thresholds = threshold_field(series, n)?;
    let localization = localize_breaks(&profile, &thresholds, gamma)?;
    Ok((profile, thresholds, localization))
}

/// Power-of-two window lengths `2^i`, `⌈log₂ √T⌉ ≤ i ≤ ⌊log₂ T^{5/6}⌋`.
pub fn window_candidates(len: usize) -> Vec<usize> {
    let t = len as u128;
    // 2^i ≥ √T ⇔ 4^i ≥ T and 2^i ≤ T^{5/6} ⇔ 64^i ≤ T^5
    let lo = (0..64u32).find(|&i| 4u128.checked_pow(i).is_none_or(|p| p >= t)).unwrap_or(64);
    let t5 = t.checked_pow(5);
    let hi = (0..64u32)
        .take_while(|&i| match (64u128.checked_pow(i), t5) {
            (Some(p), Some(t5)) => p <= t5,
            (None, Some(_)) => false,
            (_, None) => (6.0 * i as f64) <= 5.0 * (len as f64).log2(),
        })
        .last();
    match hi {
        Some(hi) if lo <= hi => (lo..=hi).map(|i| 1usize << i).collect(),
        _ => Vec::new(),
    }
}

/// `N` used by the test for a detection window `N*`: `2N*`, reduced to the
/// largest even value with `2N ≤ T` when needed.
pub fn test_window(n_detect: usize, len: usize) -> usize {
    (2 * n_detect).min(len / 2 / 2 * 2)
}

/// Result of the window-length rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    pub n_detect: usize,
    pub n_test: usize,
    /// `(N, K̂(N))` for every candidate window.
    pub diagnostics: Vec<(usize, usize)>,
}

/// `i* = max{i ≥ 2 : K̂(N_{i-1}) ≤ K̂(N_i)}`, or the last index if no such `i`.
pub fn choose_index(counts: &[usize]) -> usize {
    (1..counts.len())
        .rev()
        .find(|&i| counts[i - 1] <= counts[i])
        .unwrap_or(counts.len().saturating_sub(1))
}

/// Data-driven window lengths from the number of breaks detected per candidate window.
pub fn select_window<S: Scalar>(series: &TimeSeries<S>, gamma: f64) -> Result<WindowSelection> {
    let windows = window_candidates(series.len());
    if windows.is_empty() {
        return Err(Error::Parameter(format!(
            "series length {} too short for the window rule",
            series.len()
        )));
    }
    let diagnostics = windows
        .par_iter()
        .map(|&n| detect(series, n, gamma).map(|(_, _, loc)| (n, loc.count())))
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = diagnostics.iter().map(|&(_, k)| k).collect();
    let n_detect = windows[choose_index(&counts)];
    Ok(WindowSelection {
        n_detect,
        n_test: test_window(n_detect, series.len()),
        diagnostics,
    })
}

/// Settings of the complete procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub replications: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Detection window; chosen by the window rule when absent.
    pub n_detect: Option<usize>,
    /// Test window; `2·N_detect` (within `T/2`) when absent.
    pub n_test: Option<usize>,
    /// Sieve order; Whittle AIC when absent.
    pub order: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            replications: DEFAULT_REPLICATES,
            gamma: DEFAULT_GAMMA,
            seed: DEFAULT_SEED,
            n_detect: None,
            n_test: None,
            order: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::Parameter(format!("gamma={} must lie in (0, 0.5)", self.gamma)));
        }
        if self.replications == 0 {
            return Err(Error::Parameter("B must be at least 1".into()));
        }
        for n in [self.n_detect, self.n_test].into_iter().flatten() {
            if n == 0 || !n.is_multiple_of(2) {
                return Err(Error::Parameter(format!("window length N={n} must be even and positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestSummary {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub replications: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub critical_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub gamma: f64,
    #[serde(rename = "N_detect")]
    pub n_detect: usize,
    #[serde(rename = "N_test")]
    pub n_test: usize,
    pub p: usize,
    pub seed: u64,
    /// `[N, K̂(N)]` per candidate window when the window rule ran.
    #[serde(rename = "windowDiagnostics")]
    pub window_diagnostics: Vec<(usize, usize)>,
}

/// Diagnostic curve of one component: `v ↦ N^γ sup_ω |[D̂]_{ab}|` and `ε_{ab}(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// 1-based `"a,b"`.
    pub component: String,
    pub v: Vec<f64>,
    pub value: Vec<f64>,
    pub threshold: Vec<f64>,
}

/// Serializable AR sieve model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SieveSummary {
    pub order: usize,
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub innovation_cov: Vec<Vec<f64>>,
}

impl<S: Scalar> From<&ARModel<S>> for SieveSummary {
    fn from(m: &ARModel<S>) -> Self {
        let rows = |x: &crate::linalg::Matrix<S>| {
            x.to_rows().into_iter().map(|r| r.into_iter().map(Scalar::as_f64).collect()).collect()
        };
        Self {
            order: m.order,
            coefficients: m.coefficients.iter().map(rows).collect(),
            innovation_cov: rows(&m.innovation_cov),
        }
    }
}

/// Complete result of the procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakReport {
    pub test: TestSummary,
    pub tuning: Tuning,
    #[serde(rename = "K")]
    pub k: usize,
    pub breaks: Vec<DetectedBreak>,
    pub curves: Vec<Curve>,
    /// Step II runs as `[v_start, v_end]`.
    pub candidates: Vec<(f64, f64)>,
    pub ar_model: SieveSummary,
}

impl BreakReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("invalid report: {e}")))
    }

    /// Columns `component,v,value,threshold`, one row per grid point and component.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("component,v,value,threshold\n");
        for c in &self.curves {
            for ((v, x), e) in c.v.iter().zip(&c.value).zip(&c.threshold) {
                out.push_str(&format!("\"{}\",{v},{x},{e}\n", c.component));
            }
        }
        out
    }
}

fn curves<S: Scalar>(profile: &SupProfile<S>, thresholds: &ThresholdField<S>, gamma: f64) -> Vec<Curve> {
    let d = profile.dim();
    let w: S = weight(profile.n(), gamma);
    let v: Vec<f64> = profile.indices().map(|m| m as f64 / profile.len() as f64).collect();
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            out.push(Curve {
                component: format!("{},{}", a + 1, b + 1),
                v: v.clone(),
                value: profile.indices().map(|m| (w * profile.value(m, a, b)).as_f64()).collect(),
                threshold: profile.indices().map(|m| thresholds.epsilon(m, a, b).as_f64()).collect(),
            });
        }
    }
    out
}

/// Window rule, bootstrap test and, on rejection, localization of the breaks.
pub fn full_pipeline<S: Scalar>(series: &TimeSeries<S>, config: &PipelineConfig) -> Result<BreakReport> {
    config.validate()?;
    series.check_nondegenerate()?;
    let len = series.len();
    let (n_detect, diagnostics) = match config.n_detect {
        Some(n) => (n, Vec::new()),
        None => {
            let w = select_window(series, config.gamma)?;
            (w.n_detect, w.diagnostics)
        }
    };
    let n_test = config.n_test.unwrap_or_else(|| test_window(n_detect, len));
    let test = bootstrap_test(series, n_test, config.alpha, config.replications, config.seed, config.order)?;
    let profile = SupProfile::compute(series, n_detect)?;
    let thresholds = threshold_field(series, n_detect)?;
    let localization = if test.reject {
        localize_breaks(&profile, &thresholds, config.gamma)?
    } else {
        Localization {
            candidates: Vec::new(),
            breaks: Vec::new(),
        }
    };
    let to_v = |m: usize| m as f64 / len as f64;
    Ok(BreakReport {
        test: TestSummary {
            statistic: test.statistic.as_f64(),
            p_value: test.p_value,
            reject: test.reject,
            alpha: test.alpha,
            replications: test.replications(),
            n: test.n,
            critical_value: test.critical_value.as_f64(),
        },
        tuning: Tuning {
            gamma: config.gamma,
            n_detect,
            n_test,
            p: test.model.order,
            seed: config.seed,
            window_diagnostics: diagnostics,
        },
        k: localization.count(),
        breaks: localization.breaks,
        curves: curves(&profile, &thresholds, config.gamma),
        candidates: localization.candidates.iter().map(|&(a, b)| (to_v(a), to_v(b))).collect(),
        ar_model: SieveSummary::from(&test.model),
    })
}
