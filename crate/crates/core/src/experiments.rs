//! Monte Carlo studies: level and power of the test, localization accuracy,
//! and the finite-sample check of the limit covariance kernel.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::detect::{
    bootstrap_test, full_pipeline, select_window, test_window, PipelineConfig, DEFAULT_ALPHA, DEFAULT_GAMMA,
};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{derive_seed, standard_normal, stream_rng};
use crate::series::TimeSeries;
use crate::sim::{catalog, ProcessModel};
use crate::spectral::{limit_kernel, local_periodogram, KernelSpec};

/// One of the named simulation models, or a custom process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id")]
pub enum ModelSpec {
    /// Bivariate MA(1) with `Ψ₁ = [[θ, .2], [.2, θ]]`.
    #[serde(rename = "model-6.1")]
    Ma1Cross { theta: f64 },
    /// Bivariate VAR(1) with `Φ = [[φ, .2], [.2, φ]]`.
    #[serde(rename = "model-6.2")]
    Var1Cross { phi: f64 },
    /// Piecewise VAR(1), `[[φ_l, .1], [.1, φ_l]]` on segment `l`.
    #[serde(rename = "model-6.3")]
    SwitchingVar1 {
        #[serde(deserialize_with = "breakpoint_list", default)]
        breakpoints: Vec<f64>,
        phi: Vec<f64>,
    },
    /// Piecewise MA(1), `[[θ_l, .1], [.1, θ_l]]` on segment `l`.
    #[serde(rename = "model-6.4")]
    SwitchingMa1 {
        #[serde(deserialize_with = "breakpoint_list", default)]
        breakpoints: Vec<f64>,
        theta: Vec<f64>,
    },
    /// Piecewise scaled noise, `[[σ_l, .2], [.2, σ_l]] Z_t`.
    #[serde(rename = "model-6.5")]
    SwitchingScale {
        #[serde(deserialize_with = "breakpoint_list", default)]
        breakpoints: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// Four regimes with breaks at ¼, ½, ¾.
    #[serde(rename = "model-4.4")]
    FourRegimes,
    #[serde(rename = "custom")]
    Custom { process: ProcessModel<f64> },
}

/// Accepts decimals or rational strings such as `"2/3"`.
fn breakpoint_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Point {
        Number(f64),
        Text(String),
    }
    Vec::<Point>::deserialize(d)?
        .into_iter()
        .map(|p| match p {
            Point::Number(x) => Ok(x),
            Point::Text(s) => parse_fraction(&s).map_err(serde::de::Error::custom),
        })
        .collect()
}

/// Parses `"p/q"` or a decimal.
pub fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if q == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            Ok(p / q)
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}")),
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<ProcessModel<f64>> {
        match self {
            Self::Ma1Cross { theta } => catalog::ma1_cross(*theta),
            Self::Var1Cross { phi } => catalog::var1_cross(*phi),
            Self::SwitchingVar1 { breakpoints, phi } => catalog::switching_var1(breakpoints.clone(), phi),
            Self::SwitchingMa1 { breakpoints, theta } => catalog::switching_ma1(breakpoints.clone(), theta),
            Self::SwitchingScale { breakpoints, sigma } => catalog::switching_scale(breakpoints.clone(), sigma),
            Self::FourRegimes => catalog::four_regimes(),
            Self::Custom { process } => {
                process.validate()?;
                Ok(process.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Level,
    Power,
    Localization,
    Kernel,
}

fn default_runs() -> usize {
    200
}
fn default_b() -> usize {
    200
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_c() -> f64 {
    4.0
}
fn default_omega() -> f64 {
    1.0
}

/// A Monte Carlo study as read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub study: Study,
    /// Required except for kernel studies, which simulate white noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(rename = "B", default = "default_b")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fixed detection window; the window rule is used when absent.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Kernel study: `c = T/N`.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Kernel study: frequency argument `ω`.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Worker threads; 0 uses the global pool.
    #[serde(default, skip_serializing)]
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn new(study: Study, model: Option<ModelSpec>, len: usize) -> Self {
        Self {
            study,
            model,
            len,
            runs: default_runs(),
            replications: default_b(),
            alpha: DEFAULT_ALPHA,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            n: None,
            c: default_c(),
            omega: default_omega(),
            threads: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.study != Study::Kernel {
            let model = self
                .model
                .as_ref()
                .ok_or_else(|| Error::Config("a model is required for this study".into()))?
                .build()?;
            if self.study == Study::Level && !model.breakpoints().is_empty() {
                return Err(Error::Config("a level study needs a model without breaks".into()));
            }
            if self.study == Study::Localization && model.breakpoints().is_empty() {
                return Err(Error::Config("a localization study needs a model with breaks".into()));
            }
            self.pipeline(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn pipeline(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            alpha: self.alpha,
            replications: self.replications,
            gamma: self.gamma,
            seed,
            n_detect: self.n,
            n_test: None,
            order: None,
        }
    }
}

/// What happened in one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run: usize,
    pub data_seed: u64,
    pub bootstrap_seed: u64,
    pub reject: bool,
    pub p_value: f64,
    pub statistic: f64,
    /// Sieve order used by the bootstrap.
    pub p: usize,
    #[serde(rename = "N_detect")]
    pub n_detect: usize,
    #[serde(rename = "N_test")]
    pub n_test: usize,
    pub breaks: Vec<f64>,
}

/// Accuracy for one true break, from detected breaks nearest to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakAccuracy {
    pub truth: f64,
    /// Runs with at least one detected break.
    pub runs: usize,
    /// Mean over runs of the distance from the truth to the nearest detected break.
    pub mean_abs_error: f64,
    /// Standard deviation of detected breaks closer to this truth than to any other.
    pub spread: f64,
    /// Center of the fullest histogram bin among those breaks.
    pub mode: Option<f64>,
}

/// Kernel-study outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KernelOutcome {
    pub c: f64,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub omega: f64,
    pub replicates: usize,
    /// Sample variance of `√N D̂_T(1/2, ω)`.
    pub empirical: f64,
    /// Limit kernel value at `v₁ = v₂ = 1/2`, `ω₁ = ω₂ = ω`.
    pub limit: f64,
    pub ratio: f64,
    /// Exact variance for Gaussian white noise at this `(N, ω)`.
    pub exact: f64,
    pub low_precision: bool,
}

/// Result of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McResult {
    pub config: ExperimentConfig,
    pub model_name: String,
    pub rejections: usize,
    pub rejection_frequency: f64,
    pub monte_carlo_std_err: f64,
    /// `K̂ ↦ number of runs`.
    pub k_frequencies: BTreeMap<usize, usize>,
    /// All detected breaks, pooled over runs.
    pub pooled_breaks: Vec<f64>,
    pub accuracy: Vec<BreakAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelOutcome>,
    pub runs: Vec<RunRecord>,
}

pub const HISTOGRAM_BINS: usize = 64;

impl McResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Equal-width histogram of the pooled breaks on `[0, 1]`: `(lower, upper, count)`.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        histogram(&self.pooled_breaks, bins)
    }

    /// Columns `lower,upper,count`.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (lo, hi, c) in self.histogram(bins) {
            out.push_str(&format!("{lo},{hi},{c}\n"));
        }
        out
    }

    /// Fraction of runs with `K̂ = k`.
    pub fn k_share(&self, k: usize) -> f64 {
        *self.k_frequencies.get(&k).unwrap_or(&0) as f64 / self.runs.len().max(1) as f64
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
        .collect()
}

/// `√(p̂(1-p̂)/runs)`.
pub fn binomial_std_err(freq: f64, runs: usize) -> f64 {
    (freq * (1.0 - freq) / runs as f64).sqrt()
}

fn accuracy(truths: &[f64], records: &[RunRecord]) -> Vec<BreakAccuracy> {
    truths
        .iter()
        .enumerate()
        .map(|(j, &truth)| {
            let errors: Vec<f64> = records
                .iter()
                .filter(|r| !r.breaks.is_empty())
                .map(|r| r.breaks.iter().map(|b| (b - truth).abs()).fold(f64::INFINITY, f64::min))
                .collect();
            let own: Vec<f64> = records
                .iter()
                .flat_map(|r| r.breaks.iter().copied())
                .filter(|&b| nearest(truths, b) == j)
                .collect();
            let mean = own.iter().sum::<f64>() / own.len().max(1) as f64;
            let spread = if own.len() > 1 {
                (own.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (own.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mode = histogram(&own, HISTOGRAM_BINS)
                .into_iter()
                .filter(|&(_, _, c)| c > 0)
                .fold(None, |best: Option<(f64, f64, usize)>, bin| match best {
                    Some(b) if b.2 >= bin.2 => Some(b),
                    _ => Some(bin),
                })
                .map(|(lo, hi, _)| (lo + hi) / 2.0);
            BreakAccuracy {
                truth,
                runs: errors.len(),
                mean_abs_error: if errors.is_empty() {
                    f64::NAN
                } else {
                    errors.iter().sum::<f64>() / errors.len() as f64
                },
                spread,
                mode,
            }
        })
        .collect()
}

fn nearest(truths: &[f64], b: f64) -> usize {
    let mut best = 0;
    for (j, &t) in truths.iter().enumerate() {
        if (b - t).abs() < (b - truths[best]).abs() {
            best = j;
        }
    }
    best
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Data seed and bootstrap seed of run `r`.
pub fn run_seeds(master: u64, run: usize) -> (u64, u64) {
    (derive_seed(master, 2 * run as u64), derive_seed(master, 2 * run as u64 + 1))
}

fn one_run(config: &ExperimentConfig, model: &ProcessModel<f64>, run: usize) -> Result<RunRecord> {
    let (data_seed, bootstrap_seed) = run_seeds(config.seed, run);
    let series = model.simulate(config.len, data_seed)?;
    match config.study {
        Study::Level => {
            let (n_detect, n_test) = match config.n {
                Some(n) => (n, test_window(n, config.len)),
                None => {
                    let w = select_window(&series, config.gamma)?;
                    (w.n_detect, w.n_test)
                }
            };
            let t = bootstrap_test(&series, n_test, config.alpha, config.replications, bootstrap_seed, None)?;
            Ok(RunRecord {
                run,
                data_seed,
                bootstrap_seed,
                reject: t.reject,
                p_value: t.p_value,
                statistic: t.statistic,
                p: t.model.order,
                n_detect,
                n_test,
                breaks: Vec::new(),
            })
        }
        _ => {
            let r = full_pipeline(&series, &config.pipeline(bootstrap_seed))?;
            Ok(RunRecord {
                run,
                data_seed,
                bootstrap_seed,
                reject: r.test.reject,
                p_value: r.test.p_value,
                statistic: r.test.statistic,
                p: r.tuning.p,
                n_detect: r.tuning.n_detect,
                n_test: r.tuning.n_test,
                breaks: r.breaks.iter().map(|b| b.b).collect(),
            })
        }
    }
}

fn run_study(config: &ExperimentConfig) -> Result<McResult> {
    config.validate()?;
    let spec = config.model.as_ref().expect("validated");
    let model = spec.build()?;
    let records = in_pool(config.threads, || {
        (0..config.runs)
            .into_par_iter()
            .map(|r| one_run(config, &model, r))
            .collect::<Result<Vec<_>>>()
    })??;
    let rejections = records.iter().filter(|r| r.reject).count();
    let freq = rejections as f64 / config.runs as f64;
    let mut k_frequencies = BTreeMap::new();
    for r in &records {
        *k_frequencies.entry(r.breaks.len()).or_insert(0) += 1;
    }
    Ok(McResult {
        config: config.clone(),
        model_name: model.name().to_string(),
        rejections,
        rejection_frequency: freq,
        monte_carlo_std_err: binomial_std_err(freq, config.runs),
        k_frequencies,
        pooled_breaks: records.iter().flat_map(|r| r.breaks.iter().copied()).collect(),
        accuracy: accuracy(model.breakpoints(), &records),
        kernel: None,
        runs: records,
    })
}

/// Rejection frequency of the test under a model without breaks.
pub fn run_level_study(config: &ExperimentConfig) -> Result<McResult> {
    if config.study != Study::Level {
        return Err(Error::Config("expected a level study".into()));
    }
    run_study(config)
}

/// Rejection frequency and detected breaks of the full procedure.
pub fn run_power_study(config: &ExperimentConfig) -> Result<McResult> {
    if config.study != Study::Power {
        return Err(Error::Config("expected a power study".into()));
    }
    run_study(config)
}

/// Pooled break locations and the `K̂` table of the full procedure.
pub fn run_localization_study(config: &ExperimentConfig) -> Result<McResult> {
    if config.study != Study::Localization {
        return Err(Error::Config("expected a localization study".into()));
    }
    run_study(config)
}

/// Exact `Var(√N D̂_T(v, ω))` for Gaussian white noise, `d = 1`.
///
/// The prefix sum is `(1/N) Σ_{k ≤ K} (I_R - I_L)(λ_k)` with independent
/// periodogram ordinates of variance `f²` (`2f²` at `λ = π`).
pub fn white_noise_variance(n: usize, omega: f64) -> f64 {
    let half = n / 2;
    let k = ((omega * half as f64 + 1e-9).floor() as usize).min(half);
    let f2 = 1.0 / (4.0 * std::f64::consts::PI.powi(2));
    let weight: usize = (1..=k).map(|j| if j == half { 2 } else { 1 }).sum();
    2.0 * weight as f64 * f2 / n as f64
}

/// Compares the sample variance of `√N D̂_T(1/2, ω)` under Gaussian white
/// noise with the limit kernel at `c = T/N`.
pub fn run_kernel_study(c: f64, len: usize, replicates: usize, seed: u64, omega: f64) -> Result<KernelOutcome> {
    if !(c >= 2.0) {
        return Err(Error::Config(format!("c={c} must be at least 2")));
    }
    let n_real = len as f64 / c;
    let n = n_real.round() as usize;
    if (n_real - n as f64).abs() > 1e-9 || n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!("T/c = {n_real} must be an even integer")));
    }
    if replicates < 2 {
        return Err(Error::Config("at least two replicates are needed".into()));
    }
    let m = len / 2;
    let k = ((omega * (n / 2) as f64 + 1e-9).floor() as usize).min(n / 2);
    let values = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let x = TimeSeries::new((0..len).map(|_| standard_normal::<f64>(&mut rng)).collect(), len, 1)?;
            let right = local_periodogram(&x, m + n / 2, n)?;
            let left = local_periodogram(&x, m - n / 2, n)?;
            let d: f64 = (1..=k).map(|j| right.at(j)[(0, 0)].re - left.at(j)[(0, 0)].re).sum::<f64>() / n as f64;
            Ok((n as f64).sqrt() * d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / replicates as f64;
    let empirical = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64;
    let white = |_: f64| CMatrix::identity(1).scale(Complex::new(1.0 / (2.0 * std::f64::consts::PI), 0.0));
    let limit = limit_kernel(white, &KernelSpec::variance(c, 0.5, omega))?.re;
    Ok(KernelOutcome {
        c,
        len,
        n,
        omega,
        replicates,
        empirical,
        limit,
        ratio: empirical / limit,
        exact: white_noise_variance(n, omega),
        low_precision: replicates < 100,
    })
}

/// Runs whichever study the configuration names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<McResult> {
    match config.study {
        Study::Kernel => {
            if config.runs < 2 {
                return Err(Error::Config("a kernel study needs at least two replicates (runs)".into()));
            }
            let outcome = in_pool(config.threads, || {
                run_kernel_study(config.c, config.len, config.runs, config.seed, config.omega)
            })??;
            Ok(McResult {
                config: config.clone(),
                model_name: "white-noise".into(),
                rejections: 0,
                rejection_frequency: 0.0,
                monte_carlo_std_err: 0.0,
                k_frequencies: BTreeMap::new(),
                pooled_breaks: Vec::new(),
                accuracy: Vec::new(),
                kernel: Some(outcome),
                runs: Vec::new(),
            })
        }
        _ => run_study(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(study: Study, model: ModelSpec, len: usize) -> ExperimentConfig {
        ExperimentConfig {
            runs: 4,
            replications: 20,
            seed: 3,
            ..ExperimentConfig::new(study, Some(model), len)
        }
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("2/3").unwrap(), 2.0 / 3.0);
        assert_eq!(parse_fraction(" 0.25 ").unwrap(), 0.25);
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("a/2").is_err());
    }

    #[test]
    fn toml_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            study = "power"
            T = 256
            runs = 10
            B = 50
            seed = 4
            [model]
            id = "model-6.5"
            breakpoints = ["1/4", "2/3", 0.75]
            sigma = [1, 2, 1, 0.5]
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.model,
            Some(ModelSpec::SwitchingScale {
                breakpoints: vec![0.25, 2.0 / 3.0, 0.75],
                sigma: vec![1.0, 2.0, 1.0, 0.5]
            })
        );
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.gamma, 0.49);
        assert!(cfg.validate().is_ok());
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(Study::Level, ModelSpec::Ma1Cross { theta: 0.5 }, 128);
        cfg.runs = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let breaks = ModelSpec::SwitchingScale {
            breakpoints: vec![0.5],
            sigma: vec![1.0, 2.0],
        };
        assert!(small(Study::Level, breaks.clone(), 128).validate().is_err());
        assert!(small(Study::Localization, ModelSpec::Var1Cross { phi: 0.5 }, 128).validate().is_err());
        assert!(small(Study::Power, ModelSpec::Var1Cross { phi: 1.2 }, 128).validate().is_err());
        assert!(ExperimentConfig::from_toml("study = \"level\"\nT = 'x'").is_err());
        assert!(run_level_study(&small(Study::Power, breaks, 128)).is_err());
    }

    #[test]
    fn level_study_is_reproducible() {
        let cfg = small(Study::Level, ModelSpec::Ma1Cross { theta: 0.5 }, 128);
        let a = run_level_study(&cfg).unwrap();
        assert_eq!(a.runs.len(), 4);
        assert_eq!(a.rejections as f64, a.rejection_frequency * 4.0);
        assert!((a.monte_carlo_std_err - binomial_std_err(a.rejection_frequency, 4)).abs() < 1e-15);
        let b = run_level_study(&ExperimentConfig { threads: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let single = run_level_study(&ExperimentConfig { runs: 1, ..cfg }).unwrap();
        assert!(single.rejection_frequency == 0.0 || single.rejection_frequency == 1.0);
    }

    #[test]
    fn power_study_histogram_mass() {
        let cfg = small(
            Study::Power,
            ModelSpec::SwitchingScale {
                breakpoints: vec![0.5],
                sigma: vec![1.0, 3.0],
            },
            256,
        );
        let r = run_power_study(&cfg).unwrap();
        let k_total: usize = r.k_frequencies.iter().map(|(k, c)| k * c).sum();
        assert_eq!(r.pooled_breaks.len(), k_total);
        assert_eq!(r.histogram(HISTOGRAM_BINS).iter().map(|b| b.2).sum::<usize>(), k_total);
        assert_eq!(r.k_frequencies.values().sum::<usize>(), 4);
        assert_eq!(r.accuracy.len(), 1);
        assert_eq!(r.histogram_csv(8).lines().count(), 9);
    }

    #[test]
    fn overwhelming_single_break() {
        let cfg = ExperimentConfig {
            runs: 1,
            replications: 30,
            ..ExperimentConfig::new(
                Study::Localization,
                Some(ModelSpec::SwitchingScale {
                    breakpoints: vec![0.5],
                    sigma: vec![1.0, 10.0],
                }),
                512,
            )
        };
        let r = run_localization_study(&cfg).unwrap();
        assert_eq!(r.runs[0].breaks.len(), 1);
        let n = r.runs[0].n_detect as f64;
        assert!((r.runs[0].breaks[0] - 0.5).abs() <= n / 512.0);
    }

    #[test]
    fn exact_white_noise_variance() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((white_noise_variance(1024, 1.0) - (1.0 + 2.0 / 1024.0) / (4.0 * pi2)).abs() < 1e-16);
        assert!((white_noise_variance(1024, 0.5) - 0.5 / (4.0 * pi2)).abs() < 1e-16);
        assert_eq!(white_noise_variance(8, 0.0), 0.0);
    }

    #[test]
    fn kernel_study_matches_exact_variance() {
        let k = run_kernel_study(4.0, 1024, 3000, 1, 1.0).unwrap();
        assert_eq!(k.n, 256);
        // sample variance of 3000 near-Gaussian draws has relative sd ≈ √(2/3000) ≈ 0.026
        assert!((k.empirical / k.exact - 1.0).abs() < 0.1, "{k:?}");
        assert!((k.limit - 1.0 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
        let tiny = run_kernel_study(4.0, 64, 2, 1, 0.5).unwrap();
        assert!(tiny.low_precision && tiny.ratio.is_finite());
        assert!((tiny.limit - 0.5 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!(run_kernel_study(3.0, 64, 10, 1, 1.0).is_err());
        assert!(run_kernel_study(1.0, 64, 10, 1, 1.0).is_err());
    }
}
