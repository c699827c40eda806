//! Command-line front end: CSV ingestion, the `test`, `detect`, `simulate`
//! and `experiment` commands, and SVG rendering of the diagnostic curves.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use specbreak::detect::{
    bootstrap_test, select_window, BreakReport, PipelineConfig, SieveSummary, TestSummary, Tuning,
    DEFAULT_ALPHA, DEFAULT_GAMMA, DEFAULT_REPLICATES, DEFAULT_SEED,
};
use specbreak::experiments::{parse_fraction, run_experiment, ExperimentConfig, ModelSpec, HISTOGRAM_BINS};
use specbreak::{full_pipeline, TimeSeries};

/// Fewest rows accepted from a CSV file.
pub const MIN_ROWS: usize = 64;

/// Environment variable holding the default number of worker threads.
pub const THREADS_ENV: &str = "SPECBREAK_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input data; exit code 2.
    Usage(String),
    /// Numerical or runtime failure; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<specbreak::Error> for CliError {
    fn from(e: specbreak::Error) -> Self {
        use specbreak::Error as E;
        match e {
            E::Config(_) | E::Parameter(_) | E::Data(_) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "specbreak", version, about = "Test for and localize structural breaks in the spectrum of a multivariate time series")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bootstrap test for the presence of any break.
    Test(TestArgs),
    /// Test, then estimate the number and location of breaks.
    Detect(DetectArgs),
    /// Simulate one of the named models to CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study from a TOML or JSON configuration.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file: rows are time points, columns components; header optional.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Columns to use, by 1-based index or header name (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Bootstrap replications.
    #[arg(long = "B", default_value_t = DEFAULT_REPLICATES)]
    pub replications: usize,
    /// Exponent of the detection weight N^γ, used by the window rule.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Test window; chosen by the window rule when absent.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Sieve order; Whittle AIC when absent.
    #[arg(long = "p")]
    pub order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report JSON path (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long = "B", default_value_t = DEFAULT_REPLICATES)]
    pub replications: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Detection window; chosen by the window rule when absent.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Test window; 2N (at most T/2) when absent.
    #[arg(long = "N-test")]
    pub n_test: Option<usize>,
    #[arg(long = "p")]
    pub order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report JSON path (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Curves CSV path: component, v, N^γ sup_ω |D̂|, threshold.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// SVG plot path, one panel per component.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model id: model-6.1 … model-6.5, model-4.4.
    #[arg(long, required_unless_present = "model_file")]
    pub model: Option<String>,
    /// TOML file with a model table (`id = …` plus parameters, or a custom process).
    #[arg(long, conflicts_with = "model")]
    pub model_file: Option<PathBuf>,
    /// Break points, decimals or fractions such as 2/3.
    #[arg(long, value_delimiter = ',')]
    pub breakpoints: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phi: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sigma: Option<Vec<f64>>,
    #[arg(long = "T")]
    pub len: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Study configuration (.toml or .json).
    #[arg(long)]
    pub config: PathBuf,
    /// Result JSON path (stdout when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Histogram CSV of the pooled break estimates.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

/// A loaded CSV.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: TimeSeries<f64>,
    /// Header names of the selected columns, or their 1-based indices.
    pub names: Vec<String>,
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Reads a numeric CSV, selects columns and subtracts column means.
pub fn ingest_csv(path: &Path, columns: Option<&[String]>) -> CliResult<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for r in reader.records() {
        let r = r.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if r.iter().all(str::is_empty) {
            continue;
        }
        records.push(r);
    }
    let first = records
        .first()
        .ok_or_else(|| CliError::Usage(format!("{} is empty", path.display())))?;
    let header: Option<Vec<String>> = if first.iter().all(|c| parse_number(c).is_none()) {
        Some(first.iter().map(str::to_string).collect())
    } else {
        None
    };
    let width = first.len();
    let body = &records[usize::from(header.is_some())..];
    let mut rows = Vec::with_capacity(body.len());
    for (i, r) in body.iter().enumerate() {
        let line = i + 1 + usize::from(header.is_some());
        if r.len() != width {
            return Err(CliError::Usage(format!(
                "row {line} has {} fields, expected {width}",
                r.len()
            )));
        }
        let row = r
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                parse_number(cell)
                    .ok_or_else(|| CliError::Usage(format!("row {line}, column {}: non-numeric cell {cell:?}", c + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() < MIN_ROWS {
        return Err(CliError::Usage(format!(
            "{} has {} data rows, at least {MIN_ROWS} are needed",
            path.display(),
            rows.len()
        )));
    }
    let selected = select_columns(columns, header.as_deref(), width)?;
    let names = selected
        .iter()
        .map(|&c| header.as_ref().map_or_else(|| (c + 1).to_string(), |h| h[c].clone()))
        .collect();
    let picked: Vec<Vec<f64>> = rows.iter().map(|r| selected.iter().map(|&c| r[c]).collect()).collect();
    let series = TimeSeries::from_rows(&picked)?.centered();
    series.check_nondegenerate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Ingested { series, names })
}

/// 0-based column indices from 1-based numbers or header names.
fn select_columns(columns: Option<&[String]>, header: Option<&[String]>, width: usize) -> CliResult<Vec<usize>> {
    let Some(columns) = columns else {
        return Ok((0..width).collect());
    };
    let picked = columns
        .iter()
        .map(|c| {
            let c = c.trim();
            if let Some(i) = header.and_then(|h| h.iter().position(|name| name == c)) {
                return Ok(i);
            }
            match c.parse::<usize>() {
                Ok(i) if (1..=width).contains(&i) => Ok(i - 1),
                _ => Err(CliError::Usage(format!("unknown column {c:?}"))),
            }
        })
        .collect::<CliResult<Vec<usize>>>()?;
    if picked.is_empty() {
        return Err(CliError::Usage("no columns selected".into()));
    }
    Ok(picked)
}

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn check_alpha_gamma(alpha: f64, gamma: f64) -> CliResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha={alpha} must lie in (0, 1)")));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(CliError::Usage(format!("gamma={gamma} must lie in (0, 0.5)")));
    }
    Ok(())
}

fn check_even(n: Option<usize>) -> CliResult<()> {
    match n {
        Some(n) if n == 0 || !n.is_multiple_of(2) => Err(CliError::Usage(format!("N={n} must be even and positive"))),
        _ => Ok(()),
    }
}

/// JSON of the `test` command: `{test, tuning, arModel}`.
pub fn cmd_test(args: &TestArgs) -> CliResult<String> {
    check_alpha_gamma(args.alpha, args.gamma)?;
    check_even(args.n)?;
    let data = ingest_csv(&args.input.input, args.input.columns.as_deref())?;
    let x = &data.series;
    eprintln!("read T={}, d={}", x.len(), x.dim());
    let (n_detect, n_test, diagnostics) = match args.n {
        Some(n) => (n / 2, n, Vec::new()),
        None => {
            let w = select_window(x, args.gamma)?;
            (w.n_detect, w.n_test, w.diagnostics)
        }
    };
    let t = bootstrap_test(x, n_test, args.alpha, args.replications, args.seed, args.order)?;
    eprintln!(
        "statistic {:.6}, p-value {:.4}, {}",
        t.statistic,
        t.p_value,
        if t.reject { "reject" } else { "no rejection" }
    );
    let out = json!({
        "test": TestSummary {
            statistic: t.statistic,
            p_value: t.p_value,
            reject: t.reject,
            alpha: t.alpha,
            replications: t.replications(),
            n: t.n,
            critical_value: t.critical_value,
        },
        "tuning": Tuning {
            gamma: args.gamma,
            n_detect,
            n_test,
            p: t.model.order,
            seed: args.seed,
            window_diagnostics: diagnostics,
        },
        "arModel": SieveSummary::from(&t.model),
    });
    let text = serde_json::to_string_pretty(&out).expect("serializable");
    write_or_print(args.report.as_deref(), &text)?;
    Ok(text)
}

impl DetectArgs {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            alpha: self.alpha,
            replications: self.replications,
            gamma: self.gamma,
            seed: self.seed,
            n_detect: self.n,
            n_test: self.n_test,
            order: self.order,
        }
    }
}

pub fn cmd_detect(args: &DetectArgs) -> CliResult<BreakReport> {
    check_alpha_gamma(args.alpha, args.gamma)?;
    check_even(args.n)?;
    check_even(args.n_test)?;
    let data = ingest_csv(&args.input.input, args.input.columns.as_deref())?;
    let x = &data.series;
    eprintln!("read T={}, d={}", x.len(), x.dim());
    if let Some(n) = args.n {
        if 2 * n > x.len() {
            return Err(CliError::Usage(format!("N={n} needs T ≥ {}, got {}", 2 * n, x.len())));
        }
    }
    let report = full_pipeline(x, &args.pipeline())?;
    let json = report.to_json();
    let csv = args.curves.as_ref().map(|_| report.curves_csv());
    let svg = args.svg.as_ref().map(|_| render_svg(&report, &data.names));
    write_or_print(args.report.as_deref(), &json)?;
    if let (Some(p), Some(c)) = (&args.curves, csv) {
        write_or_print(Some(p), &c)?;
    }
    if let (Some(p), Some(s)) = (&args.svg, svg) {
        write_or_print(Some(p), &s)?;
    }
    eprintln!(
        "p-value {:.4}; K = {}; breaks at {:?}",
        report.test.p_value,
        report.k,
        report.breaks.iter().map(|b| b.b).collect::<Vec<_>>()
    );
    Ok(report)
}

fn numbers(values: &Option<Vec<f64>>, default: &[f64]) -> Vec<f64> {
    values.clone().unwrap_or_else(|| default.to_vec())
}

fn scalar(values: &Option<Vec<f64>>, default: f64, flag: &str) -> CliResult<f64> {
    match values.as_deref() {
        None => Ok(default),
        Some([x]) => Ok(*x),
        Some(_) => Err(CliError::Usage(format!("--{flag} takes one value for this model"))),
    }
}

/// Model from an id and optional parameter flags; unspecified parameters take
/// the values used in the simulation studies.
pub fn model_from_flags(args: &SimulateArgs) -> CliResult<ModelSpec> {
    if let Some(path) = &args.model_file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        return model_from_toml(&text);
    }
    let id = args.model.as_deref().unwrap_or_default();
    let breakpoints = match &args.breakpoints {
        Some(b) => b.iter().map(|s| parse_fraction(s).map_err(CliError::Usage)).collect::<CliResult<Vec<f64>>>()?,
        None => vec![0.5],
    };
    let spec = match id {
        "model-6.1" => ModelSpec::Ma1Cross {
            theta: scalar(&args.theta, 0.5, "theta")?,
        },
        "model-6.2" => ModelSpec::Var1Cross {
            phi: scalar(&args.phi, 0.5, "phi")?,
        },
        "model-6.3" => ModelSpec::SwitchingVar1 {
            breakpoints,
            phi: numbers(&args.phi, &[0.5, -0.5]),
        },
        "model-6.4" => ModelSpec::SwitchingMa1 {
            breakpoints,
            theta: numbers(&args.theta, &[1.0, -1.5]),
        },
        "model-6.5" => ModelSpec::SwitchingScale {
            breakpoints,
            sigma: numbers(&args.sigma, &[1.0, 2.0]),
        },
        "model-4.4" => ModelSpec::FourRegimes,
        other => return Err(CliError::Usage(format!("unknown model {other:?}"))),
    };
    Ok(spec)
}

fn model_from_toml(text: &str) -> CliResult<ModelSpec> {
    let wrapped = format!("study = \"power\"\nT = 1\n[model]\n{text}");
    let cfg = ExperimentConfig::from_toml(&wrapped)?;
    Ok(cfg.model.expect("model table present"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<String> {
    let model = model_from_flags(args)?.build()?;
    let x = model.simulate(args.len, args.seed)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=x.dim()).map(|a| format!("x{a}")).collect();
    let fail = |e: csv::Error| CliError::Runtime(e.to_string());
    writer.write_record(&header).map_err(fail)?;
    for row in x.to_rows() {
        writer.write_record(row.iter().map(|v| v.to_string())).map_err(fail)?;
    }
    let text = String::from_utf8(writer.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
        .expect("csv output is UTF-8");
    match &args.output {
        Some(p) => fs::write(p, &text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(text)
}

pub fn load_experiment(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        ExperimentConfig::from_json(&text)?
    } else {
        ExperimentConfig::from_toml(&text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_experiment(args: &ExperimentArgs, threads: Option<usize>) -> CliResult<String> {
    let mut cfg = load_experiment(&args.config)?;
    if cfg.threads == 0 {
        cfg.threads = threads.unwrap_or(0);
    }
    let started = std::time::Instant::now();
    let result = run_experiment(&cfg)?;
    let json = result.to_json();
    let histogram = result.histogram_csv(HISTOGRAM_BINS);
    write_or_print(args.output.as_deref(), &json)?;
    if let Some(p) = &args.histogram {
        write_or_print(Some(p), &histogram)?;
    }
    eprintln!(
        "{}: rejection frequency {:.3} (se {:.3}) over {} runs in {:.1?}",
        result.model_name,
        result.rejection_frequency,
        result.monte_carlo_std_err,
        cfg.runs,
        started.elapsed()
    );
    Ok(json)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Test(a) => cmd_test(a).map(drop),
        Command::Detect(a) => cmd_detect(a).map(drop),
        Command::Simulate(a) => cmd_simulate(a).map(drop),
        Command::Experiment(a) => cmd_experiment(a, cli.threads).map(drop),
    }
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 36.0;

/// One panel per component with the curve (solid), the threshold (dashed)
/// and detected breaks (vertical lines).
pub fn render_svg(report: &BreakReport, names: &[String]) -> String {
    let d = (report.curves.len() as f64).sqrt().round() as usize;
    let width = d as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = d as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    out.push_str(&format!("<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"));
    for (i, c) in report.curves.iter().enumerate() {
        let (row, col) = (i / d.max(1), i % d.max(1));
        let x0 = MARGIN + col as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN + row as f64 * (PANEL_H + MARGIN);
        let top = c.value.iter().chain(&c.threshold).fold(0.0f64, |m, &v| m.max(v)).max(1e-300);
        let px = |v: f64| x0 + v * PANEL_W;
        let py = |y: f64| y0 + PANEL_H - y / top * PANEL_H;
        let line = |ys: &[f64]| {
            c.v.iter()
                .zip(ys)
                .map(|(&v, &y)| format!("{:.2},{:.2}", px(v), py(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let label = match (names.get(row), names.get(col)) {
            (Some(a), Some(b)) => format!("{} ({a}, {b})", c.component),
            _ => c.component.clone(),
        };
        out.push_str(&format!(
            "<g>\n<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#888\"/>\n\
             <text x=\"{x0}\" y=\"{:.1}\">{}</text>\n\
             <text x=\"{x0}\" y=\"{:.1}\">0</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1</text>\n\
             <polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"{}\"/>\n\
             <polyline fill=\"none\" stroke=\"#c00\" stroke-width=\"1\" stroke-dasharray=\"4 3\" points=\"{}\"/>\n",
            y0 - 6.0,
            escape(&label),
            y0 + PANEL_H + 13.0,
            x0 + PANEL_W,
            y0 + PANEL_H + 13.0,
            line(&c.value),
            line(&c.threshold),
        ));
        for b in &report.breaks {
            out.push_str(&format!(
                "<line x1=\"{0:.2}\" x2=\"{0:.2}\" y1=\"{y0}\" y2=\"{1}\" stroke=\"#06c\" stroke-dasharray=\"2 2\"/>\n",
                px(b.b),
                y0 + PANEL_H
            ));
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

