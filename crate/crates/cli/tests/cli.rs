use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use specbreak::detect::{BreakReport, PipelineConfig};
use specbreak::experiments::{run_experiment, ExperimentConfig, ModelSpec};
use specbreak_cli::{ingest_csv, CliError};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specbreak"));
    c.env_remove("SPECBREAK_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(dir: &TempDir, name: &str, rows: &[Vec<f64>], header: Option<&[&str]>) -> PathBuf {
    let mut text = String::new();
    if let Some(h) = header {
        text.push_str(&h.join(","));
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn pseudo_rows(len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|t| (0..dim).map(|a| ((t * 7919 + a * 104_729) % 1000) as f64 / 100.0 - 5.0).collect())
        .collect()
}

fn simulate(dir: &TempDir, model: &str, len: usize, seed: u64) -> PathBuf {
    let out = dir.path().join(format!("{model}-{len}-{seed}.csv"));
    let o = run(&["simulate", "--model", model, "--T", &len.to_string(), "--seed", &seed.to_string(), "-o", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn header_is_detected_and_skipped() {
    let dir = TempDir::new().unwrap();
    let rows = pseudo_rows(100, 3);
    let plain = ingest_csv(&write_csv(&dir, "a.csv", &rows, None), None).unwrap();
    let named = ingest_csv(&write_csv(&dir, "b.csv", &rows, Some(&["x", "y", "z"])), None).unwrap();
    assert_eq!(plain.series, named.series);
    assert_eq!(named.names, ["x", "y", "z"]);
    assert_eq!(plain.names, ["1", "2", "3"]);
    let means = plain.series.column_means();
    assert!(means.iter().all(|m| m.abs() < 1e-12));
    let picked = ingest_csv(&dir.path().join("b.csv"), Some(&["z".into(), "1".into()])).unwrap();
    assert_eq!(picked.names, ["z", "x"]);
    assert_eq!(picked.series.dim(), 2);
    assert!(ingest_csv(&dir.path().join("b.csv"), Some(&["w".into()])).is_err());
}

#[test]
fn five_column_returns_file() {
    let dir = TempDir::new().unwrap();
    let p = write_csv(&dir, "etf.csv", &pseudo_rows(700, 5), Some(&["XLB", "XLP", "XLU", "XLF", "XLE"]));
    let x = ingest_csv(&p, None).unwrap().series;
    assert_eq!((x.len(), x.dim()), (700, 5));
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut rows = pseudo_rows(80, 2);
    for r in &mut rows {
        r[1] = 3.0;
    }
    let constant = write_csv(&dir, "c.csv", &rows, None);
    assert!(matches!(ingest_csv(&constant, None), Err(CliError::Usage(m)) if m.contains("zero variance")));

    let short = write_csv(&dir, "s.csv", &pseudo_rows(63, 2), None);
    assert!(matches!(ingest_csv(&short, None), Err(CliError::Usage(m)) if m.contains("at least 64")));

    let mut text = fs::read_to_string(write_csv(&dir, "r.csv", &pseudo_rows(80, 2), None)).unwrap();
    text.push_str("1,2,3\n");
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, text).unwrap();
    assert!(matches!(ingest_csv(&ragged, None), Err(CliError::Usage(m)) if m.contains("fields")));

    let mut text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    text = text.replacen('\n', "\nabc,1\n", 3);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, text).unwrap();
    assert!(matches!(ingest_csv(&bad, None), Err(CliError::Usage(m)) if m.contains("non-numeric")));
}

#[test]
fn missing_input_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let curves = dir.path().join("c.csv");
    let o = run(&[
        "detect",
        "--input",
        path_str(&dir.path().join("nope.csv")),
        "--report",
        path_str(&report),
        "--curves",
        path_str(&curves),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!report.exists() && !curves.exists());
    assert_eq!(run(&["test", "--input", "nope.csv"]).status.code(), Some(2));
}

#[test]
fn invalid_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let p = write_csv(&dir, "a.csv", &pseudo_rows(128, 2), None);
    for extra in [["--alpha", "1.5"], ["--gamma", "0.7"], ["--N", "15"]] {
        let mut args = vec!["detect", "--input", path_str(&p)];
        args.extend(extra);
        assert_eq!(run(&args).status.code(), Some(2), "{extra:?}");
    }
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["simulate", "--model", "model-6.1", "--theta", "0.5", "--T", "256", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 257);
    let other = run(&["simulate", "--model", "model-6.1", "--theta", "0.5", "--T", "256", "--seed", "8"]);
    assert_ne!(a.stdout, other.stdout);
    let neg = run(&["simulate", "--model", "model-6.3", "--phi", "-0.5,0.5", "--breakpoints", "1/3", "--T", "128"]);
    assert!(neg.status.success(), "{}", String::from_utf8_lossy(&neg.stderr));

    let model = dir.path().join("m.toml");
    fs::write(&model, "id = \"model-6.5\"\nbreakpoints = [\"2/3\"]\nsigma = [1, 3]\n").unwrap();
    let from_file = run(&["simulate", "--model-file", path_str(&model), "--T", "90", "--seed", "7"]);
    let from_flags = run(&["simulate", "--model", "model-6.5", "--breakpoints", "2/3", "--sigma", "1,3", "--T", "90", "--seed", "7"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_flags.stdout);
    assert_eq!(run(&["simulate", "--model", "model-9", "--T", "64"]).status.code(), Some(2));
}

#[test]
fn detect_writes_report_curves_and_svg() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "model-4.4", 2048, 3);
    let report = dir.path().join("report.json");
    let curves = dir.path().join("curves.csv");
    let svg = dir.path().join("plot.svg");
    let o = run(&[
        "detect",
        "--input",
        path_str(&data),
        "--N",
        "256",
        "--gamma",
        "0.49",
        "--B",
        "30",
        "--seed",
        "4",
        "--report",
        path_str(&report),
        "--curves",
        path_str(&curves),
        "--svg",
        path_str(&svg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report).unwrap();
    let parsed = BreakReport::from_json(&text).unwrap();
    assert_eq!(parsed.to_json(), text.trim_end());
    assert!(parsed.test.reject);
    assert_eq!(parsed.k, 3);
    for (b, truth) in parsed.breaks.iter().zip([0.25, 0.5, 0.75]) {
        assert!((b.b - truth).abs() <= 256.0 / 2048.0, "{:?}", parsed.breaks);
    }
    let csv = fs::read_to_string(&curves).unwrap();
    let rows_11 = csv.lines().filter(|l| l.starts_with("\"1,1\"")).count();
    assert_eq!(rows_11, 2048 - 2 * 256 + 1);
    assert_eq!(csv.lines().count(), 1 + 4 * rows_11);
    let plot = fs::read_to_string(&svg).unwrap();
    assert!(plot.starts_with("<svg"));
    assert_eq!(plot.matches("stroke-dasharray=\"4 3\"").count(), 4);

    // the CLI is a shell over the library
    let series = ingest_csv(&data, None).unwrap().series;
    let config = PipelineConfig {
        replications: 30,
        seed: 4,
        n_detect: Some(256),
        ..PipelineConfig::default()
    };
    let direct = specbreak::full_pipeline(&series, &config).unwrap();
    assert_eq!(direct.to_json(), text.trim_end());
}

#[test]
fn test_command_reports_p_value() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "model-6.5", 512, 1);
    let o = run(&["test", "--input", path_str(&data), "--B", "40", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["test"]["pValue"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(v["test"]["B"], 40);
    assert_eq!(v["tuning"]["N_test"], v["test"]["N"]);
    assert!(v["arModel"]["order"].as_u64().unwrap() >= 1);
    let threaded = bin()
        .args(["test", "--input", path_str(&data), "--B", "40", "--seed", "2"])
        .env("SPECBREAK_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(threaded.stdout, o.stdout);
}

#[test]
fn experiment_outputs_and_validation() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("level.toml");
    fs::write(
        &cfg_path,
        "study = \"level\"\nT = 128\nruns = 3\nB = 20\nseed = 5\n[model]\nid = \"model-6.1\"\ntheta = 0.5\n",
    )
    .unwrap();
    let out = dir.path().join("result.json");
    let hist = dir.path().join("hist.csv");
    let o = run(&["experiment", "--config", path_str(&cfg_path), "-o", path_str(&out), "--histogram", path_str(&hist)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ExperimentConfig::from_toml(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    assert_eq!(cfg.model, Some(ModelSpec::Ma1Cross { theta: 0.5 }));
    assert_eq!(fs::read_to_string(&out).unwrap().trim_end(), run_experiment(&cfg).unwrap().to_json());
    assert!(fs::read_to_string(&hist).unwrap().starts_with("lower,upper,count"));

    fs::write(&cfg_path, "study = \"level\"\nT = 128\nruns = 0\n[model]\nid = \"model-6.1\"\ntheta = 0.5\n").unwrap();
    let o = run(&["experiment", "--config", path_str(&cfg_path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        let cfg = specbreak_cli::load_experiment(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(cfg.runs >= 1);
        count += 1;
    }
    assert!(count >= 5);
}
