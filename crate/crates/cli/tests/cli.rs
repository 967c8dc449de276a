use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lob_field::ingest::read_table_file;
use tempfile::TempDir;

fn lobfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobfield")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lobfield(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, steps: &str) {
    ok(&["simulate", "--steps", steps, "--cells", "16", "--seed", "11", "-o", p(dir)]);
}

#[test]
fn simulate_twice_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "2000");
    simulate(&b, "2000");
    for f in ["config.toml", "records.jsonl", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn zero_steps_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let out = lobfield(&["simulate", "--steps", "0", "-o", p(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("steps"));
}

#[test]
fn unstable_diffusion_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    ok(&["simulate", "--steps", "5", "--no-records", "-o", p(&tmp.path().join("seed"))]);
    let text = fs::read_to_string(tmp.path().join("seed/config.toml")).unwrap();
    let text = text.replace("value = 0.000000000001", "value = 1.0");
    fs::write(&cfg, text).unwrap();
    assert_eq!(code(&lobfield(&["simulate", "--config", p(&cfg), "-o", p(&tmp.path().join("x"))])), 2);
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 3\nsteps = 300\nrecords = false\n").unwrap();
    let out = tmp.path().join("out");
    ok(&["simulate", "--config", p(&cfg), "--seed", "4", "--cells", "16", "-o", p(&out)]);
    let recorded = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(recorded.contains("seed = 4") && recorded.contains("steps = 300"));
    assert!(recorded.contains("cells = 16"), "resolved spec is written out");
    assert!(!out.join("records.jsonl").exists());

    // the recorded config reproduces the run
    let again = tmp.path().join("again");
    ok(&["simulate", "--config", p(&out.join("config.toml")), "-o", p(&again)]);
    assert_eq!(fs::read(out.join("summary.json")).unwrap(), fs::read(again.join("summary.json")).unwrap());

    fs::write(&cfg, "seed = 3\nstepz = 300\n").unwrap();
    assert_eq!(code(&lobfield(&["simulate", "--config", p(&cfg), "-o", p(&out)])), 2);
}

#[test]
fn unknown_statistic_lists_valid_names() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp.path().join("sim"), "200");
    let records = tmp.path().join("sim/records.jsonl");
    let out = lobfield(&["analyze", "--records", p(&records), "--stat", "kurtosis", "-o", p(&tmp.path().join("an"))]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for name in lob_field::analyzers::STATISTICS {
        assert!(err.contains(name), "{name} missing from: {err}");
    }
}

#[test]
fn unknown_model_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = lobfield(&["compare", "--models", "cf,garch", "-o", p(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kstt"));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = lobfield(&["analyze", "--records", p(&tmp.path().join("nope.jsonl")), "-o", p(tmp.path())]);
    assert_eq!(code(&out), 3);
}

#[test]
fn analyze_writes_every_statistic_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    // enough ticks that every conditioning bin of the conditional distribution is kept
    simulate(&tmp.path().join("sim"), "10000");
    let records = tmp.path().join("sim/records.jsonl");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["analyze", "--records", p(&records), "-o", p(&a)]);
    ok(&["analyze", "--records", p(&records), "-o", p(&b)]);
    for name in lob_field::analyzers::STATISTICS {
        let f = format!("{name}.csv");
        let bytes = fs::read(a.join(&f)).unwrap_or_else(|_| panic!("{f} not written"));
        assert_eq!(bytes, fs::read(b.join(&f)).unwrap());
        // the files load back through the table reader
        let t = read_table_file(&a.join(&f)).unwrap();
        assert_eq!(t.meta["statistic"], *name);
        assert!(!t.rows.is_empty(), "{name} is empty");
    }
}

#[test]
fn single_model_compare_equals_simulate_then_analyze() {
    let tmp = TempDir::new().unwrap();
    let stats = "returns,mean_delta,spatial_correlation,market_order_fit";
    let sim = tmp.path().join("sim");
    // the contrast preset spans |v| ~ v0, where the market-order law is identifiable
    ok(&["simulate", "--preset", "contrast", "--steps", "3000", "--cells", "16", "--seed", "5", "-o", p(&sim)]);
    let an = tmp.path().join("an");
    ok(&["analyze", "--records", p(&sim.join("records.jsonl")), "--stat", stats, "-o", p(&an)]);
    let cmp = tmp.path().join("cmp");
    ok(&["compare", "--preset", "contrast", "--models", "cf", "--steps", "3000", "--cells", "16", "--seed", "5", "--stat", stats, "-o", p(&cmp)]);
    for name in stats.split(',') {
        let f = format!("{name}.csv");
        assert_eq!(fs::read(an.join(&f)).unwrap(), fs::read(cmp.join("cf").join(&f)).unwrap(), "{f} differs");
    }
}

#[test]
fn compare_cf_against_cs_kurtosis_gap() {
    let tmp = TempDir::new().unwrap();
    ok(&["compare", "--models", "cf,cs", "--steps", "100000", "--cells", "32", "--stat", "returns", "-o", p(tmp.path())]);
    let t = read_table_file(&tmp.path().join("comparison.csv")).unwrap();
    let k = t.column("excess_kurtosis").unwrap();
    assert!(k[0] - k[1] > 1.0, "kurtosis cf {} cs {}", k[0], k[1]);
    assert!(k[1].abs() < 0.5, "cs kurtosis {}", k[1]);
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

#[test]
fn fp_density_and_regime_report() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["fp", "--k0", "1", "--k-inf", "0.01", "--v0", "1", "--n0", "1", "-o", p(tmp.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("|v|^-4.0000"));
    let t = read_table_file(&tmp.path().join("density.csv")).unwrap();
    let mass = trapezoid(&t.column("v").unwrap(), &t.column("p").unwrap());
    assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("regime.json")).unwrap()).unwrap();
    assert_eq!(report["power_law"]["pdf_exponent"], 4.0);
}

#[test]
fn fp_without_trend_following_has_no_power_law() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["fp", "--k0", "0", "--k-inf", "1", "--v0", "1", "--n0", "1", "-o", p(tmp.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no power-law regime"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("regime.json")).unwrap()).unwrap();
    assert!(report["power_law"].is_null());
}

#[test]
fn fp_error_codes() {
    let tmp = TempDir::new().unwrap();
    // k1 = k_inf: mass diverges at v = 0
    let out = lobfield(&["fp", "--k0", "1", "--k-inf", "0.1", "--k1", "0.1", "--v0", "1", "--n0", "1", "-o", p(tmp.path())]);
    assert_eq!(code(&out), 4);
    let out = lobfield(&["fp", "--k0", "1", "--k-inf", "0.1", "--v0", "-1", "--n0", "1", "-o", p(tmp.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn planted_market_orders_are_recovered() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("mo.csv");
    ok(&["gen-synthetic", "mo", "--samples", "20000", "--seed", "3", "-o", p(&data)]);
    let fit = tmp.path().join("fit");
    ok(&["fit-mo", "--table", p(&data), "-o", p(&fit)]);
    let t = read_table_file(&fit.join("market_order_fit.csv")).unwrap();
    let est = t.column("estimate").unwrap();
    for (e, truth) in est.iter().zip([2.0, 3.0, 2.5, 1e-6]) {
        assert!((e / truth - 1.0).abs() < 0.01, "{e} vs {truth}");
    }
}

#[test]
fn synthetic_book_round_trip_through_snapshots() {
    let tmp = TempDir::new().unwrap();
    let book = tmp.path().join("book");
    ok(&["gen-synthetic", "book", "--steps", "2000", "--cells", "16", "-o", p(&book)]);
    let an = tmp.path().join("an");
    ok(&[
        "analyze",
        "--snapshots",
        p(&book.join("snapshots.jsonl")),
        "--market-orders",
        p(&book.join("market_orders.csv")),
        "--lattice",
        "16",
        "--stat",
        "mean_delta,velocity_volume_correlation",
        "-o",
        p(&an),
    ]);
    let t = read_table_file(&an.join("mean_delta.csv")).unwrap();
    assert!(!t.rows.is_empty());

    // mostly garbage input is rejected as bad data
    let junk = tmp.path().join("junk.jsonl");
    fs::write(&junk, "{\"ts\":1,\"p\":1,\"bids\":[],\"asks\":[]}\nnot json\nnot json either\n").unwrap();
    let out = lobfield(&["analyze", "--snapshots", p(&junk), "-o", p(&an)]);
    assert_eq!(code(&out), 3);
}

#[test]
fn ensemble_pools_seeds() {
    let tmp = TempDir::new().unwrap();
    ok(&["ensemble", "--steps", "5000", "--cells", "16", "--seeds", "3", "--n0-bins", "4", "-o", p(tmp.path())]);
    let t = read_table_file(&tmp.path().join("variance_vs_n0.csv")).unwrap();
    let counts: f64 = t.column("count").unwrap().iter().sum();
    assert!(counts > 0.9 * 15_000.0 && counts <= 15_000.0);
    let e: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(e["seeds"].as_array().unwrap().len(), 3);
}
