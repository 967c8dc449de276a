use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use lob_field::analyzers::returns::variance_table;
use lob_field::analyzers::{
    fit_market_order_response, imbalance_symmetry_residual, market_orders::fit_table, parse_selection, record_frame,
    record_velocities, return_distribution, run_statistic, stats, variance_vs_n0, LmOptions, ReturnOptions,
    SeriesFrame, SuiteOptions, Table,
};
use lob_field::dynamics::{market_order_rate, RunSpec};
use lob_field::fokker_planck::{
    default_grid, effective_tail_exponent, stationary_density, tail_exponent, variance_given_n0, FPParams,
};
use lob_field::ingest::{
    build_frame, density_table, frame_from_records, read_market_orders, read_snapshot_files, read_table_file,
    snapshot_from_field, write_json_file, write_market_orders, write_snapshots, write_table_file, FrameOptions,
    MarketOrderRecord, RecordHeader, RecordReader, RecordWriter, ReferencePrice, SnapshotRecord,
};
use lob_field::{Error, MarketOrderParams, Result};

use crate::config::{default_frame_cells, output_dir, RunConfig};
use crate::{AnalyzeArgs, CompareArgs, EnsembleArgs, FitMoArgs, FpArgs, FrameArgs, GenArgs, GenKind, SimulateArgs, SuiteArgs};

/// Velocity statistics shared by the run summaries.
#[derive(Debug, Serialize)]
struct VelocitySummary {
    samples: usize,
    mean_n0: f64,
    mean_v: f64,
    std_v: f64,
    excess_kurtosis: f64,
    /// Hill estimate of the normalized return pdf exponent.
    tail_exponent: Option<f64>,
    loglog_tail_exponent: Option<f64>,
    /// `2 + 2⟨n0⟩²/k0²` from the run's market-order constants.
    predicted_tail_exponent: Option<f64>,
    flags: Vec<String>,
}

fn summarize(v: &[f64], n0: &[f64], spec: &RunSpec) -> VelocitySummary {
    let mean_n0 = stats::mean(n0);
    let (tail, ols, flags) = match return_distribution(v, spec.params.tau, &ReturnOptions::default()) {
        Ok(r) => (r.pdf_exponent, r.ols_pdf_exponent, r.flags),
        Err(e) => (None, None, vec![e.to_string()]),
    };
    let fp = FPParams::from_market_orders(&spec.params.mo, mean_n0, spec.params.tau);
    VelocitySummary {
        samples: v.len(),
        mean_n0,
        mean_v: stats::mean(v),
        std_v: stats::variance(v).sqrt(),
        excess_kurtosis: stats::excess_kurtosis(v),
        tail_exponent: tail,
        loglog_tail_exponent: ols,
        predicted_tail_exponent: tail_exponent(&fp).ok(),
        flags,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = a.run.resolve()?;
    if a.no_records {
        cfg.records = false;
    }
    let dir = output_dir(&cfg, "lobfield-run")?;
    cfg.record_into(&dir)?;
    let spec = cfg.model.spec(&cfg.base_spec())?;
    let started = Instant::now();
    let mut sim = spec.simulation(cfg.seed)?;
    sim.run(cfg.burn_in, |_, _| {})?;

    let mut writer = if cfg.records {
        let header = RecordHeader {
            initial: sim.field().clone(),
            initial_velocity: sim.velocity(),
            meta: json!({
                "model": cfg.model.name(),
                "seed": cfg.seed,
                "burn_in": cfg.burn_in,
                "dt": spec.step.dt,
                "tau": spec.params.tau,
            }),
        };
        Some(RecordWriter::new(File::create(dir.join("records.jsonl"))?, &header)?)
    } else {
        None
    };
    let mut v = Vec::with_capacity(cfg.steps);
    let mut n0 = Vec::with_capacity(cfg.steps);
    let mut write_error = None;
    sim.run(cfg.steps, |r, _| {
        v.push(r.v);
        n0.push(r.n0);
        if let (Some(w), None) = (writer.as_mut(), write_error.as_ref()) {
            if let Err(e) = w.write(r) {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let records_written = match writer {
        Some(w) => {
            let n = w.written();
            w.finish()?;
            n
        }
        None => 0,
    };
    let s = summarize(&v, &n0, &spec);
    let summary = json!({
        "model": cfg.model.name(),
        "seed": cfg.seed,
        "steps": cfg.steps,
        "burn_in": cfg.burn_in,
        "records_written": records_written,
        "final_log_price": sim.field().log_price,
        "velocity": s,
    });
    write_json_file(&dir.join("summary.json"), &summary)?;
    println!(
        "{} run of {} ticks (seed {}): tail exponent {} (predicted {}), mean n0 {:.4}, runtime {:.2} s",
        cfg.model.name(),
        cfg.steps,
        cfg.seed,
        fmt_opt(s.tail_exponent),
        fmt_opt(s.predicted_tail_exponent),
        s.mean_n0,
        started.elapsed().as_secs_f64()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

/// Loads the frame selected by the flags. Also returns a description of the source and the
/// relaxation time stored in a record header.
fn load_frame(a: &FrameArgs) -> Result<(SeriesFrame, Value, Option<f64>)> {
    if let Some(path) = &a.records {
        let mut reader = RecordReader::new(BufReader::new(File::open(path)?))?;
        let tau = reader.header().meta.get("tau").and_then(Value::as_f64);
        let cells = if a.bins.is_empty() { default_frame_cells(reader.header().initial.cells()) } else { a.bins.clone() };
        let frame = frame_from_records(&mut reader, Some(cells), a.every)?;
        return Ok((frame, json!({"records": path}), tau));
    }
    if a.snapshots.is_empty() {
        return Err(Error::Domain("need --records or --snapshots".into()));
    }
    let paths: Vec<&Path> = a.snapshots.iter().map(PathBuf::as_path).collect();
    let mut snapshots: Vec<SnapshotRecord> = Vec::new();
    let mut parse = Vec::new();
    for (path, r) in paths.iter().zip(read_snapshot_files(&paths)) {
        let (records, report) = r.map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })?;
        parse.push(json!({
            "file": path,
            "lines": report.lines,
            "records": report.records,
            "malformed": report.malformed,
            "crossed": report.crossed,
        }));
        snapshots.extend(records);
    }
    // files may overlap in time; keep the first record of each timestamp
    snapshots.sort_by(|x, y| x.ts.total_cmp(&y.ts));
    snapshots.dedup_by(|b, a| b.ts == a.ts);
    let market_orders = match &a.market_orders {
        Some(p) => Some(read_market_orders(File::open(p)?)?),
        None => None,
    };
    let bins = if a.bins.is_empty() { default_frame_cells(a.lattice) } else { a.bins.clone() };
    let opts = FrameOptions {
        dt: a.dt,
        dx: a.dx,
        cells: a.lattice,
        reference: if a.mid { ReferencePrice::Mid } else { ReferencePrice::Trade },
        bins: Some(bins),
    };
    let (frame, report) = build_frame(&snapshots, market_orders.as_deref(), &opts)?;
    Ok((frame, json!({"snapshots": parse, "market_orders": a.market_orders, "frame_report": report}), None))
}

fn suite_options(a: &SuiteArgs, header_tau: Option<f64>) -> SuiteOptions {
    SuiteOptions {
        tau: a.tau.or(header_tau).unwrap_or(1.0),
        lag: a.lag,
        x: a.x.clone(),
        x_ref: a.x_ref,
        ..SuiteOptions::default()
    }
}

/// Writes one CSV per statistic into `dir`. With an explicit selection any failure is an
/// error; otherwise statistics that do not apply are skipped and listed.
fn run_suite(
    frame: &SeriesFrame,
    names: &[&'static str],
    opts: &SuiteOptions,
    dir: &Path,
    explicit: bool,
) -> Result<(Vec<&'static str>, BTreeMap<&'static str, String>)> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut skipped = BTreeMap::new();
    for &name in names {
        match run_statistic(name, frame, opts) {
            Ok(t) => {
                write_table_file(&dir.join(format!("{name}.csv")), &t)?;
                written.push(name);
            }
            Err(e) if explicit => return Err(e),
            Err(e) => {
                eprintln!("skipped {name}: {e}");
                skipped.insert(name, e.to_string());
            }
        }
    }
    Ok((written, skipped))
}

fn frame_info(frame: &SeriesFrame) -> Value {
    let segments = frame.segments.last().map_or(0, |s| *s as usize + 1);
    json!({"samples": frame.len(), "bins": frame.x, "cadence": frame.cadence, "segments": segments})
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let names = parse_selection(&a.suite.stats)?;
    let (frame, source, tau) = load_frame(&a.frame)?;
    let opts = suite_options(&a.suite, tau);
    let (written, skipped) = run_suite(&frame, &names, &opts, &a.output, !a.suite.stats.is_empty())?;
    write_json_file(
        &a.output.join("analysis.json"),
        &json!({"source": source, "frame": frame_info(&frame), "options": opts, "written": written, "skipped": skipped}),
    )?;
    println!("{} statistics from {} samples written to {}", written.len(), frame.len(), a.output.display());
    Ok(())
}

pub fn fit_mo(a: &FitMoArgs) -> Result<()> {
    let (v, buy, sell, n0) = match &a.table {
        Some(path) => {
            let t = read_table_file(path)?;
            let col = |name: &str| t.column(name).ok_or_else(|| Error::Data(format!("{}: no column '{name}'", path.display())));
            (col("v")?, col("buy")?, col("sell")?, None)
        }
        None => {
            let (frame, _, _) = load_frame(&a.frame)?;
            let (v, buy, sell, n0) = frame.market_order_pairs()?;
            (v, buy, sell, Some(n0))
        }
    };
    let report = fit_market_order_response(&v, &buy, &sell, n0.as_deref(), &LmOptions::default())?;
    let symmetry = imbalance_symmetry_residual(&v, &buy, &sell, 20).ok();
    fs::create_dir_all(&a.output)?;
    write_table_file(&a.output.join("market_order_fit.csv"), &fit_table(&report))?;
    write_json_file(&a.output.join("fit.json"), &json!({"report": report, "imbalance_symmetry_residual": symmetry}))?;
    for p in &report.parameters {
        println!("{:>6} = {:.6e} ± {:.2e}", p.name, p.estimate, p.std_error);
    }
    println!("imbalance symmetry residual {}", symmetry.map_or("n/a".into(), |s| format!("{s:.4}")));
    Ok(())
}

pub fn fp(a: &FpArgs) -> Result<()> {
    let p = FPParams { k0: a.k0, k_inf: a.k_inf, k1: a.k1, v0: a.v0, n0: a.n0, tau: a.tau };
    p.validate()?;
    if a.half < 2 {
        return Err(Error::Domain("--half must be >= 2".into()));
    }
    let d = stationary_density(&p, &default_grid(&p, a.half))?;
    let vc = p.core_width();
    let mut meta = BTreeMap::new();
    meta.insert("params".to_string(), serde_json::to_value(p)?);
    fs::create_dir_all(&a.output)?;
    write_table_file(&a.output.join("density.csv"), &density_table(&d, meta))?;

    let exponents = match (tail_exponent(&p), effective_tail_exponent(&p)) {
        (Ok(e), Ok(eff)) if vc < p.v0 => Some((e, eff)),
        _ => None,
    };
    let power_law =
        exponents.map(|(e, eff)| json!({"from": vc, "to": p.v0, "pdf_exponent": e, "effective_pdf_exponent": eff}));
    let message = match exponents {
        Some((e, eff)) => format!(
            "power-law regime for {vc:.4e} < |v| < {:.4e}: p(v) ~ |v|^-{e:.4} (with tick and k1: {eff:.4})",
            p.v0
        ),
        None => "no power-law regime".to_string(),
    };
    let report = json!({
        "params": p,
        "normalization": d.normalization,
        "core": {"to": vc.min(p.v0), "variance": p.core_variance()},
        "power_law": power_law,
        "outer": {"from": p.v0, "std": p.outer_width()},
        "summary": message,
    });
    write_json_file(&a.output.join("regime.json"), &report)?;
    println!("Gaussian core: |v| < {:.4e}, variance {:.4e}", vc.min(p.v0), p.core_variance());
    println!("{message}");
    println!("outer Gaussian: |v| > {:.4e}, std {:.4e}", p.v0, p.outer_width());
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let names = parse_selection(&a.suite.stats)?;
    let explicit = !a.suite.stats.is_empty();
    let dir = output_dir(&cfg, "lobfield-compare")?;
    cfg.record_into(&dir)?;
    let base = cfg.base_spec();
    let mut models = a.models.clone();
    models.dedup();
    let results: Vec<Result<Value>> = models
        .par_iter()
        .map(|&m| -> Result<Value> {
            let spec = m.spec(&base)?;
            let mut sim = spec.simulation(cfg.seed)?;
            sim.run(cfg.burn_in, |_, _| {})?;
            let cells = if a.bins.is_empty() { default_frame_cells(spec.grid.cells) } else { a.bins.clone() };
            let frame = record_frame(&mut sim, cfg.steps, cells, 1)?;
            let opts = suite_options(&a.suite, Some(spec.params.tau));
            let (written, skipped) = run_suite(&frame, &names, &opts, &dir.join(m.name()), explicit)?;
            let s = summarize(&frame.velocities[1..], &frame.n0s[1..], &spec);
            Ok(json!({"model": m.name(), "velocity": s, "written": written, "skipped": skipped}))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let num = |r: &Value, k: &str| r["velocity"][k].as_f64().unwrap_or(f64::NAN);
    let table = Table {
        meta: json!({"statistic": "comparison", "models": models.iter().map(|m| m.name()).collect::<Vec<_>>(), "seed": cfg.seed}),
        columns: ["model", "samples", "mean_n0", "std_v", "excess_kurtosis", "tail_exponent"].map(String::from).to_vec(),
        rows: results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let k = ["samples", "mean_n0", "std_v", "excess_kurtosis", "tail_exponent"];
                std::iter::once(i as f64).chain(k.iter().map(|k| num(r, k))).collect()
            })
            .collect(),
    };
    write_table_file(&dir.join("comparison.csv"), &table)?;
    write_json_file(&dir.join("comparison.json"), &json!({"seed": cfg.seed, "steps": cfg.steps, "models": results}))?;
    for r in &results {
        println!(
            "{:>5}: excess kurtosis {:.3}, std(v) {:.4e}, tail exponent {}",
            r["model"].as_str().unwrap_or("?"),
            num(r, "excess_kurtosis"),
            num(r, "std_v"),
            r["velocity"]["tail_exponent"].as_f64().map_or("n/a".into(), |x| format!("{x:.3}"))
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn gen_synthetic(a: &GenArgs) -> Result<()> {
    match &a.kind {
        GenKind::Mo(g) => {
            let mo = MarketOrderParams { k0: g.k0, k_inf: g.k_inf, k1: g.k1, v0: g.v0 };
            mo.validate()?;
            if g.samples == 0 || !(g.noise >= 0.0) {
                return Err(Error::Domain("need samples >= 1 and noise >= 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let mut rows = Vec::with_capacity(g.samples);
            for _ in 0..g.samples {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = 2.0 * g.v0 * z;
                let (buy, sell) = market_order_rate(v, &mo);
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![v, (buy * (1.0 + g.noise * e1)).max(0.0), (sell * (1.0 + g.noise * e2)).max(0.0)]);
            }
            let table = Table {
                meta: json!({"statistic": "synthetic_market_orders", "planted": mo, "noise": g.noise, "seed": g.seed}),
                columns: ["v", "buy", "sell"].map(String::from).to_vec(),
                rows,
            };
            if let Some(parent) = g.output.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_table_file(&g.output, &table)?;
            println!("wrote {} samples to {}", g.samples, g.output.display());
        }
        GenKind::Book(g) => {
            if g.every == 0 || !(g.p0 > 0.0) {
                return Err(Error::Domain("need --every >= 1 and --p0 > 0".into()));
            }
            let cfg = g.run.resolve()?;
            let dir = output_dir(&cfg, "lobfield-book")?;
            cfg.record_into(&dir)?;
            let spec = cfg.model.spec(&cfg.base_spec())?;
            let mut sim = spec.simulation(cfg.seed)?;
            sim.run(cfg.burn_in, |_, _| {})?;
            let mut snaps = vec![snapshot_from_field(sim.field(), g.p0)];
            let mut orders = Vec::new();
            let (mut buy, mut sell, mut k) = (0.0, 0.0, 0);
            sim.run(cfg.steps, |r, f| {
                buy += r.mo_buy;
                sell += r.mo_sell;
                k += 1;
                if k == g.every {
                    snaps.push(snapshot_from_field(f, g.p0));
                    orders.push(MarketOrderRecord { ts: f.t, buy, sell });
                    (buy, sell, k) = (0.0, 0.0, 0);
                }
            })?;
            write_snapshots(File::create(dir.join("snapshots.jsonl"))?, &snaps)?;
            write_market_orders(File::create(dir.join("market_orders.csv"))?, &orders)?;
            println!("wrote {} snapshots to {}", snaps.len(), dir.display());
        }
    }
    Ok(())
}

fn pooled_edges(n0: &[f64], bins: usize) -> Result<Vec<f64>> {
    let s = stats::sorted(&n0.iter().copied().filter(|x| *x > 0.0).collect::<Vec<_>>());
    if s.is_empty() {
        return Err(Error::Numeric("boundary volume is never positive".into()));
    }
    let (lo, hi) = (stats::quantile_sorted(&s, 0.005), stats::quantile_sorted(&s, 0.995));
    Ok(if hi > lo { stats::log_edges(lo, hi, bins.max(1)) } else { vec![lo * 0.99, lo * 1.01] })
}

pub fn ensemble(a: &EnsembleArgs) -> Result<()> {
    let cfg: RunConfig = a.run.resolve()?;
    if a.seeds == 0 {
        return Err(Error::Domain("need at least one seed".into()));
    }
    let dir = output_dir(&cfg, "lobfield-ensemble")?;
    cfg.record_into(&dir)?;
    let spec = cfg.model.spec(&cfg.base_spec())?;
    let seeds: Vec<u64> = (0..a.seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut sim = spec.simulation(seed)?;
            sim.run(cfg.burn_in, |_, _| {})?;
            record_velocities(&mut sim, cfg.steps)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let per_seed: Vec<Value> = seeds
        .iter()
        .zip(&runs)
        .map(|(s, (v, n0))| json!({"seed": s, "mean_n0": stats::mean(n0), "std_v": stats::variance(v).sqrt(), "excess_kurtosis": stats::excess_kurtosis(v)}))
        .collect();
    let v: Vec<f64> = runs.iter().flat_map(|r| r.0.iter().copied()).collect();
    let n0: Vec<f64> = runs.iter().flat_map(|r| r.1.iter().copied()).collect();
    let bins = variance_vs_n0(&v, &n0, &pooled_edges(&n0, a.n0_bins)?)?;
    let fp = FPParams::from_market_orders(&spec.params.mo, 1.0, spec.params.tau);
    let mut table = variance_table(&bins);
    table.columns.push("theory_v2".into());
    for (row, b) in table.rows.iter_mut().zip(&bins) {
        row.push(variance_given_n0(b.n0_mean, &fp).unwrap_or(f64::NAN));
    }
    write_table_file(&dir.join("variance_vs_n0.csv"), &table)?;
    write_json_file(&dir.join("ensemble.json"), &json!({"model": cfg.model.name(), "steps": cfg.steps, "seeds": per_seed}))?;
    println!("{} seeds x {} ticks pooled into {} n0 bins; wrote {}", seeds.len(), cfg.steps, bins.len(), dir.display());
    Ok(())
}
