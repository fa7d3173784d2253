//! Command-line front end of the MHD lab.

use clap::{Parser, Subcommand};
use mhd_core::config::Config;
use mhd_core::convergence::{fit_rate, run_sweep, write_sweep_csv, SweepEntry};
use mhd_core::error::{Error, Result};
use mhd_core::io::{load_record, manifest_path, read_json, save_record, write_calibration, write_json_atomic, RunManifest};
use mhd_core::monitor::{calibrate_constant, theorem_bound_check, trilinear_check, BoundReport, BudgetTable, Lemma};
use mhd_core::record::RunRecord;
use mhd_core::runner::run;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const CHECKS: [&str; 3] = ["budget", "theorem", "trilinear"];

#[derive(Debug, Parser)]
#[command(name = "mhdlab", version, about = "Scaled and hydrostatic-limit MHD runs, sweeps and checks")]
pub struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides data.seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One limit run (no run.epsilon) or scaled run.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Run id (default: the config file stem, made unique).
        #[arg(long)]
        id: Option<String>,
    },
    /// ε sweep against one limit run, with the rate fit.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// A check on a saved run directory.
    Check {
        #[arg(short, long)]
        run: PathBuf,
        #[arg(short = 'k', long)]
        check: String,
        /// key=value, repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
    },
    /// Freezes C from theorem-1/2 ratios of saved runs.
    Calibrate {
        #[arg(short, long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

/// Builds the global pool; a second call keeps the first pool.
pub fn init_threads(threads: Option<usize>) {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n.max(1));
    }
    let _ = b.build_global();
}

pub fn execute(cli: &Cli) -> Result<String> {
    init_threads(cli.threads);
    match &cli.command {
        Command::Run { config, out, id } => cmd_run(config, out, id.as_deref(), cli.seed),
        Command::Sweep { config, out } => cmd_sweep(config, out, cli.seed),
        Command::Check { run, check, params } => cmd_check(run, check, params),
        Command::Calibrate { runs, out } => cmd_calibrate(runs, out),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.data.seed = s;
    }
    Ok(cfg)
}

fn unique_id(out: &Path, stem: &str) -> String {
    if !out.join(stem).exists() {
        return stem.to_string();
    }
    (2..).map(|i| format!("{stem}-{i}")).find(|id| !out.join(id).exists()).expect("unbounded")
}

pub fn cmd_run(config: &Path, out: &Path, id: Option<&str>, seed: Option<u64>) -> Result<String> {
    let cfg = load_config(config, seed)?;
    let settings = cfg.settings()?;
    fs::create_dir_all(out)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let run_id = match id {
        Some(id) => id.to_string(),
        None => unique_id(out, stem),
    };
    let record = run(&run_id, &settings)?;
    let manifest = save_record(out, &record, cfg.resolved()?)?;
    let status = if manifest.health.healthy { "healthy" } else { "unhealthy" };
    let mut msg = format!("{run_id}: {status}, {} steps, manifest {}", record.steps_taken(), manifest_path(&out.join(&run_id)).display());
    if let Some(m) = &manifest.message {
        msg.push_str(&format!(" ({m}; last snapshot {})", manifest.last_snapshot.as_deref().unwrap_or("none")));
    }
    Ok(msg)
}

/// Writes `sweep.csv` and, when at least three entries are usable, `fit.json`.
pub fn write_sweep_outputs(out: &Path, entries: &[SweepEntry]) -> Result<String> {
    fs::create_dir_all(out)?;
    write_sweep_csv(entries, fs::File::create(out.join("sweep.csv"))?)?;
    match fit_rate(entries) {
        Ok(fit) => {
            write_json_atomic(&out.join("fit.json"), &fit)?;
            Ok(format!(
                "slope {:.4} ± {:.4} (r² = {:.5}, {} entries)",
                fit.slope, fit.ci, fit.r2, fit.entries_used
            ))
        }
        Err(e) => Ok(format!("no rate fit: {e}; sweep.csv written")),
    }
}

pub fn cmd_sweep(config: &Path, out: &Path, seed: Option<u64>) -> Result<String> {
    let cfg = load_config(config, seed)?;
    let plan = cfg.sweep_plan()?;
    let result = run_sweep(&plan)?;
    write_json_atomic(&out_dir(out)?.join("entries.json"), &result.entries)?;
    write_sweep_outputs(out, &result.entries)
}

fn out_dir(out: &Path) -> Result<&Path> {
    fs::create_dir_all(out)?;
    Ok(out)
}

struct Params(BTreeMap<String, String>);

impl Params {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Usage(format!("parameter {key} = {v:?} is not a number"))),
        }
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|_| Error::Usage(format!("parameter {key} = {v:?} is not a count"))))
            .transpose()
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        let bad: Vec<&str> = self.0.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!("unknown parameters {}; accepted: {}", bad.join(", "), allowed.join(", "))))
        }
    }
}

fn budget_reports(record: &RunRecord, p: &Params) -> Result<Vec<BoundReport>> {
    p.reject_unknown(&["q", "start", "end", "tol"])?;
    let table = BudgetTable::build(record)?;
    let tol = p.f64_or("tol", mhd_core::monitor::BUDGET_TOL)?;
    let start = p.usize_opt("start")?.unwrap_or(0);
    let end = p.usize_opt("end")?.unwrap_or(table.steps());
    let q = match p.0.get("q").map(String::as_str) {
        None | Some("all") => None,
        Some(v) => Some(v.parse::<i32>().map_err(|_| Error::Usage(format!("q = {v:?} is not a block index")))?),
    };
    let b = table.block(q, (start, end))?;
    let mut params: BTreeMap<String, f64> = b.terms.clone();
    params.insert("start".into(), start as f64);
    params.insert("end".into(), end as f64);
    params.insert("pressure".into(), b.pressure);
    if let Some(q) = q {
        params.insert("q".into(), q as f64);
    }
    Ok(vec![BoundReport::new(&record.run_id, "budget", params, b.residual.abs(), b.scale, tol)])
}

fn theorem_reports(record: &RunRecord, p: &Params) -> Result<Vec<BoundReport>> {
    p.reject_unknown(&["n", "C"])?;
    let default = if record.settings.epsilon.is_some() { 2.0 } else { 1.0 };
    let n = p.f64_or("n", default)?;
    let c = p.f64_or("C", record.settings.constant)?;
    Ok(vec![theorem_bound_check(record, n as u8, c)?])
}

fn trilinear_reports(record: &RunRecord, p: &Params) -> Result<Vec<BoundReport>> {
    p.reject_unknown(&["lemma", "s", "C"])?;
    let lemma = Lemma::parse(p.0.get("lemma").map(String::as_str).unwrap_or("3.2"))?;
    let s = p.f64_or("s", 0.5)?;
    let c = p.f64_or("C", record.settings.constant)?;
    Ok(trilinear_check(record, lemma, s, c)?
        .into_iter()
        .map(|r| {
            let mut params = BTreeMap::new();
            params.insert("s".into(), s);
            params.insert("C".into(), c);
            let mut rep = BoundReport::new(&record.run_id, &format!("trilinear {} {}", r.lemma, r.pairing), params, r.lhs_sum, r.rhs_product, c);
            rep.pass = r.pass;
            rep
        })
        .collect())
}

pub fn cmd_check(run_dir: &Path, check: &str, params: &[(String, String)]) -> Result<String> {
    if !CHECKS.contains(&check) {
        return Err(Error::Usage(format!("unknown check {check:?}; available: {}", CHECKS.join(", "))));
    }
    if !manifest_path(run_dir).exists() {
        return Err(Error::Usage(format!("no run record at {}", run_dir.display())));
    }
    let record = load_record(run_dir)?;
    let p = Params(params.iter().cloned().collect());
    let reports = match check {
        "budget" => budget_reports(&record, &p)?,
        "theorem" => theorem_reports(&record, &p)?,
        _ => trilinear_reports(&record, &p)?,
    };
    let suffix: String = params.iter().map(|(k, v)| format!("_{k}{v}")).collect();
    let name = format!("reports/{check}{suffix}.json");
    fs::create_dir_all(run_dir.join("reports"))?;
    let body = if reports.len() == 1 { json!(reports[0]) } else { json!(reports) };
    write_json_atomic(&run_dir.join(&name), &body)?;
    let mut manifest: RunManifest = read_json(&manifest_path(run_dir))?;
    manifest.add_report(&name);
    write_json_atomic(&manifest_path(run_dir), &manifest)?;
    Ok(serde_json::to_string_pretty(&body)?)
}

pub fn cmd_calibrate(runs: &[PathBuf], out: &Path) -> Result<String> {
    let mut corpus = Vec::new();
    for dir in runs {
        let record = load_record(dir)?;
        let n = if record.settings.epsilon.is_some() { 2 } else { 1 };
        corpus.push(theorem_bound_check(&record, n, f64::INFINITY)?);
    }
    let cal = calibrate_constant(&corpus)?;
    write_calibration(out, &cal)?;
    Ok(format!("C_calibrated = {} from {} runs", cal.constant, corpus.len()))
}
