//! Runs an engine over `instances.csv` and records one verdict per row.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bnn::Network;
use crate::falsifier::{falsify, AttackConfig};
use crate::onnx::parse_model;
use crate::verifier::{
    bab_verify, brute_force_verify_with, verify_ibp, BabConfig, BruteConfig, Report, Stats, Verdict,
};
use crate::vnnlib::{check_witness, parse_property, RobustnessProperty};

use super::generate::{read_instances, BenchmarkInstance};
use super::{io_err, BenchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Ibp,
    Bab,
    Falsify,
    Brute,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Ibp, Engine::Bab, Engine::Falsify, Engine::Brute];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Ibp => "ibp",
            Engine::Bab => "bab",
            Engine::Falsify => "falsify",
            Engine::Brute => "brute",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown engine '{s}' (expected ibp, bab, falsify or brute)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: Engine,
    /// Worker threads; instances are independent.
    pub jobs: usize,
    /// Caps each instance's own timeout when set.
    pub timeout_cap: Option<f64>,
    /// Where witnesses of `sat` verdicts are written.
    pub witness_dir: Option<PathBuf>,
    pub attack: AttackConfig,
    pub max_nodes: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Falsify,
            jobs: 1,
            timeout_cap: None,
            witness_dir: None,
            attack: AttackConfig::default(),
            max_nodes: BabConfig::default().max_nodes,
        }
    }
}

/// Result strings of `results.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Unsat,
    Sat,
    Unknown,
    Timeout,
    Error,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Unsat => "unsat",
            Outcome::Sat => "sat",
            Outcome::Unknown => "unknown",
            Outcome::Timeout => "timeout",
            Outcome::Error => "error",
        }
    }

    pub fn from_verdict(v: &Verdict) -> Self {
        match v {
            Verdict::Verified => Outcome::Unsat,
            Verdict::Falsified(_) => Outcome::Sat,
            Verdict::Unknown => Outcome::Unknown,
            Verdict::Timeout => Outcome::Timeout,
        }
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Outcome::Unsat,
            Outcome::Sat,
            Outcome::Unknown,
            Outcome::Timeout,
            Outcome::Error,
        ]
        .into_iter()
        .find(|o| o.as_str() == s)
        .ok_or_else(|| format!("unknown verdict '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    /// The property path as written in `instances.csv`.
    pub instance: String,
    pub outcome: Outcome,
    pub seconds: f64,
    pub witness_path: Option<PathBuf>,
    /// Our own engine produced a witness that failed the re-check.
    pub penalty: bool,
    pub message: Option<String>,
}

fn integral_box(prop: &RobustnessProperty) -> bool {
    prop.input_bounds
        .iter()
        .all(|&(lo, hi)| lo.fract() == 0.0 && hi.fract() == 0.0)
}

/// Runs one engine on one property. Integer-grid search is used when every
/// bound is an integer.
pub fn run_engine(
    net: &Network,
    prop: &RobustnessProperty,
    engine: Engine,
    timeout: Option<Duration>,
    cfg: &RunConfig,
) -> Result<Report, BenchError> {
    let integer_grid = integral_box(prop);
    let start = Instant::now();
    let report = match engine {
        Engine::Ibp => verify_ibp(net, prop)?,
        Engine::Bab => bab_verify(
            net,
            prop,
            &BabConfig {
                timeout,
                max_nodes: cfg.max_nodes,
                integer_grid,
            },
        )?,
        Engine::Brute => brute_force_verify_with(
            net,
            prop,
            &BruteConfig {
                timeout,
                ..BruteConfig::default()
            },
        )?,
        Engine::Falsify => {
            let attack = AttackConfig {
                integer_grid,
                time_limit: timeout,
                ..cfg.attack.clone()
            };
            let found = falsify(net, prop, &attack).map_err(|e| BenchError::Config(e.to_string()))?;
            let verdict = match found {
                Some(w) => Verdict::Falsified(w),
                None if timeout.is_some_and(|t| start.elapsed() >= t) => Verdict::Timeout,
                None => Verdict::Unknown,
            };
            Report {
                verdict,
                stats: Stats {
                    nodes: 0,
                    elapsed: start.elapsed(),
                },
            }
        }
    };
    Ok(report)
}

fn witness_file(dir: &Path, property: &Path) -> PathBuf {
    let stem = property
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    dir.join(format!("{stem}.counterexample"))
}

fn error_record(instance: String, seconds: f64, message: String) -> VerdictRecord {
    log::warn!("{instance}: {message}");
    VerdictRecord {
        instance,
        outcome: Outcome::Error,
        seconds,
        witness_path: None,
        penalty: false,
        message: Some(message),
    }
}

fn run_one(
    base: &Path,
    inst: &BenchmarkInstance,
    models: &HashMap<PathBuf, Result<Network, String>>,
    cfg: &RunConfig,
) -> VerdictRecord {
    let name = inst.property_path.to_string_lossy().into_owned();
    let start = Instant::now();
    let net = match &models[&inst.model_path] {
        Ok(n) => n,
        Err(e) => return error_record(name, 0.0, e.clone()),
    };
    let prop_path = base.join(&inst.property_path);
    let prop = match fs::read_to_string(&prop_path)
        .map_err(|e| io_err(&prop_path, e).to_string())
        .and_then(|t| parse_property(&t).map_err(|e| format!("{}: {e}", prop_path.display())))
    {
        Ok(p) => p,
        Err(e) => return error_record(name, 0.0, e),
    };
    let budget = cfg
        .timeout_cap
        .map_or(inst.timeout_seconds, |c| c.min(inst.timeout_seconds));
    let timeout = Duration::from_secs_f64(budget.max(0.0));
    let report = run_engine(net, &prop, cfg.engine, Some(timeout), cfg);
    let seconds = start.elapsed().as_secs_f64();
    let report = match report {
        Ok(r) => r,
        Err(e) => return error_record(name, seconds, e.to_string()),
    };
    let mut outcome = Outcome::from_verdict(&report.verdict);
    // Answers after the deadline do not count.
    if seconds > budget && outcome != Outcome::Timeout {
        log::info!("{name}: {} after {seconds:.3}s, over the {budget}s budget", outcome.as_str());
        outcome = Outcome::Timeout;
    }
    let mut record = VerdictRecord {
        instance: name,
        outcome,
        seconds,
        witness_path: None,
        penalty: false,
        message: None,
    };
    if let (Outcome::Sat, Some(w)) = (outcome, report.verdict.witness()) {
        if let Some(dir) = &cfg.witness_dir {
            let path = witness_file(dir, &inst.property_path);
            let text = format!("sat\n{}", w.render());
            if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(&path, text)) {
                return error_record(record.instance, seconds, io_err(&path, e).to_string());
            }
            record.witness_path = Some(path);
        }
        if !check_witness(net, &prop, w).unwrap_or(false) {
            log::error!("{}: witness failed the re-check", record.instance);
            record.outcome = Outcome::Error;
            record.penalty = true;
            record.message = Some("witness failed the re-check".into());
        }
    }
    record
}

/// Runs every row of `csv` with a pool of `cfg.jobs` workers. Rows come back
/// in file order regardless of scheduling. Unreadable models or properties
/// become `error` rows.
pub fn run_instances(csv: &Path, cfg: &RunConfig) -> Result<Vec<VerdictRecord>, BenchError> {
    let instances = read_instances(csv)?;
    let base = csv.parent().unwrap_or(Path::new("."));
    let mut models = HashMap::new();
    for inst in &instances {
        models.entry(inst.model_path.clone()).or_insert_with(|| {
            let path = base.join(&inst.model_path);
            fs::read(&path)
                .map_err(|e| io_err(&path, e).to_string())
                .and_then(|b| parse_model(&b).map_err(|e| format!("{}: {e}", path.display())))
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        instances
            .par_iter()
            .map(|inst| run_one(base, inst, &models, cfg))
            .collect()
    }))
}

/// `instance,verdict,seconds,witness_path` with a header row. An `error` row
/// that still names a witness marks a failed re-check.
pub fn render_results(records: &[VerdictRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "verdict", "seconds", "witness_path"])
        .expect("writing to memory");
    for r in records {
        let witness = r
            .witness_path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        w.write_record([
            r.instance.as_str(),
            r.outcome.as_str(),
            &format!("{:.3}", r.seconds),
            &witness,
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

pub fn parse_results(text: &str) -> Result<Vec<VerdictRecord>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::Csv(e.to_string()))?;
        let bad = |why: String| BenchError::Csv(format!("row {}: {why}", line + 1));
        if rec.len() != 4 {
            return Err(bad("expected instance,verdict,seconds,witness_path".into()));
        }
        let outcome: Outcome = rec[1].parse().map_err(bad)?;
        let seconds: f64 = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad seconds '{}'", &rec[2])))?;
        let witness_path = (!rec[3].is_empty()).then(|| PathBuf::from(&rec[3]));
        out.push(VerdictRecord {
            instance: rec[0].to_string(),
            outcome,
            seconds,
            penalty: outcome == Outcome::Error && witness_path.is_some(),
            witness_path,
            message: None,
        });
    }
    Ok(out)
}
