//! The `run`, `truth` and `bench` subcommands.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LoadedConfig, ProblemSpec, RunConfig, TruthSpec};
use super::format::{sig17, to_json_line, to_json_pretty};
use super::CliError;
use crate::active::{run_experiment, summarize_replications, ExperimentConfig, LoopError, ReplicationSummary, Trace};
use crate::problems::{ground_truth_pa, GroundTruth, Problem, TruthMethod};
use crate::rng::replication_seed;
use crate::Fidelity;

const FOUR_BRANCH_CONFIG: &str = include_str!("../../../../configs/four_branch.json");
const MULTIMODAL_CONFIG: &str = include_str!("../../../../configs/multimodal.json");

/// Below this many replications percentile bands are noted as weak.
const WEAK_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Concurrent replications; `None` uses every core.
    pub jobs: Option<usize>,
    /// Replaces `experiment.seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct TruthOptions {
    pub method: Option<TruthMethod>,
    pub resolution: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub replications: usize,
    pub jobs: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            replications: 20,
            jobs: None,
        }
    }
}

/// Stored ground truth, reused by later runs of the same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub problem: ProblemSpec,
    pub truth: GroundTruth,
}

/// Per-replication facts kept in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationInfo {
    pub index: usize,
    pub seed: u64,
    pub final_estimate: Option<f64>,
    pub final_cost: f64,
    pub n_high: usize,
    pub n_low: usize,
    pub adaptive_high: usize,
    pub adaptive_low: usize,
    pub first_cost_within: Option<f64>,
}

impl ReplicationInfo {
    fn new(index: usize, trace: &Trace, truth: f64, tol: f64) -> Self {
        Self {
            index,
            seed: trace.seed,
            final_estimate: trace.final_estimate(),
            final_cost: trace.final_cost(),
            n_high: trace.count(Fidelity::High),
            n_low: trace.count(Fidelity::Low),
            adaptive_high: trace.adaptive_count(Fidelity::High),
            adaptive_low: trace.adaptive_count(Fidelity::Low),
            first_cost_within: trace.first_cost_within(truth, tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub truth: GroundTruth,
    pub replications: Vec<ReplicationInfo>,
    pub summary: ReplicationSummary,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        let show = |c: Option<f64>| c.map_or("not reached".to_string(), |c| format!("{c}"));
        writeln!(
            f,
            "{}: truth {} ({:?}, resolution {}), {} replication(s)",
            self.problem,
            sig17(self.truth.value),
            self.truth.method,
            self.truth.resolution,
            self.replications.len()
        )?;
        if let Some(last) = s.cost.len().checked_sub(1) {
            writeln!(
                f,
                "final cost {}: median {} [p15 {}, p85 {}]",
                s.cost[last],
                sig17(s.median[last]),
                sig17(s.p15[last]),
                sig17(s.p85[last])
            )?;
        }
        write!(
            f,
            "within +-{}%: percentiles at cost {}, median at cost {}",
            s.tolerance * 100.0,
            show(s.convergence_cost),
            show(s.median_convergence_cost)
        )
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Run `replications` loops with seeds `seed ^ i`, concurrently up to `jobs`.
pub fn run_replications(
    problem: &Problem,
    config: &ExperimentConfig,
    replications: usize,
    jobs: Option<usize>,
) -> Result<Vec<Result<Trace, LoopError>>, CliError> {
    let pool = thread_pool(jobs)?;
    Ok(pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|i| {
                let cfg = ExperimentConfig {
                    seed: replication_seed(config.seed, i as u64),
                    ..config.clone()
                };
                log::info!("replication {i} (seed {})", cfg.seed);
                run_experiment(problem, &cfg)
            })
            .collect()
    }))
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in &trace.records {
        let line = to_json_line(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Records of a JSONL trace file.
pub fn read_trace(path: &Path) -> Result<Vec<crate::active::Record>, CliError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = to_json_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn write_summary_csv(path: &Path, s: &ReplicationSummary) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["cost", "p15", "median", "p85"]).map_err(err)?;
    for k in 0..s.cost.len() {
        w.write_record([sig17(s.cost[k]), sig17(s.p15[k]), sig17(s.median[k]), sig17(s.p85[k])])
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn compute_truth(problem: &Problem, spec: TruthSpec) -> Result<GroundTruth, CliError> {
    log::info!("ground truth: {:?} at resolution {}", spec.method, spec.resolution);
    ground_truth_pa(problem, spec.method, spec.resolution, spec.seed).map_err(|e| match e {
        crate::Error::ResolutionGuard { .. } => CliError::Config(e.to_string()),
        e => e.into(),
    })
}

fn truth_path(config: &RunConfig) -> PathBuf {
    config.output_dir.join("truth.json")
}

/// Stored truth for this exact problem, if any.
fn stored_truth(config: &RunConfig) -> Option<GroundTruth> {
    let text = fs::read_to_string(truth_path(config)).ok()?;
    let rec: TruthRecord = serde_json::from_str(&text).ok()?;
    (rec.problem == config.problem).then_some(rec.truth)
}

/// `run`: replicated loops, per-replication JSONL traces, summary CSV/JSON.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let LoadedConfig { mut config, problem, .. } = RunConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.experiment.seed = seed;
    }
    let traces_dir = config.output_dir.join("traces");
    fs::create_dir_all(&traces_dir)?;
    write_json(&config.output_dir.join("effective_config.json"), &config)?;

    let truth = match stored_truth(&config) {
        Some(t) => {
            log::info!("reusing stored ground truth {}", t.value);
            t
        }
        None => {
            let t = compute_truth(&problem, config.truth_spec())?;
            write_json(
                &truth_path(&config),
                &TruthRecord {
                    problem: config.problem.clone(),
                    truth: t.clone(),
                },
            )?;
            t
        }
    };

    let results = run_replications(&problem, &config.experiment, config.replications, opts.jobs)?;
    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let path = traces_dir.join(format!("replication_{i:03}.jsonl"));
        match r {
            Ok(t) => {
                write_trace(&path, &t)?;
                traces.push(t);
            }
            Err(e) => {
                write_trace(&path, &e.partial)?;
                failures.push(format!("replication {i}: {e}"));
            }
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Runtime(failures.join("; ")));
    }

    let summary = summarize_replications(&traces, truth.value, config.tolerance)?;
    write_summary_csv(&config.output_dir.join("summary.csv"), &summary)?;
    let report = RunReport {
        problem: problem.name.clone(),
        replications: traces
            .iter()
            .enumerate()
            .map(|(i, t)| ReplicationInfo::new(i, t, truth.value, config.tolerance))
            .collect(),
        truth,
        summary,
    };
    write_json(&config.output_dir.join("summary.json"), &report)?;
    Ok(report)
}

/// `truth`: compute and store the reference probability.
pub fn cmd_truth(config_path: &Path, opts: &TruthOptions) -> Result<GroundTruth, CliError> {
    let LoadedConfig { config, problem, .. } = RunConfig::load(config_path)?;
    let mut spec = config.truth_spec();
    if let Some(m) = opts.method {
        if m != spec.method && opts.resolution.is_none() {
            spec.resolution = match m {
                TruthMethod::Grid => 2000,
                TruthMethod::Mc => 10_000_000,
            };
        }
        spec.method = m;
    }
    if let Some(r) = opts.resolution {
        spec.resolution = r;
    }
    let truth = compute_truth(&problem, spec)?;
    fs::create_dir_all(&config.output_dir)?;
    write_json(
        &truth_path(&config),
        &TruthRecord {
            problem: config.problem.clone(),
            truth: truth.clone(),
        },
    )?;
    Ok(truth)
}

/// One line of the bench table.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub problem: String,
    pub truth: GroundTruth,
    pub convergence_cost: Option<f64>,
    pub median_convergence_cost: Option<f64>,
    pub band_limit: f64,
    pub median_limit: f64,
}

impl BenchRow {
    pub fn passed(&self) -> bool {
        self.convergence_cost.is_some_and(|c| c <= self.band_limit)
            && self.median_convergence_cost.is_some_and(|c| c <= self.median_limit)
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub replications: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(BenchRow::passed)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |c: Option<f64>| c.map_or("-".to_string(), |c| format!("{c}"));
        writeln!(
            f,
            "{:<12} {:>12} {:>10} {:>8} {:>10} {:>8}  result",
            "problem", "truth", "band cost", "limit", "median", "limit"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>12.6e} {:>10} {:>8} {:>10} {:>8}  {}",
                r.problem,
                r.truth.value,
                show(r.convergence_cost),
                r.band_limit,
                show(r.median_convergence_cost),
                r.median_limit,
                if r.passed() { "pass" } else { "FAIL" }
            )?;
        }
        if self.replications < WEAK_REPLICATIONS {
            writeln!(
                f,
                "note: {} replication(s) is statistically weak; percentiles are rough",
                self.replications
            )?;
        }
        Ok(())
    }
}

/// `bench`: the shipped benchmark configurations against their thresholds.
pub fn cmd_bench(opts: &BenchOptions) -> Result<BenchReport, CliError> {
    if opts.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let cases = [(MULTIMODAL_CONFIG, 28.0, 22.0), (FOUR_BRANCH_CONFIG, 60.0, 45.0)];
    let mut rows = Vec::new();
    for (text, band_limit, median_limit) in cases {
        let loaded = RunConfig::parse(text, Path::new("."))?;
        let cfg = &loaded.config;
        let truth = compute_truth(&loaded.problem, cfg.truth_spec())?;
        let results = run_replications(&loaded.problem, &cfg.experiment, opts.replications, opts.jobs)?;
        let traces = results
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let s = summarize_replications(&traces, truth.value, cfg.tolerance)?;
        rows.push(BenchRow {
            problem: loaded.problem.name.clone(),
            truth,
            convergence_cost: s.convergence_cost,
            median_convergence_cost: s.median_convergence_cost,
            band_limit,
            median_limit,
        });
    }
    Ok(BenchReport {
        replications: opts.replications,
        rows,
    })
}
