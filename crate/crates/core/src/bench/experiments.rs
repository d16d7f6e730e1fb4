use std::time::Instant;

use serde::Serialize;

use super::config::{dbm_to_watts, RunConfig};
use super::table::{fmt_num, write_text, Experiment, Format, ResultTable, Row, Scheme, STATUS_FAILED};
use crate::ao::{run, run_baseline, AoConfig, AoResult, Baseline};
use crate::channel::{synthesize_channels, ArrayGeometry, ChannelSet, UserGeometry};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Which schemes to run and how to schedule the jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub schemes: Vec<Scheme>,
    pub execution: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            execution: Execution::default(),
        }
    }
}

/// Channels of one seed with `m` RIS elements, cut from a draw at
/// `max_elements` so every `m` sees the same users and nested surfaces.
pub fn scenario_channels(config: &RunConfig, seed: u64, m: usize, max_elements: usize) -> Result<ChannelSet> {
    let users = UserGeometry::sample(config.users, config.distance_range, config.angle_span, seed);
    let geometry = ArrayGeometry {
        ris_elements: max_elements.max(m),
        ..config.geometry
    };
    let full = synthesize_channels(&geometry, &config.channel, &users, seed)?;
    if m == full.ris_elements() {
        Ok(full)
    } else {
        full.first_elements(m)
    }
}

/// Runs one scheme on one channel realization.
pub fn run_scheme(scheme: Scheme, channels: &ChannelSet, ao: &AoConfig, budget: f64, sigma2: &[f64]) -> Result<AoResult> {
    match scheme {
        Scheme::Proposed => run(channels, ao, budget, sigma2),
        Scheme::Miso => run_baseline(Baseline::Miso, channels, ao, budget, sigma2),
        Scheme::EqualPower => run_baseline(Baseline::EqualPower, channels, ao, budget, sigma2),
        Scheme::RandomPhase => run_baseline(Baseline::RandomPhase, channels, ao, budget, sigma2),
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    sweep_value: f64,
    seed: u64,
    scheme: Scheme,
    elements: usize,
    budget: f64,
}

struct Outcome {
    row: Row,
    result: Option<AoResult>,
}

fn execute(experiment: Experiment, config: &RunConfig, max_elements: usize, job: &Job) -> Outcome {
    let start = Instant::now();
    let ao = AoConfig {
        seed: job.seed,
        ..config.ao.clone()
    };
    let result = scenario_channels(config, job.seed, job.elements, max_elements)
        .and_then(|ch| run_scheme(job.scheme, &ch, &ao, job.budget, config.sigma2()));
    let wall_ms = if config.record_wall_time {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let row = match &result {
        Ok(r) => Row {
            experiment,
            sweep_value: job.sweep_value,
            seed: job.seed,
            scheme: job.scheme,
            sum_rate: r.final_report.sum_rate,
            rates: r.final_report.rate.clone(),
            iters: r.trace.outer_iterations(),
            wall_ms,
            status: r.status.as_str().to_string(),
        },
        Err(_) => Row {
            experiment,
            sweep_value: job.sweep_value,
            seed: job.seed,
            scheme: job.scheme,
            sum_rate: f64::NAN,
            rates: vec![f64::NAN; config.users],
            iters: 0,
            wall_ms,
            status: STATUS_FAILED.to_string(),
        },
    };
    Outcome {
        row,
        result: result.ok(),
    }
}

fn run_jobs(experiment: Experiment, config: &RunConfig, options: &RunOptions, jobs: Vec<Job>) -> (ResultTable, Vec<(Job, Option<AoResult>)>) {
    let max_elements = jobs.iter().map(|j| j.elements).max().unwrap_or(config.geometry.ris_elements);
    let outcomes = par::map(&jobs, options.execution, |job| execute(experiment, config, max_elements, job));
    let mut table = ResultTable::new(config.users);
    let mut results = Vec::with_capacity(jobs.len());
    for (job, out) in jobs.into_iter().zip(outcomes) {
        table.rows.push(out.row);
        results.push((job, out.result));
    }
    table.sort();
    (table, results)
}

fn fixed_jobs(config: &RunConfig, options: &RunOptions) -> Vec<Job> {
    let mut jobs = Vec::new();
    for seed in config.seeds() {
        for &scheme in &options.schemes {
            jobs.push(Job {
                sweep_value: config.tx_power_dbm,
                seed,
                scheme,
                elements: config.geometry.ris_elements,
                budget: config.tx_power,
            });
        }
    }
    jobs
}

/// Every scheme and seed at the configured scenario; the sweep value is the
/// power budget in dBm.
pub fn run_single(config: &RunConfig, options: &RunOptions) -> Result<ResultTable> {
    check_options(options)?;
    Ok(run_jobs(Experiment::Single, config, options, fixed_jobs(config, options)).0)
}

/// Same runs as [`run_single`], plus the per-iteration trace of each run.
pub fn run_convergence(config: &RunConfig, options: &RunOptions) -> Result<(ResultTable, TraceTable)> {
    check_options(options)?;
    let (table, results) = run_jobs(Experiment::Convergence, config, options, fixed_jobs(config, options));
    let mut trace = TraceTable {
        users: config.users,
        rows: Vec::new(),
    };
    for (job, result) in results {
        let Some(result) = result else { continue };
        for e in &result.trace.entries {
            trace.rows.push(TraceRow {
                seed: job.seed,
                scheme: job.scheme,
                iteration: e.iteration,
                sum_rate: e.sum_rate,
                rates: e.rates.clone(),
                sinr: e.sinr.clone(),
                inner_f: e.inner_f,
                inner_w: e.inner_w,
                elapsed_ms: if config.record_wall_time { e.elapsed_ms } else { 0.0 },
            });
        }
    }
    trace.rows.sort_by(|a, b| (a.seed, a.scheme, a.iteration).cmp(&(b.seed, b.scheme, b.iteration)));
    Ok((table, trace))
}

/// Every scheme and seed at each power on `power_grid_dbm`. A seed's
/// channels are shared by all powers and schemes.
pub fn run_power_sweep(config: &RunConfig, options: &RunOptions) -> Result<ResultTable> {
    check_options(options)?;
    let mut jobs = Vec::new();
    for &dbm in &config.power_grid_dbm {
        for seed in config.seeds() {
            for &scheme in &options.schemes {
                jobs.push(Job {
                    sweep_value: dbm,
                    seed,
                    scheme,
                    elements: config.geometry.ris_elements,
                    budget: dbm_to_watts(dbm),
                });
            }
        }
    }
    Ok(run_jobs(Experiment::PowerSweep, config, options, jobs).0)
}

/// Every scheme and seed at each surface size on `element_grid`. Channels
/// are drawn once per seed at the largest size and truncated.
pub fn run_element_sweep(config: &RunConfig, options: &RunOptions) -> Result<ResultTable> {
    check_options(options)?;
    let mut jobs = Vec::new();
    for &m in &config.element_grid {
        for seed in config.seeds() {
            for &scheme in &options.schemes {
                jobs.push(Job {
                    sweep_value: m as f64,
                    seed,
                    scheme,
                    elements: m,
                    budget: config.tx_power,
                });
            }
        }
    }
    Ok(run_jobs(Experiment::ElementSweep, config, options, jobs).0)
}

fn check_options(options: &RunOptions) -> Result<()> {
    if options.schemes.is_empty() {
        return Err(Error::InvalidInput("no schemes selected".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub seed: u64,
    pub scheme: Scheme,
    pub iteration: usize,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
    pub inner_f: usize,
    pub inner_w: usize,
    pub elapsed_ms: f64,
}

/// Per-iteration records of convergence runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceTable {
    pub users: usize,
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        let mut header: Vec<String> = ["seed", "scheme", "iteration", "sum_rate"].map(String::from).to_vec();
        header.extend((1..=self.users).map(|k| format!("rate_{k}")));
        header.extend((1..=self.users).map(|k| format!("sinr_{k}")));
        header.extend(["inner_f", "inner_w", "elapsed_ms"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.seed.to_string(), r.scheme.as_str().to_string(), r.iteration.to_string(), fmt_num(r.sum_rate)];
            rec.extend(r.rates.iter().chain(&r.sinr).map(|&v| fmt_num(v)));
            rec.extend([r.inner_f.to_string(), r.inner_w.to_string(), fmt_num(r.elapsed_ms)]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).map_err(|e| Error::Parse(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &std::path::Path, format: Format) -> Result<()> {
        let text = match format {
            Format::Csv => self.to_csv()?,
            Format::Jsonl => self.to_jsonl()?,
        };
        write_text(path, &text)
    }
}
