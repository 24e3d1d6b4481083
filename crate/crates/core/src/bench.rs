//! Experiment harness: run algorithm suites over instance sets, collect the
//! four metrics (minimum yield, average yield, failure rate, run time), and
//! aggregate them into degradation-from-best tables and per-slack summaries.
//!
//! Each (instance, algorithm) pair yields exactly one record. Solver time
//! covers only the min-yield phase; the shared second phase runs outside the
//! clock. Reference columns carry the relaxed upper bound and, when enabled
//! and tractable, the exact optimum. Rounding seeds are derived from the
//! instance id, so results do not depend on execution order.

use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{exact_solve, relaxed_optimum, ExactLimits};
use crate::model::{check_feasible, ProblemInstance, SolveOutcome, FEASIBILITY_TOL};
use crate::solve::{apply_phase2, run_algorithm, Algorithm, Phase2Mode, SolveOptions};
use crate::workload::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordOutcome {
    Success,
    Failure,
    /// The instance has no feasible allocation at all (per the exact oracle).
    Infeasible,
}

/// One algorithm's measured metrics on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub spec_id: String,
    pub instance_id: String,
    pub algorithm: String,
    pub outcome: RecordOutcome,
    pub min_yield: Option<f64>,
    pub avg_task_yield: Option<f64>,
    pub avg_job_yield: Option<f64>,
    pub runtime_s: Option<f64>,
    pub relaxed_bound: Option<f64>,
    pub exact_opt: Option<f64>,
}

/// A labeled instance ready for the suite.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub spec_id: String,
    pub instance_id: String,
    pub instance: ProblemInstance,
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub phase2: Phase2Mode,
    /// Solver repetitions per cell; the median time is reported.
    pub repetitions: usize,
    /// Attach the exact optimum column (and detect infeasible instances).
    pub with_exact: bool,
    pub exact_limits: ExactLimits,
    pub base_seed: u64,
    pub epsilon: f64,
    pub seed_mode: crate::bounds::SeedMode,
    /// Worker thread cap; `None` uses the default pool.
    pub workers: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            phase2: Phase2Mode::Auto,
            repetitions: 3,
            with_exact: false,
            exact_limits: ExactLimits::default(),
            base_seed: 0,
            epsilon: 0.01,
            seed_mode: crate::bounds::SeedMode::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no records to aggregate")]
    NoRecords,
    #[error("degradation needs records from at least two algorithms")]
    NeedTwoAlgorithms,
    #[error("record references spec {0} absent from the manifest")]
    UnknownSpec(String),
    #[error("{algorithm} produced an infeasible allocation on {instance_id} ({violations} violations)")]
    FeasibilityViolation {
        instance_id: String,
        algorithm: String,
        violations: usize,
    },
    #[error("{algorithm} claims success on {instance_id}, which the exact oracle proved infeasible")]
    InfeasibleContradiction {
        instance_id: String,
        algorithm: String,
    },
    #[error("second phase failed on {instance_id} for {algorithm}: {message}")]
    Phase2 {
        instance_id: String,
        algorithm: String,
        message: String,
    },
    #[error("CSV error: {0}")]
    Csv(String),
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Rounding seed for one instance: a pure function of the base seed and the
/// instance id.
pub fn instance_seed(base: u64, instance_id: &str) -> u64 {
    derive_seed(base, fnv1a(instance_id), 0)
}

fn median_secs(mut times: Vec<Duration>) -> f64 {
    times.sort();
    times[times.len() / 2].as_secs_f64()
}

fn run_instance(
    bi: &BenchInstance,
    algorithms: &[Algorithm],
    opts: &SuiteOptions,
) -> Result<Vec<ResultRecord>, BenchError> {
    let relaxed_bound = relaxed_optimum(&bi.instance).ok();
    let (exact_opt, infeasible) = if opts.with_exact {
        match exact_solve(&bi.instance, opts.exact_limits) {
            Ok(SolveOutcome::Success(sol)) => (Some(sol.min_yield), false),
            Ok(SolveOutcome::Failure(_)) => (None, true),
            Err(_) => (None, false), // too large: leave the column empty
        }
    } else {
        (None, false)
    };

    let solve_opts = SolveOptions {
        rng_seed: instance_seed(opts.base_seed, &bi.instance_id),
        epsilon: opts.epsilon,
        seed_mode: opts.seed_mode,
        exact_limits: opts.exact_limits,
        ..SolveOptions::default()
    };

    let mut records = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let reps = opts.repetitions.max(1);
        let mut times = Vec::with_capacity(reps);
        let mut outcome = None;
        for _ in 0..reps {
            match run_algorithm(&bi.instance, alg, &solve_opts) {
                Ok(run) => {
                    times.push(run.solver_time);
                    outcome.get_or_insert(run.outcome);
                }
                Err(_) => break, // exact too large for this instance
            }
        }
        let runtime_s = if times.is_empty() {
            None
        } else {
            Some(median_secs(times))
        };

        let mut record = ResultRecord {
            spec_id: bi.spec_id.clone(),
            instance_id: bi.instance_id.clone(),
            algorithm: alg.id(),
            outcome: if infeasible {
                RecordOutcome::Infeasible
            } else {
                RecordOutcome::Failure
            },
            min_yield: None,
            avg_task_yield: None,
            avg_job_yield: None,
            runtime_s,
            relaxed_bound,
            exact_opt,
        };

        if let Some(SolveOutcome::Success(sol)) = outcome {
            if infeasible {
                return Err(BenchError::InfeasibleContradiction {
                    instance_id: bi.instance_id.clone(),
                    algorithm: alg.id(),
                });
            }
            let (alloc, report) =
                apply_phase2(&bi.instance, &sol, opts.phase2).map_err(|e| BenchError::Phase2 {
                    instance_id: bi.instance_id.clone(),
                    algorithm: alg.id(),
                    message: e.to_string(),
                })?;
            // Spot-check about one success in ten end to end.
            if instance_seed(opts.base_seed, &format!("{}/{}", bi.instance_id, alg.id())) % 10 == 0
            {
                let violations = check_feasible(&bi.instance, &alloc, FEASIBILITY_TOL)
                    .map_err(|e| BenchError::Phase2 {
                        instance_id: bi.instance_id.clone(),
                        algorithm: alg.id(),
                        message: e.to_string(),
                    })?;
                if !violations.is_empty() {
                    return Err(BenchError::FeasibilityViolation {
                        instance_id: bi.instance_id.clone(),
                        algorithm: alg.id(),
                        violations: violations.len(),
                    });
                }
            }
            record.outcome = RecordOutcome::Success;
            record.min_yield = Some(report.min_yield);
            record.avg_task_yield = Some(report.avg_task_yield);
            record.avg_job_yield = Some(report.avg_job_yield);
        }
        records.push(record);
    }
    Ok(records)
}

/// Run every algorithm on every instance; one record per pair, in input
/// order. A solver failing on an instance is data, not an error.
pub fn run_suite(
    instances: &[BenchInstance],
    algorithms: &[Algorithm],
    opts: &SuiteOptions,
) -> Result<Vec<ResultRecord>, BenchError> {
    let work = || -> Result<Vec<Vec<ResultRecord>>, BenchError> {
        instances
            .par_iter()
            .map(|bi| run_instance(bi, algorithms, opts))
            .collect()
    };
    let nested = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    }?;
    Ok(nested.into_iter().flatten().collect())
}

/// Average and maximum percent degradation from the best algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationRow {
    pub algorithm: String,
    pub avg_pct: f64,
    pub max_pct: f64,
    /// Instances this algorithm solved that entered the comparison.
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationTable {
    /// Rows sorted by average degradation, best first.
    pub rows: Vec<DegradationRow>,
}

/// Per-instance percent shortfall of each algorithm's minimum yield against
/// the best algorithm on that instance, averaged per algorithm over the
/// instances it solved. Algorithms failing on an instance are excluded from
/// that instance's comparison.
pub fn degradation(records: &[ResultRecord]) -> Result<DegradationTable, BenchError> {
    if records.is_empty() {
        return Err(BenchError::NoRecords);
    }
    let mut algorithms: Vec<&str> = records.iter().map(|r| r.algorithm.as_str()).collect();
    algorithms.sort_unstable();
    algorithms.dedup();
    if algorithms.len() < 2 {
        return Err(BenchError::NeedTwoAlgorithms);
    }

    let mut by_instance: BTreeMap<(&str, &str), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        by_instance
            .entry((r.spec_id.as_str(), r.instance_id.as_str()))
            .or_default()
            .push(r);
    }

    let mut stats: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for group in by_instance.values() {
        let best = group
            .iter()
            .filter_map(|r| r.min_yield)
            .fold(f64::NEG_INFINITY, f64::max);
        if !best.is_finite() || best <= 0.0 {
            continue;
        }
        for r in group {
            if let Some(y) = r.min_yield {
                let pct = (best - y) / best * 100.0;
                let entry = stats.entry(r.algorithm.as_str()).or_insert((0.0, 0.0, 0));
                entry.0 += pct;
                entry.1 = entry.1.max(pct);
                entry.2 += 1;
            }
        }
    }

    let mut rows: Vec<DegradationRow> = stats
        .into_iter()
        .map(|(algorithm, (sum, max_pct, n))| DegradationRow {
            algorithm: algorithm.to_string(),
            avg_pct: sum / n as f64,
            max_pct,
            instances: n,
        })
        .collect();
    rows.sort_by(|a, b| a.avg_pct.total_cmp(&b.avg_pct).then(a.algorithm.cmp(&b.algorithm)));
    Ok(DegradationTable { rows })
}

/// Per-slack, per-algorithm aggregates behind the yield-vs-slack and
/// failure-vs-slack figures.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackSummary {
    pub slack: f64,
    pub algorithm: String,
    pub total: usize,
    pub successes: usize,
    pub failure_rate: f64,
    pub mean_min_yield: Option<f64>,
    pub mean_avg_task_yield: Option<f64>,
    pub mean_avg_job_yield: Option<f64>,
    pub mean_relaxed_bound: Option<f64>,
}

/// Group records by the slack of their spec (via the manifest's spec→slack
/// map) and average each metric over successes.
pub fn summarize_by_slack(
    records: &[ResultRecord],
    slack_by_spec: &BTreeMap<String, f64>,
) -> Result<Vec<SlackSummary>, BenchError> {
    #[derive(Default)]
    struct Acc {
        total: usize,
        successes: usize,
        min_yield: f64,
        avg_task: f64,
        avg_job: f64,
        relaxed: f64,
        relaxed_n: usize,
    }
    let mut groups: BTreeMap<(u64, String), Acc> = BTreeMap::new();
    let mut slack_of_bits: BTreeMap<u64, f64> = BTreeMap::new();
    for r in records {
        let slack = *slack_by_spec
            .get(&r.spec_id)
            .ok_or_else(|| BenchError::UnknownSpec(r.spec_id.clone()))?;
        let bits = slack.to_bits();
        slack_of_bits.insert(bits, slack);
        let acc = groups.entry((bits, r.algorithm.clone())).or_default();
        acc.total += 1;
        if r.outcome == RecordOutcome::Success {
            acc.successes += 1;
            acc.min_yield += r.min_yield.unwrap_or(0.0);
            acc.avg_task += r.avg_task_yield.unwrap_or(0.0);
            acc.avg_job += r.avg_job_yield.unwrap_or(0.0);
        }
        if let Some(b) = r.relaxed_bound {
            acc.relaxed += b;
            acc.relaxed_n += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((bits, algorithm), acc)| {
            let over_successes =
                |sum: f64| (acc.successes > 0).then(|| sum / acc.successes as f64);
            SlackSummary {
                slack: slack_of_bits[&bits],
                algorithm,
                total: acc.total,
                successes: acc.successes,
                failure_rate: (acc.total - acc.successes) as f64 / acc.total as f64,
                mean_min_yield: over_successes(acc.min_yield),
                mean_avg_task_yield: over_successes(acc.avg_task),
                mean_avg_job_yield: over_successes(acc.avg_job),
                mean_relaxed_bound: (acc.relaxed_n > 0)
                    .then(|| acc.relaxed / acc.relaxed_n as f64),
            }
        })
        .collect())
}

/// Which per-slack series a figure plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureMetric {
    MinYield,
    AvgTaskYield,
    AvgJobYield,
    FailureRate,
}

impl FigureMetric {
    pub fn parse(s: &str) -> Option<FigureMetric> {
        match s {
            "min-yield-vs-slack" => Some(FigureMetric::MinYield),
            "avg-task-yield-vs-slack" => Some(FigureMetric::AvgTaskYield),
            "avg-job-yield-vs-slack" => Some(FigureMetric::AvgJobYield),
            "failure-rate-vs-slack" => Some(FigureMetric::FailureRate),
            _ => None,
        }
    }

    pub fn names() -> [&'static str; 4] {
        [
            "min-yield-vs-slack",
            "avg-task-yield-vs-slack",
            "avg-job-yield-vs-slack",
            "failure-rate-vs-slack",
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub slack: f64,
    pub algorithm: String,
    pub value: Option<f64>,
}

/// Extract one figure's data series from per-slack summaries.
pub fn figure_rows(summaries: &[SlackSummary], metric: FigureMetric) -> Vec<FigureRow> {
    summaries
        .iter()
        .map(|s| FigureRow {
            slack: s.slack,
            algorithm: s.algorithm.clone(),
            value: match metric {
                FigureMetric::MinYield => s.mean_min_yield,
                FigureMetric::AvgTaskYield => s.mean_avg_task_yield,
                FigureMetric::AvgJobYield => s.mean_avg_job_yield,
                FigureMetric::FailureRate => Some(s.failure_rate),
            },
        })
        .collect()
}

/// One line of the segregated timing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub spec_id: String,
    pub instance_id: String,
    pub algorithm: String,
    pub runtime_s: Option<f64>,
}

fn to_csv<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String, BenchError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| BenchError::Csv(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| BenchError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Full result CSV, including the timing column.
pub fn emit_csv(records: &[ResultRecord]) -> Result<String, BenchError> {
    to_csv(records.iter().cloned())
}

/// Split emission: a byte-reproducible results CSV with the timing column
/// left empty, plus a separate timings CSV.
pub fn emit_csv_split(records: &[ResultRecord]) -> Result<(String, String), BenchError> {
    let blanked = records.iter().cloned().map(|mut r| {
        r.runtime_s = None;
        r
    });
    let timings = records.iter().map(|r| TimingRecord {
        spec_id: r.spec_id.clone(),
        instance_id: r.instance_id.clone(),
        algorithm: r.algorithm.clone(),
        runtime_s: r.runtime_s,
    });
    Ok((to_csv(blanked)?, to_csv(timings)?))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>, BenchError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<Result<Vec<ResultRecord>, _>>()
        .map_err(|e| BenchError::Csv(e.to_string()))
}
