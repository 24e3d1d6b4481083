//! Domain types for scheduling instances and allocations, plus the evaluation
//! and feasibility primitives shared by every solver.
//!
//! An instance consists of `H` identical hosts (capacity normalized to 1.0 CPU
//! and 1.0 memory each) and `J` jobs. Job `i` needs a fraction `cpu_need` of
//! one host's compute capability and a fraction `mem_need` of one host's
//! memory, and consists of `task_count` tasks with identical needs. An
//! allocation places every task on exactly one host and grants it a CPU
//! share; the *yield* of a task is its granted share divided by its need.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used by all feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

fn default_task_count() -> usize {
    1
}

/// Resource needs of one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    /// Fraction of one host's compute capability the job can use, in [0, 1].
    #[serde(rename = "cpu")]
    pub cpu_need: f64,
    /// Fraction of one host's memory each task of the job occupies, in [0, 1].
    #[serde(rename = "mem")]
    pub mem_need: f64,
    /// Number of tasks; 1 for sequential jobs.
    #[serde(rename = "tasks", default = "default_task_count")]
    pub task_count: usize,
}

impl JobSpec {
    pub fn new(cpu_need: f64, mem_need: f64, task_count: usize) -> Result<Self, ModelError> {
        let spec = JobSpec {
            cpu_need,
            mem_need,
            task_count,
        };
        spec.validate(0)?;
        Ok(spec)
    }

    /// A single-task job, the common case.
    pub fn sequential(cpu_need: f64, mem_need: f64) -> Result<Self, ModelError> {
        Self::new(cpu_need, mem_need, 1)
    }

    fn validate(&self, job: usize) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.cpu_need) || !self.cpu_need.is_finite() {
            return Err(ModelError::BadJobValue {
                job,
                field: "cpu",
                value: self.cpu_need,
            });
        }
        if !(0.0..=1.0).contains(&self.mem_need) || !self.mem_need.is_finite() {
            return Err(ModelError::BadJobValue {
                job,
                field: "mem",
                value: self.mem_need,
            });
        }
        if self.task_count == 0 {
            return Err(ModelError::BadJobValue {
                job,
                field: "tasks",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// A scheduling problem: `host_count` identical hosts and a list of jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(rename = "hosts")]
    pub host_count: usize,
    pub jobs: Vec<JobSpec>,
}

impl ProblemInstance {
    pub fn new(host_count: usize, jobs: Vec<JobSpec>) -> Result<Self, ModelError> {
        let inst = ProblemInstance { host_count, jobs };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.host_count == 0 {
            return Err(ModelError::NoHosts);
        }
        if self.jobs.is_empty() {
            return Err(ModelError::NoJobs);
        }
        for (i, job) in self.jobs.iter().enumerate() {
            job.validate(i)?;
        }
        Ok(())
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    /// Total number of tasks over all jobs.
    pub fn task_count(&self) -> usize {
        self.jobs.iter().map(|j| j.task_count).sum()
    }

    /// Sum of `task_count * cpu_need` over all jobs.
    pub fn total_cpu_need(&self) -> f64 {
        self.jobs
            .iter()
            .map(|j| j.task_count as f64 * j.cpu_need)
            .sum()
    }

    /// Sum of `task_count * mem_need` over all jobs.
    pub fn total_mem_need(&self) -> f64 {
        self.jobs
            .iter()
            .map(|j| j.task_count as f64 * j.mem_need)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let inst: ProblemInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance must have at least one host")]
    NoHosts,
    #[error("instance must have at least one job")]
    NoJobs,
    #[error("job {job}: invalid {field} value {value}")]
    BadJobValue {
        job: usize,
        field: &'static str,
        value: f64,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// One placed task in an allocation file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocEntry {
    pub job: usize,
    pub task: usize,
    pub host: usize,
    pub share: f64,
}

/// Placement and CPU shares for every task of an instance.
///
/// Only the placed host's share is stored; every task lives on exactly one
/// host, so the full per-host share matrix is implied sparse.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation {
    entries: BTreeMap<(usize, usize), (usize, f64)>,
}

impl Allocation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Place task `task` of job `job` on `host` with CPU share `share`.
    /// Replaces any previous placement of the same task.
    pub fn place(&mut self, job: usize, task: usize, host: usize, share: f64) {
        self.entries.insert((job, task), (host, share));
    }

    pub fn get(&self, job: usize, task: usize) -> Option<(usize, f64)> {
        self.entries.get(&(job, task)).copied()
    }

    pub fn host_of(&self, job: usize, task: usize) -> Option<usize> {
        self.get(job, task).map(|(h, _)| h)
    }

    pub fn share_of(&self, job: usize, task: usize) -> Option<f64> {
        self.get(job, task).map(|(_, s)| s)
    }

    pub fn set_share(&mut self, job: usize, task: usize, share: f64) {
        if let Some(entry) = self.entries.get_mut(&(job, task)) {
            entry.1 = share;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in (job, task) order.
    pub fn iter(&self) -> impl Iterator<Item = AllocEntry> + '_ {
        self.entries
            .iter()
            .map(|(&(job, task), &(host, share))| AllocEntry {
                job,
                task,
                host,
                share,
            })
    }

    /// Build an allocation from per-task host choices in job-major task order,
    /// granting every task the floor share `cpu_need * yield_floor`.
    pub fn from_task_hosts(inst: &ProblemInstance, hosts: &[usize], yield_floor: f64) -> Self {
        let mut alloc = Allocation::new();
        let mut idx = 0;
        for (job, spec) in inst.jobs.iter().enumerate() {
            for task in 0..spec.task_count {
                alloc.place(job, task, hosts[idx], spec.cpu_need * yield_floor);
                idx += 1;
            }
        }
        debug_assert_eq!(idx, hosts.len());
        alloc
    }

    pub fn to_json(&self) -> String {
        let list: Vec<AllocEntry> = self.iter().collect();
        serde_json::to_string_pretty(&list).expect("allocation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let list: Vec<AllocEntry> = serde_json::from_str(text)?;
        let mut alloc = Allocation::new();
        for e in list {
            alloc.place(e.job, e.task, e.host, e.share);
        }
        Ok(alloc)
    }
}

/// Yields of an allocation, per task and per job.
///
/// A task's yield is its granted share over its need; a job's yield is its
/// total granted share over its total need. Jobs that need no CPU are served
/// trivially and have yield 1.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldReport {
    /// Per-task yields, in job-major task order.
    pub per_task_yield: Vec<f64>,
    /// Per-job yields, in job order.
    pub per_job_yield: Vec<f64>,
    pub min_yield: f64,
    pub avg_task_yield: f64,
    pub avg_job_yield: f64,
}

/// Compute the yield report for an allocation.
///
/// The allocation need not be feasible; tasks without a placement count as
/// receiving a zero share.
pub fn evaluate(inst: &ProblemInstance, alloc: &Allocation) -> YieldReport {
    let mut per_task_yield = Vec::with_capacity(inst.task_count());
    let mut per_job_yield = Vec::with_capacity(inst.job_count());
    for (job, spec) in inst.jobs.iter().enumerate() {
        let mut job_share = 0.0;
        for task in 0..spec.task_count {
            let share = alloc.share_of(job, task).unwrap_or(0.0);
            job_share += share;
            per_task_yield.push(if spec.cpu_need > 0.0 {
                share / spec.cpu_need
            } else {
                1.0
            });
        }
        let job_need = spec.task_count as f64 * spec.cpu_need;
        per_job_yield.push(if job_need > 0.0 {
            job_share / job_need
        } else {
            1.0
        });
    }
    let min_yield = per_task_yield.iter().copied().fold(f64::INFINITY, f64::min);
    let min_yield = if min_yield.is_finite() { min_yield } else { 1.0 };
    YieldReport {
        avg_task_yield: mean(&per_task_yield),
        avg_job_yield: mean(&per_job_yield),
        min_yield,
        per_task_yield,
        per_job_yield,
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// The largest minimum yield achievable for a fixed placement: the CPU of
/// each host is divided among its tasks proportionally to their needs, so the
/// best floor is `min over hosts of min(1, 1 / sum of cpu_need on host)`.
pub fn placement_min_yield(inst: &ProblemInstance, task_hosts: &[usize]) -> f64 {
    let mut host_cpu = vec![0.0f64; inst.host_count];
    let mut idx = 0;
    for spec in &inst.jobs {
        for _ in 0..spec.task_count {
            host_cpu[task_hosts[idx]] += spec.cpu_need;
            idx += 1;
        }
    }
    host_cpu
        .iter()
        .map(|&load| if load > 1.0 { 1.0 / load } else { 1.0 })
        .fold(1.0, f64::min)
}

/// One violated feasibility constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A task has no placement.
    MissingTask { job: usize, task: usize },
    /// Total CPU share on a host exceeds its capacity.
    HostCpuOverflow { host: usize, total: f64 },
    /// Total memory of tasks placed on a host exceeds its capacity.
    HostMemOverflow { host: usize, total: f64 },
    /// A task's share exceeds its job's CPU need.
    ShareExceedsNeed { job: usize, task: usize, share: f64 },
    /// Tasks of one multi-task job have unequal shares.
    NonUniformJob { job: usize, spread: f64 },
}

/// Structurally invalid allocation: indices that do not exist in the instance.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("allocation references job {job} but instance has {job_count} jobs")]
    JobOutOfRange { job: usize, job_count: usize },
    #[error("allocation references task {task} of job {job} which has {task_count} tasks")]
    TaskOutOfRange {
        job: usize,
        task: usize,
        task_count: usize,
    },
    #[error("allocation references host {host} but instance has {host_count} hosts")]
    HostOutOfRange { host: usize, host_count: usize },
}

/// Check every feasibility constraint and return one descriptor per violation.
///
/// An empty list means the allocation is feasible within `tol`. Index errors
/// are structural and reported separately from constraint violations.
pub fn check_feasible(
    inst: &ProblemInstance,
    alloc: &Allocation,
    tol: f64,
) -> Result<Vec<Violation>, StructuralError> {
    for e in alloc.iter() {
        if e.job >= inst.job_count() {
            return Err(StructuralError::JobOutOfRange {
                job: e.job,
                job_count: inst.job_count(),
            });
        }
        if e.task >= inst.jobs[e.job].task_count {
            return Err(StructuralError::TaskOutOfRange {
                job: e.job,
                task: e.task,
                task_count: inst.jobs[e.job].task_count,
            });
        }
        if e.host >= inst.host_count {
            return Err(StructuralError::HostOutOfRange {
                host: e.host,
                host_count: inst.host_count,
            });
        }
    }

    let mut violations = Vec::new();
    let mut host_cpu = vec![0.0f64; inst.host_count];
    let mut host_mem = vec![0.0f64; inst.host_count];
    for (job, spec) in inst.jobs.iter().enumerate() {
        let mut shares = Vec::with_capacity(spec.task_count);
        for task in 0..spec.task_count {
            match alloc.get(job, task) {
                Some((host, share)) => {
                    host_cpu[host] += share;
                    host_mem[host] += spec.mem_need;
                    if share > spec.cpu_need + tol {
                        violations.push(Violation::ShareExceedsNeed { job, task, share });
                    }
                    shares.push(share);
                }
                None => violations.push(Violation::MissingTask { job, task }),
            }
        }
        if spec.task_count > 1 && shares.len() > 1 {
            let min = shares.iter().copied().fold(f64::INFINITY, f64::min);
            let max = shares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max - min > tol {
                violations.push(Violation::NonUniformJob {
                    job,
                    spread: max - min,
                });
            }
        }
    }
    for host in 0..inst.host_count {
        if host_cpu[host] > 1.0 + tol {
            violations.push(Violation::HostCpuOverflow {
                host,
                total: host_cpu[host],
            });
        }
        if host_mem[host] > 1.0 + tol {
            violations.push(Violation::HostMemOverflow {
                host,
                total: host_mem[host],
            });
        }
    }
    Ok(violations)
}

/// Why a solver returned no allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveFailure {
    /// Some task found no host whose memory admits it.
    NoAdmissibleHost,
    /// The backtracking attempt budget ran out before a placement was found.
    AttemptLimitReached,
    /// No probed yield value produced a complete packing.
    NoFeasiblePacking,
    /// Exhaustive search proved no feasible placement exists.
    Infeasible,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let msg = match self {
            SolveFailure::NoAdmissibleHost => "no host admits some task",
            SolveFailure::AttemptLimitReached => "placement attempt limit reached",
            SolveFailure::NoFeasiblePacking => "no probed yield value packed",
            SolveFailure::Infeasible => "no feasible placement exists",
        };
        f.write_str(msg)
    }
}

/// A successful solver run: the allocation and the minimum yield it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub min_yield: f64,
}

/// Outcome of one solver run. Failure to find an allocation is a value, not
/// an error; errors are reserved for misuse (bad input, exceeded budgets).
#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Success(Solution),
    Failure(SolveFailure),
}

impl SolveOutcome {
    pub fn success(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Success(s) => Some(s),
            SolveOutcome::Failure(_) => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, SolveOutcome::Success(_))
    }
}
