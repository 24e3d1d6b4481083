//! Closed-form relaxed optimum, deterministic fractional seed solutions, and
//! an exhaustive exact solver for small instances.
//!
//! The relaxed optimum allows fractional placements and has the closed form
//! `min(H / total cpu need, 1)` whenever total memory fits. The exact solver
//! enumerates task placements and serves as the oracle every heuristic in
//! this crate is judged against.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    placement_min_yield, Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution,
    FEASIBILITY_TOL,
};
use crate::parallel::expand_tasks;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxedError {
    #[error("total memory need {total_mem} exceeds {hosts} hosts; no relaxed solution")]
    Infeasible { total_mem: f64, hosts: usize },
    #[error("fractional first-fit could not fully place job {job}")]
    SeedIncomplete { job: usize },
}

/// Upper bound on the maximum minimum yield: `min(H / sum of cpu needs, 1)`.
///
/// Fails when the total memory need exceeds the total host memory, in which
/// case not even a fractional solution exists.
pub fn relaxed_optimum(inst: &ProblemInstance) -> Result<f64, RelaxedError> {
    let total_mem = inst.total_mem_need();
    if total_mem > inst.host_count as f64 + FEASIBILITY_TOL {
        return Err(RelaxedError::Infeasible {
            total_mem,
            hosts: inst.host_count,
        });
    }
    let total_cpu = inst.total_cpu_need();
    if total_cpu <= 0.0 {
        return Ok(1.0);
    }
    Ok((inst.host_count as f64 / total_cpu).min(1.0))
}

/// How to build the fractional seed used by the rounding heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedMode {
    /// Every job spread evenly: `e = 1/H` on each host.
    Uniform,
    /// Deterministic fractional first-fit, giving magnitude-varying `e`.
    #[default]
    Sparse,
}

impl SeedMode {
    pub fn id(&self) -> &'static str {
        match self {
            SeedMode::Uniform => "uniform",
            SeedMode::Sparse => "sparse",
        }
    }
}

/// A fractional allocation achieving the relaxed optimum.
///
/// `fractional_e[(job, host)]` is the fraction of the job assigned to the
/// host (summing to 1 per job) and `fractional_alpha` the CPU it receives
/// there. Zero entries are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub y_opt: f64,
    pub fractional_e: BTreeMap<(usize, usize), f64>,
    pub fractional_alpha: BTreeMap<(usize, usize), f64>,
}

impl RelaxedSolution {
    pub fn e(&self, job: usize, host: usize) -> f64 {
        self.fractional_e.get(&(job, host)).copied().unwrap_or(0.0)
    }

    /// Per-host weights for one job, dense over all hosts.
    pub fn host_weights(&self, job: usize, host_count: usize) -> Vec<f64> {
        (0..host_count).map(|h| self.e(job, h)).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.fractional_e.len()
    }
}

/// Compute a fractional solution achieving the relaxed optimum.
///
/// Uniform mode returns the even spread `e = 1/H`. Sparse mode runs a
/// deterministic fractional first-fit: jobs in input order, hosts in index
/// order, each job split across hosts at capacity boundaries until its CPU
/// demand at the optimal yield and its memory weight are covered.
pub fn relaxed_solution(
    inst: &ProblemInstance,
    mode: SeedMode,
) -> Result<RelaxedSolution, RelaxedError> {
    let y_opt = relaxed_optimum(inst)?;
    let hosts = inst.host_count;
    let mut fractional_e = BTreeMap::new();
    let mut fractional_alpha = BTreeMap::new();

    match mode {
        SeedMode::Uniform => {
            let e = 1.0 / hosts as f64;
            for (job, spec) in inst.jobs.iter().enumerate() {
                let cpu_total = spec.task_count as f64 * spec.cpu_need * y_opt;
                for host in 0..hosts {
                    fractional_e.insert((job, host), e);
                    fractional_alpha.insert((job, host), e * cpu_total);
                }
            }
        }
        SeedMode::Sparse => {
            let mut rem_cpu = vec![1.0f64; hosts];
            let mut rem_mem = vec![1.0f64; hosts];
            for (job, spec) in inst.jobs.iter().enumerate() {
                let cpu_total = spec.task_count as f64 * spec.cpu_need * y_opt;
                let mem_total = spec.task_count as f64 * spec.mem_need;
                let mut remaining = 1.0f64;
                for host in 0..hosts {
                    if remaining <= 1e-12 {
                        break;
                    }
                    let cpu_fit = if cpu_total > 0.0 {
                        rem_cpu[host] / cpu_total
                    } else {
                        f64::INFINITY
                    };
                    let mem_fit = if mem_total > 0.0 {
                        rem_mem[host] / mem_total
                    } else {
                        f64::INFINITY
                    };
                    let f = remaining.min(cpu_fit).min(mem_fit);
                    if f <= 1e-12 {
                        continue;
                    }
                    rem_cpu[host] -= f * cpu_total;
                    rem_mem[host] -= f * mem_total;
                    remaining -= f;
                    *fractional_e.entry((job, host)).or_insert(0.0) += f;
                    *fractional_alpha.entry((job, host)).or_insert(0.0) += f * cpu_total;
                }
                if remaining > 1e-9 {
                    return Err(RelaxedError::SeedIncomplete { job });
                }
            }
        }
    }

    Ok(RelaxedSolution {
        y_opt,
        fractional_e,
        fractional_alpha,
    })
}

/// Check a fractional solution against the relaxed constraints; returns one
/// message per violation.
pub fn verify_relaxed_solution(
    inst: &ProblemInstance,
    sol: &RelaxedSolution,
    tol: f64,
) -> Vec<String> {
    let mut problems = Vec::new();
    let mut host_cpu = vec![0.0f64; inst.host_count];
    let mut host_mem = vec![0.0f64; inst.host_count];
    for (&(job, host), &e) in &sol.fractional_e {
        let spec = &inst.jobs[job];
        host_mem[host] += e * spec.task_count as f64 * spec.mem_need;
        if !(0.0..=1.0 + tol).contains(&e) {
            problems.push(format!("e[{job},{host}] = {e} out of range"));
        }
    }
    for (&(_, host), &alpha) in &sol.fractional_alpha {
        host_cpu[host] += alpha;
    }
    for host in 0..inst.host_count {
        if host_cpu[host] > 1.0 + tol {
            problems.push(format!("host {host} cpu sum {} > 1", host_cpu[host]));
        }
        if host_mem[host] > 1.0 + tol {
            problems.push(format!("host {host} mem sum {} > 1", host_mem[host]));
        }
    }
    for (job, spec) in inst.jobs.iter().enumerate() {
        let e_sum: f64 = (0..inst.host_count).map(|h| sol.e(job, h)).sum();
        if (e_sum - 1.0).abs() > tol {
            problems.push(format!("job {job} fractions sum to {e_sum}"));
        }
        let need = spec.task_count as f64 * spec.cpu_need;
        if need > 0.0 {
            let granted: f64 = (0..inst.host_count)
                .map(|h| sol.fractional_alpha.get(&(job, h)).copied().unwrap_or(0.0))
                .sum();
            if granted / need < sol.y_opt - tol {
                problems.push(format!(
                    "job {job} yield {} below optimum {}",
                    granted / need,
                    sol.y_opt
                ));
            }
        }
    }
    problems
}

/// Work limits for the exhaustive solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactLimits {
    /// Maximum number of partial placements to visit.
    pub max_nodes: u64,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits {
            max_nodes: 100_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("instance too large for exact search: about {estimate:e} placements exceeds budget {budget}")]
    TooLarge { estimate: f64, budget: u64 },
}

struct ExactSearch<'a> {
    items: Vec<crate::parallel::TaskItem>,
    hosts: usize,
    limits: ExactLimits,
    nodes: u64,
    host_cpu: Vec<f64>,
    host_mem: Vec<f64>,
    assignment: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    inst: &'a ProblemInstance,
}

impl ExactSearch<'_> {
    fn partial_bound(&self) -> f64 {
        self.host_cpu
            .iter()
            .map(|&load| if load > 1.0 { 1.0 / load } else { 1.0 })
            .fold(1.0, f64::min)
    }

    fn dfs(&mut self, depth: usize, used_hosts: usize) -> Result<(), ExactError> {
        self.nodes += 1;
        if self.nodes > self.limits.max_nodes {
            return Err(ExactError::TooLarge {
                estimate: (self.hosts as f64).powi(self.items.len() as i32),
                budget: self.limits.max_nodes,
            });
        }
        if depth == self.items.len() {
            let y = placement_min_yield(self.inst, &self.assignment);
            let better = match &self.best {
                Some((best_y, _)) => y > *best_y,
                None => true,
            };
            if better {
                self.best = Some((y, self.assignment.clone()));
            }
            return Ok(());
        }
        // A completion can never beat the bound of the partial placement.
        if let Some((best_y, _)) = &self.best {
            if self.partial_bound() <= *best_y {
                return Ok(());
            }
        }
        let item = self.items[depth];
        // Hosts are identical, so only the first unused host needs trying.
        let candidates = self.hosts.min(used_hosts + 1);
        for host in 0..candidates {
            if self.host_mem[host] + item.mem_need > 1.0 + FEASIBILITY_TOL {
                continue;
            }
            self.host_mem[host] += item.mem_need;
            self.host_cpu[host] += item.cpu_need;
            self.assignment[depth] = host;
            let next_used = used_hosts.max(host + 1);
            self.dfs(depth + 1, next_used)?;
            self.host_mem[host] -= item.mem_need;
            self.host_cpu[host] -= item.cpu_need;
        }
        Ok(())
    }
}

/// Maximize the minimum yield by exhaustive placement enumeration.
///
/// Visits every memory-feasible placement (up to renaming of the identical
/// hosts), scoring each by the best floor its placement admits. Ties keep
/// the first placement enumerated. Intended for small instances; anything
/// whose placement count exceeds the node budget is rejected up front.
pub fn exact_solve(
    inst: &ProblemInstance,
    limits: ExactLimits,
) -> Result<SolveOutcome, ExactError> {
    let items = expand_tasks(inst);
    let estimate = (inst.host_count as f64).powi(items.len() as i32);
    if estimate > limits.max_nodes as f64 {
        return Err(ExactError::TooLarge {
            estimate,
            budget: limits.max_nodes,
        });
    }
    let mut search = ExactSearch {
        assignment: vec![0; items.len()],
        items,
        hosts: inst.host_count,
        limits,
        nodes: 0,
        host_cpu: vec![0.0; inst.host_count],
        host_mem: vec![0.0; inst.host_count],
        best: None,
        inst,
    };
    search.dfs(0, 0)?;
    Ok(match search.best {
        Some((y, hosts)) => SolveOutcome::Success(Solution {
            allocation: Allocation::from_task_hosts(inst, &hosts, y),
            min_yield: y,
        }),
        None => SolveOutcome::Failure(SolveFailure::Infeasible),
    })
}
