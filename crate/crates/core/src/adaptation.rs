//! Schedule adaptation under a migration budget.
//!
//! When the workload changes, the placement may be re-optimized, but moving
//! a task means transferring its memory. An adaptation instance pairs a
//! problem instance with each task's previous host (newly arrived tasks have
//! none) and a budget capping either the total memory moved or the number of
//! migrations. The exact solver enumerates placements whose migration cost
//! stays within budget; a zero budget pins every previously running task in
//! place.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{ExactError, ExactLimits};
use crate::model::{
    placement_min_yield, Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution,
    FEASIBILITY_TOL,
};
use crate::parallel::expand_tasks;

/// What the migration budget counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    /// Host-memory fractions: moving a task costs its `mem_need`.
    #[default]
    MemoryFraction,
    /// Each migration costs 1 regardless of size.
    MigrationCount,
}

/// Previous host of one task in the adaptation file format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviousEntry {
    pub job: usize,
    pub task: usize,
    /// `None` marks a newly arrived task.
    pub host: Option<usize>,
}

/// A problem instance plus the previous placement and a migration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationInstance {
    pub inst: ProblemInstance,
    previous: BTreeMap<(usize, usize), usize>,
    pub budget: f64,
    pub budget_unit: BudgetUnit,
}

#[derive(Debug, Error)]
pub enum AdaptationError {
    #[error("previous placement for job {job} task {task} names host {host}, but instance has {host_count} hosts")]
    PreviousHostOutOfRange {
        job: usize,
        task: usize,
        host: usize,
        host_count: usize,
    },
    #[error("previous placement references job {job} task {task} not present in the instance")]
    PreviousTaskUnknown { job: usize, task: usize },
    #[error("budget must be non-negative, got {0}")]
    NegativeBudget(f64),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

impl AdaptationInstance {
    /// Tasks absent from `previous` (or marked with a null host) are new.
    pub fn new(
        inst: ProblemInstance,
        previous: &[PreviousEntry],
        budget: f64,
        budget_unit: BudgetUnit,
    ) -> Result<Self, AdaptationError> {
        if !(budget >= 0.0) {
            return Err(AdaptationError::NegativeBudget(budget));
        }
        let mut map = BTreeMap::new();
        for entry in previous {
            if entry.job >= inst.job_count() || entry.task >= inst.jobs[entry.job].task_count {
                return Err(AdaptationError::PreviousTaskUnknown {
                    job: entry.job,
                    task: entry.task,
                });
            }
            if let Some(host) = entry.host {
                if host >= inst.host_count {
                    return Err(AdaptationError::PreviousHostOutOfRange {
                        job: entry.job,
                        task: entry.task,
                        host,
                        host_count: inst.host_count,
                    });
                }
                map.insert((entry.job, entry.task), host);
            }
        }
        Ok(AdaptationInstance {
            inst,
            previous: map,
            budget,
            budget_unit,
        })
    }

    pub fn previous_host(&self, job: usize, task: usize) -> Option<usize> {
        self.previous.get(&(job, task)).copied()
    }

    /// Cost of moving one task of `job` off its previous host.
    fn move_cost(&self, job: usize) -> f64 {
        match self.budget_unit {
            BudgetUnit::MemoryFraction => self.inst.jobs[job].mem_need,
            BudgetUnit::MigrationCount => 1.0,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = AdaptationDoc {
            inst: self.inst.clone(),
            previous: self
                .previous
                .iter()
                .map(|(&(job, task), &host)| PreviousEntry {
                    job,
                    task,
                    host: Some(host),
                })
                .collect(),
            budget: self.budget,
        };
        serde_json::to_string_pretty(&doc).expect("adaptation serializes")
    }

    /// Parse the instance format extended with `previous` and `budget`
    /// fields. The budget unit is not part of the file; callers choose it.
    pub fn from_json(text: &str, budget_unit: BudgetUnit) -> Result<Self, AdaptationError> {
        let doc: AdaptationDoc =
            serde_json::from_str(text).map_err(|e| AdaptationError::Json(e.to_string()))?;
        doc.inst.validate()?;
        Self::new(doc.inst, &doc.previous, doc.budget, budget_unit)
    }
}

#[derive(Serialize, Deserialize)]
struct AdaptationDoc {
    #[serde(flatten)]
    inst: ProblemInstance,
    previous: Vec<PreviousEntry>,
    budget: f64,
}

/// Total migration cost of an allocation: each task placed away from its
/// previous host contributes its memory need (or 1 in count mode); new
/// tasks contribute nothing.
pub fn migration_cost(adapt: &AdaptationInstance, alloc: &Allocation) -> f64 {
    let mut cost = 0.0;
    for e in alloc.iter() {
        if let Some(prev) = adapt.previous_host(e.job, e.task) {
            if prev != e.host {
                cost += adapt.move_cost(e.job);
            }
        }
    }
    cost
}

struct AdaptSearch<'a> {
    adapt: &'a AdaptationInstance,
    items: Vec<crate::parallel::TaskItem>,
    limits: ExactLimits,
    nodes: u64,
    host_cpu: Vec<f64>,
    host_mem: Vec<f64>,
    cost: f64,
    assignment: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl AdaptSearch<'_> {
    fn partial_bound(&self) -> f64 {
        self.host_cpu
            .iter()
            .map(|&load| if load > 1.0 { 1.0 / load } else { 1.0 })
            .fold(1.0, f64::min)
    }

    fn dfs(&mut self, depth: usize) -> Result<(), ExactError> {
        self.nodes += 1;
        if self.nodes > self.limits.max_nodes {
            return Err(ExactError::TooLarge {
                estimate: (self.host_cpu.len() as f64).powi(self.items.len() as i32),
                budget: self.limits.max_nodes,
            });
        }
        if depth == self.items.len() {
            let y = placement_min_yield(&self.adapt.inst, &self.assignment);
            let better = match &self.best {
                Some((best_y, _)) => y > *best_y,
                None => true,
            };
            if better {
                self.best = Some((y, self.assignment.clone()));
            }
            return Ok(());
        }
        if let Some((best_y, _)) = &self.best {
            if self.partial_bound() <= *best_y {
                return Ok(());
            }
        }
        let item = self.items[depth];
        let prev = self.adapt.previous_host(item.job, item.task);
        for host in 0..self.host_cpu.len() {
            if self.host_mem[host] + item.mem_need > 1.0 + FEASIBILITY_TOL {
                continue;
            }
            let move_cost = match prev {
                Some(p) if p != host => self.adapt.move_cost(item.job),
                _ => 0.0,
            };
            if self.cost + move_cost > self.adapt.budget + FEASIBILITY_TOL {
                continue;
            }
            self.host_mem[host] += item.mem_need;
            self.host_cpu[host] += item.cpu_need;
            self.cost += move_cost;
            self.assignment[depth] = host;
            self.dfs(depth + 1)?;
            self.host_mem[host] -= item.mem_need;
            self.host_cpu[host] -= item.cpu_need;
            self.cost -= move_cost;
        }
        Ok(())
    }
}

/// Maximize the minimum yield over all placements whose migration cost stays
/// within the budget, by exhaustive enumeration.
///
/// Unlike the plain exact solver, hosts are distinguishable here (the
/// previous placement breaks the symmetry), so every placement is visited.
pub fn exact_adapt_solve(
    adapt: &AdaptationInstance,
    limits: ExactLimits,
) -> Result<SolveOutcome, ExactError> {
    let items = expand_tasks(&adapt.inst);
    let estimate = (adapt.inst.host_count as f64).powi(items.len() as i32);
    if estimate > limits.max_nodes as f64 {
        return Err(ExactError::TooLarge {
            estimate,
            budget: limits.max_nodes,
        });
    }
    let mut search = AdaptSearch {
        adapt,
        assignment: vec![0; items.len()],
        items,
        limits,
        nodes: 0,
        host_cpu: vec![0.0; adapt.inst.host_count],
        host_mem: vec![0.0; adapt.inst.host_count],
        cost: 0.0,
        best: None,
    };
    search.dfs(0)?;
    Ok(match search.best {
        Some((y, hosts)) => SolveOutcome::Success(Solution {
            allocation: Allocation::from_task_hosts(&adapt.inst, &hosts, y),
            min_yield: y,
        }),
        None => SolveOutcome::Failure(SolveFailure::Infeasible),
    })
}
