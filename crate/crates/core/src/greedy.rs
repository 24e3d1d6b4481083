//! Greedy placement heuristics: plain, memory-sorted, and backtracking
//! variants.
//!
//! Tasks are taken in input order (or in descending order of memory need),
//! and each is placed on the least CPU-loaded host whose memory admits it,
//! where a host's load is the total CPU need already assigned to it. The
//! backtracking variants turn that choice into a depth-first search, bounded
//! by a placement-attempt budget.

use crate::model::{
    placement_min_yield, Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution,
    FEASIBILITY_TOL,
};
use crate::parallel::{expand_tasks, TaskItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyConfig {
    /// Place memory-hungry tasks first (the "sorted" variants).
    pub sort_by_memory_desc: bool,
    /// Search over host choices instead of committing to the first.
    pub backtracking: bool,
    /// Budget of (task, host) admission tests for the backtracking search.
    pub max_placement_attempts: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            sort_by_memory_desc: false,
            backtracking: false,
            max_placement_attempts: 500_000,
        }
    }
}

impl GreedyConfig {
    pub fn gr() -> Self {
        Self::default()
    }

    pub fn sg() -> Self {
        GreedyConfig {
            sort_by_memory_desc: true,
            ..Self::default()
        }
    }

    pub fn gb() -> Self {
        GreedyConfig {
            backtracking: true,
            ..Self::default()
        }
    }

    pub fn sgb() -> Self {
        GreedyConfig {
            sort_by_memory_desc: true,
            backtracking: true,
            ..Self::default()
        }
    }
}

/// Hosts in non-decreasing order of assigned CPU need, ties by index.
fn ranked_hosts(host_cpu: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..host_cpu.len()).collect();
    order.sort_by(|&a, &b| host_cpu[a].total_cmp(&host_cpu[b]).then(a.cmp(&b)));
    order
}

fn admits(host_mem: f64, mem_need: f64) -> bool {
    host_mem + mem_need <= 1.0 + FEASIBILITY_TOL
}

struct Backtracker<'a> {
    items: &'a [TaskItem],
    host_cpu: Vec<f64>,
    host_mem: Vec<f64>,
    assignment: Vec<usize>,
    attempts_left: usize,
    out_of_attempts: bool,
}

impl Backtracker<'_> {
    fn search(&mut self, depth: usize) -> bool {
        if depth == self.items.len() {
            return true;
        }
        let item = self.items[depth];
        // The ranking is frozen for the duration of this frame.
        for host in ranked_hosts(&self.host_cpu) {
            if self.attempts_left == 0 {
                self.out_of_attempts = true;
                return false;
            }
            self.attempts_left -= 1;
            if !admits(self.host_mem[host], item.mem_need) {
                continue;
            }
            self.host_mem[host] += item.mem_need;
            self.host_cpu[host] += item.cpu_need;
            self.assignment[depth] = host;
            if self.search(depth + 1) {
                return true;
            }
            self.host_mem[host] -= item.mem_need;
            self.host_cpu[host] -= item.cpu_need;
            if self.out_of_attempts {
                return false;
            }
        }
        false
    }
}

/// Place every task greedily and grant each the floor share of the resulting
/// placement's best minimum yield.
pub fn greedy_solve(inst: &ProblemInstance, cfg: &GreedyConfig) -> SolveOutcome {
    let mut items = expand_tasks(inst);
    if cfg.sort_by_memory_desc {
        // Stable, so equal memory needs keep their input order.
        items.sort_by(|a, b| b.mem_need.total_cmp(&a.mem_need));
    }

    let placement = if cfg.backtracking {
        let mut bt = Backtracker {
            assignment: vec![0; items.len()],
            items: &items,
            host_cpu: vec![0.0; inst.host_count],
            host_mem: vec![0.0; inst.host_count],
            attempts_left: cfg.max_placement_attempts,
            out_of_attempts: false,
        };
        if bt.search(0) {
            Some(bt.assignment)
        } else if bt.out_of_attempts {
            return SolveOutcome::Failure(SolveFailure::AttemptLimitReached);
        } else {
            None
        }
    } else {
        let mut host_cpu = vec![0.0f64; inst.host_count];
        let mut host_mem = vec![0.0f64; inst.host_count];
        let mut assignment = Vec::with_capacity(items.len());
        'items: {
            for item in &items {
                let host = ranked_hosts(&host_cpu)
                    .into_iter()
                    .find(|&h| admits(host_mem[h], item.mem_need));
                match host {
                    Some(h) => {
                        host_mem[h] += item.mem_need;
                        host_cpu[h] += item.cpu_need;
                        assignment.push(h);
                    }
                    None => break 'items,
                }
            }
        }
        if assignment.len() == items.len() {
            Some(assignment)
        } else {
            None
        }
    };

    match placement {
        Some(assignment) => {
            // Undo the sort: hosts in job-major task order.
            let mut hosts = vec![0usize; items.len()];
            let mut positions: Vec<usize> = (0..items.len()).collect();
            positions.sort_by_key(|&p| (items[p].job, items[p].task));
            for (slot, &p) in positions.iter().enumerate() {
                hosts[slot] = assignment[p];
            }
            let y = placement_min_yield(inst, &hosts);
            SolveOutcome::Success(Solution {
                allocation: Allocation::from_task_hosts(inst, &hosts, y),
                min_yield: y,
            })
        }
        None => SolveOutcome::Failure(SolveFailure::NoAdmissibleHost),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{exact_solve, ExactLimits};
    use crate::model::{check_feasible, JobSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(hosts: usize, jobs: &[(f64, f64)]) -> ProblemInstance {
        ProblemInstance::new(
            hosts,
            jobs.iter()
                .map(|&(cpu, mem)| JobSpec::sequential(cpu, mem).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn memory_forces_a_split() {
        let a = inst(2, &[(0.2, 0.6), (0.2, 0.6)]);
        let sol = greedy_solve(&a, &GreedyConfig::gr());
        let sol = sol.success().expect("fits");
        let h0 = sol.allocation.host_of(0, 0).unwrap();
        let h1 = sol.allocation.host_of(1, 0).unwrap();
        assert_ne!(h0, h1);
    }

    #[test]
    fn backtracking_recovers_where_plain_greedy_fails() {
        // In input order the two 0.5-memory tasks split across hosts and the
        // 0.6 task fits nowhere; backtracking pairs them up instead.
        let a = inst(2, &[(0.1, 0.5), (0.1, 0.5), (0.1, 0.6)]);
        assert_eq!(
            greedy_solve(&a, &GreedyConfig::gr()),
            SolveOutcome::Failure(SolveFailure::NoAdmissibleHost)
        );
        let sol = greedy_solve(&a, &GreedyConfig::gb());
        let sol = sol.success().expect("backtracking finds it");
        assert!(check_feasible(&a, &sol.allocation, FEASIBILITY_TOL)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sorted_variant_places_large_memory_first() {
        let a = inst(2, &[(0.5, 0.2), (0.5, 0.9)]);
        let sol = greedy_solve(&a, &GreedyConfig::sg());
        let sol = sol.success().unwrap();
        // The 0.9-memory job went first, onto the lowest-index empty host.
        assert_eq!(sol.allocation.host_of(1, 0), Some(0));
        assert_eq!(sol.allocation.host_of(0, 0), Some(1));
    }

    #[test]
    fn host_ranking_breaks_ties_by_index() {
        let a = inst(3, &[(0.3, 0.1)]);
        let sol = greedy_solve(&a, &GreedyConfig::gr());
        assert_eq!(sol.success().unwrap().allocation.host_of(0, 0), Some(0));
    }

    #[test]
    fn job_sort_is_stable_on_ties() {
        // Equal memory everywhere: SG must behave exactly like GR.
        let a = inst(2, &[(0.6, 0.3), (0.2, 0.3), (0.4, 0.3)]);
        let gr = greedy_solve(&a, &GreedyConfig::gr());
        let sg = greedy_solve(&a, &GreedyConfig::sg());
        assert_eq!(gr, sg);
    }

    #[test]
    fn attempt_budget_exhaustion_is_reported() {
        let a = inst(2, &[(0.1, 0.6), (0.1, 0.6), (0.1, 0.6)]);
        let cfg = GreedyConfig {
            backtracking: true,
            max_placement_attempts: 3,
            ..GreedyConfig::default()
        };
        assert_eq!(
            greedy_solve(&a, &cfg),
            SolveOutcome::Failure(SolveFailure::AttemptLimitReached)
        );
    }

    #[test]
    fn backtracking_matches_exact_feasibility_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let hosts = rng.gen_range(1..=3);
            let jobs: Vec<(f64, f64)> = (0..rng.gen_range(1..=6))
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.8)))
                .collect();
            let a = inst(hosts, &jobs);
            let exact = exact_solve(&a, ExactLimits::default()).unwrap();
            let gb = greedy_solve(&a, &GreedyConfig::gb());
            if let Some(reference) = exact.success() {
                let sol = gb.success().expect("GB finds any feasible placement");
                assert!(sol.min_yield <= reference.min_yield + 1e-9);
                assert!(check_feasible(&a, &sol.allocation, FEASIBILITY_TOL)
                    .unwrap()
                    .is_empty());
            } else {
                assert!(!gb.is_success());
            }
        }
    }
}
