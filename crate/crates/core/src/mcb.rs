//! Multi-capacity bin packing heuristics driven by a binary search on the
//! yield.
//!
//! Fixing a candidate yield turns every task into an item with fixed CPU and
//! memory demands, which a two-list bin packing pass then tries to fit onto
//! the hosts: tasks are split into a CPU-heavy and a memory-heavy list, each
//! sorted by one of four keys in one of two directions (the eight MCB
//! variants), and each host repeatedly takes the first fitting task from the
//! list that pushes against its current capacity imbalance. A binary search
//! over candidate yields keeps the best packing found; success at a given
//! yield does not imply success at smaller ones, so no probe outcome is
//! trusted beyond itself.

use crate::model::{
    Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution, FEASIBILITY_TOL,
};
use crate::parallel::expand_tasks;

/// Sort key applied to both task lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    /// memory + CPU
    Sum,
    /// max(memory, CPU) - min(memory, CPU)
    Diff,
    /// max(memory, CPU) / min(memory, CPU)
    Ratio,
    /// max(memory, CPU)
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

/// One of the eight MCB variants: a sort key and a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McbVariant {
    pub sort_key: SortKey,
    pub order: SortOrder,
}

impl McbVariant {
    /// Variant by its conventional number, 1 through 8: keys cycle through
    /// sum, diff, ratio, max; 1-4 sort ascending, 5-8 descending.
    pub fn numbered(n: u8) -> Option<McbVariant> {
        let sort_key = match (n - 1) % 4 {
            0 => SortKey::Sum,
            1 => SortKey::Diff,
            2 => SortKey::Ratio,
            _ => SortKey::Max,
        };
        match n {
            1..=4 => Some(McbVariant {
                sort_key,
                order: SortOrder::Ascending,
            }),
            5..=8 => Some(McbVariant {
                sort_key,
                order: SortOrder::Descending,
            }),
            _ => None,
        }
    }

    pub fn number(&self) -> u8 {
        let key = match self.sort_key {
            SortKey::Sum => 1,
            SortKey::Diff => 2,
            SortKey::Ratio => 3,
            SortKey::Max => 4,
        };
        match self.order {
            SortOrder::Ascending => key,
            SortOrder::Descending => key + 4,
        }
    }

    pub fn all() -> [McbVariant; 8] {
        [1, 2, 3, 4, 5, 6, 7, 8].map(|n| McbVariant::numbered(n).unwrap())
    }

    fn key(&self, cpu: f64, mem: f64) -> f64 {
        let hi = cpu.max(mem);
        let lo = cpu.min(mem);
        match self.sort_key {
            SortKey::Sum => cpu + mem,
            SortKey::Diff => hi - lo,
            // A zero demand makes the ratio unbounded; infinity sorts after
            // every finite key ascending and before them descending.
            SortKey::Ratio => {
                if lo > 0.0 {
                    hi / lo
                } else {
                    f64::INFINITY
                }
            }
            SortKey::Max => hi,
        }
    }
}

/// Binary search control for [`mcb_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarySearchConfig {
    /// Stop when the bracket is narrower than this absolute yield gap.
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for BinarySearchConfig {
    fn default() -> Self {
        BinarySearchConfig {
            tolerance: 1e-4,
            max_iterations: 64,
        }
    }
}

/// Try to pack every task onto the hosts at yield `y`, where a task demands
/// `y * cpu_need` CPU and its full memory need. Returns the allocation with
/// every placed share exactly `y * cpu_need`, or `None` if tasks remain
/// after the last host closes.
pub fn mcb_pack_at_yield(
    inst: &ProblemInstance,
    y: f64,
    variant: McbVariant,
) -> Option<Allocation> {
    let items = expand_tasks(inst);
    let demands: Vec<(f64, f64)> = items
        .iter()
        .map(|t| (y * t.cpu_need, t.mem_need))
        .collect();

    // CPU-heavy list and memory-heavy list, each sorted by the variant key.
    let mut cpu_list: Vec<usize> = Vec::new();
    let mut mem_list: Vec<usize> = Vec::new();
    for (idx, &(cpu, mem)) in demands.iter().enumerate() {
        if cpu >= mem {
            cpu_list.push(idx);
        } else {
            mem_list.push(idx);
        }
    }
    let sort = |list: &mut Vec<usize>| {
        list.sort_by(|&a, &b| {
            let ka = variant.key(demands[a].0, demands[a].1);
            let kb = variant.key(demands[b].0, demands[b].1);
            match variant.order {
                SortOrder::Ascending => ka.total_cmp(&kb).then(a.cmp(&b)),
                SortOrder::Descending => kb.total_cmp(&ka).then(a.cmp(&b)),
            }
        });
    };
    sort(&mut cpu_list);
    sort(&mut mem_list);

    let mut placed = vec![usize::MAX; items.len()];
    let mut remaining = items.len();
    let first_fit = |list: &[usize], placed: &[usize], rcpu: f64, rmem: f64| {
        list.iter().copied().find(|&t| {
            placed[t] == usize::MAX
                && demands[t].0 <= rcpu + FEASIBILITY_TOL
                && demands[t].1 <= rmem + FEASIBILITY_TOL
        })
    };

    for host in 0..inst.host_count {
        if remaining == 0 {
            break;
        }
        let mut rcpu = 1.0f64;
        let mut rmem = 1.0f64;
        loop {
            // Scan against the imbalance: with more CPU than memory left,
            // prefer a CPU-heavy task. A fresh host is balanced and ties go
            // to the CPU-heavy list, which also fixes the first pick.
            let (first, second) = if rmem > rcpu {
                (&mem_list, &cpu_list)
            } else {
                (&cpu_list, &mem_list)
            };
            let pick = first_fit(first, &placed, rcpu, rmem)
                .or_else(|| first_fit(second, &placed, rcpu, rmem));
            match pick {
                Some(t) => {
                    placed[t] = host;
                    rcpu -= demands[t].0;
                    rmem -= demands[t].1;
                    remaining -= 1;
                }
                None => break,
            }
        }
    }

    if remaining > 0 {
        return None;
    }
    let mut alloc = Allocation::new();
    for (idx, item) in items.iter().enumerate() {
        alloc.place(item.job, item.task, placed[idx], y * item.cpu_need);
    }
    Some(alloc)
}

/// Maximize the minimum yield with `variant` by binary search over [0, U],
/// where U is the relaxed upper bound `min(1, H / total cpu need)`.
///
/// U itself is probed once up front, which settles the common case where
/// everything fits at full service. The search then starts at U/2 and keeps
/// the best packing found; it never assumes that success at one yield
/// implies success at a smaller one.
pub fn mcb_solve(
    inst: &ProblemInstance,
    variant: McbVariant,
    cfg: &BinarySearchConfig,
) -> SolveOutcome {
    let total_cpu = inst.total_cpu_need();
    let upper = if total_cpu > 0.0 {
        (inst.host_count as f64 / total_cpu).min(1.0)
    } else {
        1.0
    };

    if let Some(allocation) = mcb_pack_at_yield(inst, upper, variant) {
        return SolveOutcome::Success(Solution {
            allocation,
            min_yield: upper,
        });
    }

    let mut lo = 0.0f64;
    let mut hi = upper;
    let mut best: Option<(f64, Allocation)> = None;
    for _ in 0..cfg.max_iterations {
        if hi - lo < cfg.tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match mcb_pack_at_yield(inst, mid, variant) {
            Some(alloc) => {
                best = Some((mid, alloc));
                lo = mid;
            }
            None => hi = mid,
        }
    }

    match best {
        Some((y, allocation)) => SolveOutcome::Success(Solution {
            allocation,
            min_yield: y,
        }),
        None => SolveOutcome::Failure(SolveFailure::NoFeasiblePacking),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasible, evaluate, JobSpec};

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
    fn variant_numbering_round_trips() {
        for n in 1..=8u8 {
            let v = McbVariant::numbered(n).unwrap();
            assert_eq!(v.number(), n);
        }
        assert_eq!(McbVariant::numbered(0), None);
        assert_eq!(McbVariant::numbered(9), None);
        assert_eq!(
            McbVariant::numbered(8).unwrap(),
            McbVariant {
                sort_key: SortKey::Max,
                order: SortOrder::Descending
            }
        );
    }

    #[test]
    fn pack_fails_at_full_yield_when_cpu_collides() {
        let a = inst(2, &[(0.6, 0.1), (0.6, 0.1), (0.6, 0.1)]);
        assert!(mcb_pack_at_yield(&a, 1.0, McbVariant::numbered(8).unwrap()).is_none());
    }

    #[test]
    fn pack_succeeds_at_five_sixths() {
        let a = inst(2, &[(0.6, 0.1), (0.6, 0.1), (0.6, 0.1)]);
        let alloc = mcb_pack_at_yield(&a, 5.0 / 6.0, McbVariant::numbered(8).unwrap()).unwrap();
        assert!(check_feasible(&a, &alloc, FEASIBILITY_TOL)
            .unwrap()
            .is_empty());
        for e in alloc.iter() {
            assert!((e.share - 0.6 * 5.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_yield_reduces_to_memory_packing() {
        let a = inst(2, &[(0.9, 0.5), (0.9, 0.5), (0.9, 0.5), (0.9, 0.5)]);
        let alloc = mcb_pack_at_yield(&a, 0.0, McbVariant::numbered(1).unwrap()).unwrap();
        assert!(check_feasible(&a, &alloc, FEASIBILITY_TOL)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn solve_reaches_textbook_optimum() {
        let a = inst(2, &[(0.6, 0.0), (0.6, 0.0), (0.6, 0.0)]);
        let cfg = BinarySearchConfig::default();
        let sol = mcb_solve(&a, McbVariant::numbered(8).unwrap(), &cfg);
        let sol = sol.success().expect("packs");
        assert!((sol.min_yield - 5.0 / 6.0).abs() < cfg.tolerance);
        let report = evaluate(&a, &sol.allocation);
        assert!((report.min_yield - sol.min_yield).abs() < 1e-12);
    }

    #[test]
    fn saturation_probe_returns_upper_bound() {
        let a = inst(4, &[(0.3, 0.2), (0.4, 0.2), (0.3, 0.2)]);
        let sol = mcb_solve(&a, McbVariant::numbered(8).unwrap(), &Default::default());
        assert_eq!(sol.success().unwrap().min_yield, 1.0);
    }

    #[test]
    fn failure_when_memory_never_fits() {
        let a = inst(1, &[(0.1, 0.7), (0.1, 0.7)]);
        let sol = mcb_solve(&a, McbVariant::numbered(8).unwrap(), &Default::default());
        assert_eq!(sol, SolveOutcome::Failure(SolveFailure::NoFeasiblePacking));
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let a = inst(
            3,
            &[
                (0.7, 0.3),
                (0.4, 0.5),
                (0.6, 0.2),
                (0.5, 0.4),
                (0.3, 0.3),
            ],
        );
        for v in McbVariant::all() {
            let first = mcb_solve(&a, v, &Default::default());
            let second = mcb_solve(&a, v, &Default::default());
            assert_eq!(first, second);
        }
    }

    #[test]
    fn every_variant_returns_feasible_allocations() {
        let a = inst(
            2,
            &[(0.5, 0.45), (0.25, 0.3), (0.75, 0.55), (0.4, 0.2)],
        );
        for v in McbVariant::all() {
            if let SolveOutcome::Success(sol) = mcb_solve(&a, v, &Default::default()) {
                assert!(check_feasible(&a, &sol.allocation, FEASIBILITY_TOL)
                    .unwrap()
                    .is_empty());
                let report = evaluate(&a, &sol.allocation);
                assert!((report.min_yield - sol.min_yield).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ratio_key_sends_zero_demand_tasks_last_ascending() {
        // Zero memory demand means an unbounded ratio: ascending order must
        // place such tasks after every finite-ratio task.
        let v = McbVariant::numbered(3).unwrap();
        assert_eq!(v.key(0.5, 0.0), f64::INFINITY);
        assert!(v.key(0.5, 0.25) < v.key(0.5, 0.0));
    }

    #[test]
    fn multi_task_jobs_get_uniform_shares() {
        let a = ProblemInstance::new(
            3,
            vec![
                JobSpec::new(0.5, 0.2, 3).unwrap(),
                JobSpec::new(0.3, 0.1, 2).unwrap(),
            ],
        )
        .unwrap();
        let sol = mcb_solve(&a, McbVariant::numbered(8).unwrap(), &Default::default());
        let sol = sol.success().unwrap();
        assert!(check_feasible(&a, &sol.allocation, FEASIBILITY_TOL)
            .unwrap()
            .is_empty());
        let s0 = sol.allocation.share_of(0, 0).unwrap();
        for task in 1..3 {
            assert_eq!(sol.allocation.share_of(0, task).unwrap(), s0);
        }
    }
}
