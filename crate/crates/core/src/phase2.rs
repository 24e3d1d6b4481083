//! Second-phase optimization: with placements frozen and the achieved
//! minimum yield as a floor, hand out leftover CPU to raise the average
//! yield.
//!
//! The per-task variant decomposes per host: starting from the floor shares,
//! the task with the smallest CPU need is raised first (it buys the most
//! yield per unit of CPU), then the next smallest, until the host is full.
//! The per-job variant keeps the tasks of a job uniform, repeatedly raising
//! the cheapest job (smallest total demand) that still fits on every host it
//! touches.

use thiserror::Error;

use crate::model::{
    check_feasible, evaluate, Allocation, ProblemInstance, StructuralError, FEASIBILITY_TOL,
};

#[derive(Debug, Error)]
pub enum Phase2Error {
    #[error("allocation is structurally invalid: {0}")]
    Structural(#[from] StructuralError),
    #[error("allocation violates {count} feasibility constraints")]
    InfeasibleInput { count: usize },
    #[error("task ({job}, {task}) has yield {achieved} below the floor {floor}")]
    BelowFloor {
        job: usize,
        task: usize,
        achieved: f64,
        floor: f64,
    },
}

fn validate_input(
    inst: &ProblemInstance,
    alloc: &Allocation,
    floor_y: f64,
) -> Result<(), Phase2Error> {
    let violations = check_feasible(inst, alloc, FEASIBILITY_TOL)?;
    if !violations.is_empty() {
        return Err(Phase2Error::InfeasibleInput {
            count: violations.len(),
        });
    }
    let report = evaluate(inst, alloc);
    let mut idx = 0;
    for (job, spec) in inst.jobs.iter().enumerate() {
        for task in 0..spec.task_count {
            let y = report.per_task_yield[idx];
            if y < floor_y - FEASIBILITY_TOL {
                return Err(Phase2Error::BelowFloor {
                    job,
                    task,
                    achieved: y,
                    floor: floor_y,
                });
            }
            idx += 1;
        }
    }
    Ok(())
}

/// Reset every task to its floor share `cpu_need * floor_y`, keeping hosts.
fn floor_shares(inst: &ProblemInstance, alloc: &Allocation, floor_y: f64) -> Allocation {
    let mut result = alloc.clone();
    for (job, spec) in inst.jobs.iter().enumerate() {
        for task in 0..spec.task_count {
            result.set_share(job, task, spec.cpu_need * floor_y);
        }
    }
    result
}

/// Maximize the average per-task yield with placements frozen.
///
/// Shares start at the floor `cpu_need * floor_y`; on each host, tasks in
/// ascending order of CPU need are raised to `min(need, share + headroom)`.
/// The result is feasible, no task drops below the floor, and placements are
/// untouched.
pub fn maximize_avg_yield_per_task(
    inst: &ProblemInstance,
    alloc: &Allocation,
    floor_y: f64,
) -> Result<Allocation, Phase2Error> {
    validate_input(inst, alloc, floor_y)?;
    let mut result = floor_shares(inst, alloc, floor_y);

    // (cpu_need, job, task) per host; ties resolved by original indices.
    let mut per_host: Vec<Vec<(f64, usize, usize)>> = vec![Vec::new(); inst.host_count];
    for e in result.iter() {
        per_host[e.host].push((inst.jobs[e.job].cpu_need, e.job, e.task));
    }
    for tasks in per_host.iter_mut() {
        tasks.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut used: f64 = tasks
            .iter()
            .map(|&(_, job, task)| result.share_of(job, task).unwrap())
            .sum();
        for &(need, job, task) in tasks.iter() {
            let share = result.share_of(job, task).unwrap();
            let raise = (need - share).min(1.0 - used).max(0.0);
            if raise > 0.0 {
                result.set_share(job, task, share + raise);
                used += raise;
            }
        }
    }
    Ok(result)
}

/// The largest uniform per-task raise job `job` admits under `alloc`.
pub fn max_uniform_raise(inst: &ProblemInstance, alloc: &Allocation, job: usize) -> f64 {
    let spec = &inst.jobs[job];
    let current = match alloc.share_of(job, 0) {
        Some(s) => s,
        None => return 0.0,
    };
    let mut host_used = vec![0.0f64; inst.host_count];
    let mut tasks_on_host = vec![0usize; inst.host_count];
    for e in alloc.iter() {
        host_used[e.host] += e.share;
        if e.job == job {
            tasks_on_host[e.host] += 1;
        }
    }
    let mut raise: f64 = spec.cpu_need - current;
    for host in 0..inst.host_count {
        if tasks_on_host[host] > 0 {
            raise = raise.min((1.0 - host_used[host]) / tasks_on_host[host] as f64);
        }
    }
    raise.max(0.0)
}

/// Maximize the average per-job yield with placements frozen and task shares
/// kept uniform within each job.
///
/// Water-filling: repeatedly raise the unsaturated job with the smallest
/// total demand until it saturates or one of its hosts fills. A job stopped
/// by a full host can never rise again, so each job is handled once, in
/// ascending order of total demand.
pub fn maximize_avg_yield_per_job(
    inst: &ProblemInstance,
    alloc: &Allocation,
    floor_y: f64,
) -> Result<Allocation, Phase2Error> {
    validate_input(inst, alloc, floor_y)?;
    let mut result = floor_shares(inst, alloc, floor_y);

    let mut order: Vec<usize> = (0..inst.job_count()).collect();
    order.sort_by(|&a, &b| {
        let da = inst.jobs[a].task_count as f64 * inst.jobs[a].cpu_need;
        let db = inst.jobs[b].task_count as f64 * inst.jobs[b].cpu_need;
        da.total_cmp(&db).then(a.cmp(&b))
    });

    for job in order {
        let raise = max_uniform_raise(inst, &result, job);
        if raise <= 0.0 {
            continue;
        }
        let spec = &inst.jobs[job];
        for task in 0..spec.task_count {
            let share = result.share_of(job, task).unwrap();
            result.set_share(job, task, share + raise);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobSpec;
    use proptest::prelude::*;

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
    fn small_need_saturates_first() {
        let inst = inst(1, &[(0.2, 0.1), (0.8, 0.1)]);
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.1);
        alloc.place(1, 0, 0, 0.4);
        let out = maximize_avg_yield_per_task(&inst, &alloc, 0.5).unwrap();
        assert!((out.share_of(0, 0).unwrap() - 0.2).abs() < 1e-12);
        assert!((out.share_of(1, 0).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(evaluate(&inst, &out).avg_task_yield, 1.0);
    }

    #[test]
    fn saturated_allocation_unchanged() {
        let inst = inst(2, &[(0.4, 0.1), (0.6, 0.1)]);
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.4);
        alloc.place(1, 0, 1, 0.6);
        let out = maximize_avg_yield_per_task(&inst, &alloc, 1.0).unwrap();
        assert_eq!(out, alloc);
    }

    #[test]
    fn lone_job_saturates() {
        let inst = inst(1, &[(0.6, 0.1)]);
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.3);
        let out = maximize_avg_yield_per_task(&inst, &alloc, 0.5).unwrap();
        assert!((out.share_of(0, 0).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn infeasible_input_rejected() {
        let inst = inst(1, &[(0.8, 0.6), (0.8, 0.6)]);
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.4);
        alloc.place(1, 0, 0, 0.4);
        assert!(matches!(
            maximize_avg_yield_per_task(&inst, &alloc, 0.5),
            Err(Phase2Error::InfeasibleInput { .. })
        ));
    }

    #[test]
    fn per_job_respects_bottleneck_host() {
        // Job 0 spans both hosts; host 0 is filled by job 1, so job 0 cannot
        // be raised even though host 1 has room.
        let inst = ProblemInstance::new(
            2,
            vec![
                JobSpec::new(0.5, 0.0, 2).unwrap(),
                JobSpec::new(0.75, 0.0, 1).unwrap(),
            ],
        )
        .unwrap();
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.25);
        alloc.place(0, 1, 1, 0.25);
        alloc.place(1, 0, 0, 0.375);
        let out = maximize_avg_yield_per_job(&inst, &alloc, 0.5).unwrap();
        // Job 1 (smaller total demand 0.75) is raised first and fills host 0.
        assert!((out.share_of(1, 0).unwrap() - 0.75).abs() < 1e-12);
        assert!((out.share_of(0, 0).unwrap() - 0.25).abs() < 1e-12);
        assert!((out.share_of(0, 1).unwrap() - 0.25).abs() < 1e-12);
        assert!(max_uniform_raise(&inst, &out, 0) <= 1e-12);
    }

    #[test]
    fn per_job_hand_simulated_case() {
        // Job A: 2 tasks of 0.4, one per host. Job B: 1 task of 0.4 on host
        // 0. B has the smaller total demand, saturates, then A saturates.
        let inst = ProblemInstance::new(
            2,
            vec![
                JobSpec::new(0.4, 0.0, 2).unwrap(),
                JobSpec::new(0.4, 0.0, 1).unwrap(),
            ],
        )
        .unwrap();
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.2);
        alloc.place(0, 1, 1, 0.2);
        alloc.place(1, 0, 0, 0.2);
        let out = maximize_avg_yield_per_job(&inst, &alloc, 0.5).unwrap();
        assert!((out.share_of(0, 0).unwrap() - 0.4).abs() < 1e-12);
        assert!((out.share_of(0, 1).unwrap() - 0.4).abs() < 1e-12);
        assert!((out.share_of(1, 0).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn per_job_matches_per_task_on_single_task_jobs() {
        let inst = inst(2, &[(0.3, 0.1), (0.5, 0.2), (0.7, 0.1)]);
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.15);
        alloc.place(1, 0, 0, 0.25);
        alloc.place(2, 0, 1, 0.35);
        let per_task = maximize_avg_yield_per_task(&inst, &alloc, 0.5).unwrap();
        let per_job = maximize_avg_yield_per_job(&inst, &alloc, 0.5).unwrap();
        assert_eq!(per_task, per_job);
    }

    proptest! {
        #[test]
        fn raises_average_and_keeps_floor(
            needs in proptest::collection::vec(0.05f64..0.9, 2..8),
            floor in 0.1f64..0.9,
        ) {
            let hosts = 2;
            let jobs: Vec<JobSpec> = needs
                .iter()
                .map(|&c| JobSpec::sequential(c, 0.1).unwrap())
                .collect();
            // Round-robin placement at a floor low enough to be feasible.
            let inst = ProblemInstance::new(hosts, jobs).unwrap();
            let mut host_cpu = vec![0.0f64; hosts];
            let mut alloc = Allocation::new();
            for (i, &c) in needs.iter().enumerate() {
                alloc.place(i, 0, i % hosts, c);
                host_cpu[i % hosts] += c;
            }
            let max_load = host_cpu.iter().cloned().fold(0.0, f64::max);
            let feasible_floor = (floor).min(0.99 / max_load.max(1.0));
            for (i, &c) in needs.iter().enumerate() {
                alloc.place(i, 0, i % hosts, c * feasible_floor);
            }
            let before = evaluate(&inst, &alloc);
            for variant in 0..2 {
                let out = if variant == 0 {
                    maximize_avg_yield_per_task(&inst, &alloc, feasible_floor).unwrap()
                } else {
                    maximize_avg_yield_per_job(&inst, &alloc, feasible_floor).unwrap()
                };
                let after = evaluate(&inst, &out);
                prop_assert!(after.avg_task_yield >= before.avg_task_yield - 1e-12);
                prop_assert!(after.min_yield >= feasible_floor - FEASIBILITY_TOL);
                prop_assert!(check_feasible(&inst, &out, FEASIBILITY_TOL).unwrap().is_empty());
                // Placements must be untouched.
                for e in alloc.iter() {
                    prop_assert_eq!(out.host_of(e.job, e.task), Some(e.host));
                }
            }
        }

        #[test]
        fn per_job_is_pareto_terminal(
            needs in proptest::collection::vec(0.05f64..0.6, 2..6),
        ) {
            let hosts = 2;
            let jobs: Vec<JobSpec> = needs
                .iter()
                .map(|&c| JobSpec::new(c, 0.05, 2).unwrap())
                .collect();
            let inst = ProblemInstance::new(hosts, jobs).unwrap();
            let mut alloc = Allocation::new();
            for (i, &c) in needs.iter().enumerate() {
                alloc.place(i, 0, 0, c * 0.25);
                alloc.place(i, 1, 1, c * 0.25);
            }
            if check_feasible(&inst, &alloc, FEASIBILITY_TOL).unwrap().is_empty() {
                let out = maximize_avg_yield_per_job(&inst, &alloc, 0.25).unwrap();
                for job in 0..inst.job_count() {
                    prop_assert!(max_uniform_raise(&inst, &out, job) <= 1e-9);
                }
            }
        }
    }
}
