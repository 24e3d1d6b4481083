//! Task-level view of an instance and the uniformity rule for parallel jobs.
//!
//! The min-yield solvers place individual tasks; a job with `task_count`
//! tasks simply contributes that many items, each inheriting the job's needs.
//! Tasks of one job must end up with identical CPU shares, which holds by
//! construction when every task is granted `cpu_need * yield`; enforcement
//! here is a normalization applied before the second optimization phase.

use crate::model::{Allocation, ProblemInstance};

/// One schedulable task with the needs it inherits from its job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskItem {
    pub job: usize,
    pub task: usize,
    pub cpu_need: f64,
    pub mem_need: f64,
}

/// Expand an instance into its tasks, in job-major order.
pub fn expand_tasks(inst: &ProblemInstance) -> Vec<TaskItem> {
    let mut items = Vec::with_capacity(inst.task_count());
    for (job, spec) in inst.jobs.iter().enumerate() {
        for task in 0..spec.task_count {
            items.push(TaskItem {
                job,
                task,
                cpu_need: spec.cpu_need,
                mem_need: spec.mem_need,
            });
        }
    }
    items
}

/// Make every multi-task job's shares uniform by lowering them to the job's
/// minimum task share, the only direction that cannot break feasibility.
pub fn enforce_uniformity(inst: &ProblemInstance, alloc: &Allocation) -> Allocation {
    let mut result = alloc.clone();
    for (job, spec) in inst.jobs.iter().enumerate() {
        if spec.task_count < 2 {
            continue;
        }
        let min_share = (0..spec.task_count)
            .filter_map(|task| alloc.share_of(job, task))
            .fold(f64::INFINITY, f64::min);
        if !min_share.is_finite() {
            continue;
        }
        for task in 0..spec.task_count {
            result.set_share(job, task, min_share);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobSpec;

    #[test]
    fn sequential_expansion_is_identity() {
        let inst = ProblemInstance::new(
            2,
            vec![
                JobSpec::sequential(0.3, 0.1).unwrap(),
                JobSpec::sequential(0.7, 0.2).unwrap(),
            ],
        )
        .unwrap();
        let items = expand_tasks(&inst);
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].job, 0);
        assert_eq!(items[1].job, 1);
        assert!(items.iter().all(|t| t.task == 0));
    }

    #[test]
    fn multi_task_job_expands() {
        let inst = ProblemInstance::new(4, vec![JobSpec::new(0.2, 0.1, 4).unwrap()]).unwrap();
        let items = expand_tasks(&inst);
        assert_eq!(items.len(), 4);
        for (k, item) in items.iter().enumerate() {
            assert_eq!((item.job, item.task), (0, k));
            assert_eq!(item.cpu_need, 0.2);
        }
    }

    #[test]
    fn uniformity_takes_the_minimum_share() {
        let inst = ProblemInstance::new(2, vec![JobSpec::new(0.6, 0.0, 2).unwrap()]).unwrap();
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.3);
        alloc.place(0, 1, 1, 0.5);
        let fixed = enforce_uniformity(&inst, &alloc);
        assert_eq!(fixed.share_of(0, 0), Some(0.3));
        assert_eq!(fixed.share_of(0, 1), Some(0.3));
    }

    #[test]
    fn uniform_allocation_unchanged() {
        let inst = ProblemInstance::new(2, vec![JobSpec::new(0.6, 0.0, 2).unwrap()]).unwrap();
        let mut alloc = Allocation::new();
        alloc.place(0, 0, 0, 0.4);
        alloc.place(0, 1, 1, 0.4);
        assert_eq!(enforce_uniformity(&inst, &alloc), alloc);
    }

    #[test]
    fn splitting_a_job_preserves_its_per_job_yield() {
        // A job of T tasks needing cpu each, versus the same work split into
        // 2T tasks needing cpu/2: with equal totals granted, the per-job
        // yield metric is identical, so splitting buys nothing.
        let coarse =
            ProblemInstance::new(2, vec![JobSpec::new(0.4, 0.0, 2).unwrap()]).unwrap();
        let fine = ProblemInstance::new(2, vec![JobSpec::new(0.2, 0.0, 4).unwrap()]).unwrap();
        let mut coarse_alloc = Allocation::new();
        coarse_alloc.place(0, 0, 0, 0.3);
        coarse_alloc.place(0, 1, 1, 0.3);
        let mut fine_alloc = Allocation::new();
        for task in 0..4 {
            fine_alloc.place(0, task, task % 2, 0.15);
        }
        let coarse_report = crate::model::evaluate(&coarse, &coarse_alloc);
        let fine_report = crate::model::evaluate(&fine, &fine_alloc);
        assert!((coarse_report.per_job_yield[0] - fine_report.per_job_yield[0]).abs() < 1e-12);
    }
}
