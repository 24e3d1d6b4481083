//! Algorithm registry and the common solve pipeline.
//!
//! Every solver first maximizes the minimum yield; the second phase then
//! raises the average yield with placements frozen. Only the first phase is
//! timed, since all algorithms share the second.

use std::time::{Duration, Instant};

use crate::bounds::{exact_solve, relaxed_solution, ExactError, ExactLimits, RelaxedError, SeedMode};
use crate::greedy::{greedy_solve, GreedyConfig};
use crate::mcb::{mcb_solve, BinarySearchConfig, McbVariant};
use crate::model::{
    evaluate, Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution, YieldReport,
};
use crate::phase2::{maximize_avg_yield_per_job, maximize_avg_yield_per_task, Phase2Error};
use crate::rounding::{rrnd_solve, rrnz_solve, RoundingConfig};

/// Every placement algorithm the engine knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Exact,
    Gr,
    Sg,
    Gb,
    Sgb,
    Rrnd,
    Rrnz,
    Mcb(u8),
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Algorithm> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Some(Algorithm::Exact),
            "gr" => Some(Algorithm::Gr),
            "sg" => Some(Algorithm::Sg),
            "gb" => Some(Algorithm::Gb),
            "sgb" => Some(Algorithm::Sgb),
            "rrnd" => Some(Algorithm::Rrnd),
            "rrnz" => Some(Algorithm::Rrnz),
            other => {
                let n = other.strip_prefix("mcb")?.parse::<u8>().ok()?;
                McbVariant::numbered(n).map(|_| Algorithm::Mcb(n))
            }
        }
    }

    pub fn id(&self) -> String {
        match self {
            Algorithm::Exact => "exact".into(),
            Algorithm::Gr => "gr".into(),
            Algorithm::Sg => "sg".into(),
            Algorithm::Gb => "gb".into(),
            Algorithm::Sgb => "sgb".into(),
            Algorithm::Rrnd => "rrnd".into(),
            Algorithm::Rrnz => "rrnz".into(),
            Algorithm::Mcb(n) => format!("mcb{n}"),
        }
    }

    /// All heuristics, in reporting order; excludes the exact solver.
    pub fn heuristics() -> Vec<Algorithm> {
        let mut algs = vec![
            Algorithm::Gr,
            Algorithm::Sg,
            Algorithm::Gb,
            Algorithm::Sgb,
            Algorithm::Rrnd,
            Algorithm::Rrnz,
        ];
        algs.extend((1..=8).map(Algorithm::Mcb));
        algs
    }

    pub fn mcb_variants() -> Vec<Algorithm> {
        (1..=8).map(Algorithm::Mcb).collect()
    }
}

/// Which second-phase optimization to run after a success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase2Mode {
    /// Per-job for instances with multi-task jobs, per-task otherwise.
    #[default]
    Auto,
    PerTask,
    PerJob,
    Off,
}

impl Phase2Mode {
    pub fn parse(s: &str) -> Option<Phase2Mode> {
        match s {
            "auto" => Some(Phase2Mode::Auto),
            "per-task" => Some(Phase2Mode::PerTask),
            "per-job" => Some(Phase2Mode::PerJob),
            "off" => Some(Phase2Mode::Off),
            _ => None,
        }
    }
}

/// Knobs shared by the solve pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rng_seed: u64,
    pub epsilon: f64,
    pub seed_mode: SeedMode,
    pub exact_limits: ExactLimits,
    pub greedy_attempts: usize,
    pub mcb_search: BinarySearchConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rng_seed: 0,
            epsilon: 0.01,
            seed_mode: SeedMode::default(),
            exact_limits: ExactLimits::default(),
            greedy_attempts: GreedyConfig::default().max_placement_attempts,
            mcb_search: BinarySearchConfig::default(),
        }
    }
}

/// A min-yield phase result together with how long that phase took.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedOutcome {
    pub outcome: SolveOutcome,
    pub solver_time: Duration,
}

fn greedy_config(alg: Algorithm, attempts: usize) -> GreedyConfig {
    let mut cfg = match alg {
        Algorithm::Gr => GreedyConfig::gr(),
        Algorithm::Sg => GreedyConfig::sg(),
        Algorithm::Gb => GreedyConfig::gb(),
        Algorithm::Sgb => GreedyConfig::sgb(),
        _ => unreachable!("not a greedy algorithm"),
    };
    cfg.max_placement_attempts = attempts;
    cfg
}

/// Run the min-yield phase of one algorithm, timed. The rounding heuristics
/// build their fractional seed inside the timed region, mirroring how their
/// cost is dominated by seed construction.
pub fn run_algorithm(
    inst: &ProblemInstance,
    alg: Algorithm,
    opts: &SolveOptions,
) -> Result<TimedOutcome, ExactError> {
    let start = Instant::now();
    let outcome = match alg {
        Algorithm::Exact => exact_solve(inst, opts.exact_limits)?,
        Algorithm::Gr | Algorithm::Sg | Algorithm::Gb | Algorithm::Sgb => {
            greedy_solve(inst, &greedy_config(alg, opts.greedy_attempts))
        }
        Algorithm::Rrnd | Algorithm::Rrnz => {
            let cfg = RoundingConfig {
                epsilon: opts.epsilon,
                rng_seed: opts.rng_seed,
                seed_mode: opts.seed_mode,
            };
            match build_seed(inst, opts.seed_mode) {
                Ok(seed) => {
                    if alg == Algorithm::Rrnd {
                        rrnd_solve(inst, &seed, &cfg)
                    } else {
                        rrnz_solve(inst, &seed, &cfg)
                    }
                }
                Err(_) => SolveOutcome::Failure(SolveFailure::Infeasible),
            }
        }
        Algorithm::Mcb(n) => mcb_solve(
            inst,
            McbVariant::numbered(n).expect("validated variant"),
            &opts.mcb_search,
        ),
    };
    Ok(TimedOutcome {
        outcome,
        solver_time: start.elapsed(),
    })
}

/// Build the rounding seed, falling back to the uniform spread when the
/// sparse first-fit cannot cover some job.
fn build_seed(
    inst: &ProblemInstance,
    mode: SeedMode,
) -> Result<crate::bounds::RelaxedSolution, RelaxedError> {
    match relaxed_solution(inst, mode) {
        Err(RelaxedError::SeedIncomplete { .. }) if mode == SeedMode::Sparse => {
            relaxed_solution(inst, SeedMode::Uniform)
        }
        other => other,
    }
}

/// Apply the configured second phase to a successful solution and evaluate
/// the result. `Off` keeps the floor shares.
pub fn apply_phase2(
    inst: &ProblemInstance,
    solution: &Solution,
    mode: Phase2Mode,
) -> Result<(Allocation, YieldReport), Phase2Error> {
    let mode = match mode {
        Phase2Mode::Auto => {
            if inst.jobs.iter().any(|j| j.task_count > 1) {
                Phase2Mode::PerJob
            } else {
                Phase2Mode::PerTask
            }
        }
        fixed => fixed,
    };
    let allocation = match mode {
        Phase2Mode::PerTask => {
            maximize_avg_yield_per_task(inst, &solution.allocation, solution.min_yield)?
        }
        Phase2Mode::PerJob => {
            maximize_avg_yield_per_job(inst, &solution.allocation, solution.min_yield)?
        }
        Phase2Mode::Off => solution.allocation.clone(),
        Phase2Mode::Auto => unreachable!("resolved above"),
    };
    let report = evaluate(inst, &allocation);
    Ok((allocation, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasible, JobSpec, FEASIBILITY_TOL};

    fn textbook() -> ProblemInstance {
        ProblemInstance::new(
            2,
            vec![
                JobSpec::sequential(0.6, 0.0).unwrap(),
                JobSpec::sequential(0.6, 0.0).unwrap(),
                JobSpec::sequential(0.6, 0.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parse_round_trips_ids() {
        let mut algs = Algorithm::heuristics();
        algs.push(Algorithm::Exact);
        for alg in algs {
            assert_eq!(Algorithm::parse(&alg.id()), Some(alg));
        }
        assert_eq!(Algorithm::parse("mcb9"), None);
        assert_eq!(Algorithm::parse("nope"), None);
    }

    #[test]
    fn every_algorithm_solves_the_textbook_instance() {
        let inst = textbook();
        for alg in Algorithm::heuristics() {
            let run = run_algorithm(&inst, alg, &SolveOptions::default()).unwrap();
            let sol = run
                .outcome
                .success()
                .unwrap_or_else(|| panic!("{} failed", alg.id()));
            assert!(sol.min_yield <= 5.0 / 6.0 + 1e-9, "{}", alg.id());
            let (alloc, report) = apply_phase2(&inst, sol, Phase2Mode::Auto).unwrap();
            assert!(check_feasible(&inst, &alloc, FEASIBILITY_TOL)
                .unwrap()
                .is_empty());
            assert!(report.min_yield >= sol.min_yield - FEASIBILITY_TOL);
            assert!(report.avg_task_yield >= report.min_yield - 1e-12);
        }
    }

    #[test]
    fn phase2_off_keeps_floor_shares() {
        let inst = textbook();
        let run = run_algorithm(&inst, Algorithm::Mcb(8), &SolveOptions::default()).unwrap();
        let sol = run.outcome.success().unwrap().clone();
        let (alloc, _) = apply_phase2(&inst, &sol, Phase2Mode::Off).unwrap();
        assert_eq!(alloc, sol.allocation);
    }
}
