//! Randomized rounding heuristics seeded by a fractional relaxed solution.
//!
//! Each task picks a host at random with probability proportional to its
//! job's fractional weights; a draw landing on a host without enough free
//! memory zeroes that host's weight and redraws from the rest. The plain
//! variant fails as soon as some task has only zero-weight hosts left; the
//! no-zero variant first replaces every zero weight in the seed by a small
//! epsilon, so every host stays reachable.
//!
//! Each call is a single rounding pass; retries, if wanted, are the
//! caller's. All randomness comes from a seeded ChaCha8 stream (see
//! [`RNG_ALGORITHM`]), and the host-picking step is factored out so a test
//! can replay one run's draws through the other variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{RelaxedSolution, SeedMode};
use crate::model::{
    placement_min_yield, Allocation, ProblemInstance, SolveFailure, SolveOutcome, Solution,
    FEASIBILITY_TOL,
};
use crate::parallel::expand_tasks;

/// Identifier of the random number generator, recorded in result metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingConfig {
    /// Replacement for zero seed weights in the no-zero variant.
    pub epsilon: f64,
    pub rng_seed: u64,
    /// Which fractional seed the driver should build (recorded here so the
    /// choice travels with results).
    pub seed_mode: SeedMode,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        RoundingConfig {
            epsilon: 0.01,
            rng_seed: 0,
            seed_mode: SeedMode::default(),
        }
    }
}

/// Supplies the host choice for one task given the current weights.
///
/// `admits` reports whether a host has enough free memory; a picker must
/// only return an admissible host with positive weight, or `None` to fail
/// the task.
pub trait HostPicker {
    fn pick(&mut self, weights: &[f64], admits: &mut dyn FnMut(usize) -> bool) -> Option<usize>;
}

/// Production picker: inverse-CDF draws from an RNG, zeroing and
/// renormalizing on every memory rejection.
pub struct RngPicker<'r>(pub &'r mut ChaCha8Rng);

impl HostPicker for RngPicker<'_> {
    fn pick(&mut self, weights: &[f64], admits: &mut dyn FnMut(usize) -> bool) -> Option<usize> {
        let mut w = weights.to_vec();
        loop {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return None;
            }
            let mut t = self.0.gen::<f64>() * total;
            let mut chosen = None;
            for (host, &wi) in w.iter().enumerate() {
                if wi <= 0.0 {
                    continue;
                }
                chosen = Some(host);
                if t < wi {
                    break;
                }
                t -= wi;
            }
            // Rounding dust can push t past the last weight; `chosen` then
            // holds the last positive-weight host, which is what an exact
            // draw would have produced.
            let host = chosen.expect("positive total implies a positive weight");
            if admits(host) {
                return Some(host);
            }
            w[host] = 0.0;
        }
    }
}

/// Replays a recorded sequence of host choices, one per task in order.
pub struct ReplayPicker {
    choices: std::collections::VecDeque<usize>,
}

impl ReplayPicker {
    pub fn new(choices: impl IntoIterator<Item = usize>) -> Self {
        ReplayPicker {
            choices: choices.into_iter().collect(),
        }
    }
}

impl HostPicker for ReplayPicker {
    fn pick(&mut self, weights: &[f64], admits: &mut dyn FnMut(usize) -> bool) -> Option<usize> {
        let host = self.choices.pop_front()?;
        if weights[host] > 0.0 && admits(host) {
            Some(host)
        } else {
            None
        }
    }
}

/// One rounding pass over all tasks. `epsilon` of `Some(e)` replaces zero
/// seed weights by `e` (the no-zero variant); `None` keeps them zero.
pub fn round_with_picker(
    inst: &ProblemInstance,
    seed_sol: &RelaxedSolution,
    epsilon: Option<f64>,
    picker: &mut dyn HostPicker,
) -> SolveOutcome {
    let items = expand_tasks(inst);
    let mut host_mem = vec![0.0f64; inst.host_count];
    let mut hosts = Vec::with_capacity(items.len());
    for item in &items {
        let mut weights = seed_sol.host_weights(item.job, inst.host_count);
        if let Some(eps) = epsilon {
            for w in weights.iter_mut() {
                if *w == 0.0 {
                    *w = eps;
                }
            }
        }
        let mem_need = item.mem_need;
        let mut admits = |h: usize| host_mem[h] + mem_need <= 1.0 + FEASIBILITY_TOL;
        match picker.pick(&weights, &mut admits) {
            Some(host) => {
                host_mem[host] += mem_need;
                hosts.push(host);
            }
            None => return SolveOutcome::Failure(SolveFailure::NoAdmissibleHost),
        }
    }
    let y = placement_min_yield(inst, &hosts);
    SolveOutcome::Success(Solution {
        allocation: Allocation::from_task_hosts(inst, &hosts, y),
        min_yield: y,
    })
}

/// Randomized rounding of the fractional seed.
pub fn rrnd_solve(
    inst: &ProblemInstance,
    seed_sol: &RelaxedSolution,
    cfg: &RoundingConfig,
) -> SolveOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    round_with_picker(inst, seed_sol, None, &mut RngPicker(&mut rng))
}

/// Randomized rounding with zero weights lifted to epsilon.
pub fn rrnz_solve(
    inst: &ProblemInstance,
    seed_sol: &RelaxedSolution,
    cfg: &RoundingConfig,
) -> SolveOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    round_with_picker(inst, seed_sol, Some(cfg.epsilon), &mut RngPicker(&mut rng))
}

/// The hosts a successful rounding run chose, in task order; this is the
/// trace [`ReplayPicker`] consumes.
pub fn placement_trace(inst: &ProblemInstance, alloc: &Allocation) -> Vec<usize> {
    expand_tasks(inst)
        .iter()
        .map(|item| alloc.host_of(item.job, item.task).expect("task placed"))
        .collect()
}
