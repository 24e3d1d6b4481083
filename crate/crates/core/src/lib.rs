//! A virtual-cluster scheduling engine.
//!
//! Jobs with known CPU and memory needs are placed on identical hosts so that
//! the minimum *yield* (the fraction of its needed compute rate a job
//! actually receives) is as large as possible; remaining CPU is then handed
//! out to raise the average yield without lowering the floor. The crate
//! provides the domain model, exact and relaxed reference solvers, a family
//! of placement heuristics, a synthetic workload generator, and a benchmark
//! harness that compares them all.

pub mod adaptation;
pub mod bench;
pub mod bounds;
pub mod greedy;
pub mod mcb;
pub mod model;
pub mod parallel;
pub mod phase2;
pub mod rounding;
pub mod solve;
pub mod workload;

pub use model::{
    check_feasible, evaluate, Allocation, JobSpec, ProblemInstance, SolveFailure, SolveOutcome,
    Solution, Violation, YieldReport, FEASIBILITY_TOL,
};
pub use solve::{Algorithm, Phase2Mode, SolveOptions};
