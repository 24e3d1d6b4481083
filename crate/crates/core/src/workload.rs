//! Synthetic instance generation.
//!
//! Instances are parameterized by host count, job count, memory *slack*
//! (the fraction of total host memory left free on average), and the
//! coefficients of variation of the CPU and memory needs. Needs are sampled
//! from normal distributions truncated to [0, 1] by rejection, so the means
//! are honored without the mass pile-up at the edges that clamping causes.
//! Parallel instances additionally draw per-job task counts from a two-stage
//! log-uniform distribution biased towards powers of two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JobSpec, ProblemInstance};

/// Task counts are drawn from [1, 64].
pub const TASK_COUNT_MAX: u32 = 64;
/// Probability that a drawn task count snaps to the nearest power of two.
pub const TASK_COUNT_POWER_OF_TWO_BIAS: f64 = 0.75;

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub host_count: usize,
    pub job_count: usize,
    pub slack: f64,
    pub cpu_mean: f64,
    pub cpu_cov: f64,
    pub mem_cov: f64,
    pub parallel: bool,
    pub rng_seed: u64,
}

impl ExperimentSpec {
    pub fn new(host_count: usize, job_count: usize, slack: f64) -> Self {
        ExperimentSpec {
            host_count,
            job_count,
            slack,
            cpu_mean: 0.5,
            cpu_cov: 0.25,
            mem_cov: 0.25,
            parallel: false,
            rng_seed: 0,
        }
    }

    pub fn with_covs(mut self, cpu_cov: f64, mem_cov: f64) -> Self {
        self.cpu_cov = cpu_cov;
        self.mem_cov = mem_cov;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("slack {slack} leaves mean memory need {mem_mean} above host capacity")]
    SlackTooLow { slack: f64, mem_mean: f64 },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

fn validate(spec: &ExperimentSpec) -> Result<(), GenerateError> {
    if spec.host_count == 0 || spec.job_count == 0 {
        return Err(GenerateError::InvalidSpec(
            "host and job counts must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.slack) {
        return Err(GenerateError::InvalidSpec(format!(
            "slack {} outside (0, 1)",
            spec.slack
        )));
    }
    if spec.cpu_cov < 0.0 || spec.mem_cov < 0.0 || !(0.0..=1.0).contains(&spec.cpu_mean) {
        return Err(GenerateError::InvalidSpec(
            "negative coefficient of variation or cpu mean out of range".into(),
        ));
    }
    Ok(())
}

/// Sample a normal value with the given mean and coefficient of variation,
/// redrawing until it lands in [0, 1].
fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, cov: f64) -> f64 {
    if cov == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, cov * mean).expect("valid std dev");
    loop {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
}

/// Two-stage task count draw: log-uniform over [1, 64], snapped to the
/// nearest power of two with probability [`TASK_COUNT_POWER_OF_TWO_BIAS`]
/// and to the nearest integer otherwise.
fn draw_task_count(rng: &mut ChaCha8Rng) -> usize {
    let max_log = (TASK_COUNT_MAX as f64).log2();
    let u: f64 = rng.gen_range(0.0..=max_log);
    let count = if rng.gen_bool(TASK_COUNT_POWER_OF_TWO_BIAS) {
        2f64.powf(u.round())
    } else {
        2f64.powf(u).round()
    };
    (count as usize).clamp(1, TASK_COUNT_MAX as usize)
}

/// Generate the instance a spec describes. Deterministic in the spec's seed.
pub fn generate(spec: &ExperimentSpec) -> Result<ProblemInstance, GenerateError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let task_counts: Vec<usize> = if spec.parallel {
        (0..spec.job_count).map(|_| draw_task_count(&mut rng)).collect()
    } else {
        vec![1; spec.job_count]
    };
    let total_tasks: usize = task_counts.iter().sum();
    let mem_mean = spec.host_count as f64 * (1.0 - spec.slack) / total_tasks as f64;
    if mem_mean > 1.0 {
        return Err(GenerateError::SlackTooLow {
            slack: spec.slack,
            mem_mean,
        });
    }
    let jobs = task_counts
        .into_iter()
        .map(|task_count| JobSpec {
            cpu_need: truncated_normal(&mut rng, spec.cpu_mean, spec.cpu_cov),
            mem_need: truncated_normal(&mut rng, mem_mean, spec.mem_cov),
            task_count,
        })
        .collect();
    Ok(ProblemInstance {
        host_count: spec.host_count,
        jobs,
    })
}

const SLACKS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const COVS: [f64; 2] = [0.25, 0.75];

fn grid(host_count: usize, job_counts: &[usize]) -> Vec<ExperimentSpec> {
    let mut specs = Vec::new();
    for &job_count in job_counts {
        for &slack in &SLACKS {
            for &cpu_cov in &COVS {
                for &mem_cov in &COVS {
                    specs.push(
                        ExperimentSpec::new(host_count, job_count, slack)
                            .with_covs(cpu_cov, mem_cov),
                    );
                }
            }
        }
    }
    specs
}

/// The 144 small-set specs: 4 hosts, 6 to 12 tasks.
pub fn small_grid() -> Vec<ExperimentSpec> {
    grid(4, &[6, 8, 10, 12])
}

/// The 108 large-set specs: 64 hosts, 100 to 500 tasks.
pub fn large_grid() -> Vec<ExperimentSpec> {
    grid(64, &[100, 250, 500])
}

/// Derive the seed for one instance of one grid spec from a base seed.
pub fn derive_seed(base: u64, spec_index: u64, instance_index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(base) ^ spec_index) ^ instance_index)
}

/// Parameters of the task-count model, recorded in manifests so parallel
/// workloads are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCountModelMeta {
    pub distribution: String,
    pub min: u32,
    pub max: u32,
    pub power_of_two_bias: f64,
}

impl Default for TaskCountModelMeta {
    fn default() -> Self {
        TaskCountModelMeta {
            distribution: "two-stage log-uniform".into(),
            min: 1,
            max: TASK_COUNT_MAX,
            power_of_two_bias: TASK_COUNT_POWER_OF_TWO_BIAS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub id: String,
    pub file: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSpec {
    pub id: String,
    pub host_count: usize,
    pub job_count: usize,
    pub slack: f64,
    pub cpu_mean: f64,
    pub cpu_cov: f64,
    pub mem_cov: f64,
    pub parallel: bool,
    pub instances: Vec<ManifestInstance>,
}

/// Index of a generated instance set: all parameters and per-instance seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub set: String,
    pub base_seed: u64,
    pub per_spec: usize,
    pub rng_algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub task_count_model: Option<TaskCountModelMeta>,
    pub specs: Vec<ManifestSpec>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Slack by spec id, the grouping the per-slack summaries need.
    pub fn slack_by_spec(&self) -> std::collections::BTreeMap<String, f64> {
        self.specs
            .iter()
            .map(|s| (s.id.clone(), s.slack))
            .collect()
    }
}

/// A fully generated set: the manifest plus every instance, named.
pub struct GeneratedSet {
    pub manifest: Manifest,
    pub instances: Vec<(String, ProblemInstance)>,
}

/// Generate `per_spec` instances for every grid spec, deriving each
/// instance's seed from the base seed and its grid position.
pub fn build_set(
    set_name: &str,
    grid: &[ExperimentSpec],
    per_spec: usize,
    base_seed: u64,
) -> Result<GeneratedSet, GenerateError> {
    let mut specs = Vec::with_capacity(grid.len());
    let mut instances = Vec::with_capacity(grid.len() * per_spec);
    let mut any_parallel = false;
    for (spec_index, grid_spec) in grid.iter().enumerate() {
        any_parallel |= grid_spec.parallel;
        let spec_id = format!("{set_name}-{spec_index:03}");
        let mut manifest_instances = Vec::with_capacity(per_spec);
        for instance_index in 0..per_spec {
            let seed = derive_seed(base_seed, spec_index as u64, instance_index as u64);
            let spec = ExperimentSpec {
                rng_seed: seed,
                ..*grid_spec
            };
            let inst = generate(&spec)?;
            let id = format!("{spec_id}-{instance_index:02}");
            let file = format!("{id}.json");
            manifest_instances.push(ManifestInstance {
                id: id.clone(),
                file: file.clone(),
                seed,
            });
            instances.push((file, inst));
        }
        specs.push(ManifestSpec {
            id: spec_id,
            host_count: grid_spec.host_count,
            job_count: grid_spec.job_count,
            slack: grid_spec.slack,
            cpu_mean: grid_spec.cpu_mean,
            cpu_cov: grid_spec.cpu_cov,
            mem_cov: grid_spec.mem_cov,
            parallel: grid_spec.parallel,
            instances: manifest_instances,
        });
    }
    Ok(GeneratedSet {
        manifest: Manifest {
            set: set_name.to_string(),
            base_seed,
            per_spec,
            rng_algorithm: crate::rounding::RNG_ALGORITHM.to_string(),
            task_count_model: any_parallel.then(TaskCountModelMeta::default),
            specs,
        },
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_has_144_specs() {
        let grid = small_grid();
        assert_eq!(grid.len(), 144);
        let first = ExperimentSpec::new(4, 6, 0.1).with_covs(0.25, 0.25);
        assert_eq!(grid.iter().filter(|s| **s == first).count(), 1);
    }

    #[test]
    fn large_grid_has_108_specs() {
        assert_eq!(large_grid().len(), 108);
    }

    #[test]
    fn zero_cov_produces_exact_means() {
        let spec = ExperimentSpec::new(4, 8, 0.5).with_covs(0.0, 0.0);
        let inst = generate(&spec).unwrap();
        for job in &inst.jobs {
            assert_eq!(job.cpu_need, 0.5);
            // Mean memory is H * (1 - slack) / J = 4 * 0.5 / 8.
            assert!((job.mem_need - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = ExperimentSpec::new(4, 10, 0.3)
            .with_covs(0.25, 0.75)
            .with_seed(99);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let other = generate(&spec.with_seed(100)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn values_stay_in_range() {
        for seed in 0..20 {
            let spec = ExperimentSpec::new(4, 12, 0.1)
                .with_covs(0.75, 0.75)
                .with_seed(seed);
            let inst = generate(&spec).unwrap();
            for job in &inst.jobs {
                assert!((0.0..=1.0).contains(&job.cpu_need));
                assert!((0.0..=1.0).contains(&job.mem_need));
            }
        }
    }

    #[test]
    fn sample_moments_track_targets() {
        let spec = ExperimentSpec::new(4, 1000, 0.5)
            .with_covs(0.25, 0.25)
            .with_seed(1);
        let inst = generate(&spec).unwrap();
        let n = inst.jobs.len() as f64;
        let cpu_mean: f64 = inst.jobs.iter().map(|j| j.cpu_need).sum::<f64>() / n;
        let cpu_sd = (inst
            .jobs
            .iter()
            .map(|j| (j.cpu_need - cpu_mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        assert!((cpu_mean - 0.5).abs() / 0.5 < 0.1, "cpu mean {cpu_mean}");
        assert!((cpu_sd - 0.125).abs() / 0.125 < 0.1, "cpu sd {cpu_sd}");

        let mem_target = 4.0 * 0.5 / 1000.0;
        let mem_mean: f64 = inst.jobs.iter().map(|j| j.mem_need).sum::<f64>() / n;
        assert!(
            (mem_mean - mem_target).abs() / mem_target < 0.1,
            "mem mean {mem_mean}"
        );
    }

    #[test]
    fn slack_too_low_is_an_error() {
        // One job with mean memory 4 * 0.95 > 1 cannot be sampled.
        let spec = ExperimentSpec::new(4, 1, 0.05);
        assert!(matches!(
            generate(&spec),
            Err(GenerateError::SlackTooLow { .. })
        ));
    }

    #[test]
    fn parallel_task_counts_are_bounded_and_biased() {
        let mut total: usize = 0;
        let mut powers = 0usize;
        let mut jobs = 0usize;
        for seed in 0..50 {
            let spec = ExperimentSpec::new(64, 40, 0.5)
                .parallel(true)
                .with_seed(seed);
            let inst = generate(&spec).unwrap();
            for job in &inst.jobs {
                assert!((1..=64).contains(&job.task_count));
                total += job.task_count;
                powers += usize::from(job.task_count.is_power_of_two());
                jobs += 1;
            }
            assert_eq!(inst.task_count(), inst.jobs.iter().map(|j| j.task_count).sum());
        }
        assert!(total > jobs, "multi-task jobs must appear");
        // Snapping three quarters of draws makes powers of two dominate.
        assert!(
            powers as f64 / jobs as f64 > 0.5,
            "power-of-two fraction {}",
            powers as f64 / jobs as f64
        );
    }

    #[test]
    fn parallel_memory_mean_uses_task_total() {
        let spec = ExperimentSpec::new(64, 30, 0.5)
            .parallel(true)
            .with_covs(0.0, 0.0)
            .with_seed(3);
        let inst = generate(&spec).unwrap();
        let total_tasks = inst.task_count() as f64;
        let expected = 64.0 * 0.5 / total_tasks;
        for job in &inst.jobs {
            assert!((job.mem_need - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn build_set_derives_distinct_seeds() {
        let grid = vec![
            ExperimentSpec::new(2, 4, 0.5),
            ExperimentSpec::new(2, 6, 0.5),
        ];
        let set = build_set("mini", &grid, 3, 42).unwrap();
        assert_eq!(set.instances.len(), 6);
        assert_eq!(set.manifest.specs.len(), 2);
        let mut seeds: Vec<u64> = set
            .manifest
            .specs
            .iter()
            .flat_map(|s| s.instances.iter().map(|i| i.seed))
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 6, "all instance seeds distinct");
        assert_eq!(set.manifest.specs[0].instances[0].file, "mini-000-00.json");
        let parsed = Manifest::from_json(&set.manifest.to_json()).unwrap();
        assert_eq!(parsed, set.manifest);
    }
}
