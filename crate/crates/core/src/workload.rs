//! Workload generation: ESP benchmark job sets with balanced and
//! imbalanced task-time profiles, the ESP arrival scheme, and per-job
//! task-time sampling.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, LogNormal};

use crate::als::ChunkPolicyKind;
use crate::error::SimError;
use crate::rng::stream;
use crate::time::{SimDuration, SimTime};
use crate::JobId;

/// ESP job categories: (id, requested hosts at scale 256, job count).
pub const ESP_CATEGORIES: [(char, u32, u32); 14] = [
    ('A', 8, 75),
    ('B', 16, 9),
    ('C', 128, 3),
    ('D', 64, 3),
    ('E', 128, 3),
    ('F', 16, 9),
    ('G', 32, 6),
    ('H', 40, 6),
    ('I', 8, 24),
    ('J', 16, 24),
    ('K', 24, 15),
    ('L', 32, 36),
    ('M', 64, 15),
    ('Z', 256, 2),
];

pub const ESP_JOB_COUNT: u32 = 230;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProfileKind {
    Balanced,
    Imbalanced,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Balanced => "balanced",
            ProfileKind::Imbalanced => "imbalanced",
        }
    }

    pub fn parse(s: &str) -> Option<ProfileKind> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" | "psia" => Some(ProfileKind::Balanced),
            "imbalanced" | "mandelbrot" => Some(ProfileKind::Imbalanced),
            _ => None,
        }
    }
}

/// Statistical shape of a job's per-task execution times.
///
/// Task times are lognormal with mean `mean_task_seconds` and coefficient
/// of variation `cv`. The variance is split between a per-task factor and
/// a per-region factor shared by contiguous blocks of tasks (one region
/// per worker): region structure is what makes equally sized chunks cost
/// differently, the way spatially correlated workloads do. The marginal
/// per-task distribution stays lognormal because the two factors multiply.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskProfile {
    pub kind: ProfileKind,
    pub mean_task_seconds: f64,
    /// Total coefficient of variation sigma/mu of a task time.
    pub cv: f64,
    /// Portion of the variation shared per region (cv of the region
    /// multiplier). Must satisfy region_cv <= cv.
    pub region_cv: f64,
    /// Number of contiguous task regions (normally the worker count).
    pub regions: u32,
}

/// A batch-level job: host request, arrival, estimate, and its bag of tasks.
#[derive(Clone, Debug)]
pub struct JobSpec {
    pub id: JobId,
    pub category: Option<char>,
    pub requested_hosts: u32,
    pub task_count: u64,
    pub task_profile: TaskProfile,
    pub arrival_time: SimTime,
    /// Runtime estimate given to the batch scheduler (backfilling input).
    pub estimated_runtime: SimDuration,
    /// Balanced-execution runtime target used for calibration.
    pub target_runtime: SimDuration,
    pub als_policy: ChunkPolicyKind,
    /// Seed of the workload this job belongs to; task times are drawn from
    /// the (seed, job, "tasks") stream.
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct JobSet {
    pub jobs: Vec<JobSpec>,
    pub workload_name: String,
}

impl JobSet {
    pub fn category_counts(&self) -> Vec<(char, u32)> {
        let mut counts: Vec<(char, u32)> = Vec::new();
        for (c, _, _) in ESP_CATEGORIES {
            let n = self.jobs.iter().filter(|j| j.category == Some(c)).count() as u32;
            counts.push((c, n));
        }
        counts
    }
}

/// Tunables of the ESP generator. Defaults reproduce the reference
/// calibration: every category contributes equal core-seconds and the
/// theoretical lower-bound makespan at scale 256 is ~10500 s.
#[derive(Clone, Debug)]
pub struct EspParams {
    pub scale_hosts: u32,
    /// Target theoretical lower-bound makespan (sum of core-seconds
    /// divided by scale_hosts).
    pub target_makespan: f64,
    pub tasks_per_host: u32,
    /// Runtime estimate = target runtime * this factor.
    pub estimate_factor: f64,
    pub balanced_cv: f64,
    pub balanced_region_cv: f64,
    pub imbalanced_cv: f64,
    pub imbalanced_region_cv: f64,
    /// Gap between consecutive non-Z submissions.
    pub submission_gap: f64,
}

impl Default for EspParams {
    fn default() -> EspParams {
        EspParams {
            scale_hosts: 256,
            target_makespan: 10_500.0,
            tasks_per_host: 512,
            estimate_factor: 1.0,
            balanced_cv: 0.02,
            balanced_region_cv: 0.0,
            imbalanced_cv: 1.5,
            imbalanced_region_cv: 0.35,
            submission_gap: 1.0,
        }
    }
}

/// Generate the 230-job ESP job set at the given scale. Arrival times are
/// all zero until [`arrival_schedule`] is applied.
pub fn generate_esp(kind: ProfileKind, seed: u64, params: &EspParams) -> Result<JobSet, SimError> {
    let scale = params.scale_hosts;
    if scale < 16 {
        return Err(SimError::Config(format!(
            "scale_hosts {scale} too small for distinct ESP categories"
        )));
    }
    if params.target_makespan.is_nan() || params.target_makespan <= 0.0 {
        return Err(SimError::Config("target makespan must be positive".into()));
    }
    let scaled: Vec<u32> = ESP_CATEGORIES
        .iter()
        .map(|&(_, h, _)| (((h as u64 * scale as u64) + 128) / 256).max(1) as u32)
        .collect();
    let z_hosts = scaled[ESP_CATEGORIES.len() - 1];
    if scaled[..ESP_CATEGORIES.len() - 1]
        .iter()
        .any(|&h| h >= z_hosts)
    {
        return Err(SimError::Config(format!(
            "scale_hosts {scale} does not give category Z a distinct allocation"
        )));
    }

    let (cv, region_cv) = match kind {
        ProfileKind::Balanced => (params.balanced_cv, params.balanced_region_cv),
        ProfileKind::Imbalanced => (params.imbalanced_cv, params.imbalanced_region_cv),
    };

    // Equal core-seconds per category, summing to scale * target_makespan.
    let core_seconds_per_cat = scale as f64 * params.target_makespan / ESP_CATEGORIES.len() as f64;

    let mut jobs = Vec::with_capacity(ESP_JOB_COUNT as usize);
    let mut next_id: u64 = 1;
    for (ci, &(cat, _, count)) in ESP_CATEGORIES.iter().enumerate() {
        let hosts = scaled[ci];
        let target = core_seconds_per_cat / (count as f64 * hosts as f64);
        let task_count = hosts as u64 * params.tasks_per_host as u64;
        let mean_task = target / params.tasks_per_host as f64;
        for _ in 0..count {
            jobs.push(JobSpec {
                id: JobId(next_id),
                category: Some(cat),
                requested_hosts: hosts,
                task_count,
                task_profile: TaskProfile {
                    kind,
                    mean_task_seconds: mean_task,
                    cv,
                    region_cv,
                    regions: hosts,
                },
                arrival_time: SimTime::ZERO,
                estimated_runtime: SimDuration::from_secs(target * params.estimate_factor),
                target_runtime: SimDuration::from_secs(target),
                als_policy: ChunkPolicyKind::Static,
                seed,
            });
            next_id += 1;
        }
    }
    Ok(JobSet {
        jobs,
        workload_name: format!("esp-{}", kind.name()),
    })
}

/// Apply the ESP arrival scheme: non-Z jobs are submitted in seeded-random
/// order at fixed gaps; the two Z jobs split the submission timeline into
/// three parts and each is followed by a quiet window of 10% of the
/// estimated workload makespan.
pub fn arrival_schedule(
    jobset: &mut JobSet,
    estimated_workload_makespan: f64,
    seed: u64,
    submission_gap: f64,
) -> Result<(), SimError> {
    let z_count = jobset
        .jobs
        .iter()
        .filter(|j| j.category == Some('Z'))
        .count();
    if z_count != 2 {
        return Err(SimError::Config(format!(
            "ESP arrival scheme needs exactly 2 category-Z jobs, found {z_count}"
        )));
    }
    let quiet = SimDuration::from_secs(0.10 * estimated_workload_makespan);
    let gap = SimDuration::from_secs(submission_gap);

    let mut non_z: Vec<usize> = (0..jobset.jobs.len())
        .filter(|&i| jobset.jobs[i].category != Some('Z'))
        .collect();
    let z: Vec<usize> = (0..jobset.jobs.len())
        .filter(|&i| jobset.jobs[i].category == Some('Z'))
        .collect();

    let mut rng = stream(seed, 0, "esp-arrival");
    non_z.shuffle(&mut rng);

    let n = non_z.len();
    let first_third = n.div_ceil(3);
    let second_third = (2 * n).div_ceil(3);

    let mut t = SimTime::ZERO;
    for (pos, &ji) in non_z.iter().enumerate() {
        if pos == first_third {
            jobset.jobs[z[0]].arrival_time = t;
            t += quiet;
        }
        if pos == second_third {
            jobset.jobs[z[1]].arrival_time = t;
            t += quiet;
        }
        jobset.jobs[ji].arrival_time = t;
        t += gap;
    }
    jobset.jobs.sort_by_key(|j| (j.arrival_time, j.id.0));
    Ok(())
}

/// Lognormal parameters for mean `m` and coefficient of variation `c`.
fn lognormal_params(m: f64, c: f64) -> (f64, f64) {
    let sigma2 = (1.0 + c * c).ln();
    (m.ln() - sigma2 / 2.0, sigma2.sqrt())
}

/// Draw the job's task durations from its seeded stream.
///
/// The sample is normalized so the job's total work equals exactly
/// task_count * mean (calibration: balanced-execution runtime equals the
/// category target, and total work is seed-invariant).
pub fn sample_task_times(job: &JobSpec) -> Vec<SimDuration> {
    let p = &job.task_profile;
    let n = job.task_count as usize;
    if p.cv <= 0.0 || n == 0 {
        return vec![SimDuration::from_secs(p.mean_task_seconds); n];
    }
    let mut rng = stream(job.seed, job.id.0, "tasks");

    let region_cv = p.region_cv.min(p.cv);
    // split the variance: (1 + cv^2) = (1 + cv_r^2)(1 + cv_t^2)
    let task_cv = (((1.0 + p.cv * p.cv) / (1.0 + region_cv * region_cv)) - 1.0)
        .max(0.0)
        .sqrt();

    let regions = (p.regions.max(1) as usize).min(n);
    let region_len = n.div_ceil(regions);
    let multipliers: Vec<f64> = if region_cv > 0.0 {
        let (mu, sigma) = lognormal_params(1.0, region_cv);
        let d = LogNormal::new(mu, sigma).unwrap();
        // Region multipliers model spatially correlated cost (e.g. fractal
        // zoom regions); such imbalance is strong but bounded, so clamp the
        // lognormal tail: no region is more than about 1.6x the typical cost.
        (0..regions)
            .map(|_| d.sample(&mut rng).clamp(0.5, 1.6))
            .collect()
    } else {
        vec![1.0; regions]
    };

    let mut times = vec![0.0f64; n];
    if task_cv > 0.0 {
        let (mu, sigma) = lognormal_params(p.mean_task_seconds, task_cv);
        let d = LogNormal::new(mu, sigma).unwrap();
        // Individual task cost is heavy-tailed but bounded, the way an
        // escape-time kernel has an iteration cap: truncate single-task
        // draws at 30x the mean.
        let cap = 30.0 * p.mean_task_seconds;
        for (i, t) in times.iter_mut().enumerate() {
            *t = d.sample(&mut rng).min(cap) * multipliers[i / region_len];
        }
    } else {
        for (i, t) in times.iter_mut().enumerate() {
            *t = p.mean_task_seconds * multipliers[i / region_len];
        }
    }

    // normalize total work to exactly n * mean
    let total: f64 = times.iter().sum();
    let scale = (n as f64 * p.mean_task_seconds) / total;
    times
        .iter()
        .map(|&t| SimDuration::from_secs((t * scale).max(1e-9)))
        .collect()
}
