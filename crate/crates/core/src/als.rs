//! Application-level self-scheduling.
//!
//! Per-job chunk calculators (STATIC, GSS, FAC, AF) and the scheduling
//! round that assigns chunks of tasks to the free hosts of every running
//! application and flags hosts that have no work left.

use std::collections::BTreeSet;

use crate::platform::{Host, HostId};
use crate::JobId;

/// Chunk-size rule a job uses for its whole lifetime.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChunkPolicyKind {
    Static,
    Gss,
    Fac,
    Af,
}

impl ChunkPolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            ChunkPolicyKind::Static => "static",
            ChunkPolicyKind::Gss => "gss",
            ChunkPolicyKind::Fac => "fac",
            ChunkPolicyKind::Af => "af",
        }
    }

    pub fn parse(s: &str) -> Option<ChunkPolicyKind> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Some(ChunkPolicyKind::Static),
            "gss" => Some(ChunkPolicyKind::Gss),
            "fac" => Some(ChunkPolicyKind::Fac),
            "af" => Some(ChunkPolicyKind::Af),
            _ => None,
        }
    }
}

/// Batch divisor rule used by FAC (and by AF's zero-variance limit).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum FacRule {
    /// Divisor from the factoring closed form; equals 2 when sigma = 0.
    #[default]
    Factoring,
    /// Fixed halving (x = 2).
    Fac2,
}

/// Numerically stable online mean/stddev (population convention).
#[derive(Clone, Debug, Default)]
pub struct OnlineStats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl OnlineStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

/// Mutable self-scheduling state of one running application.
#[derive(Clone, Debug)]
pub struct AppSchedState {
    pub job: JobId,
    /// Total tasks N.
    pub total_tasks: u64,
    /// Unscheduled tasks R.
    pub remaining: u64,
    /// Tasks whose chunks have completed.
    pub completed: u64,
    /// Cursor into the job's task list; chunks take consecutive tasks.
    pub next_task: u64,
    /// Allocation hosts in ascending id order; worker index = position.
    pub workers: Vec<HostId>,
    pub policy: ChunkPolicyKind,
    pub fac_rule: FacRule,
    /// Job-level per-task mean and stddev (seconds), known from the
    /// workload generator; used by FAC.
    pub task_mean: f64,
    pub task_stddev: f64,
    /// Per-worker observed per-task statistics, used by AF.
    pub worker_stats: Vec<OnlineStats>,
    /// STATIC workers that already received their single chunk.
    static_issued: BTreeSet<usize>,
    /// Current FAC batch: (chunk size, chunks left in batch).
    fac_batch: Option<(u64, u32)>,
    /// Hosts currently executing a chunk.
    pub busy: BTreeSet<HostId>,
    /// Hosts the app agreed not to schedule on.
    pub excluded: BTreeSet<HostId>,
    /// Hosts already flagged as having no assignable work.
    pub reported_idle: BTreeSet<HostId>,
}

impl AppSchedState {
    pub fn new(
        job: JobId,
        total_tasks: u64,
        workers: Vec<HostId>,
        policy: ChunkPolicyKind,
        fac_rule: FacRule,
        task_mean: f64,
        task_stddev: f64,
    ) -> AppSchedState {
        let n_workers = workers.len();
        AppSchedState {
            job,
            total_tasks,
            remaining: total_tasks,
            completed: 0,
            next_task: 0,
            workers,
            policy,
            fac_rule,
            task_mean,
            task_stddev,
            worker_stats: vec![OnlineStats::default(); n_workers],
            static_issued: BTreeSet::new(),
            fac_batch: None,
            busy: BTreeSet::new(),
            excluded: BTreeSet::new(),
            reported_idle: BTreeSet::new(),
        }
    }

    pub fn worker_index(&self, host: HostId) -> Option<usize> {
        self.workers.iter().position(|&h| h == host)
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    /// Next chunk size for `worker`, per the job's policy. Returns `None`
    /// when the policy has nothing (more) for this worker.
    pub fn next_chunk(&mut self, worker: usize) -> Option<u64> {
        let p = self.worker_count() as u64;
        match self.policy {
            ChunkPolicyKind::Static => {
                if self.static_issued.contains(&worker) {
                    return None;
                }
                self.static_issued.insert(worker);
                Some(chunk_static(self.total_tasks, p, worker as u64))
            }
            ChunkPolicyKind::Gss => {
                if self.remaining == 0 {
                    return None;
                }
                Some(chunk_gss(self.remaining, p))
            }
            ChunkPolicyKind::Fac => {
                if self.remaining == 0 {
                    return None;
                }
                Some(self.chunk_fac())
            }
            ChunkPolicyKind::Af => {
                if self.remaining == 0 {
                    return None;
                }
                Some(self.chunk_af(worker))
            }
        }
    }

    /// FAC: within a batch all P chunks are equal; a new batch divides the
    /// remaining work by x*P.
    fn chunk_fac(&mut self) -> u64 {
        let p = self.worker_count() as u64;
        match self.fac_batch {
            Some((chunk, left)) if left > 0 => {
                self.fac_batch = Some((chunk, left - 1));
                chunk.min(self.remaining).max(1)
            }
            _ => {
                let x = match self.fac_rule {
                    FacRule::Fac2 => 2.0,
                    FacRule::Factoring => {
                        factoring_divisor(self.remaining, p, self.task_mean, self.task_stddev)
                    }
                };
                let chunk = ((self.remaining as f64) / (x * p as f64)).ceil() as u64;
                let chunk = chunk.clamp(1, self.remaining);
                self.fac_batch = Some((chunk, p.saturating_sub(1) as u32));
                chunk
            }
        }
    }

    /// AF: per-worker chunk from the learned (mu_i, sigma_i). Workers
    /// without observations yet contribute the job-level prior (mu, sigma),
    /// so the aggregate rate always covers all P workers; a worker's first
    /// chunk is the zero-variance factoring bootstrap.
    fn chunk_af(&self, worker: usize) -> u64 {
        let p = self.worker_count() as u64;
        let r = self.remaining;
        if self.worker_stats[worker].count == 0 {
            // bootstrap: one zero-variance factoring chunk
            return ((r as f64) / (2.0 * p as f64)).ceil().max(1.0) as u64;
        }
        let prior_mu = self.task_mean.max(1e-12);
        let prior_sigma = self.task_stddev;
        let mut d = 0.0;
        let mut inv_mu = 0.0;
        for s in &self.worker_stats {
            let (mu, sigma) = if s.count > 0 {
                (s.mean().max(1e-12), s.stddev())
            } else {
                (prior_mu, prior_sigma)
            };
            d += sigma * sigma / mu;
            inv_mu += 1.0 / mu;
        }
        // Balanced remaining share with the factoring halving safety, so
        // that with converged stats and sigma -> 0 the chunk approaches the
        // zero-variance factoring chunk R/(2P).
        let t = 1.0 / inv_mu / 2.0;
        let mu_i = self.worker_stats[worker].mean().max(1e-12);
        let rr = r as f64;
        let k = (d + 2.0 * t * rr - (d * d + 4.0 * d * t * rr).sqrt()) / (2.0 * mu_i);
        // Cap at the factoring share: a worker whose learned rate happens to
        // look fast must not claim an outsized chunk that a late slow region
        // or task tail would turn into a straggler.
        let cap = (rr / (2.0 * p as f64)).ceil().max(1.0) as u64;
        (k.ceil() as u64).clamp(1, cap.min(r))
    }

    /// Whether `host` may be offered in an exclusion deal. Hosts already
    /// excluded or already flagged idle (those are lendable anyway) are
    /// out, and a statically partitioned worker that has not received its
    /// single chunk yet must not be taken away, or its share of the work
    /// would be stranded.
    pub fn exclusion_eligible(&self, host: HostId) -> bool {
        if self.excluded.contains(&host) || self.reported_idle.contains(&host) {
            return false;
        }
        match self.worker_index(host) {
            None => false,
            Some(w) => match self.policy {
                ChunkPolicyKind::Static => self.static_issued.contains(&w),
                _ => true,
            },
        }
    }

    /// Fold one chunk observation into the worker's running statistics.
    /// The observation is the per-task time `chunk_time / chunk_size`.
    pub fn update_worker_stats(
        &mut self,
        worker: usize,
        observed_chunk_time: f64,
        chunk_size: u64,
    ) {
        assert!(chunk_size >= 1, "chunk_size must be >= 1");
        self.worker_stats[worker].push(observed_chunk_time / chunk_size as f64);
    }
}

/// STATIC: workers 0..P-2 receive ceil(N/P), the last the remainder.
pub fn chunk_static(n: u64, p: u64, worker: u64) -> u64 {
    assert!(p >= 1, "worker count must be >= 1");
    if n == 0 {
        return 0;
    }
    let base = n.div_ceil(p);
    // earlier workers take `base` while work lasts; the chunk shrinks on
    // the boundary worker and vanishes past it (n < p leaves idle workers)
    let before = base.saturating_mul(worker);
    base.min(n.saturating_sub(before))
}

/// GSS: ceil(remaining / P), minimum 1 while work remains.
pub fn chunk_gss(remaining: u64, p: u64) -> u64 {
    assert!(p >= 1, "worker count must be >= 1");
    if remaining == 0 {
        return 0;
    }
    remaining.div_ceil(p).max(1)
}

/// Factoring batch divisor: b = (P*sigma) / (2*sqrt(R)*mu),
/// x = 2 + b^2 + b*sqrt(b^2 + 4). Equals 2 exactly when sigma = 0.
pub fn factoring_divisor(remaining: u64, p: u64, mu: f64, sigma: f64) -> f64 {
    if remaining == 0 || mu <= 0.0 || sigma <= 0.0 {
        return 2.0;
    }
    let b = (p as f64 * sigma) / (2.0 * (remaining as f64).sqrt() * mu);
    2.0 + b * b + b * (b * b + 4.0).sqrt()
}

/// One (host, chunk) assignment produced by a scheduling round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub job: JobId,
    pub host: HostId,
    pub worker: usize,
    pub first_task: u64,
    pub size: u64,
}

/// A host of a running job that has no assignable work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdleNotice {
    pub job: JobId,
    pub host: HostId,
}

/// One scheduling round: scan every application, assign a chunk to each
/// free non-excluded host while unscheduled work remains, otherwise flag
/// the host as idle. Hosts are visited in ascending id order.
pub fn run_scheduling_round<'a, I>(
    apps: I,
    host_of: impl Fn(HostId) -> &'a Host,
) -> (Vec<Assignment>, Vec<IdleNotice>)
where
    I: IntoIterator<Item = &'a mut AppSchedState>,
{
    let mut assignments = Vec::new();
    let mut idles = Vec::new();
    for app in apps {
        let free: Vec<(usize, HostId)> = app
            .workers
            .iter()
            .enumerate()
            .filter(|(_, &h)| {
                !app.busy.contains(&h)
                    && !app.excluded.contains(&h)
                    && !app.reported_idle.contains(&h)
                    && host_of(h).serving() == Some(app.job)
            })
            .map(|(w, &h)| (w, h))
            .collect();
        for (worker, host) in free {
            let chunk = if app.remaining > 0 {
                app.next_chunk(worker)
            } else {
                None
            };
            match chunk {
                Some(size) if size > 0 => {
                    let size = size.min(app.remaining);
                    assignments.push(Assignment {
                        job: app.job,
                        host,
                        worker,
                        first_task: app.next_task,
                        size,
                    });
                    app.next_task += size;
                    app.remaining -= size;
                    app.busy.insert(host);
                }
                _ => idles.push(IdleNotice { job: app.job, host }),
            }
        }
    }
    (assignments, idles)
}
