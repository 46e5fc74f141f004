//! Discrete-event engine.
//!
//! A single binary heap orders events by (time, kind priority, insertion
//! sequence); at equal timestamps completions are handled before
//! coordination messages, which precede scheduler wakes, arrivals, and
//! starts, so freed resources are always visible to decisions made at the
//! same instant. All container iteration is over ordered maps, making runs
//! bit-for-bit reproducible for a given (workload, seed, config).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::als::{self, AppSchedState, ChunkPolicyKind, FacRule};
use crate::bls::{self, BatchState};
use crate::error::SimError;
use crate::platform::{HostId, Platform};
use crate::rca::{self, ExclusionRequest, LendLedger};
use crate::time::{SimDuration, SimTime};
use crate::trace::{RecordKind, Trace, TraceRecord};
use crate::workload::{self, JobSet, JobSpec};
use crate::JobId;

/// Feature switches and protocol constants of one run.
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Idle-host reporting and lending between the two scheduler levels.
    pub rca: bool,
    /// EASY backfilling at the batch level. Off by default: the
    /// coordination comparison isolates the lending protocol, and
    /// backfilling reshuffles starts chaotically between otherwise
    /// equivalent runs.
    pub backfill: bool,
    /// Host-exclusion negotiation (only meaningful with `rca`).
    pub exclusion: bool,
    /// Maximum accepted completion-time inflation for an exclusion.
    pub accept_threshold: f64,
    /// Size of one control message, used to cost every scheduling action.
    pub message_bytes: u64,
    /// FAC batch divisor rule.
    pub fac_rule: FacRule,
    /// Whether backfilled jobs may also use borrowed hosts. Off by
    /// default: lending targets the job the batch scheduler would start
    /// next, and letting backfill consume the lendable pool lets small
    /// jobs legally (within their estimates) crowd out everything behind
    /// the queue head.
    pub lend_to_backfill: bool,
    /// Label stamped into exports.
    pub run_id: String,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            rca: true,
            backfill: false,
            exclusion: false,
            accept_threshold: 0.05,
            message_bytes: 64,
            fac_rule: FacRule::Factoring,
            lend_to_backfill: false,
            run_id: "run".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum EventKind {
    ChunkComplete {
        job: JobId,
        host: HostId,
        worker: usize,
        chunk: u64,
        first: u64,
        size: u64,
        exec: SimDuration,
    },
    JobComplete {
        job: JobId,
    },
    /// Application noticed one of its hosts has no work.
    WorkerIdle {
        job: JobId,
        host: HostId,
    },
    /// Idle report arriving at the batch level (one message delay later).
    RcaIdleReport {
        job: JobId,
        host: HostId,
    },
    RcaExclusionRequest {
        target: JobId,
        hosts_wanted: u32,
        duration: SimDuration,
    },
    RcaExclusionResponse {
        target: JobId,
        accepted: bool,
    },
    ExclusionExpire {
        job: JobId,
        hosts: Vec<HostId>,
    },
    SchedulerWake,
    JobArrival {
        job: JobId,
    },
    JobStart {
        job: JobId,
        hosts: Vec<HostId>,
    },
    ChunkStart {
        job: JobId,
        host: HostId,
        worker: usize,
        chunk: u64,
        first: u64,
        size: u64,
        exec: SimDuration,
    },
}

/// Tie-break rank at equal timestamps: lower handles first.
fn priority(kind: &EventKind) -> u8 {
    match kind {
        EventKind::ChunkComplete { .. } => 0,
        EventKind::JobComplete { .. } => 1,
        EventKind::WorkerIdle { .. } => 2,
        EventKind::RcaIdleReport { .. }
        | EventKind::RcaExclusionRequest { .. }
        | EventKind::RcaExclusionResponse { .. }
        | EventKind::ExclusionExpire { .. } => 3,
        EventKind::SchedulerWake => 4,
        EventKind::JobArrival { .. } => 5,
        EventKind::JobStart { .. } => 6,
        EventKind::ChunkStart { .. } => 7,
    }
}

struct Queued {
    key: (SimTime, u8, u64),
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Queued) -> bool {
        self.key == other.key
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Queued) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Queued) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Per-job outcome of a run.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub job: JobId,
    pub category: Option<char>,
    pub requested_hosts: u32,
    pub policy: ChunkPolicyKind,
    pub arrival: SimTime,
    pub start: Option<SimTime>,
    pub end: Option<SimTime>,
    /// Total work the job's tasks represent, in core-seconds.
    pub total_task_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub trace: Trace,
    pub jobs: Vec<JobResult>,
    pub host_count: usize,
    pub final_time: SimTime,
    pub run_id: String,
}

/// How many ineffective scheduler wakes in a row count as a livelock.
const LIVELOCK_LIMIT: usize = 10_000;

pub struct Simulation {
    cfg: SimConfig,
    platform: Platform,
    specs: BTreeMap<u64, JobSpec>,
    batch: BatchState,
    ledger: LendLedger,
    apps: BTreeMap<u64, AppSchedState>,
    /// Per-job prefix sums of task durations (nanoseconds), length N+1.
    tasks: BTreeMap<u64, Vec<u64>>,
    chunk_seq: BTreeMap<u64, u64>,
    results: BTreeMap<u64, JobResult>,
    trace: Trace,
    clock: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    wake_pending: Option<SimTime>,
    wake_streak: usize,
    pending_exclusion: BTreeSet<u64>,
    /// Cached delivery time of one control message.
    xfer: SimDuration,
}

impl Simulation {
    pub fn new(
        platform: Platform,
        jobset: &JobSet,
        cfg: SimConfig,
    ) -> Result<Simulation, SimError> {
        let xfer = platform.transfer_time(cfg.message_bytes);
        if cfg.accept_threshold.is_nan() || cfg.accept_threshold < 0.0 {
            return Err(SimError::Config(
                "accept_threshold must be non-negative".into(),
            ));
        }
        let mut sim = Simulation {
            cfg,
            platform,
            specs: BTreeMap::new(),
            batch: BatchState::new(),
            ledger: LendLedger::new(),
            apps: BTreeMap::new(),
            tasks: BTreeMap::new(),
            chunk_seq: BTreeMap::new(),
            results: BTreeMap::new(),
            trace: Trace::new(),
            clock: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            wake_pending: None,
            wake_streak: 0,
            pending_exclusion: BTreeSet::new(),
            xfer,
        };
        for job in &jobset.jobs {
            if job.requested_hosts == 0 {
                return Err(SimError::Config(format!(
                    "job {} requests zero hosts",
                    job.id.0
                )));
            }
            if job.requested_hosts as usize > sim.platform.host_count() {
                return Err(SimError::Config(format!(
                    "job {} requests {} hosts, platform has {}",
                    job.id.0,
                    job.requested_hosts,
                    sim.platform.host_count()
                )));
            }
            if sim.specs.insert(job.id.0, job.clone()).is_some() {
                return Err(SimError::DuplicateJob(job.id.0));
            }
            sim.results.insert(
                job.id.0,
                JobResult {
                    job: job.id,
                    category: job.category,
                    requested_hosts: job.requested_hosts,
                    policy: job.als_policy,
                    arrival: job.arrival_time,
                    start: None,
                    end: None,
                    total_task_seconds: 0.0,
                },
            );
            sim.schedule(job.arrival_time, EventKind::JobArrival { job: job.id })?;
        }
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<(), SimError> {
        if time < self.clock {
            return Err(SimError::Causality {
                event: time.as_secs(),
                clock: self.clock.as_secs(),
            });
        }
        let key = (time, priority(&kind), self.seq);
        self.seq += 1;
        self.queue.push(Reverse(Queued { key, kind }));
        Ok(())
    }

    fn wake(&mut self, time: SimTime) -> Result<(), SimError> {
        if self.wake_pending == Some(time) {
            return Ok(());
        }
        self.wake_pending = Some(time);
        self.schedule(time, EventKind::SchedulerWake)
    }

    /// Run until the event queue drains. Errors if jobs remain queued or
    /// running afterwards.
    pub fn run(mut self) -> Result<SimulationResult, SimError> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            debug_assert!(ev.key.0 >= self.clock, "event queue went backwards");
            self.clock = ev.key.0;
            self.handle(ev.kind)?;
        }
        let mut stranded: Vec<u64> = self.batch.queue.iter().map(|j| j.0).collect();
        stranded.extend(self.apps.keys().copied());
        if !stranded.is_empty() {
            return Err(SimError::Stranded(stranded));
        }
        Ok(SimulationResult {
            trace: self.trace,
            jobs: self.results.into_values().collect(),
            host_count: self.platform.host_count(),
            final_time: self.clock,
            run_id: self.cfg.run_id,
        })
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::JobArrival { job } => self.on_arrival(job),
            EventKind::SchedulerWake => self.on_wake(),
            EventKind::JobStart { job, hosts } => self.on_job_start(job, hosts),
            EventKind::ChunkStart {
                job,
                host,
                worker,
                chunk,
                first,
                size,
                exec,
            } => self.on_chunk_start(job, host, worker, chunk, first, size, exec),
            EventKind::ChunkComplete {
                job,
                host,
                worker,
                chunk: _,
                first,
                size,
                exec,
            } => self.on_chunk_complete(job, host, worker, first, size, exec),
            EventKind::JobComplete { job } => self.on_job_complete(job),
            EventKind::WorkerIdle { job, host } => self.on_worker_idle(job, host),
            EventKind::RcaIdleReport { job, host } => self.on_idle_report(job, host),
            EventKind::RcaExclusionRequest {
                target,
                hosts_wanted,
                duration,
            } => self.on_exclusion_request(target, hosts_wanted, duration),
            EventKind::RcaExclusionResponse {
                target,
                accepted: _,
            } => {
                self.pending_exclusion.remove(&target.0);
                Ok(())
            }
            EventKind::ExclusionExpire { job, hosts } => self.on_exclusion_expire(job, hosts),
        }
    }

    fn on_arrival(&mut self, job: JobId) -> Result<(), SimError> {
        self.batch.submit(job)?;
        self.wake(self.clock)
    }

    fn on_wake(&mut self) -> Result<(), SimError> {
        if self.wake_pending == Some(self.clock) {
            self.wake_pending = None;
        }
        let now = self.clock;
        let mut allocs = bls::fcfs_pass(
            &mut self.batch,
            &mut self.platform,
            &mut self.ledger,
            &self.specs,
            now,
            self.cfg.rca,
        );
        if self.cfg.backfill {
            allocs.extend(bls::backfill_pass(
                &mut self.batch,
                &mut self.platform,
                &mut self.ledger,
                &self.specs,
                now,
                self.cfg.rca,
                self.cfg.rca && self.cfg.lend_to_backfill,
            ));
        }
        if allocs.is_empty() {
            self.wake_streak += 1;
            if self.wake_streak > LIVELOCK_LIMIT {
                return Err(SimError::Livelock(self.wake_streak));
            }
        } else {
            self.wake_streak = 0;
        }
        for a in allocs {
            self.schedule(
                now,
                EventKind::JobStart {
                    job: a.job,
                    hosts: a.hosts,
                },
            )?;
        }
        if self.cfg.rca && self.cfg.exclusion {
            self.maybe_request_exclusion()?;
        }
        Ok(())
    }

    /// When the queue head still cannot start, ask one running application
    /// to give up the missing hosts.
    fn maybe_request_exclusion(&mut self) -> Result<(), SimError> {
        let Some(&head) = self.batch.queue.first() else {
            return Ok(());
        };
        let need = self.specs[&head.0].requested_hosts as usize;
        let avail = self.platform.free_hosts().len() + self.platform.lendable_hosts().len();
        if avail >= need {
            return Ok(());
        }
        let shortfall = (need - avail) as u32;
        let duration = self.specs[&head.0].estimated_runtime;
        let target = self
            .apps
            .values()
            .find(|a| {
                !self.pending_exclusion.contains(&a.job.0) && a.worker_count() > shortfall as usize
            })
            .map(|a| a.job);
        if let Some(target) = target {
            if let Some(req) =
                rca::request_exclusion(target, self.batch.is_running(target), shortfall, duration)?
            {
                self.pending_exclusion.insert(target.0);
                let t = self.clock + self.xfer;
                self.schedule(
                    t,
                    EventKind::RcaExclusionRequest {
                        target: req.target,
                        hosts_wanted: req.hosts_wanted,
                        duration: req.duration,
                    },
                )?;
            }
        }
        Ok(())
    }

    fn on_job_start(&mut self, job: JobId, hosts: Vec<HostId>) -> Result<(), SimError> {
        let spec = self.specs[&job.0].clone();
        let times = workload::sample_task_times(&spec);
        let mut prefix = Vec::with_capacity(times.len() + 1);
        prefix.push(0u64);
        for t in &times {
            prefix.push(prefix.last().unwrap() + t.as_nanos());
        }
        let total_seconds = *prefix.last().unwrap() as f64 / 1e9;
        self.tasks.insert(job.0, prefix);
        let sigma = spec.task_profile.mean_task_seconds * spec.task_profile.cv;
        let app = AppSchedState::new(
            job,
            spec.task_count,
            hosts,
            spec.als_policy,
            self.cfg.fac_rule,
            spec.task_profile.mean_task_seconds,
            sigma,
        );
        self.apps.insert(job.0, app);
        let res = self.results.get_mut(&job.0).expect("result slot exists");
        res.start = Some(self.clock);
        res.total_task_seconds = total_seconds;
        if spec.task_count == 0 {
            return self.schedule(self.clock, EventKind::JobComplete { job });
        }
        self.run_round()
    }

    /// One application-level scheduling round over every running job:
    /// assign chunks to free hosts, cost each assignment with one message
    /// delay, and surface hosts with no work.
    fn run_round(&mut self) -> Result<(), SimError> {
        let now = self.clock;
        let platform = &self.platform;
        let (assignments, idles) =
            als::run_scheduling_round(self.apps.values_mut(), |h| platform.host(h));

        for a in assignments {
            let exec = self.exec_time(a.job, a.first_task, a.size);
            let chunk = {
                let c = self.chunk_seq.entry(a.job.0).or_insert(0);
                *c += 1;
                *c
            };
            let borrowed = self.platform.host(a.host).borrower == Some(a.job);
            let t_start = now + self.xfer;
            self.trace.record(TraceRecord {
                host: a.host,
                job: a.job,
                chunk,
                kind: RecordKind::SchedOverhead,
                start: now,
                end: t_start,
                borrowed,
            })?;
            self.platform.host_mut(a.host).busy_until = Some(t_start + exec);
            self.schedule(
                t_start,
                EventKind::ChunkStart {
                    job: a.job,
                    host: a.host,
                    worker: a.worker,
                    chunk,
                    first: a.first_task,
                    size: a.size,
                    exec,
                },
            )?;
        }

        for i in idles {
            let app = self
                .apps
                .get_mut(&i.job.0)
                .expect("idle notice for live app");
            app.reported_idle.insert(i.host);
            let h = self.platform.host(i.host);
            if self.cfg.rca && h.owner == Some(i.job) && h.borrower.is_none() && !h.lendable {
                self.schedule(
                    now,
                    EventKind::WorkerIdle {
                        job: i.job,
                        host: i.host,
                    },
                )?;
            }
        }
        Ok(())
    }

    fn exec_time(&self, job: JobId, first_task: u64, size: u64) -> SimDuration {
        let p = &self.tasks[&job.0];
        SimDuration(p[(first_task + size) as usize] - p[first_task as usize])
    }

    #[allow(clippy::too_many_arguments)]
    fn on_chunk_start(
        &mut self,
        job: JobId,
        host: HostId,
        worker: usize,
        chunk: u64,
        first: u64,
        size: u64,
        exec: SimDuration,
    ) -> Result<(), SimError> {
        let borrowed = self.platform.host(host).borrower == Some(job);
        self.trace.record(TraceRecord {
            host,
            job,
            chunk,
            kind: RecordKind::Compute,
            start: self.clock,
            end: self.clock + exec,
            borrowed,
        })?;
        self.schedule(
            self.clock + exec,
            EventKind::ChunkComplete {
                job,
                host,
                worker,
                chunk,
                first,
                size,
                exec,
            },
        )
    }

    fn on_chunk_complete(
        &mut self,
        job: JobId,
        host: HostId,
        worker: usize,
        first: u64,
        size: u64,
        exec: SimDuration,
    ) -> Result<(), SimError> {
        self.platform.host_mut(host).busy_until = None;
        let prefix = &self.tasks[&job.0];
        let app = self
            .apps
            .get_mut(&job.0)
            .ok_or(SimError::UnknownJob(job.0))?;
        app.busy.remove(&host);
        app.completed += size;
        // the app times every task it ran; adaptive policies learn from them
        for i in first..first + size {
            let t = (prefix[(i + 1) as usize] - prefix[i as usize]) as f64 * 1e-9;
            app.update_worker_stats(worker, t, 1);
        }
        let _ = exec;
        if app.completed == app.total_tasks {
            return self.schedule(self.clock, EventKind::JobComplete { job });
        }
        // a host excluded mid-chunk surrenders as soon as the chunk ends
        if app.excluded.contains(&host) {
            app.reported_idle.insert(host);
            let h = self.platform.host(host);
            if self.cfg.rca && h.owner == Some(job) && h.borrower.is_none() {
                self.schedule(self.clock, EventKind::WorkerIdle { job, host })?;
            }
        }
        self.run_round()
    }

    fn on_job_complete(&mut self, job: JobId) -> Result<(), SimError> {
        let now = self.clock;
        self.results
            .get_mut(&job.0)
            .expect("result slot exists")
            .end = Some(now);
        self.apps.remove(&job.0);
        self.pending_exclusion.remove(&job.0);
        bls::complete(
            &mut self.batch,
            &mut self.platform,
            &mut self.ledger,
            job,
            now,
        )?;
        self.wake(now)
    }

    fn on_worker_idle(&mut self, job: JobId, host: HostId) -> Result<(), SimError> {
        // drop stale notices: the job may have completed or the host moved
        if !self.apps.contains_key(&job.0) {
            return Ok(());
        }
        let h = self.platform.host(host);
        if h.owner != Some(job) || h.borrower.is_some() || h.lendable {
            return Ok(());
        }
        let t = self.clock + self.xfer;
        self.schedule(t, EventKind::RcaIdleReport { job, host })
    }

    fn on_idle_report(&mut self, job: JobId, host: HostId) -> Result<(), SimError> {
        if !self.batch.is_running(job) {
            return Ok(()); // job finished while the report was in flight
        }
        let h = self.platform.host(host);
        if h.owner != Some(job)
            || h.borrower.is_some()
            || h.busy_until.is_some_and(|t| t > self.clock)
        {
            return Ok(());
        }
        let newly = rca::report_idle(&mut self.platform, &mut self.ledger, job, host, self.clock)?;
        if newly {
            self.wake(self.clock)?;
        }
        Ok(())
    }

    fn on_exclusion_request(
        &mut self,
        target: JobId,
        hosts_wanted: u32,
        duration: SimDuration,
    ) -> Result<(), SimError> {
        let now = self.clock;
        let Some(app) = self.apps.get_mut(&target.0) else {
            self.pending_exclusion.remove(&target.0);
            return Ok(());
        };
        let req = ExclusionRequest {
            target,
            hosts_wanted,
            duration,
        };
        let resp = rca::decide_exclusion(app, &self.platform, &req, self.cfg.accept_threshold);
        let accepted = resp.accepted;
        let idle_now = resp.idle_now;
        let hosts = resp.hosts;
        self.schedule(
            now + self.xfer,
            EventKind::RcaExclusionResponse { target, accepted },
        )?;
        if accepted {
            for &h in &idle_now {
                let app = self.apps.get_mut(&target.0).expect("target still live");
                app.reported_idle.insert(h);
                self.schedule(
                    now,
                    EventKind::WorkerIdle {
                        job: target,
                        host: h,
                    },
                )?;
            }
            self.schedule(
                now + duration,
                EventKind::ExclusionExpire { job: target, hosts },
            )?;
        }
        Ok(())
    }

    fn on_exclusion_expire(&mut self, job: JobId, hosts: Vec<HostId>) -> Result<(), SimError> {
        let Some(app) = self.apps.get_mut(&job.0) else {
            return Ok(());
        };
        let mut reclaimed = false;
        for host in hosts {
            app.excluded.remove(&host);
            let h = self.platform.host_mut(host);
            if h.owner == Some(job) && h.borrower.is_none() {
                if h.lendable {
                    h.lendable = false;
                    self.ledger.remove(host);
                }
                app.reported_idle.remove(&host);
                reclaimed = true;
            }
            // if lent out it stays with the borrower; it returns to the
            // lendable pool through the normal completion path
        }
        if reclaimed {
            self.run_round()?;
        }
        Ok(())
    }
}
