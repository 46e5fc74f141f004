//! Batch-level scheduling: FCFS queue with EASY backfilling (single
//! reservation for the queue head), dispatch onto the platform, and job
//! completion bookkeeping.
//!
//! Reservation prediction uses the jobs' runtime estimates, never the
//! true runtimes; early completions are re-planned on the next wake.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::SimError;
use crate::platform::{HostId, Platform};
use crate::rca::{self, LendLedger};
use crate::time::SimTime;
use crate::workload::JobSpec;
use crate::JobId;

#[derive(Clone, Debug)]
pub struct Allocation {
    pub job: JobId,
    /// Exactly the job's requested host count, ascending ids.
    pub hosts: Vec<HostId>,
    pub start: SimTime,
    /// Subset of `hosts` obtained through lending.
    pub borrowed: BTreeSet<HostId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub job: JobId,
    pub start: SimTime,
}

#[derive(Clone, Debug, Default)]
pub struct BatchState {
    /// Pending jobs in arrival order.
    pub queue: Vec<JobId>,
    pub running: BTreeMap<u64, Allocation>,
    pub reservation: Option<Reservation>,
    submitted: BTreeSet<u64>,
    completed: BTreeSet<u64>,
}

impl BatchState {
    pub fn new() -> BatchState {
        BatchState::default()
    }

    pub fn submit(&mut self, job: JobId) -> Result<usize, SimError> {
        if !self.submitted.insert(job.0) {
            return Err(SimError::DuplicateJob(job.0));
        }
        self.queue.push(job);
        Ok(self.queue.len() - 1)
    }

    pub fn is_running(&self, job: JobId) -> bool {
        self.running.contains_key(&job.0)
    }

    pub fn is_queued(&self, job: JobId) -> bool {
        self.queue.contains(&job)
    }
}

/// Predicted availability time of every host: free and (with lending)
/// lendable hosts are available now; busy hosts become available at the
/// estimated completion of the job they serve.
fn availability(
    platform: &Platform,
    batch: &BatchState,
    specs: &BTreeMap<u64, JobSpec>,
    now: SimTime,
    use_lendable: bool,
) -> Vec<SimTime> {
    let mut times = Vec::with_capacity(platform.host_count());
    for h in &platform.hosts {
        let t = if h.is_free() || (use_lendable && h.lendable && h.borrower.is_none()) {
            now
        } else {
            match h.serving() {
                Some(j) => {
                    let alloc = &batch.running[&j.0];
                    let est = specs[&j.0].estimated_runtime;
                    (alloc.start + est).max(now)
                }
                // owned but idle and unreported: frees at the owner's
                // estimated completion
                None => now,
            }
        };
        times.push(t);
    }
    times.sort();
    times
}

fn predicted_start(
    platform: &Platform,
    batch: &BatchState,
    specs: &BTreeMap<u64, JobSpec>,
    now: SimTime,
    need: usize,
    use_lendable: bool,
) -> SimTime {
    let times = availability(platform, batch, specs, now, use_lendable);
    times[need - 1]
}

/// Take `count` hosts, free pool first in ascending id order, then (when
/// lending is enabled) lendable hosts to top up the shortfall.
fn take_hosts(
    platform: &mut Platform,
    ledger: &mut LendLedger,
    job: JobId,
    count: usize,
    use_lendable: bool,
    now: SimTime,
) -> (Vec<HostId>, BTreeSet<HostId>) {
    let free = platform.free_hosts();
    let mut hosts: Vec<HostId> = free.into_iter().take(count).collect();
    for &h in &hosts {
        platform.host_mut(h).owner = Some(job);
    }
    let shortfall = count - hosts.len();
    let borrowed: BTreeSet<HostId> = if use_lendable && shortfall > 0 {
        rca::grant_lend(platform, ledger, job, shortfall, true, now)
            .into_iter()
            .collect()
    } else {
        BTreeSet::new()
    };
    hosts.extend(borrowed.iter().copied());
    hosts.sort();
    (hosts, borrowed)
}

/// FCFS pass: allocate from the queue head while jobs fit in
/// free (plus, with RCA, lendable) hosts; the first job that does not fit
/// receives the reservation at its earliest predicted start.
pub fn fcfs_pass(
    batch: &mut BatchState,
    platform: &mut Platform,
    ledger: &mut LendLedger,
    specs: &BTreeMap<u64, JobSpec>,
    now: SimTime,
    rca_enabled: bool,
) -> Vec<Allocation> {
    let mut allocs = Vec::new();
    batch.reservation = None;
    while let Some(&head) = batch.queue.first() {
        let need = specs[&head.0].requested_hosts as usize;
        let free = platform.free_hosts().len();
        let lendable = if rca_enabled {
            platform.lendable_hosts().len()
        } else {
            0
        };
        if free + lendable >= need {
            let (hosts, borrowed) = take_hosts(platform, ledger, head, need, rca_enabled, now);
            debug_assert_eq!(hosts.len(), need);
            let alloc = Allocation {
                job: head,
                hosts,
                start: now,
                borrowed,
            };
            batch.running.insert(head.0, alloc.clone());
            batch.queue.remove(0);
            allocs.push(alloc);
        } else {
            batch.reservation = Some(Reservation {
                job: head,
                start: predicted_start(platform, batch, specs, now, need, rca_enabled),
            });
            break;
        }
    }
    allocs
}

/// EASY backfill pass: start jobs behind the head, in queue order, iff
/// they fit in currently available hosts and cannot push the head's
/// reserved start later. A job whose estimate runs past the shadow time
/// may only use hosts the reservation never needs.
///
/// `head_lendable` mirrors how the reservation was computed (the head may
/// borrow lendable hosts when coordination is on); `use_lendable` governs
/// only which hosts a backfilled job itself may take. The shadow-time
/// arithmetic must use the head's notion of availability or the no-delay
/// guarantee is checked against the wrong baseline.
pub fn backfill_pass(
    batch: &mut BatchState,
    platform: &mut Platform,
    ledger: &mut LendLedger,
    specs: &BTreeMap<u64, JobSpec>,
    now: SimTime,
    head_lendable: bool,
    use_lendable: bool,
) -> Vec<Allocation> {
    if batch.reservation.is_none() {
        return Vec::new();
    }
    let mut allocs = Vec::new();
    let candidates: Vec<JobId> = batch.queue.iter().skip(1).copied().collect();
    for job in candidates {
        let shadow = batch
            .reservation
            .expect("reservation held during backfill")
            .start;
        let head = batch.queue[0];
        let head_need = specs[&head.0].requested_hosts as usize;

        // what the head can count on, and what the candidate may take
        let head_avail_now = platform.free_hosts().len()
            + if head_lendable {
                platform.lendable_hosts().len()
            } else {
                0
            };
        let cand_avail_now = platform.free_hosts().len()
            + if use_lendable {
                platform.lendable_hosts().len()
            } else {
                0
            };
        let times = availability(platform, batch, specs, now, head_lendable);
        let released_by_shadow = times.iter().filter(|&&t| t > now && t <= shadow).count();
        let needed_now = head_need.saturating_sub(released_by_shadow);
        let extra = head_avail_now.saturating_sub(needed_now);

        let m = specs[&job.0].requested_hosts as usize;
        let est = specs[&job.0].estimated_runtime;
        let fits = m <= cand_avail_now && (now + est <= shadow || m <= extra);
        if !fits {
            continue;
        }
        let (hosts, borrowed) = take_hosts(platform, ledger, job, m, use_lendable, now);
        debug_assert_eq!(hosts.len(), m);
        let alloc = Allocation {
            job,
            hosts,
            start: now,
            borrowed,
        };
        batch.running.insert(job.0, alloc.clone());
        batch.queue.retain(|&q| q != job);
        allocs.push(alloc);

        // a backfill decision must never delay the reserved start
        let new_start = predicted_start(platform, batch, specs, now, head_need, head_lendable);
        debug_assert!(new_start <= shadow, "backfill delayed the head reservation");
        batch.reservation = Some(Reservation {
            job: head,
            start: new_start.min(shadow),
        });
    }
    allocs
}

/// Outcome of one host at job completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HostDisposition {
    Freed(HostId),
    /// Lent host whose ownership moved to its borrower.
    Transferred(HostId, JobId),
    /// Borrowed host returned to the lendable pool of its running owner.
    Relent(HostId),
}

/// Complete a running job: unlent hosts return to the free pool, lent
/// hosts transfer to their borrowers, borrowed hosts go back to their
/// owners' lendable pool (or free if the owner already completed).
pub fn complete(
    batch: &mut BatchState,
    platform: &mut Platform,
    ledger: &mut LendLedger,
    job: JobId,
    now: SimTime,
) -> Result<Vec<HostDisposition>, SimError> {
    let alloc = batch
        .running
        .remove(&job.0)
        .ok_or(SimError::UnknownJob(job.0))?;
    batch.completed.insert(job.0);
    let dispositions = rca::reconcile_ownership(platform, ledger, &mut batch.running, &alloc, now)?;
    Ok(dispositions)
}
