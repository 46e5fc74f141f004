//! Resource coordination between the batch scheduler and running
//! applications: idle-host reporting, lending, ownership reconciliation at
//! job completion, and the optional host-exclusion negotiation.

use std::collections::BTreeMap;

use crate::als::AppSchedState;
use crate::bls::{Allocation, HostDisposition};
use crate::error::SimError;
use crate::platform::{HostId, Platform};
use crate::time::{SimDuration, SimTime};
use crate::JobId;

/// One lent or lendable host.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LendEntry {
    pub owner: JobId,
    pub borrower: Option<JobId>,
    pub since: SimTime,
}

/// Registry of hosts currently offered or lent out.
#[derive(Clone, Debug, Default)]
pub struct LendLedger {
    entries: BTreeMap<u32, LendEntry>,
}

impl LendLedger {
    pub fn new() -> LendLedger {
        LendLedger::default()
    }

    pub fn get(&self, host: HostId) -> Option<&LendEntry> {
        self.entries.get(&host.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, host: HostId, entry: LendEntry) {
        self.entries.insert(host.0, entry);
    }

    pub fn remove(&mut self, host: HostId) -> Option<LendEntry> {
        self.entries.remove(&host.0)
    }
}

/// An application reports one of its hosts as idle, making it lendable.
/// Returns `true` when the host newly entered the lendable pool; repeated
/// reports are no-ops. Reporting a busy host, or a host the job does not
/// own, is a protocol violation.
pub fn report_idle(
    platform: &mut Platform,
    ledger: &mut LendLedger,
    job: JobId,
    host: HostId,
    now: SimTime,
) -> Result<bool, SimError> {
    let h = platform.host_mut(host);
    if h.owner != Some(job) {
        return Err(SimError::Config(format!(
            "job {} reported host {} it does not own",
            job.0, host.0
        )));
    }
    if h.busy_until.is_some_and(|t| t > now) {
        return Err(SimError::Config(format!(
            "job {} reported busy host {} as idle",
            job.0, host.0
        )));
    }
    if h.lendable || h.borrower.is_some() {
        return Ok(false);
    }
    h.lendable = true;
    ledger.insert(
        host,
        LendEntry {
            owner: job,
            borrower: None,
            since: now,
        },
    );
    Ok(true)
}

/// Grant up to `needed` lendable hosts (ascending id) to `borrower`.
/// A disabled coordination layer always grants the empty set; a partial
/// pool grants what exists.
pub fn grant_lend(
    platform: &mut Platform,
    ledger: &mut LendLedger,
    borrower: JobId,
    needed: usize,
    enabled: bool,
    now: SimTime,
) -> Vec<HostId> {
    if !enabled || needed == 0 {
        return Vec::new();
    }
    let pool = platform.lendable_hosts();
    let granted: Vec<HostId> = pool.into_iter().take(needed).collect();
    for &host in &granted {
        let h = platform.host_mut(host);
        h.borrower = Some(borrower);
        h.lendable = false;
        match ledger.entries.get_mut(&host.0) {
            Some(e) => {
                e.borrower = Some(borrower);
                e.since = now;
            }
            None => {
                // lendable host missing from the ledger: repair rather
                // than abort, the platform flag is authoritative
                let owner = platform
                    .host(host)
                    .owner
                    .expect("lendable host has an owner");
                ledger.insert(
                    host,
                    LendEntry {
                        owner,
                        borrower: Some(borrower),
                        since: now,
                    },
                );
            }
        }
    }
    granted
}

/// Settle host ownership when a job completes.
///
/// - hosts the job owned outright return to the free pool;
/// - hosts it still had on offer leave the lendable pool and free up;
/// - hosts it had lent out transfer to their borrowers for the remainder
///   of the borrowers' runs;
/// - hosts it had borrowed return to the lendable pool of their (still
///   running) owners, or free up if the owner is already gone.
pub fn reconcile_ownership(
    platform: &mut Platform,
    ledger: &mut LendLedger,
    running: &mut BTreeMap<u64, Allocation>,
    alloc: &Allocation,
    now: SimTime,
) -> Result<Vec<HostDisposition>, SimError> {
    let mut out = Vec::with_capacity(alloc.hosts.len());
    for &host in &alloc.hosts {
        let h = platform.host_mut(host);
        if alloc.borrowed.contains(&host) {
            // we were the borrower
            h.borrower = None;
            match h.owner {
                Some(owner) if running.contains_key(&owner.0) => {
                    h.lendable = true;
                    match ledger.entries.get_mut(&host.0) {
                        Some(e) => {
                            e.borrower = None;
                            e.since = now;
                        }
                        None => {
                            return Err(SimError::Config(format!(
                                "borrowed host {} missing from lend ledger",
                                host.0
                            )))
                        }
                    }
                    out.push(HostDisposition::Relent(host));
                }
                _ => {
                    // owner finished first (its lent hosts transferred to
                    // us) or vanished: release outright
                    h.owner = None;
                    h.lendable = false;
                    ledger.remove(host);
                    out.push(HostDisposition::Freed(host));
                }
            }
        } else {
            debug_assert_eq!(h.owner, Some(alloc.job));
            if let Some(borrower) = h.borrower {
                // lent out and still in use: the borrower becomes owner
                h.owner = Some(borrower);
                h.borrower = None;
                ledger.remove(host);
                if let Some(b_alloc) = running.get_mut(&borrower.0) {
                    b_alloc.borrowed.remove(&host);
                } else {
                    return Err(SimError::Config(format!(
                        "host {} lent to job {} which is not running",
                        host.0, borrower.0
                    )));
                }
                out.push(HostDisposition::Transferred(host, borrower));
            } else {
                h.owner = None;
                h.lendable = false;
                ledger.remove(host);
                out.push(HostDisposition::Freed(host));
            }
        }
    }
    Ok(out)
}

/// Exclusion request sent from the batch level to a running application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExclusionRequest {
    pub target: JobId,
    pub hosts_wanted: u32,
    pub duration: SimDuration,
}

/// Validate an exclusion request before it is sent. A zero-host request
/// is silently dropped; a non-positive duration is an error.
pub fn request_exclusion(
    target: JobId,
    target_running: bool,
    hosts_wanted: u32,
    duration: SimDuration,
) -> Result<Option<ExclusionRequest>, SimError> {
    if duration.is_zero() {
        return Err(SimError::Config(
            "exclusion duration must be positive".into(),
        ));
    }
    if !target_running {
        return Err(SimError::Config(format!(
            "exclusion target job {} is not running",
            target.0
        )));
    }
    if hosts_wanted == 0 {
        return Ok(None);
    }
    Ok(Some(ExclusionRequest {
        target,
        hosts_wanted,
        duration,
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExclusionResponse {
    pub target: JobId,
    pub accepted: bool,
    /// Hosts the application agreed to give up (empty on rejection).
    pub hosts: Vec<HostId>,
    /// Granted hosts that were already idle and can be handed over now;
    /// the rest follow when their running chunks complete.
    pub idle_now: Vec<HostId>,
}

/// Application-side decision on an exclusion request.
///
/// Idle eligible workers are surrendered at no cost. A shortfall is
/// covered by busy workers only if the projected completion-time
/// inflation k/(p - k) stays within `accept_threshold` (p = busy workers
/// still contributing). Applications with no unfinished work accept
/// unconditionally. Statically partitioned workers that have not yet
/// received their chunk are never eligible.
pub fn decide_exclusion(
    app: &mut AppSchedState,
    platform: &Platform,
    req: &ExclusionRequest,
    accept_threshold: f64,
) -> ExclusionResponse {
    let k = req.hosts_wanted as usize;
    let reject = ExclusionResponse {
        target: req.target,
        accepted: false,
        hosts: Vec::new(),
        idle_now: Vec::new(),
    };
    let mut idle: Vec<HostId> = Vec::new();
    let mut busy: Vec<HostId> = Vec::new();
    for &w in &app.workers {
        if !app.exclusion_eligible(w) {
            continue;
        }
        // only hosts this app still owns can be excluded
        if platform.host(w).owner != Some(app.job) || platform.host(w).borrower.is_some() {
            continue;
        }
        if app.busy.contains(&w) {
            busy.push(w);
        } else {
            idle.push(w);
        }
    }
    if idle.len() + busy.len() < k {
        return reject;
    }
    let shortfall = k.saturating_sub(idle.len());
    if shortfall > 0 && app.remaining > 0 {
        let p = busy.len();
        if p <= shortfall {
            return reject;
        }
        let inflation = shortfall as f64 / (p - shortfall) as f64;
        if inflation > accept_threshold {
            return reject;
        }
    }
    let mut hosts: Vec<HostId> = idle.iter().take(k).copied().collect();
    let idle_now = hosts.clone();
    hosts.extend(busy.iter().take(k - hosts.len()).copied());
    for &h in &hosts {
        app.excluded.insert(h);
    }
    ExclusionResponse {
        target: req.target,
        accepted: true,
        hosts,
        idle_now,
    }
}
