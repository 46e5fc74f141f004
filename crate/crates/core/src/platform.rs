//! Simulated cluster: hosts, ownership states, and a fully connected
//! network used to cost scheduling messages.

use crate::error::SimError;
use crate::time::{SimDuration, SimTime};
use crate::JobId;

/// 0-based host index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct HostId(pub u32);

/// A simulated compute resource.
///
/// Ownership follows the state machine
/// free -> owned -> (owned + lent)* -> free.
#[derive(Clone, Debug, Default)]
pub struct Host {
    /// Job holding the allocation that contains this host.
    pub owner: Option<JobId>,
    /// Job currently borrowing the host through the lending protocol.
    pub borrower: Option<JobId>,
    /// Host is in the lendable pool (reported idle, not yet borrowed).
    pub lendable: bool,
    /// End of the chunk currently executing, if any.
    pub busy_until: Option<SimTime>,
}

impl Host {
    pub fn is_free(&self) -> bool {
        self.owner.is_none() && self.borrower.is_none()
    }

    /// The job whose chunks this host currently executes for scheduling
    /// purposes: the borrower when lent, otherwise the owner.
    pub fn serving(&self) -> Option<JobId> {
        self.borrower.or(self.owner)
    }
}

#[derive(Clone, Debug)]
pub struct Platform {
    pub hosts: Vec<Host>,
    /// Bits per second on every link.
    pub link_bandwidth: f64,
    /// Seconds of latency on every link.
    pub link_latency: f64,
}

impl Platform {
    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    /// Time to deliver a control message of `message_bytes` over one link.
    pub fn transfer_time(&self, message_bytes: u64) -> SimDuration {
        SimDuration::from_secs(
            self.link_latency + (message_bytes as f64 * 8.0) / self.link_bandwidth,
        )
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.0 as usize]
    }

    pub fn host_mut(&mut self, id: HostId) -> &mut Host {
        &mut self.hosts[id.0 as usize]
    }

    /// Free hosts in ascending id order.
    pub fn free_hosts(&self) -> Vec<HostId> {
        self.hosts
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_free())
            .map(|(i, _)| HostId(i as u32))
            .collect()
    }

    /// Lendable hosts in ascending id order.
    pub fn lendable_hosts(&self) -> Vec<HostId> {
        self.hosts
            .iter()
            .enumerate()
            .filter(|(_, h)| h.lendable && h.borrower.is_none())
            .map(|(i, _)| HostId(i as u32))
            .collect()
    }
}

pub fn build_platform(
    host_count: usize,
    bandwidth_bps: f64,
    latency_s: f64,
) -> Result<Platform, SimError> {
    if host_count == 0 {
        return Err(SimError::Config("platform needs at least one host".into()));
    }
    if bandwidth_bps.is_nan() || bandwidth_bps <= 0.0 {
        return Err(SimError::Config("link bandwidth must be positive".into()));
    }
    if latency_s.is_nan() || latency_s < 0.0 {
        return Err(SimError::Config("link latency must be non-negative".into()));
    }
    Ok(Platform {
        hosts: vec![Host::default(); host_count],
        link_bandwidth: bandwidth_bps,
        link_latency: latency_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_platform() {
        let p = build_platform(256, 50e9, 500e-9).unwrap();
        assert_eq!(p.host_count(), 256);
        assert!(p.hosts.iter().all(|h| h.is_free()));
    }

    #[test]
    fn degenerate_single_host() {
        let p = build_platform(1, 1e9, 0.0).unwrap();
        assert_eq!(p.host_count(), 1);
        assert_eq!(p.transfer_time(0), SimDuration::ZERO);
    }

    #[test]
    fn desk_scale_platform() {
        let p = build_platform(4, 50e9, 500e-9).unwrap();
        assert_eq!(p.host_count(), 4);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_platform(0, 50e9, 0.0).is_err());
        assert!(build_platform(4, 0.0, 0.0).is_err());
        assert!(build_platform(4, -1.0, 0.0).is_err());
    }

    #[test]
    fn transfer_time_latency_only() {
        let p = build_platform(4, 50e9, 500e-9).unwrap();
        assert_eq!(p.transfer_time(0).as_nanos(), 500);
    }

    #[test]
    fn transfer_time_large_message() {
        let p = build_platform(4, 50e9, 500e-9).unwrap();
        // 50e9 bits at 50 Gbps = 1 s, plus latency.
        let bytes = 50_000_000_000u64 / 8;
        assert_eq!(p.transfer_time(bytes).as_nanos(), 1_000_000_500);
    }

    #[test]
    fn transfer_time_control_message() {
        // Oracle: latency + 8*bytes/bandwidth = 500e-9 + 512/50e9 s = 510.24 ns.
        let expected: f64 = 500e-9 + (64.0 * 8.0) / 50e9;
        let p = build_platform(4, 50e9, 500e-9).unwrap();
        assert_eq!(
            p.transfer_time(64).as_nanos(),
            (expected * 1e9).round() as u64
        );
        assert_eq!(p.transfer_time(64).as_nanos(), 510);
    }
}
