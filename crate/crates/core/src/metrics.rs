//! Evaluation metrics derived from the trace: system utilization,
//! makespan, utilization time series, and per-job imbalance ratios.
//!
//! System utilization is busy host-time over P * T_batch, in percent,
//! where T_batch runs from the first job start to the last completion.
//! Only compute intervals count as busy time; scheduling-message overhead
//! is reported separately.

use std::collections::BTreeMap;

use crate::error::SimError;
use crate::trace::{RecordKind, Trace};
use crate::JobId;

#[derive(Clone, Debug)]
pub struct SystemMetrics {
    pub su_percent: f64,
    pub makespan_seconds: f64,
    pub t_first_start: f64,
    pub t_last_complete: f64,
    /// Busy (compute) seconds per host, indexed by host id.
    pub per_host_busy: Vec<f64>,
    /// Total scheduling-overhead seconds across hosts.
    pub overhead_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct JobStats {
    pub job: JobId,
    /// Latest worker finish, seconds from job start.
    pub max_finish: f64,
    /// Mean worker finish, seconds from job start.
    pub mean_finish: f64,
    pub max_mean_ratio: f64,
    pub work_executed_seconds: f64,
    pub workers: usize,
}

fn batch_window(trace: &Trace) -> Result<(u64, u64), SimError> {
    let mut first = u64::MAX;
    let mut last = 0u64;
    for r in trace.records() {
        if r.kind == RecordKind::Compute {
            first = first.min(r.start.as_nanos());
            last = last.max(r.end.as_nanos());
        }
    }
    if first == u64::MAX {
        return Err(SimError::Metrics("empty trace".into()));
    }
    Ok((first, last))
}

/// Per-host busy nanoseconds (compute intervals only).
fn busy_nanos(trace: &Trace, hosts: usize) -> Vec<u64> {
    let mut busy = vec![0u64; hosts];
    for r in trace.records() {
        if r.kind == RecordKind::Compute {
            busy[r.host.0 as usize] += r.end.as_nanos() - r.start.as_nanos();
        }
    }
    busy
}

/// SU = sum_k T_k / (P * T_batch) * 100.
pub fn system_utilization(trace: &Trace, hosts: usize) -> Result<f64, SimError> {
    let (first, last) = batch_window(trace)?;
    let t_batch = (last - first) as f64;
    if t_batch == 0.0 {
        return Err(SimError::Metrics("zero-length batch window".into()));
    }
    let total: u64 = busy_nanos(trace, hosts).iter().sum();
    Ok(total as f64 / (hosts as f64 * t_batch) * 100.0)
}

pub fn system_metrics(trace: &Trace, hosts: usize) -> Result<SystemMetrics, SimError> {
    let (first, last) = batch_window(trace)?;
    let busy = busy_nanos(trace, hosts);
    let overhead: u64 = trace
        .records()
        .iter()
        .filter(|r| r.kind == RecordKind::SchedOverhead)
        .map(|r| r.end.as_nanos() - r.start.as_nanos())
        .sum();
    Ok(SystemMetrics {
        su_percent: system_utilization(trace, hosts)?,
        makespan_seconds: (last - first) as f64 / 1e9,
        t_first_start: first as f64 / 1e9,
        t_last_complete: last as f64 / 1e9,
        per_host_busy: busy.iter().map(|&b| b as f64 / 1e9).collect(),
        overhead_seconds: overhead as f64 / 1e9,
    })
}

/// Makespan T_batch = T_j - T_i in seconds.
pub fn makespan(trace: &Trace) -> Result<f64, SimError> {
    let (first, last) = batch_window(trace)?;
    Ok((last - first) as f64 / 1e9)
}

/// Utilization per bin of `bin_seconds`, instantaneous mode: busy
/// host-time in the bin over P * bin width, in percent. Bins start at
/// T_i; the last bin is clipped to T_j so the work-weighted average of
/// the series equals the Eq.-style system utilization.
pub fn utilization_timeseries(
    trace: &Trace,
    hosts: usize,
    bin_seconds: f64,
) -> Result<Vec<(f64, f64)>, SimError> {
    if bin_seconds.is_nan() || bin_seconds <= 0.0 {
        return Err(SimError::Metrics("bin width must be positive".into()));
    }
    let (first, last) = batch_window(trace)?;
    let bin = (bin_seconds * 1e9).round() as u64;
    let nbins = ((last - first) as f64 / bin as f64).ceil().max(1.0) as usize;
    let mut busy = vec![0u64; nbins];
    for r in trace.records() {
        if r.kind != RecordKind::Compute || r.end == r.start {
            continue;
        }
        let (s, e) = (r.start.as_nanos().max(first), r.end.as_nanos());
        let mut b = ((s - first) / bin) as usize;
        let mut cursor = s;
        while cursor < e {
            let bin_end = first + (b as u64 + 1) * bin;
            let seg_end = e.min(bin_end);
            busy[b] += seg_end - cursor;
            cursor = seg_end;
            b += 1;
        }
    }
    let mut series = Vec::with_capacity(nbins);
    for (i, &bn) in busy.iter().enumerate() {
        let bin_start = first + i as u64 * bin;
        let width = bin.min(last - bin_start) as f64;
        let pct = bn as f64 / (hosts as f64 * width) * 100.0;
        series.push((bin_start as f64 / 1e9, pct));
    }
    Ok(series)
}

/// Cumulative utilization at each bin boundary: busy host-time in
/// [T_i, t) over P * (t - T_i).
pub fn utilization_cumulative(
    trace: &Trace,
    hosts: usize,
    bin_seconds: f64,
) -> Result<Vec<(f64, f64)>, SimError> {
    let inst = utilization_timeseries(trace, hosts, bin_seconds)?;
    let (first, last) = batch_window(trace)?;
    let bin = (bin_seconds * 1e9).round() as u64;
    let mut out = Vec::with_capacity(inst.len());
    let mut acc = 0.0; // busy host-nanos so far
    for (i, (t, pct)) in inst.iter().enumerate() {
        let bin_start = first + i as u64 * bin;
        let width = bin.min(last - bin_start) as f64;
        acc += pct / 100.0 * hosts as f64 * width;
        let elapsed = (bin_start as f64 + width) - first as f64;
        out.push((*t, acc / (hosts as f64 * elapsed) * 100.0));
    }
    Ok(out)
}

/// Per-job imbalance: latest over mean worker finish time, measured from
/// the job's first compute start. Workers are hosts that executed at
/// least one chunk for the job.
pub fn job_stats(trace: &Trace) -> Vec<JobStats> {
    // job -> host -> (first start, last end, busy)
    let mut per_job: BTreeMap<u64, BTreeMap<u32, (u64, u64, u64)>> = BTreeMap::new();
    for r in trace.records() {
        if r.kind != RecordKind::Compute {
            continue;
        }
        let e = per_job
            .entry(r.job.0)
            .or_default()
            .entry(r.host.0)
            .or_insert((u64::MAX, 0, 0));
        e.0 = e.0.min(r.start.as_nanos());
        e.1 = e.1.max(r.end.as_nanos());
        e.2 += r.end.as_nanos() - r.start.as_nanos();
    }
    let mut out = Vec::new();
    for (job, hosts) in per_job {
        let start = hosts.values().map(|v| v.0).min().unwrap();
        let finishes: Vec<f64> = hosts.values().map(|v| (v.1 - start) as f64 / 1e9).collect();
        let max = finishes.iter().cloned().fold(0.0, f64::max);
        let mean = finishes.iter().sum::<f64>() / finishes.len() as f64;
        let work: u64 = hosts.values().map(|v| v.2).sum();
        out.push(JobStats {
            job: JobId(job),
            max_finish: max,
            mean_finish: mean,
            max_mean_ratio: if mean > 0.0 { max / mean } else { 1.0 },
            work_executed_seconds: work as f64 / 1e9,
            workers: hosts.len(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::HostId;
    use crate::time::SimTime;
    use crate::trace::TraceRecord;

    fn rec(host: u32, job: u64, start_s: f64, end_s: f64) -> TraceRecord {
        TraceRecord {
            host: HostId(host),
            job: JobId(job),
            chunk: 0,
            kind: RecordKind::Compute,
            start: SimTime::from_secs(start_s),
            end: SimTime::from_secs(end_s),
            borrowed: false,
        }
    }

    fn trace_of(recs: &[TraceRecord]) -> Trace {
        let mut t = Trace::new();
        for &r in recs {
            t.record(r).unwrap();
        }
        t
    }

    #[test]
    fn su_direct_arithmetic() {
        // P=2, T_batch=10, T_0=10, T_1=5 -> 75%
        let t = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 5.0)]);
        assert!((system_utilization(&t, 2).unwrap() - 75.0).abs() < 1e-9);
    }

    #[test]
    fn su_full_load_is_100() {
        let t = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 10.0)]);
        assert!((system_utilization(&t, 2).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn su_empty_trace_errors() {
        assert!(system_utilization(&Trace::new(), 2).is_err());
        assert!(makespan(&Trace::new()).is_err());
    }

    #[test]
    fn su_invariant_under_host_relabel() {
        let a = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 5.0)]);
        let b = trace_of(&[rec(1, 1, 0.0, 10.0), rec(0, 1, 0.0, 5.0)]);
        assert_eq!(
            system_utilization(&a, 2).unwrap(),
            system_utilization(&b, 2).unwrap()
        );
    }

    #[test]
    fn trailing_idle_decreases_su() {
        let a = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 10.0)]);
        let b = trace_of(&[
            rec(0, 1, 0.0, 10.0),
            rec(1, 1, 0.0, 10.0),
            rec(0, 2, 11.0, 12.0),
        ]);
        assert!(system_utilization(&b, 2).unwrap() < system_utilization(&a, 2).unwrap());
    }

    #[test]
    fn makespan_single_job() {
        let t = trace_of(&[rec(0, 1, 0.0, 100.0)]);
        assert_eq!(makespan(&t).unwrap(), 100.0);
    }

    #[test]
    fn timeseries_flat_full_load() {
        let t = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 10.0)]);
        let s = utilization_timeseries(&t, 2, 1.0).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|&(_, u)| (u - 100.0).abs() < 1e-9));
    }

    #[test]
    fn timeseries_half_hosts_busy() {
        let t = trace_of(&[
            rec(0, 1, 0.0, 10.0),
            rec(1, 1, 0.0, 0.0),
            rec(1, 1, 9.5, 10.0),
        ]);
        // host 1 busy only in the last half-bin; check the first bins are 50%
        let s = utilization_timeseries(&t, 2, 1.0).unwrap();
        assert!((s[0].1 - 50.0).abs() < 1e-9);
    }

    #[test]
    fn timeseries_weighted_average_matches_su() {
        // irregular intervals, bin that does not divide the window
        let t = trace_of(&[
            rec(0, 1, 0.0, 3.3),
            rec(0, 2, 4.1, 7.9),
            rec(1, 1, 0.5, 6.2),
            rec(2, 3, 2.0, 7.0),
        ]);
        let hosts = 3;
        let su = system_utilization(&t, hosts).unwrap();
        let s = utilization_timeseries(&t, hosts, 0.7).unwrap();
        let (first, last) = (0.0f64, 7.9f64);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (i, (t0, u)) in s.iter().enumerate() {
            let width = (0.7f64).min(last - (first + i as f64 * 0.7));
            assert!((t0 - (first + i as f64 * 0.7)).abs() < 1e-6);
            acc += u * width;
            wsum += width;
        }
        let avg = acc / wsum;
        assert!((avg - su).abs() / su < 1e-6, "avg {avg} su {su}");
    }

    #[test]
    fn cumulative_final_value_is_su() {
        let t = trace_of(&[rec(0, 1, 0.0, 3.0), rec(1, 1, 0.0, 6.0)]);
        let su = system_utilization(&t, 2).unwrap();
        let c = utilization_cumulative(&t, 2, 1.0).unwrap();
        let last = c.last().unwrap().1;
        assert!((last - su).abs() < 1e-9);
    }

    #[test]
    fn ratio_balanced_workers() {
        let t = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 10.0)]);
        let s = job_stats(&t);
        assert_eq!(s[0].max_mean_ratio, 1.0);
    }

    #[test]
    fn ratio_two_workers_arithmetic() {
        // workers finishing at 10 and 20 from start 0 -> 20/15
        let t = trace_of(&[rec(0, 1, 0.0, 10.0), rec(1, 1, 0.0, 20.0)]);
        let s = job_stats(&t);
        assert!((s[0].max_mean_ratio - 20.0 / 15.0).abs() < 1e-12);
    }
}
