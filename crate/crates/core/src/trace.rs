//! Interval trace of the simulation and its exports.
//!
//! Every chunk execution and scheduling-message overhead becomes one
//! `TraceRecord`. Idle time is not stored; it is the gap between records
//! on a host's lane. Two exports are provided: a Chrome trace-event
//! timeline (complete 'X' events, one lane per host) and a line-delimited
//! TSV of the raw records.

use std::io::{BufRead, Write};

use crate::error::SimError;
use crate::platform::HostId;
use crate::time::SimTime;
use crate::JobId;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RecordKind {
    Compute,
    SchedOverhead,
    IdleMarker,
}

impl RecordKind {
    fn name(self) -> &'static str {
        match self {
            RecordKind::Compute => "compute",
            RecordKind::SchedOverhead => "sched_overhead",
            RecordKind::IdleMarker => "idle",
        }
    }

    fn parse(s: &str) -> Option<RecordKind> {
        match s {
            "compute" => Some(RecordKind::Compute),
            "sched_overhead" => Some(RecordKind::SchedOverhead),
            "idle" => Some(RecordKind::IdleMarker),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TraceRecord {
    pub host: HostId,
    pub job: JobId,
    pub chunk: u64,
    pub kind: RecordKind,
    pub start: SimTime,
    pub end: SimTime,
    /// Host was borrowed (lent by its owner) while executing this record.
    pub borrowed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn record(&mut self, rec: TraceRecord) -> Result<(), SimError> {
        if rec.end < rec.start {
            return Err(SimError::Trace(format!(
                "record on host {} ends before it starts",
                rec.host.0
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records sorted by (host, start), the export order.
    pub fn sorted(&self) -> Vec<TraceRecord> {
        let mut v = self.records.clone();
        v.sort_by_key(|r| (r.host, r.start, r.end, r.job.0, r.chunk));
        v
    }

    /// Check that no two records on the same host overlap in time.
    pub fn validate(&self) -> Result<(), SimError> {
        let sorted = self.sorted();
        for w in sorted.windows(2) {
            if w[0].host == w[1].host && w[1].start < w[0].end {
                return Err(SimError::Trace(format!(
                    "overlapping records on host {}: [{:?}, {:?}) and [{:?}, {:?})",
                    w[0].host.0, w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(())
    }

    /// Chrome trace-event timeline: one complete event per record, hosts
    /// as thread lanes, jobs as event names. Zero-length records are
    /// omitted from the visual export.
    pub fn export_timeline<W: Write>(&self, w: &mut W, run_id: &str) -> Result<(), SimError> {
        self.validate()?;
        writeln!(w, "[")?;
        let sorted = self.sorted();
        let mut first = true;
        for r in &sorted {
            if r.end == r.start {
                continue;
            }
            if !first {
                writeln!(w, ",")?;
            }
            first = false;
            let name = match r.kind {
                RecordKind::Compute => format!("J{}", r.job.0),
                RecordKind::SchedOverhead => format!("J{}-sched", r.job.0),
                RecordKind::IdleMarker => "idle".to_string(),
            };
            let ts = micros(r.start.as_nanos());
            let dur = micros(r.end.as_nanos() - r.start.as_nanos());
            write!(
                w,
                "{{\"name\":\"{}\",\"ph\":\"X\",\"ts\":{},\"dur\":{},\"pid\":\"{}\",\"tid\":{},\"args\":{{\"job\":{},\"chunk\":{},\"kind\":\"{}\",\"borrowed\":{}}}}}",
                name, ts, dur, run_id, r.host.0, r.job.0, r.chunk, r.kind.name(), r.borrowed
            )?;
        }
        writeln!(w)?;
        writeln!(w, "]")?;
        Ok(())
    }

    /// One tab-separated record per line, header first. Round-trips
    /// through [`read_events`].
    pub fn export_events<W: Write>(&self, w: &mut W) -> Result<(), SimError> {
        writeln!(w, "host\tjob\tchunk\tkind\tstart_ns\tend_ns\tborrowed")?;
        for r in &self.sorted() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.host.0,
                r.job.0,
                r.chunk,
                r.kind.name(),
                r.start.as_nanos(),
                r.end.as_nanos(),
                r.borrowed
            )?;
        }
        Ok(())
    }
}

/// Nanoseconds rendered as decimal microseconds with exact precision.
fn micros(ns: u64) -> String {
    if ns.is_multiple_of(1000) {
        format!("{}", ns / 1000)
    } else {
        format!("{}.{:03}", ns / 1000, ns % 1000)
    }
}

/// Rebuild a trace from the output of [`Trace::export_events`].
pub fn read_events<R: BufRead>(reader: R) -> Result<Trace, SimError> {
    let mut trace = Trace::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| SimError::Trace(format!("events line {}: {}", lineno + 1, m));
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        trace.record(TraceRecord {
            host: HostId(f[0].parse().map_err(|_| bad("bad host"))?),
            job: JobId(f[1].parse().map_err(|_| bad("bad job"))?),
            chunk: f[2].parse().map_err(|_| bad("bad chunk"))?,
            kind: RecordKind::parse(f[3]).ok_or_else(|| bad("bad kind"))?,
            start: SimTime(f[4].parse().map_err(|_| bad("bad start"))?),
            end: SimTime(f[5].parse().map_err(|_| bad("bad end"))?),
            borrowed: f[6].parse().map_err(|_| bad("bad borrowed"))?,
        })?;
    }
    Ok(trace)
}
