//! Standard workload format (SWF) ingestion and emission.
//!
//! SWF records are 18 whitespace-separated integer fields, one job per
//! line; lines starting with ';' are comments. Only the fields the
//! simulator uses are interpreted, the rest are ignored.

use std::io::{BufRead, Write};

use crate::als::ChunkPolicyKind;
use crate::error::SimError;
use crate::time::{SimDuration, SimTime};
use crate::workload::{JobSet, JobSpec, ProfileKind, TaskProfile};
use crate::JobId;

/// Fields consumed: 1 job id, 2 submit time, 4 run time (calibration
/// target), 8 requested processors, 9 requested time (estimate; falls
/// back to run time when absent).
pub fn read_swf<R: BufRead>(
    reader: R,
    tasks_per_host: u32,
    default_policy: ChunkPolicyKind,
    seed: u64,
) -> Result<JobSet, SimError> {
    let mut jobs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 18 {
            return Err(SimError::SwfParse {
                line: lineno,
                message: format!("expected 18 fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<i64, SimError> {
            fields[idx]
                .parse::<f64>()
                .map(|v| v as i64)
                .map_err(|_| SimError::SwfParse {
                    line: lineno,
                    message: format!("field {} is not numeric: {:?}", idx + 1, fields[idx]),
                })
        };
        let job_id = num(0)?;
        let submit = num(1)?;
        let run_time = num(3)?;
        let req_procs = num(7)?;
        let req_time = num(8)?;
        if req_procs <= 0 {
            return Err(SimError::SwfParse {
                line: lineno,
                message: format!("non-positive processor request {req_procs}"),
            });
        }
        if run_time <= 0 {
            return Err(SimError::SwfParse {
                line: lineno,
                message: format!("non-positive run time {run_time}"),
            });
        }
        let hosts = req_procs as u32;
        let target = run_time as f64;
        let estimate = if req_time > 0 {
            req_time as f64
        } else {
            target
        };
        let task_count = hosts as u64 * tasks_per_host as u64;
        jobs.push(JobSpec {
            id: JobId(job_id as u64),
            category: None,
            requested_hosts: hosts,
            task_count,
            task_profile: TaskProfile {
                kind: ProfileKind::Balanced,
                mean_task_seconds: target / tasks_per_host as f64,
                cv: 0.0,
                region_cv: 0.0,
                regions: hosts,
            },
            arrival_time: SimTime::from_secs(submit.max(0) as f64),
            estimated_runtime: SimDuration::from_secs(estimate),
            target_runtime: SimDuration::from_secs(target),
            als_policy: default_policy,
            seed,
        });
    }
    jobs.sort_by_key(|j| (j.arrival_time, j.id.0));
    Ok(JobSet {
        jobs,
        workload_name: "swf".into(),
    })
}

/// Emit a job set as SWF. Categories are encoded in the queue-number
/// field (1-based index into the ESP category table, 0 when absent) and
/// documented in header comments.
pub fn write_swf<W: Write>(writer: &mut W, jobset: &JobSet) -> Result<(), SimError> {
    writeln!(writer, "; Workload: {}", jobset.workload_name)?;
    writeln!(
        writer,
        "; Fields: standard workload format v2, 18 fields per record"
    )?;
    writeln!(writer, "; Queue number encodes the job category:")?;
    for (i, (c, hosts, count)) in crate::workload::ESP_CATEGORIES.iter().enumerate() {
        writeln!(
            writer,
            ";   queue {} = category {} ({} hosts, {} jobs at scale 256)",
            i + 1,
            c,
            hosts,
            count
        )?;
    }
    for j in &jobset.jobs {
        let queue = j
            .category
            .and_then(|c| {
                crate::workload::ESP_CATEGORIES
                    .iter()
                    .position(|&(cc, _, _)| cc == c)
            })
            .map(|i| i as i64 + 1)
            .unwrap_or(0);
        writeln!(
            writer,
            "{} {} -1 {} {} -1 -1 {} {} -1 -1 -1 -1 -1 {} -1 -1 -1",
            j.id.0,
            j.arrival_time.as_secs().round() as u64,
            j.target_runtime.as_secs().round().max(1.0) as u64,
            j.requested_hosts,
            j.requested_hosts,
            j.estimated_runtime.as_secs().round().max(1.0) as u64,
            queue,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<JobSet, SimError> {
        read_swf(Cursor::new(s), 512, ChunkPolicyKind::Gss, 1)
    }

    #[test]
    fn field_mapping() {
        let js = parse("1 0 0 100 8 -1 -1 8 3600 -1 1 -1 -1 -1 -1 -1 -1 -1\n").unwrap();
        assert_eq!(js.jobs.len(), 1);
        let j = &js.jobs[0];
        assert_eq!(j.id.0, 1);
        assert_eq!(j.arrival_time, SimTime::ZERO);
        assert_eq!(j.requested_hosts, 8);
        assert_eq!(j.estimated_runtime, SimDuration::from_secs(3600.0));
        assert_eq!(j.target_runtime, SimDuration::from_secs(100.0));
    }

    #[test]
    fn three_records_with_comments() {
        let s = "; comment\n\
                 1 0 0 100 4 -1 -1 4 200 -1 1 -1 -1 -1 -1 -1 -1 -1\n\
                 2 10 0 100 4 -1 -1 4 200 -1 1 -1 -1 -1 -1 -1 -1 -1\n\
                 3 20 0 100 4 -1 -1 4 200 -1 1 -1 -1 -1 -1 -1 -1 -1\n";
        let js = parse(s).unwrap();
        assert_eq!(js.jobs.len(), 3);
    }

    #[test]
    fn negative_processor_request_names_line() {
        let s = "; header\n1 0 0 100 4 -1 -1 -1 200 -1 1 -1 -1 -1 -1 -1 -1 -1\n";
        match parse(s) {
            Err(SimError::SwfParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_rejected() {
        assert!(parse("1 0 0 100 4\n").is_err());
    }

    #[test]
    fn esp_round_trips_counts_through_swf() {
        let js = crate::workload::generate_esp(
            crate::workload::ProfileKind::Balanced,
            1,
            &crate::workload::EspParams::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_swf(&mut buf, &js).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.jobs.len(), 230);
        assert_eq!(
            back.jobs
                .iter()
                .filter(|j| j.requested_hosts == 256)
                .count(),
            2
        );
    }
}
