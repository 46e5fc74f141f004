//! Factorial experiment runner: workload x policy x coordination x seed.
//!
//! Every cell is one deterministic simulation. Each cell directory gets a
//! single-row metrics CSV, a trace-event timeline, the raw event records,
//! a utilization time series, and per-job imbalance figures; the run
//! directory aggregates all metric rows and an RCA on/off comparison.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mlsched::als::ChunkPolicyKind;
use mlsched::metrics;
use mlsched::platform::build_platform;
use mlsched::swf::read_swf;
use mlsched::workload::{arrival_schedule, generate_esp, JobSet, ProfileKind, ESP_CATEGORIES};
use mlsched::{SimConfig, Simulation, SimulationResult};

use crate::config::{parse_policy, parse_rca, ExperimentConfig};

/// One simulated cell and the numbers the summary needs.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub workload: String,
    pub policy: ChunkPolicyKind,
    pub rca: bool,
    pub seed: u64,
    pub su_percent: f64,
    pub makespan_seconds: f64,
    pub dir: PathBuf,
}

#[derive(Debug)]
pub enum RunError {
    Sim(mlsched::SimError),
    Io(std::io::Error),
    Other(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Sim(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
            RunError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<mlsched::SimError> for RunError {
    fn from(e: mlsched::SimError) -> Self {
        RunError::Sim(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn build_jobset(
    cfg: &ExperimentConfig,
    workload: &str,
    policy: ChunkPolicyKind,
    seed: u64,
) -> Result<JobSet, RunError> {
    let mut js = match cfg.workload.source.as_str() {
        "esp" => {
            let kind = ProfileKind::parse(workload)
                .ok_or_else(|| RunError::Other(format!("unknown profile {workload}")))?;
            let params = cfg.workload.esp_params();
            let mut js = generate_esp(kind, seed, &params)?;
            arrival_schedule(&mut js, params.target_makespan, seed, params.submission_gap)?;
            js
        }
        "swf" => {
            let path = cfg.workload.swf_path.as_ref().expect("validated");
            let file = fs::File::open(path)?;
            read_swf(
                std::io::BufReader::new(file),
                cfg.workload.tasks_per_host,
                policy,
                seed,
            )?
        }
        other => return Err(RunError::Other(format!("unknown workload source {other}"))),
    };
    for j in &mut js.jobs {
        j.als_policy = policy;
    }
    Ok(js)
}

fn sim_config(cfg: &ExperimentConfig, rca: bool, run_id: &str) -> SimConfig {
    SimConfig {
        rca,
        backfill: cfg.scheduling.backfill,
        exclusion: cfg.scheduling.exclusion,
        accept_threshold: cfg.scheduling.accept_threshold,
        message_bytes: cfg.scheduling.message_bytes,
        fac_rule: cfg.fac_rule().expect("validated"),
        lend_to_backfill: cfg.scheduling.lend_to_backfill,
        run_id: run_id.to_string(),
    }
}

/// Run one cell end to end and write its files under `dir`.
pub fn run_cell(
    cfg: &ExperimentConfig,
    workload: &str,
    policy: ChunkPolicyKind,
    rca: bool,
    seed: u64,
    dir: &Path,
) -> Result<CellResult, RunError> {
    run_cell_with_result(cfg, workload, policy, rca, seed, dir).map(|(cell, _)| cell)
}

/// Like [`run_cell`], but also hand back the raw simulation result so
/// callers can inspect the trace and per-job outcomes directly.
pub fn run_cell_with_result(
    cfg: &ExperimentConfig,
    workload: &str,
    policy: ChunkPolicyKind,
    rca: bool,
    seed: u64,
    dir: &Path,
) -> Result<(CellResult, SimulationResult), RunError> {
    let js = build_jobset(cfg, workload, policy, seed)?;
    let platform = build_platform(
        cfg.platform.hosts as usize,
        cfg.platform.link_bandwidth_gbps * 1e9,
        cfg.platform.link_latency_ns * 1e-9,
    )?;
    let cell = cell_name(workload, policy, rca, seed);
    let sim = Simulation::new(platform, &js, sim_config(cfg, rca, &cell))?;
    let result = sim.run()?;
    fs::create_dir_all(dir)?;
    export_cell(cfg, &result, dir, &cell, workload, policy, rca, seed)?;
    let m = metrics::system_metrics(&result.trace, result.host_count)?;
    let summary = CellResult {
        workload: workload.to_string(),
        policy,
        rca,
        seed,
        su_percent: m.su_percent,
        makespan_seconds: m.makespan_seconds,
        dir: dir.to_path_buf(),
    };
    Ok((summary, result))
}

fn cell_name(workload: &str, policy: ChunkPolicyKind, rca: bool, seed: u64) -> String {
    format!(
        "{workload}_{}_rca-{}_seed{seed}",
        policy.name(),
        if rca { "on" } else { "off" }
    )
}

fn metrics_header() -> String {
    let cats: Vec<String> = ESP_CATEGORIES
        .iter()
        .map(|(c, _, _)| format!("mean_turnaround_{c}"))
        .collect();
    format!(
        "workload,policy,backfill,rca,seed,su_percent,makespan_seconds,{}",
        cats.join(",")
    )
}

fn metrics_row(
    cfg: &ExperimentConfig,
    result: &SimulationResult,
    workload: &str,
    policy: ChunkPolicyKind,
    rca: bool,
    seed: u64,
) -> Result<String, RunError> {
    let m = metrics::system_metrics(&result.trace, result.host_count)?;
    // mean turnaround (completion - arrival) per ESP category
    let mut sums: BTreeMap<char, (f64, u32)> = BTreeMap::new();
    for j in &result.jobs {
        if let (Some(c), Some(end)) = (j.category, j.end) {
            let e = sums.entry(c).or_insert((0.0, 0));
            e.0 += end.as_secs() - j.arrival.as_secs();
            e.1 += 1;
        }
    }
    let cats: Vec<String> = ESP_CATEGORIES
        .iter()
        .map(|(c, _, _)| match sums.get(c) {
            Some((s, n)) => format!("{:.3}", s / *n as f64),
            None => String::new(),
        })
        .collect();
    Ok(format!(
        "{workload},{},{},{},{seed},{:.6},{:.6},{}",
        policy.name(),
        cfg.scheduling.backfill,
        if rca { "on" } else { "off" },
        m.su_percent,
        m.makespan_seconds,
        cats.join(",")
    ))
}

#[allow(clippy::too_many_arguments)]
fn export_cell(
    cfg: &ExperimentConfig,
    result: &SimulationResult,
    dir: &Path,
    cell: &str,
    workload: &str,
    policy: ChunkPolicyKind,
    rca: bool,
    seed: u64,
) -> Result<(), RunError> {
    let mut w = BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
    writeln!(w, "{}", metrics_header())?;
    writeln!(
        w,
        "{}",
        metrics_row(cfg, result, workload, policy, rca, seed)?
    )?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("timeline.json"))?);
    result.trace.export_timeline(&mut w, cell)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("events.tsv"))?);
    result.trace.export_events(&mut w)?;
    w.flush()?;

    let series = metrics::utilization_timeseries(
        &result.trace,
        result.host_count,
        cfg.run.utilization_bin_seconds,
    )?;
    let mut w = BufWriter::new(fs::File::create(dir.join("utilization.csv"))?);
    writeln!(w, "time_seconds,utilization_percent")?;
    for (t, pct) in series {
        writeln!(w, "{t:.3},{pct:.6}")?;
    }
    w.flush()?;

    // per-job imbalance, plot-ready (max/mean worker finish per job)
    let stats: BTreeMap<u64, metrics::JobStats> = metrics::job_stats(&result.trace)
        .into_iter()
        .map(|s| (s.job.0, s))
        .collect();
    let mut w = BufWriter::new(fs::File::create(dir.join("jobs.csv"))?);
    writeln!(
        w,
        "job,category,hosts,policy,arrival_seconds,start_seconds,end_seconds,max_mean_ratio,work_core_seconds"
    )?;
    for j in &result.jobs {
        let ratio = stats
            .get(&j.job.0)
            .map(|s| format!("{:.6}", s.max_mean_ratio));
        writeln!(
            w,
            "{},{},{},{},{:.3},{},{},{},{:.3}",
            j.job.0,
            j.category.map(String::from).unwrap_or_default(),
            j.requested_hosts,
            j.policy.name(),
            j.arrival.as_secs(),
            j.start
                .map(|t| format!("{:.3}", t.as_secs()))
                .unwrap_or_default(),
            j.end
                .map(|t| format!("{:.3}", t.as_secs()))
                .unwrap_or_default(),
            ratio.unwrap_or_default(),
            j.total_task_seconds,
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Summary line comparing RCA off/on for one (workload, policy) pair,
/// averaged over seeds.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub workload: String,
    pub policy: ChunkPolicyKind,
    pub su_off: Option<f64>,
    pub su_on: Option<f64>,
    pub makespan_off: Option<f64>,
    pub makespan_on: Option<f64>,
}

impl SummaryRow {
    pub fn delta_su(&self) -> Option<f64> {
        Some(self.su_on? - self.su_off?)
    }
    pub fn delta_makespan(&self) -> Option<f64> {
        Some(self.makespan_on? - self.makespan_off?)
    }
}

/// Execute the whole matrix and write aggregate files. Returns every cell
/// plus the summary rows in deterministic order.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<(Vec<CellResult>, Vec<SummaryRow>), RunError> {
    let workloads: Vec<String> = match cfg.workload.source.as_str() {
        "esp" => cfg.workload.profiles.clone(),
        _ => vec!["swf".to_string()],
    };
    let policies: Vec<ChunkPolicyKind> = cfg
        .scheduling
        .policies
        .iter()
        .map(|p| parse_policy(p).expect("validated"))
        .collect();
    let mut rca_axis: Vec<bool> = cfg
        .scheduling
        .rca
        .iter()
        .map(|r| parse_rca(r).expect("validated"))
        .collect();
    rca_axis.sort();
    rca_axis.dedup();

    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)?;

    let mut cells = Vec::new();
    let mut metrics_rows = Vec::new();
    for workload in &workloads {
        for &policy in &policies {
            for &rca in &rca_axis {
                for &seed in &cfg.run.seeds {
                    let cell = cell_name(workload, policy, rca, seed);
                    let dir = out.join(&cell);
                    let res = run_cell(cfg, workload, policy, rca, seed, &dir)?;
                    let row = fs::read_to_string(dir.join("metrics.csv"))?
                        .lines()
                        .nth(1)
                        .map(str::to_string)
                        .expect("cell metrics row");
                    metrics_rows.push(row);
                    cells.push(res);
                }
            }
        }
    }

    let mut w = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
    writeln!(w, "{}", metrics_header())?;
    for row in &metrics_rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;

    let summary = summarize(&cells);
    let mut w = BufWriter::new(fs::File::create(out.join("summary.csv"))?);
    writeln!(
        w,
        "workload,policy,su_off,su_on,delta_su,makespan_off,makespan_on,delta_makespan"
    )?;
    for r in &summary {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.workload,
            r.policy.name(),
            f(r.su_off),
            f(r.su_on),
            f(r.delta_su()),
            f(r.makespan_off),
            f(r.makespan_on),
            f(r.delta_makespan()),
        )?;
    }
    w.flush()?;
    Ok((cells, summary))
}

/// Average each (workload, policy, rca) group over seeds and pair off/on.
pub fn summarize(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), SummaryRow> = BTreeMap::new();
    let mut acc: BTreeMap<(String, String, bool), (f64, f64, u32)> = BTreeMap::new();
    for c in cells {
        let e = acc
            .entry((c.workload.clone(), c.policy.name().to_string(), c.rca))
            .or_insert((0.0, 0.0, 0));
        e.0 += c.su_percent;
        e.1 += c.makespan_seconds;
        e.2 += 1;
    }
    for c in cells {
        let key = (c.workload.clone(), c.policy.name().to_string());
        groups.entry(key).or_insert(SummaryRow {
            workload: c.workload.clone(),
            policy: c.policy,
            su_off: None,
            su_on: None,
            makespan_off: None,
            makespan_on: None,
        });
    }
    for ((w, p, rca), (su, mk, n)) in acc {
        let row = groups.get_mut(&(w, p)).expect("group exists");
        let su = su / n as f64;
        let mk = mk / n as f64;
        if rca {
            row.su_on = Some(su);
            row.makespan_on = Some(mk);
        } else {
            row.su_off = Some(su);
            row.makespan_off = Some(mk);
        }
    }
    groups.into_values().collect()
}

/// Render the comparison table, flagging the largest SU delta.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<7} {:>8} {:>8} {:>8} {:>11} {:>11} {:>9}\n",
        "workload", "policy", "su_off", "su_on", "dSU", "mk_off", "mk_on", "dmk%"
    ));
    let best = rows
        .iter()
        .filter_map(|r| r.delta_su())
        .fold(f64::NEG_INFINITY, f64::max);
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let dmk = match (r.makespan_off, r.makespan_on) {
            (Some(off), Some(on)) if off > 0.0 => format!("{:+.1}", 100.0 * (on - off) / off),
            _ => "-".into(),
        };
        let marker = match r.delta_su() {
            Some(d) if d == best && rows.len() > 1 => "  <- largest SU gain",
            _ => "",
        };
        out.push_str(&format!(
            "{:<12} {:<7} {:>8} {:>8} {:>8} {:>11} {:>11} {:>9}{}\n",
            r.workload,
            r.policy.name(),
            f(r.su_off),
            f(r.su_on),
            f(r.delta_su()),
            f(r.makespan_off),
            f(r.makespan_on),
            dmk,
            marker
        ));
    }
    out
}
