//! End-to-end acceptance checks for the simulator and experiment runner.
//!
//! Each test pins one externally meaningful guarantee: workload fidelity,
//! bitwise determinism, work conservation, the headline coordination
//! gains, safety of backfilling, and internal consistency of the metrics.
//! Full-size runs (230 jobs on 256 hosts) are shared through a cache so
//! the suite stays fast.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use mlsched::als::{AppSchedState, ChunkPolicyKind, FacRule};
use mlsched::metrics;
use mlsched::platform::{build_platform, HostId};
use mlsched::swf::read_swf;
use mlsched::trace::RecordKind;
use mlsched::workload::{
    arrival_schedule, generate_esp, sample_task_times, EspParams, JobSet, JobSpec, ProfileKind,
    TaskProfile, ESP_CATEGORIES, ESP_JOB_COUNT,
};
use mlsched::{JobId, SimConfig, SimDuration, SimTime, Simulation, SimulationResult};

use mlsched_cli::config::ExperimentConfig;
use mlsched_cli::runner::run_cell_with_result;

use tempfile::TempDir;

const SEED: u64 = 1;

/// One full-size simulated cell, kept alive for every test that needs it.
struct Cell {
    su_percent: f64,
    makespan_seconds: f64,
    result: SimulationResult,
    dir: std::path::PathBuf,
    wall: Duration,
}

fn root_dir() -> &'static TempDir {
    static ROOT: OnceLock<TempDir> = OnceLock::new();
    ROOT.get_or_init(|| TempDir::new().expect("temp dir"))
}

/// Run (or fetch) the cell for (workload, policy, rca) at the fixed seed,
/// with the default experiment configuration. The mutex is held across
/// the simulation on purpose: concurrent tests wait instead of redoing
/// the same run.
type CellMap = BTreeMap<(String, String, bool), Arc<Cell>>;

fn cell(workload: &'static str, policy: ChunkPolicyKind, rca: bool) -> Arc<Cell> {
    static CELLS: OnceLock<Mutex<CellMap>> = OnceLock::new();
    let map = CELLS.get_or_init(|| Mutex::new(BTreeMap::new()));
    let key = (workload.to_string(), policy.name().to_string(), rca);
    let mut guard = map.lock().unwrap();
    if let Some(c) = guard.get(&key) {
        return c.clone();
    }
    let cfg = ExperimentConfig::default();
    let dir = root_dir().path().join(format!(
        "{workload}_{}_rca-{}_seed{SEED}",
        policy.name(),
        if rca { "on" } else { "off" }
    ));
    let started = Instant::now();
    let (summary, result) =
        run_cell_with_result(&cfg, workload, policy, rca, SEED, &dir).expect("cell run");
    let cell = Arc::new(Cell {
        su_percent: summary.su_percent,
        makespan_seconds: summary.makespan_seconds,
        result,
        dir,
        wall: started.elapsed(),
    });
    guard.insert(key, cell.clone());
    cell
}

type CellKey = (&'static str, ChunkPolicyKind, bool);

fn all_cells() -> Vec<(CellKey, Arc<Cell>)> {
    let policies = [
        ChunkPolicyKind::Static,
        ChunkPolicyKind::Gss,
        ChunkPolicyKind::Fac,
        ChunkPolicyKind::Af,
    ];
    let mut out = Vec::new();
    for workload in ["imbalanced", "balanced"] {
        for policy in policies {
            for rca in [false, true] {
                out.push(((workload, policy, rca), cell(workload, policy, rca)));
            }
        }
    }
    out
}

/// A small random workload: up to 50 jobs on up to 10 hosts, mixed
/// policies and task-time spreads. Mirrors the generator used by the core
/// property suite so acceptance re-checks the same class of inputs.
fn mini_workload(seed: u64) -> (usize, JobSet) {
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
    let mut next = move || {
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
        x ^= x >> 29;
        x
    };
    let hosts = 2 + (next() % 9) as usize;
    let njobs = 1 + (next() % 50) as usize;
    let policies = [
        ChunkPolicyKind::Static,
        ChunkPolicyKind::Gss,
        ChunkPolicyKind::Fac,
        ChunkPolicyKind::Af,
    ];
    let mut jobs = Vec::new();
    for i in 0..njobs {
        let req = 1 + (next() % hosts as u64) as u32;
        let tasks_per_host = 1 + next() % 24;
        let mean = 0.05 + (next() % 100) as f64 / 50.0;
        let cv = (next() % 3) as f64 * 0.6;
        let target = tasks_per_host as f64 * mean;
        jobs.push(JobSpec {
            id: JobId(i as u64 + 1),
            category: None,
            requested_hosts: req,
            task_count: req as u64 * tasks_per_host,
            task_profile: TaskProfile {
                kind: if cv > 0.0 {
                    ProfileKind::Imbalanced
                } else {
                    ProfileKind::Balanced
                },
                mean_task_seconds: mean,
                cv,
                region_cv: if cv > 0.0 { 0.3 } else { 0.0 },
                regions: req,
            },
            arrival_time: SimTime::from_secs((next() % 300) as f64),
            estimated_runtime: SimDuration::from_secs(target * 1.5 + 1.0),
            target_runtime: SimDuration::from_secs(target),
            als_policy: policies[(next() % 4) as usize],
            seed,
        });
    }
    jobs.sort_by_key(|j| (j.arrival_time, j.id.0));
    (
        hosts,
        JobSet {
            jobs,
            workload_name: format!("mini{seed}"),
        },
    )
}

fn run_mini(seed: u64, cfg: SimConfig) -> (JobSet, SimulationResult) {
    let (hosts, js) = mini_workload(seed);
    let platform = build_platform(hosts, 50e9, 500e-9).unwrap();
    let result = Simulation::new(platform, &js, cfg).unwrap().run().unwrap();
    (js, result)
}

fn read(path: &std::path::Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// 1. The workload generator reproduces the reference job mix exactly:
///    230 jobs with the documented per-category counts and host requests,
///    in under a second end to end through the CLI binary.
#[test]
fn a01_esp_generator_matches_reference_mix() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("esp.swf");
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_mlsched"))
        .args(["gen-esp", "imbalanced"])
        .arg(&out)
        .args(["--seed", "1"])
        .status()
        .expect("spawn mlsched");
    let elapsed = started.elapsed();
    assert!(status.success(), "gen-esp failed");
    assert!(elapsed < Duration::from_secs(1), "gen-esp took {elapsed:?}");

    // category identity is not part of the interchange format, so check the
    // (host request -> job count) histogram, which pins both table columns
    let file = std::fs::File::open(&out).unwrap();
    let js = read_swf(
        std::io::BufReader::new(file),
        512,
        ChunkPolicyKind::Static,
        1,
    )
    .unwrap();
    assert_eq!(js.jobs.len() as u32, ESP_JOB_COUNT);
    let mut by_hosts: BTreeMap<u32, u32> = BTreeMap::new();
    for j in &js.jobs {
        *by_hosts.entry(j.requested_hosts).or_insert(0) += 1;
    }
    let mut expected: BTreeMap<u32, u32> = BTreeMap::new();
    for (_, hosts, count) in ESP_CATEGORIES {
        *expected.entry(hosts).or_insert(0) += count;
    }
    assert_eq!(by_hosts, expected);

    // per-category counts, straight from the generator
    let js = generate_esp(ProfileKind::Imbalanced, 1, &EspParams::default()).unwrap();
    for (c, hosts, count) in ESP_CATEGORIES {
        let jobs: Vec<_> = js.jobs.iter().filter(|j| j.category == Some(c)).collect();
        assert_eq!(jobs.len() as u32, count, "category {c} count");
        assert!(
            jobs.iter().all(|j| j.requested_hosts == hosts),
            "category {c} hosts"
        );
    }
}

/// 2. Re-running a matrix cell with the same configuration and seed
///    produces byte-identical output files.
#[test]
fn a02_cell_outputs_are_byte_identical() {
    let cfg = ExperimentConfig::default();
    let dirs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    for d in &dirs {
        run_cell_with_result(
            &cfg,
            "imbalanced",
            ChunkPolicyKind::Gss,
            true,
            SEED,
            d.path(),
        )
        .expect("cell run");
    }
    for name in [
        "metrics.csv",
        "timeline.json",
        "events.tsv",
        "utilization.csv",
        "jobs.csv",
    ] {
        let a = read(&dirs[0].path().join(name));
        let b = read(&dirs[1].path().join(name));
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

/// 3. Work is conserved exactly (integer nanoseconds) and no host ever
///    executes two records at once, across fuzzed mini-workloads.
#[test]
fn a03_conservation_and_interval_exclusivity() {
    for seed in 0..20u64 {
        for cfg in [
            SimConfig::default(),
            SimConfig {
                rca: false,
                ..SimConfig::default()
            },
        ] {
            let (js, result) = run_mini(seed, cfg);
            let expected: u128 = js
                .jobs
                .iter()
                .flat_map(sample_task_times)
                .map(|d| d.as_nanos() as u128)
                .sum();
            let computed: u128 = result
                .trace
                .records()
                .iter()
                .filter(|r| r.kind == RecordKind::Compute)
                .map(|r| (r.end.as_nanos() - r.start.as_nanos()) as u128)
                .sum();
            assert_eq!(expected, computed, "work not conserved for seed {seed}");
            result
                .trace
                .validate()
                .expect("per-host intervals must not overlap");
        }
    }
}

/// 4. Headline result: on the imbalanced workload under STATIC chunking,
///    turning coordination on gains at least 8 utilization points and cuts
///    makespan by at least 8%, and each full-size run finishes well inside
///    the time budget.
#[test]
fn a04_coordination_headline_gains() {
    let off = cell("imbalanced", ChunkPolicyKind::Static, false);
    let on = cell("imbalanced", ChunkPolicyKind::Static, true);
    for c in [&off, &on] {
        assert!(
            c.wall < Duration::from_secs(60),
            "full-size run took {:?}",
            c.wall
        );
    }
    let dsu = on.su_percent - off.su_percent;
    assert!(dsu >= 8.0, "SU gain {dsu:.2} points < 8");
    let dmk = (off.makespan_seconds - on.makespan_seconds) / off.makespan_seconds;
    assert!(dmk >= 0.08, "makespan reduction {:.1}% < 8%", dmk * 100.0);
}

/// 5. Coordination helps little where there is little to fix: under AF
///    on the imbalanced workload the gain stays small, and on the balanced
///    workload every policy gains little and never loses makespan.
#[test]
fn a05_coordination_small_gain_regimes() {
    let off = cell("imbalanced", ChunkPolicyKind::Af, false);
    let on = cell("imbalanced", ChunkPolicyKind::Af, true);
    let dsu = on.su_percent - off.su_percent;
    assert!(dsu <= 1.5, "AF SU gain {dsu:.2} points > 1.5");
    for policy in [
        ChunkPolicyKind::Static,
        ChunkPolicyKind::Gss,
        ChunkPolicyKind::Fac,
        ChunkPolicyKind::Af,
    ] {
        let off = cell("balanced", policy, false);
        let on = cell("balanced", policy, true);
        let dsu = on.su_percent - off.su_percent;
        assert!(
            dsu <= 2.0,
            "{}: balanced SU gain {dsu:.2} points > 2",
            policy.name()
        );
        assert!(
            on.makespan_seconds <= off.makespan_seconds,
            "{}: balanced makespan grew {:.3} -> {:.3}",
            policy.name(),
            off.makespan_seconds,
            on.makespan_seconds
        );
    }
}

/// 6. Lending never pushes anyone back: with coordination on, no job
///    starts later than it does with coordination off, per job, on both
///    workloads and all four policies.
#[test]
fn a06_no_job_starts_later_with_coordination() {
    for workload in ["imbalanced", "balanced"] {
        for policy in [
            ChunkPolicyKind::Static,
            ChunkPolicyKind::Gss,
            ChunkPolicyKind::Fac,
            ChunkPolicyKind::Af,
        ] {
            let off = cell(workload, policy, false);
            let on = cell(workload, policy, true);
            let starts_off: BTreeMap<u64, u64> = off
                .result
                .jobs
                .iter()
                .map(|j| (j.job.0, j.start.expect("job started").as_nanos()))
                .collect();
            for j in &on.result.jobs {
                let s_on = j.start.expect("job started").as_nanos();
                let s_off = starts_off[&j.job.0];
                assert!(
                    s_on <= s_off,
                    "{workload}/{}: job {} starts later with coordination ({} > {} ns)",
                    policy.name(),
                    j.job.0,
                    s_on,
                    s_off
                );
            }
        }
    }
}

/// Drive a chunking policy the way the engine does: ask for a size,
/// clamp it to the remaining work, account for it, feed back a timing
/// observation.
fn issue_all(policy: ChunkPolicyKind, n: u64, p: u64) -> Vec<u64> {
    let hosts: Vec<HostId> = (0..p as u32).map(HostId).collect();
    let mut app = AppSchedState::new(JobId(1), n, hosts, policy, FacRule::Factoring, 1.0, 0.5);
    let mut chunks = Vec::new();
    let mut worker = 0usize;
    let mut dry = 0usize;
    while app.remaining > 0 && dry < p as usize {
        match app.next_chunk(worker) {
            Some(k) if k > 0 => {
                let k = k.min(app.remaining);
                app.remaining -= k;
                app.next_task += k;
                chunks.push(k);
                app.update_worker_stats(worker, k as f64, k);
                dry = 0;
            }
            _ => dry += 1,
        }
        worker = (worker + 1) % p as usize;
    }
    chunks
}

/// 7. Every chunking policy hands out exactly N tasks over 1000 fuzzed
///    (N, P) pairs, and GSS reproduces the textbook sequence for N=100, P=4.
#[test]
fn a07_chunk_sums_and_gss_sequence() {
    let mut x = 0x0123_4567_89ab_cdefu64;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x
    };
    for _ in 0..1000 {
        let n = 1 + next() % 5000;
        let p = 1 + next() % 64;
        for policy in [
            ChunkPolicyKind::Static,
            ChunkPolicyKind::Gss,
            ChunkPolicyKind::Fac,
            ChunkPolicyKind::Af,
        ] {
            let chunks = issue_all(policy, n, p);
            let total: u64 = chunks.iter().sum();
            assert_eq!(
                total,
                n,
                "{}: chunks sum {total} != {n} (p={p})",
                policy.name()
            );
        }
    }
    let gss = issue_all(ChunkPolicyKind::Gss, 100, 4);
    assert_eq!(gss, vec![25, 19, 14, 11, 8, 6, 5, 3, 3, 2, 1, 1, 1, 1]);
}

/// 8. Adaptive chunking actually balances: per-job max/mean worker finish
///    ratios order AF < GSS < STATIC for at least 90% of jobs on the
///    imbalanced workload, and AF's ratios all stay within [1.0, 1.1].
#[test]
fn a08_imbalance_ratio_ordering() {
    let ratios = |policy| -> BTreeMap<u64, f64> {
        let c = cell("imbalanced", policy, false);
        metrics::job_stats(&c.result.trace)
            .into_iter()
            .map(|s| (s.job.0, s.max_mean_ratio))
            .collect()
    };
    let af = ratios(ChunkPolicyKind::Af);
    let gss = ratios(ChunkPolicyKind::Gss);
    let st = ratios(ChunkPolicyKind::Static);
    assert_eq!(af.len() as u32, ESP_JOB_COUNT);

    let mut ordered = 0u32;
    for (job, r_af) in &af {
        if *r_af < gss[job] && gss[job] < st[job] {
            ordered += 1;
        }
        assert!(
            (1.0..=1.1).contains(r_af),
            "job {job}: AF max/mean ratio {r_af:.4} outside [1.0, 1.1]"
        );
    }
    let frac = ordered as f64 / af.len() as f64;
    assert!(
        frac >= 0.90,
        "ordering AF < GSS < STATIC holds for only {frac:.2} of jobs"
    );
}

/// 9. Backfilling never delays the queue head's reserved start. The
///    engine checks the exact reservation timestamp on every backfill
///    decision in debug builds; this exercises it across fuzzed workloads
///    with and without coordination.
#[test]
fn a09_backfill_never_delays_head_reservation() {
    if !cfg!(debug_assertions) {
        panic!("run this suite with debug assertions enabled");
    }
    for seed in 0..20u64 {
        for rca in [false, true] {
            let cfg = SimConfig {
                backfill: true,
                rca,
                ..SimConfig::default()
            };
            let (js, result) = run_mini(seed, cfg);
            assert_eq!(result.jobs.len(), js.jobs.len());
            assert!(
                result.jobs.iter().all(|j| j.end.is_some()),
                "seed {seed}: job never ran"
            );
        }
    }
}

/// 10. The utilization time series and the single-number system
///     utilization agree: the work-weighted average of the series matches to
///     within 1e-6 relative, on every cell of the full matrix.
#[test]
fn a10_utilization_timeseries_consistency() {
    for ((workload, policy, rca), c) in all_cells() {
        let su = metrics::system_utilization(&c.result.trace, c.result.host_count).unwrap();
        let series =
            metrics::utilization_timeseries(&c.result.trace, c.result.host_count, 10.0).unwrap();
        let total = c.makespan_seconds;
        let mut weighted = 0.0;
        for (i, (t0, pct)) in series.iter().enumerate() {
            let t1 = series
                .get(i + 1)
                .map(|(t, _)| *t)
                .unwrap_or(series[0].0 + total);
            weighted += pct * (t1 - t0);
        }
        let avg = weighted / total;
        assert!(
            (avg - su).abs() <= 1e-6 * su.max(1.0),
            "{workload}/{}/rca={rca}: weighted {avg} vs system {su}",
            policy.name()
        );
    }
}

/// 11. The rca=off cell is genuinely coordination-free: it matches, byte
///     for byte, a simulation built directly without the coordination layer,
///     and its trace contains no borrowed-host execution.
#[test]
fn a11_coordination_off_equivalence() {
    let c = cell("imbalanced", ChunkPolicyKind::Static, false);
    assert!(
        c.result.trace.records().iter().all(|r| !r.borrowed),
        "rca=off trace contains borrowed-host records"
    );

    // rebuild the same workload and run the engine with the coordination
    // layer disabled, bypassing the experiment runner entirely
    let params = EspParams::default();
    let mut js = generate_esp(ProfileKind::Imbalanced, SEED, &params).unwrap();
    arrival_schedule(&mut js, params.target_makespan, SEED, params.submission_gap).unwrap();
    for j in &mut js.jobs {
        j.als_policy = ChunkPolicyKind::Static;
    }
    let platform = build_platform(256, 50e9, 500e-9).unwrap();
    let run_id = format!("imbalanced_static_rca-off_seed{SEED}");
    let cfg = SimConfig {
        rca: false,
        run_id: run_id.clone(),
        ..SimConfig::default()
    };
    let result = Simulation::new(platform, &js, cfg).unwrap().run().unwrap();

    let mut timeline = Vec::new();
    result
        .trace
        .export_timeline(&mut timeline, &run_id)
        .unwrap();
    assert_eq!(
        timeline,
        read(&c.dir.join("timeline.json")),
        "timeline differs"
    );
    let mut events = Vec::new();
    result.trace.export_events(&mut events).unwrap();
    assert_eq!(events, read(&c.dir.join("events.tsv")), "events differ");

    let m_cell = metrics::system_metrics(&c.result.trace, c.result.host_count).unwrap();
    let m_direct = metrics::system_metrics(&result.trace, result.host_count).unwrap();
    assert_eq!(m_cell.su_percent.to_bits(), m_direct.su_percent.to_bits());
    assert_eq!(
        m_cell.makespan_seconds.to_bits(),
        m_direct.makespan_seconds.to_bits()
    );
}
