//! Quick look at full ESP runs: prints SU/makespan per (profile, policy,
//! lending) cell. Development aid, not part of the test suite.

use mlsched::als::ChunkPolicyKind;
use mlsched::metrics;
use mlsched::platform::build_platform;
use mlsched::workload::{arrival_schedule, generate_esp, EspParams, ProfileKind};
use mlsched::{SimConfig, Simulation};

fn main() {
    let seed = 1;
    for kind in [ProfileKind::Imbalanced, ProfileKind::Balanced] {
        for policy in [
            ChunkPolicyKind::Static,
            ChunkPolicyKind::Gss,
            ChunkPolicyKind::Fac,
            ChunkPolicyKind::Af,
        ] {
            for rca in [false, true] {
                let params = EspParams::default();
                let mut js = generate_esp(kind, seed, &params).unwrap();
                for j in &mut js.jobs {
                    j.als_policy = policy;
                }
                arrival_schedule(&mut js, params.target_makespan, seed, params.submission_gap)
                    .unwrap();
                let platform = build_platform(256, 50e9, 500e-9).unwrap();
                let cfg = SimConfig {
                    rca,
                    backfill: false,
                    ..SimConfig::default()
                };
                let t0 = std::time::Instant::now();
                let result = Simulation::new(platform, &js, cfg).unwrap().run().unwrap();
                let m = metrics::system_metrics(&result.trace, result.host_count).unwrap();
                let stats = metrics::job_stats(&result.trace);
                let maxratio = stats.iter().map(|s| s.max_mean_ratio).fold(0.0, f64::max);
                let meanratio =
                    stats.iter().map(|s| s.max_mean_ratio).sum::<f64>() / stats.len() as f64;
                println!(
                    "{:10} {:6} rca={:5}  SU={:6.2}%  makespan={:8.1}s  maxratio={:.3} meanratio={:.3}  ({} recs, {:.1}s wall)",
                    kind.name(),
                    policy.name(),
                    rca,
                    m.su_percent,
                    m.makespan_seconds,
                    maxratio,
                    meanratio,
                    result.trace.records().len(),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }
}
