//! Experiment configuration: TOML sections with defaults, strict key
//! checking, and aggregated field-level validation.

use std::fmt;
use std::path::{Path, PathBuf};

use mlsched::als::{ChunkPolicyKind, FacRule};
use mlsched::workload::{EspParams, ProfileKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub platform: PlatformSection,
    pub workload: WorkloadSection,
    pub scheduling: SchedulingSection,
    pub run: RunSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformSection {
    pub hosts: u32,
    pub link_bandwidth_gbps: f64,
    pub link_latency_ns: f64,
}

impl Default for PlatformSection {
    fn default() -> Self {
        PlatformSection {
            hosts: 256,
            link_bandwidth_gbps: 50.0,
            link_latency_ns: 500.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// "esp" (generated) or "swf" (read from `swf_path`).
    pub source: String,
    /// ESP task-time profiles to run (axis of the matrix).
    pub profiles: Vec<String>,
    pub swf_path: Option<PathBuf>,
    /// Tasks per requested host (N = hosts * tasks_per_host).
    pub tasks_per_host: u32,
    /// Calibration overrides for the ESP generator.
    pub scale_hosts: u32,
    pub target_makespan: f64,
    pub estimate_factor: f64,
    pub balanced_cv: f64,
    pub balanced_region_cv: f64,
    pub imbalanced_cv: f64,
    pub imbalanced_region_cv: f64,
    pub submission_gap: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        let p = EspParams::default();
        WorkloadSection {
            source: "esp".into(),
            profiles: vec!["imbalanced".into(), "balanced".into()],
            swf_path: None,
            tasks_per_host: p.tasks_per_host,
            scale_hosts: p.scale_hosts,
            target_makespan: p.target_makespan,
            estimate_factor: p.estimate_factor,
            balanced_cv: p.balanced_cv,
            balanced_region_cv: p.balanced_region_cv,
            imbalanced_cv: p.imbalanced_cv,
            imbalanced_region_cv: p.imbalanced_region_cv,
            submission_gap: p.submission_gap,
        }
    }
}

impl WorkloadSection {
    pub fn esp_params(&self) -> EspParams {
        EspParams {
            scale_hosts: self.scale_hosts,
            target_makespan: self.target_makespan,
            tasks_per_host: self.tasks_per_host,
            estimate_factor: self.estimate_factor,
            balanced_cv: self.balanced_cv,
            balanced_region_cv: self.balanced_region_cv,
            imbalanced_cv: self.imbalanced_cv,
            imbalanced_region_cv: self.imbalanced_region_cv,
            submission_gap: self.submission_gap,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulingSection {
    /// Application-level policies to run (axis): static, gss, fac, af.
    pub policies: Vec<String>,
    /// Coordination axis: any subset of ["off", "on"].
    pub rca: Vec<String>,
    pub backfill: bool,
    pub exclusion: bool,
    pub accept_threshold: f64,
    pub message_bytes: u64,
    pub lend_to_backfill: bool,
    /// "factoring" (closed form) or "fac2" (fixed halving).
    pub fac_rule: String,
}

impl Default for SchedulingSection {
    fn default() -> Self {
        SchedulingSection {
            policies: vec!["static".into(), "gss".into(), "fac".into(), "af".into()],
            rca: vec!["off".into(), "on".into()],
            backfill: false,
            exclusion: false,
            accept_threshold: 0.05,
            message_bytes: 64,
            lend_to_backfill: false,
            fac_rule: "factoring".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Bin width of the utilization time series export, seconds.
    pub utilization_bin_seconds: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: vec![1],
            output_dir: PathBuf::from("results"),
            utilization_bin_seconds: 10.0,
        }
    }
}

/// All validation problems of one config, each naming the offending field.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            writeln!(f, "config error: {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

pub fn parse_policy(s: &str) -> Option<ChunkPolicyKind> {
    ChunkPolicyKind::parse(s)
}

pub fn parse_rca(s: &str) -> Option<bool> {
    match s {
        "on" | "true" => Some(true),
        "off" | "false" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigErrors(vec![format!("{e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every field, aggregating problems instead of stopping at the
    /// first one.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        if self.platform.hosts == 0 {
            errs.push("platform.hosts: must be at least 1".into());
        }
        if self.platform.link_bandwidth_gbps.is_nan() || self.platform.link_bandwidth_gbps <= 0.0 {
            errs.push("platform.link_bandwidth_gbps: must be positive".into());
        }
        if self.platform.link_latency_ns < 0.0 {
            errs.push("platform.link_latency_ns: must be non-negative".into());
        }
        match self.workload.source.as_str() {
            "esp" => {
                if self.workload.profiles.is_empty() {
                    errs.push("workload.profiles: need at least one profile".into());
                }
                for p in &self.workload.profiles {
                    if ProfileKind::parse(p).is_none() {
                        errs.push(format!(
                            "workload.profiles: unknown profile {p:?} (expected balanced or imbalanced)"
                        ));
                    }
                }
            }
            "swf" => {
                if self.workload.swf_path.is_none() {
                    errs.push("workload.swf_path: required when workload.source = \"swf\"".into());
                }
            }
            other => {
                errs.push(format!(
                    "workload.source: unknown source {other:?} (expected esp or swf)"
                ));
            }
        }
        if self.workload.tasks_per_host == 0 {
            errs.push("workload.tasks_per_host: must be at least 1".into());
        }
        if self.workload.target_makespan.is_nan() || self.workload.target_makespan <= 0.0 {
            errs.push("workload.target_makespan: must be positive".into());
        }
        if self.workload.estimate_factor.is_nan() || self.workload.estimate_factor <= 0.0 {
            errs.push("workload.estimate_factor: must be positive".into());
        }
        for (name, v) in [
            ("balanced_cv", self.workload.balanced_cv),
            ("balanced_region_cv", self.workload.balanced_region_cv),
            ("imbalanced_cv", self.workload.imbalanced_cv),
            ("imbalanced_region_cv", self.workload.imbalanced_region_cv),
        ] {
            if v < 0.0 {
                errs.push(format!("workload.{name}: must be non-negative"));
            }
        }
        if self.workload.submission_gap < 0.0 {
            errs.push("workload.submission_gap: must be non-negative".into());
        }
        if self.scheduling.policies.is_empty() {
            errs.push("scheduling.policies: need at least one policy".into());
        }
        for p in &self.scheduling.policies {
            if parse_policy(p).is_none() {
                errs.push(format!(
                    "scheduling.policies: unknown policy {p:?} (expected static, gss, fac or af)"
                ));
            }
        }
        if self.scheduling.rca.is_empty() {
            errs.push("scheduling.rca: need at least one of \"off\", \"on\"".into());
        }
        for r in &self.scheduling.rca {
            if parse_rca(r).is_none() {
                errs.push(format!(
                    "scheduling.rca: unknown value {r:?} (expected off or on)"
                ));
            }
        }
        if self.scheduling.accept_threshold.is_nan() || self.scheduling.accept_threshold < 0.0 {
            errs.push("scheduling.accept_threshold: must be non-negative".into());
        }
        if self.fac_rule().is_none() {
            errs.push(format!(
                "scheduling.fac_rule: unknown rule {:?} (expected factoring or fac2)",
                self.scheduling.fac_rule
            ));
        }
        if self.run.seeds.is_empty() {
            errs.push("run.seeds: need at least one seed".into());
        }
        if self.run.utilization_bin_seconds.is_nan() || self.run.utilization_bin_seconds <= 0.0 {
            errs.push("run.utilization_bin_seconds: must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn fac_rule(&self) -> Option<FacRule> {
        match self.scheduling.fac_rule.as_str() {
            "factoring" => Some(FacRule::Factoring),
            "fac2" => Some(FacRule::Fac2),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.platform.hosts, 256);
        assert_eq!(cfg.run.seeds, vec![1]);
        assert_eq!(cfg.scheduling.policies.len(), 4);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = toml::from_str::<ExperimentConfig>("[platform]\nhosst = 4\n").unwrap_err();
        assert!(err.to_string().contains("hosst"), "{err}");
    }

    #[test]
    fn empty_policy_list_rejected() {
        let cfg: ExperimentConfig = toml::from_str("[scheduling]\npolicies = []\n").unwrap();
        let errs = cfg.validate().unwrap_err();
        assert!(
            errs.0.iter().any(|e| e.contains("scheduling.policies")),
            "{errs}"
        );
    }

    #[test]
    fn empty_seed_list_rejected() {
        let cfg: ExperimentConfig = toml::from_str("[run]\nseeds = []\n").unwrap();
        let errs = cfg.validate().unwrap_err();
        assert!(errs.0.iter().any(|e| e.contains("run.seeds")), "{errs}");
    }

    #[test]
    fn bad_values_are_all_reported() {
        let cfg: ExperimentConfig = toml::from_str(
            "[platform]\nhosts = 0\n\n[scheduling]\npolicies = [\"bogus\"]\nrca = [\"maybe\"]\n",
        )
        .unwrap();
        let errs = cfg.validate().unwrap_err();
        assert!(errs.0.len() >= 3, "{errs}");
        assert!(errs.0.iter().any(|e| e.contains("platform.hosts")));
        assert!(errs.0.iter().any(|e| e.contains("bogus")));
        assert!(errs.0.iter().any(|e| e.contains("maybe")));
    }

    #[test]
    fn swf_source_requires_path() {
        let cfg: ExperimentConfig = toml::from_str("[workload]\nsource = \"swf\"\n").unwrap();
        let errs = cfg.validate().unwrap_err();
        assert!(errs.0.iter().any(|e| e.contains("swf_path")), "{errs}");
    }
}
