//! `mlsched`: experiment runner for the two-level scheduling simulator.

use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlsched::als::ChunkPolicyKind;
use mlsched::swf::write_swf;
use mlsched::workload::{arrival_schedule, generate_esp, ProfileKind};

use mlsched_cli::config::ExperimentConfig;
use mlsched_cli::runner;

#[derive(Parser)]
#[command(
    name = "mlsched",
    about = "Deterministic simulator of coordinated batch- and application-level HPC scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment matrix described by a TOML config.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict the coordination axis to one setting.
        #[arg(long, value_parser = ["on", "off"])]
        rca: Option<String>,
    },
    /// Parse and validate a config, printing the normalized form.
    Validate {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Generate an ESP job set and write it in standard workload format.
    GenEsp {
        /// Task-time profile: balanced or imbalanced.
        profile: String,
        /// Output file path.
        out: PathBuf,
        /// Workload seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            rca,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(s) = seed {
                cfg.run.seeds = vec![s];
            }
            if let Some(dir) = out {
                cfg.run.output_dir = dir;
            }
            if let Some(r) = rca {
                cfg.scheduling.rca = vec![r];
            }
            cfg.validate().map_err(|e| e.to_string())?;
            let (cells, summary) = runner::run_matrix(&cfg).map_err(|e| e.to_string())?;
            println!(
                "{} runs written under {}",
                cells.len(),
                cfg.run.output_dir.display()
            );
            print!("{}", runner::format_summary(&summary));
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let text = toml::to_string_pretty(&cfg)
                .map_err(|e| format!("config serialization failed: {e}"))?;
            print!("{text}");
            Ok(())
        }
        Command::GenEsp { profile, out, seed } => {
            let kind = ProfileKind::parse(&profile).ok_or(format!(
                "unknown profile {profile:?} (expected balanced or imbalanced)"
            ))?;
            let params = mlsched::workload::EspParams::default();
            let mut js = generate_esp(kind, seed, &params).map_err(|e| e.to_string())?;
            for j in &mut js.jobs {
                j.als_policy = ChunkPolicyKind::Static;
            }
            arrival_schedule(&mut js, params.target_makespan, seed, params.submission_gap)
                .map_err(|e| e.to_string())?;
            let file =
                std::fs::File::create(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_swf(&mut w, &js).map_err(|e| e.to_string())?;
            println!("{} jobs written to {}", js.jobs.len(), out.display());
            Ok(())
        }
    }
}
