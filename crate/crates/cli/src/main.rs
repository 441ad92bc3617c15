//! Command-line runner for seeded replay experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use eremu_core::harness::{
    run_ablation, sweep_l, write_ablation, write_sweep, METRICS_FILE, TABLE_FILE,
};
use eremu_core::{run, write_metrics, ReplayMode, RunConfig};

#[derive(Parser)]
#[command(
    name = "eremu",
    version,
    about = "Adaptive experience replay experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded schedule in a single replay mode.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ReplayMode>,
    },
    /// Run er_emu and random_selection on identical seeds and schedules.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Rerun the schedule once per selection count.
    SweepL {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ReplayMode>,
        /// Comma-separated selection counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        l_values: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config (default: `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ReplayMode, String> {
    s.parse().map_err(|e: eremu_core::Error| e.to_string())
}

impl Common {
    fn resolve(&self, mode: Option<ReplayMode>) -> Result<(RunConfig, PathBuf)> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = mode {
            config.replay_mode = mode;
        }
        config.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((config, out))
    }
}

fn announce(out: &Path) {
    println!(
        "wrote {} and {}",
        out.join(METRICS_FILE).display(),
        out.join(TABLE_FILE).display()
    );
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, mode } => {
            let (config, out) = common.resolve(mode)?;
            let report = run(&config)?;
            write_metrics(&report, &out)?;
            println!(
                "{} seed {}: overall mean {:.4}",
                report.mode, report.seed, report.overall_mean
            );
            announce(&out);
        }
        Command::Ablate { common } => {
            let (config, out) = common.resolve(None)?;
            let report = run_ablation(&config)?;
            write_ablation(&report, &out)?;
            println!(
                "er_emu {:.4}, random_selection {:.4}, difference {:+.4}",
                report.er_emu.overall_mean,
                report.random_selection.overall_mean,
                report.mean_difference
            );
            announce(&out);
        }
        Command::SweepL {
            common,
            mode,
            l_values,
        } => {
            let (config, out) = common.resolve(mode)?;
            let report = sweep_l(&config, &l_values)?;
            write_sweep(&report, &out)?;
            for p in &report.points {
                println!("l={} overall mean {:.4}", p.select_count, p.overall_mean);
            }
            println!("spread {:.4}", report.spread);
            announce(&out);
        }
    }
    Ok(())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.kind().to_string();
            let detail = e
                .to_string()
                .lines()
                .next()
                .map(|l| l.trim_start_matches("error: ").to_string())
                .unwrap_or(rendered);
            eprintln!("eremu: {}", one_line(&detail));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eremu: {}", one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
