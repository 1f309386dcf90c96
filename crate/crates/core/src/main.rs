use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relay_ris::channel::SystemConfig;
use relay_ris::experiment::{emit_outputs, run_experiment, ExperimentOutput, ExperimentSpec, Sweep, SweepVariable};
use relay_ris::pipeline::Scenario;

#[derive(Parser)]
#[command(name = "relay-ris", version, about = "Monte Carlo power sweeps for relay + RIS downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML spec file.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a sweep described entirely by flags.
    Sweep {
        /// rate_threshold (R_th), users (K) or relay_distance (d_relay).
        #[arg(long)]
        variable: SweepVariable,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated scenario names; all four by default.
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<Scenario>,
        /// TOML file with base system parameters (same keys as a spec's [system] table).
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        rate_threshold: Option<f64>,
        #[arg(long)]
        relay_distance: Option<f64>,
        #[arg(long)]
        phase_bits: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a spec file without running it.
    Validate { spec: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Overrides the spec's experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(out) = &self.out {
            spec.output = out.clone();
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
    }
}

fn load_system(path: &Path) -> relay_ris::Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| relay_ris::Error::io(path, e))?;
    Ok(toml::from_str(&text)?)
}

fn execute(spec: &ExperimentSpec, threads: Option<usize>) -> relay_ris::Result<()> {
    spec.validate()?;
    eprintln!(
        "running {} rows ({} values x {} trials x {} scenarios)",
        spec.row_count(),
        spec.sweep.values.len(),
        spec.trials,
        spec.scenarios.len()
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| relay_ris::Error::InvalidConfig(format!("thread pool: {e}")))?;
    let output = pool.install(|| run_experiment(spec))?;
    let paths = emit_outputs(&output, &spec.output)?;
    print_summary(&output);
    eprintln!("wrote {}", paths.results.display());
    eprintln!("wrote {}", paths.aggregates.display());
    eprintln!("wrote {}", paths.plot.display());
    eprintln!("wrote {}", paths.timings.display());
    Ok(())
}

fn print_summary(output: &ExperimentOutput) {
    println!("{:<20} {:>14} {:>14} {:>10}", "scenario", output.variable, "mean dBm", "feasible");
    for a in &output.aggregates {
        let dbm = a
            .mean_power_dbm
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<20} {:>14} {:>14} {:>10.3}",
            a.scenario.name(),
            a.sweep_value,
            dbm,
            a.feasible_fraction
        );
    }
}

fn run(cli: Cli) -> relay_ris::Result<()> {
    match cli.command {
        Command::Run { spec, common } => {
            let mut parsed = ExperimentSpec::from_path(&spec)?;
            common.apply(&mut parsed);
            execute(&parsed, common.threads)
        }
        Command::Sweep {
            variable,
            values,
            scenarios,
            system,
            users,
            rate_threshold,
            relay_distance,
            phase_bits,
            common,
        } => {
            let mut base = match &system {
                Some(path) => load_system(path)?,
                None => SystemConfig::default(),
            };
            if let Some(v) = users {
                base.users = v;
            }
            if let Some(v) = rate_threshold {
                base.rate_threshold = v;
            }
            if let Some(v) = relay_distance {
                base.relay_distance = v;
            }
            if let Some(v) = phase_bits {
                base.phase_bits = v;
            }
            let mut spec = ExperimentSpec::new(base, Sweep { variable, values });
            if !scenarios.is_empty() {
                spec.scenarios = scenarios;
            }
            common.apply(&mut spec);
            execute(&spec, common.threads)
        }
        Command::Validate { spec } => {
            let parsed = ExperimentSpec::from_path(&spec)?;
            parsed.validate()?;
            println!(
                "ok: sweep over {} with {} values, {} trials, {} scenarios ({} rows)",
                parsed.sweep.variable,
                parsed.sweep.values.len(),
                parsed.trials,
                parsed.scenarios.len(),
                parsed.row_count()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
