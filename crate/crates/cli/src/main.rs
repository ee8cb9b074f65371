//! `mmimo`: run link-level experiments from a scenario file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure. Failures print one `error ...` line on stderr.

mod commands;
mod output;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmimo_core::scenario::ScenarioFile;
use mmimo_core::{Error, ErrorKind, Result};

use output::{Format, RunManifest, VERSION};

#[derive(Parser, Debug)]
#[command(name = "mmimo", version, about = "Massive MU-MIMO uplink link-level simulator")]
struct Cli {
    /// Overrides the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: mmimo-out/<subcommand>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Uplink symbol simulation with linear detection.
    Simulate { scenario: Option<PathBuf> },
    /// Gram-matrix hardening statistics over i.i.d. Rayleigh draws.
    Hardening { scenario: Option<PathBuf> },
    /// Closed-loop uplink power control.
    Powercontrol { scenario: Option<PathBuf> },
    /// Power profile, power-delay profile, delay spread and coherence bandwidth.
    Analyze { scenario: Option<PathBuf> },
    /// MUSIC angle estimation, subarrays and TDOA positioning.
    Locate { scenario: Option<PathBuf> },
    /// Uncoded sum spectral efficiency and throughput.
    SeCheck { scenario: Option<PathBuf> },
    /// Repeats the run recorded in a manifest.
    Rerun { manifest: PathBuf },
}

struct Job {
    subcommand: String,
    scenario_path: Option<PathBuf>,
    seed: Option<u64>,
    format: Format,
    out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

fn load_scenario(path: Option<&Path>) -> Result<(ScenarioFile, String)> {
    match path {
        None => Ok((ScenarioFile::default(), String::new())),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
            Ok((ScenarioFile::from_toml_str(&text)?, text))
        }
    }
}

fn execute(job: Job, threads: Option<usize>) -> Result<()> {
    let (mut scenario, text) = load_scenario(job.scenario_path.as_deref())?;
    if let Some(seed) = job.seed {
        scenario.seed = seed;
    }
    let run_id = output::run_id(&text, &job.subcommand, scenario.seed);
    let run = || match job.subcommand.as_str() {
        "simulate" => commands::simulate(&scenario),
        "hardening" => commands::hardening(&scenario),
        "powercontrol" => commands::powercontrol(&scenario),
        "analyze" => commands::analyze(&scenario),
        "locate" => commands::locate(&scenario),
        "se-check" => commands::se_check(&scenario),
        other => Err(Error::Config(vec![format!("unknown subcommand {other}")])),
    };
    let outcome = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(vec![format!("cannot start {n} threads: {e}")]))?
            .install(run),
        None => run(),
    }?;
    let out = job.out.unwrap_or_else(|| PathBuf::from("mmimo-out").join(&job.subcommand));
    let mut manifest = RunManifest {
        run_id,
        subcommand: job.subcommand,
        scenario: job.scenario_path,
        seed: scenario.seed,
        output_dir: out.clone(),
        format: job.format,
        threads,
        tool_version: VERSION.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        outputs: Vec::new(),
    };
    output::write_all(&out, &outcome.tables, &mut manifest)?;
    // A closed stdout (e.g. piped into `head`) is not a failure of the run.
    let mut stdout = std::io::stdout().lock();
    for line in outcome.summary {
        let _ = writeln!(stdout, "{line}");
    }
    let _ = writeln!(stdout, "wrote {} files to {}", manifest.outputs.len() + 1, out.display());
    Ok(())
}

fn job_from(cli: Cli) -> Result<(Job, Option<usize>)> {
    let (name, scenario) = match cli.command {
        Command::Simulate { scenario } => ("simulate", scenario),
        Command::Hardening { scenario } => ("hardening", scenario),
        Command::Powercontrol { scenario } => ("powercontrol", scenario),
        Command::Analyze { scenario } => ("analyze", scenario),
        Command::Locate { scenario } => ("locate", scenario),
        Command::SeCheck { scenario } => ("se-check", scenario),
        Command::Rerun { manifest } => {
            let m = RunManifest::load(&manifest)?;
            let job = Job {
                subcommand: m.subcommand,
                scenario_path: m.scenario,
                seed: Some(cli.seed.unwrap_or(m.seed)),
                format: m.format,
                out: Some(cli.out.unwrap_or(m.output_dir)),
            };
            return Ok((job, cli.threads.or(m.threads)));
        }
    };
    let job =
        Job { subcommand: name.to_string(), scenario_path: scenario, seed: cli.seed, format: cli.format, out: cli.out };
    Ok((job, cli.threads))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = job_from(cli).and_then(|(job, threads)| {
        if threads == Some(0) {
            return Err(Error::Config(vec!["--threads must be >= 1".into()]));
        }
        execute(job, threads)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let code = exit_code(kind);
            eprintln!("error kind={kind} exit={code} message={:?}", e.to_string());
            ExitCode::from(code)
        }
    }
}
