use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quench::certify::DecompositionKind;
use quench::harness::{run_job, write_records_csv, write_report, JobConfig, JobKind, OutputFormat, SourceKind};
use quench::{Architecture, Error, Lattice};

#[derive(Parser)]
#[command(name = "quench", version, about = "Quench architecture simulation and certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collision-probability and Porter-Thomas statistics of logical circuit ensembles.
    Anticoncentration(JobArgs),
    /// Check the probability / partition-function identity on random instances.
    IdentityCheck(JobArgs),
    /// Run the certification protocol repeatedly on one resource state.
    Certification(JobArgs),
    /// Route random dense IQP circuits onto a line (`--rows` is the qubit count).
    IqpRoute(JobArgs),
    /// Time the transfer-matrix partition function on random fields.
    PartitionBench(JobArgs),
    /// Print the lattice geometry as JSON.
    DumpLattice(LatticeArgs),
}

#[derive(Args)]
struct LatticeArgs {
    #[arg(long)]
    arch: Architecture,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
}

#[derive(Args)]
struct JobArgs {
    /// JSON job configuration; flags given explicitly override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    /// Target fidelity.
    #[arg(long = "f-t")]
    f_t: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "p-err")]
    p_err: Option<f64>,
    /// perfect, flipped, depolarizing or z-rotation.
    #[arg(long)]
    source: Option<SourceKind>,
    /// Depolarizing probability or rotation angle.
    #[arg(long)]
    noise: Option<f64>,
    /// two-color, two-body or on-site.
    #[arg(long, value_parser = parse_decomposition)]
    decomposition: Option<DecompositionKind>,
    /// Disable the architecture-III uniform preparation angle.
    #[arg(long)]
    uniform_off: bool,
    #[arg(long)]
    verbose: bool,
}

fn parse_decomposition(s: &str) -> Result<DecompositionKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown decomposition `{s}`"))
}

fn missing(field: &str) -> Error {
    Error::Invalid {
        field: field.to_string(),
        reason: "required (flag or config file)".to_string(),
    }
}

fn build_config(kind: JobKind, a: &JobArgs) -> Result<JobConfig, Error> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut cfg = JobConfig::from_json(&text).map_err(|e| Error::Invalid {
                field: "config".to_string(),
                reason: e.to_string(),
            })?;
            cfg.kind = kind;
            cfg
        }
        None => JobConfig::new(
            kind,
            match (a.arch, kind) {
                (Some(arch), _) => arch,
                // Routing and the partition benchmark do not depend on the architecture.
                (None, JobKind::IqpRoute | JobKind::PartitionBench) => Architecture::I,
                (None, _) => return Err(missing("arch")),
            },
            a.rows.ok_or_else(|| missing("rows"))?,
            a.cols.unwrap_or(0),
            a.instances.unwrap_or(1),
            a.seed.unwrap_or(0),
        ),
    };
    if a.config.is_some() {
        if let Some(v) = a.arch {
            cfg.arch = v;
        }
        if let Some(v) = a.rows {
            cfg.rows = v;
        }
        if let Some(v) = a.instances {
            cfg.instances = v;
        }
        if let Some(v) = a.seed {
            cfg.seed = v;
        }
    }
    if let Some(v) = a.cols {
        cfg.cols = v;
    }
    let p = &mut cfg.params;
    if let Some(v) = a.f_t {
        p.f_t = v;
    }
    if let Some(v) = a.eps {
        p.eps = v;
    }
    if let Some(v) = a.p_err {
        p.p_err = v;
    }
    if let Some(v) = a.source {
        p.source = v;
    }
    if let Some(v) = a.noise {
        p.noise = v;
    }
    if a.decomposition.is_some() {
        p.decomposition = a.decomposition;
    }
    if a.uniform_off {
        p.uniform_on = false;
    }
    if a.verbose {
        p.verbose = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (kind, args) = match cli.command {
        Command::DumpLattice(l) => {
            let lattice = Lattice::build(l.arch, l.rows, l.cols)?;
            return emit(&serde_json::to_string_pretty(&lattice)?);
        }
        Command::Anticoncentration(a) => (JobKind::Anticoncentration, a),
        Command::IdentityCheck(a) => (JobKind::IdentityCheck, a),
        Command::Certification(a) => (JobKind::Certification, a),
        Command::IqpRoute(a) => (JobKind::IqpRoute, a),
        Command::PartitionBench(a) => (JobKind::PartitionBench, a),
    };
    let cfg = build_config(kind, &args)?;
    let report = run_job(&cfg)?;
    match (&args.out, args.format) {
        (Some(dir), format) => {
            let paths = write_report(&report, format, dir)?;
            let listing: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            emit(&listing.join("\n"))
        }
        (None, OutputFormat::Json) => emit(&serde_json::to_string_pretty(&report)?),
        (None, OutputFormat::Csv) => {
            let mut buf = Vec::new();
            write_records_csv(&report.records, &mut buf)?;
            emit(String::from_utf8_lossy(&buf).trim_end())
        }
    }
}

/// Print to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
