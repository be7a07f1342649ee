use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dsm_core::simulator::{run_with_store, SimulationScript};
use dsm_core::{
    assert_trace, build_assessment_matrix, case_study, export_csv, read_interval, RecordKind,
    Registry, ReplayFilter, ScenarioStore, StoreConfig, Timestamp,
};
use dsm_service::{ServiceConfig, TOKEN_ENV};
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dsm", version, about = "Data source failover manager")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Run or check a crisis script.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Print the assessment matrix of a registry.
    Matrix {
        registry: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        data_type: Option<String>,
    },
    /// Work with a scenario store directory.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Check registry documents.
    #[command(subcommand)]
    Registry(RegistryCmd),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    store_dir: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    grace_multiplier: f64,
    #[arg(long, default_value_t = 1000)]
    margin_ms: i64,
    #[arg(long, default_value_t = 0.0)]
    hysteresis: f64,
    #[arg(long, default_value_t = 1024)]
    event_buffer: usize,
    #[arg(long, default_value_t = 1000)]
    tick_ms: u64,
    #[arg(long)]
    idle_close_ms: Option<i64>,
    #[arg(long, env = TOKEN_ENV, hide_env_values = true)]
    token: Option<String>,
}

#[derive(Subcommand)]
enum Simulate {
    /// Run a script and print its decisions.
    Run {
        /// Script file, or the name of a shipped script such as `flood`.
        script: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full trace as JSON.
        #[arg(long)]
        export_trace: Option<PathBuf>,
        /// Persist the run's scenario store here.
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
    /// Run a script and check its expectations; exits non-zero on failure.
    Assert {
        script: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the shipped scripts.
    List,
}

#[derive(Subcommand)]
enum StoreCmd {
    /// Export records with event time in an interval as CSV.
    Export {
        dir: PathBuf,
        #[arg(long)]
        from: Option<i64>,
        #[arg(long)]
        to: Option<i64>,
        #[arg(long, value_enum)]
        kind: Vec<Kind>,
        #[arg(long)]
        data_type: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-source availability spans of a data type.
    Timeline {
        dir: PathBuf,
        #[arg(long)]
        data_type: String,
        #[arg(long)]
        from: i64,
        #[arg(long)]
        to: i64,
    },
}

#[derive(Subcommand)]
enum RegistryCmd {
    /// Load and validate a registry document.
    Validate { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Observation,
    Transition,
    Decision,
    OperatorAction,
}

impl From<Kind> for RecordKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Observation => RecordKind::Observation,
            Kind::Transition => RecordKind::Transition,
            Kind::Decision => RecordKind::Decision,
            Kind::OperatorAction => RecordKind::OperatorAction,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve(args) => serve(args)?,
        Command::Simulate(cmd) => return simulate(cmd),
        Command::Matrix {
            registry,
            format,
            data_type,
        } => matrix(&registry, format, data_type)?,
        Command::Store(cmd) => store(cmd)?,
        Command::Registry(RegistryCmd::Validate { path }) => {
            let registry = Registry::load_file(&path)
                .with_context(|| format!("invalid registry {}", path.display()))?;
            println!(
                "ok: {} attributes, {} sources, data types [{}], version {}",
                registry.schema().len(),
                registry.sources().len(),
                registry
                    .data_types()
                    .iter()
                    .map(|d| d.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
                registry.content_version()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let config = ServiceConfig {
        listen: args.listen,
        registry: args.registry,
        store_dir: args.store_dir,
        grace_multiplier: args.grace_multiplier,
        margin_ms: args.margin_ms,
        hysteresis: args.hysteresis,
        event_buffer: args.event_buffer,
        tick_ms: args.tick_ms,
        idle_close_ms: args.idle_close_ms,
        token: args.token,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(dsm_service::serve(config))?;
    Ok(())
}

fn load_script(name: &str) -> Result<SimulationScript> {
    let path = Path::new(name);
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        let file = format!("{}.json", name.trim_end_matches(".json"));
        match case_study::scripts().iter().find(|(n, _)| *n == file) {
            Some((_, text)) => text.to_string(),
            None => bail!("no script file or shipped script named {name:?}"),
        }
    };
    SimulationScript::from_json(&text).with_context(|| format!("parsing script {name}"))
}

fn simulate(cmd: Simulate) -> Result<ExitCode> {
    match cmd {
        Simulate::List => {
            for (name, text) in case_study::scripts() {
                let script = SimulationScript::from_json(text)?;
                println!(
                    "{:<20} {}",
                    name.trim_end_matches(".json"),
                    script.description
                );
            }
        }
        Simulate::Run {
            script,
            seed,
            export_trace,
            store_dir,
        } => {
            let script = load_script(&script)?;
            let store = match &store_dir {
                Some(dir) => ScenarioStore::open(dir, StoreConfig::default())?,
                None => ScenarioStore::in_memory(),
            };
            let (trace, _system) = run_with_store(&script, seed.unwrap_or(script.seed), store)?;
            println!(
                "{}: {} observations, {} transitions, {} decisions",
                trace.script,
                trace.observations,
                trace.transitions.len(),
                trace.decisions.len()
            );
            for d in &trace.decisions {
                println!(
                    "  {:>10}  {:<20} {:<18} -> {:<18} effective {}  ({})",
                    d.decided_at.to_string(),
                    d.action.as_str(),
                    d.failed_source.as_ref().map_or("-", |s| s.as_str()),
                    d.chosen.as_ref().map_or("none", |s| s.as_str()),
                    d.effective_at.map_or("-".into(), |t| t.to_string()),
                    d.rationale
                );
            }
            for (dt, des) in &trace.final_designations {
                println!("  final: {dt} uses {}", des.source);
            }
            if let Some(path) = export_trace {
                fs::write(&path, serde_json::to_string_pretty(&trace)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Simulate::Assert { script, seed } => {
            let script = load_script(&script)?;
            let (trace, _) = run_with_store(
                &script,
                seed.unwrap_or(script.seed),
                ScenarioStore::in_memory(),
            )?;
            let report = assert_trace(&trace, &script.expectations);
            print!("{}", report.render());
            let failed = report.results.iter().filter(|r| !r.passed).count();
            println!(
                "{}: {} of {} expectations passed",
                script.name,
                report.results.len() - failed,
                report.results.len()
            );
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn matrix(path: &Path, format: Format, data_type: Option<String>) -> Result<()> {
    let registry = Registry::load_file(path)
        .with_context(|| format!("invalid registry {}", path.display()))?;
    let matrix = build_assessment_matrix(&registry, Timestamp(0));
    let data_types = match data_type {
        Some(dt) => {
            let dt = dt.as_str().into();
            if matrix.sources_of(&dt).next().is_none() {
                bail!("no sources of data type {:?}", dt.as_str());
            }
            vec![dt]
        }
        None => registry.data_types(),
    };
    let mut out = io::stdout().lock();
    match format {
        Format::Table => {
            for dt in &data_types {
                writeln!(out, "{}", matrix.table(dt).render())?;
            }
        }
        Format::Csv => write!(out, "{}", matrix.to_csv())?,
        Format::Json => {
            let tables: Vec<_> = data_types.iter().map(|dt| matrix.table(dt)).collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&tables)?)?;
        }
    }
    Ok(())
}

fn store(cmd: StoreCmd) -> Result<()> {
    match cmd {
        StoreCmd::Export {
            dir,
            from,
            to,
            kind,
            data_type,
            out,
        } => {
            let filter = ReplayFilter {
                kinds: kind.into_iter().map(RecordKind::from).collect(),
                data_type: data_type.map(Into::into),
            };
            let records = read_interval(
                &dir,
                from.map_or(Timestamp::MIN, Timestamp),
                to.map_or(Timestamp::MAX, Timestamp),
                &filter,
            )?;
            match out {
                Some(path) => {
                    let file = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    export_csv(&records, file)?;
                    eprintln!("wrote {} records to {}", records.len(), path.display());
                }
                None => export_csv(&records, io::stdout().lock())?,
            }
        }
        StoreCmd::Timeline {
            dir,
            data_type,
            from,
            to,
        } => {
            let store = ScenarioStore::open(&dir, StoreConfig::default())?;
            let timeline =
                store.availability_timeline(Timestamp(from), Timestamp(to), &data_type.into())?;
            for (source, spans) in timeline {
                println!("{source}");
                for s in spans {
                    println!("  {:<20} {} .. {}", s.label(), s.from, s.to);
                }
            }
        }
    }
    Ok(())
}
