use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use airdrop_forensics::pipeline::{synth_to_dir, OutputFormat, Pipeline, PipelineError, RunConfig, Stage};
use airdrop_forensics::synth::{NoiseSpec, PatternSpec, PlantKind, ScenarioSpec};

#[derive(Parser)]
#[command(name = "airdrop-forensics", version, about = "Staged analysis of a token airdrop community")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "AIRDROP_FORENSICS_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Days between cumulative graph slices.
    #[arg(long, global = true)]
    slice_interval: Option<u32>,
    /// Extra export format for graphs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Graphml,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw exports into the canonical event store.
    Ingest,
    /// Token and external graphs plus the weekly metric series.
    Graph,
    /// Transaction flows, features, clustering and role mapping.
    Cluster,
    /// Component census and suspicious pattern detection (needs `graph`).
    Detect,
    /// Replay the eligibility rules over the interacting population.
    Eligibility,
    /// Behavior, attrition, contract ranking and holding distributions (needs `cluster`).
    Stats,
    /// Assemble report.json and report.md from the stage artifacts.
    Report,
    /// Every stage in order.
    RunAll,
    /// Generate a synthetic corpus with ground truth and a run.toml for it.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario file (TOML or JSON); without it a reference mix is used.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Claimants in the reference mix.
        #[arg(long, default_value_t = 2000)]
        members: usize,
        /// Planted instances per pattern in the reference mix.
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
}

fn config_error(msg: String) -> PipelineError {
    PipelineError::ConfigInvalid(msg)
}

fn read_spec(path: &Path) -> Result<ScenarioSpec, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

fn default_spec(seed: u64, members: usize, instances: usize) -> ScenarioSpec {
    let mut spec = ScenarioSpec::reference_mix(seed, members);
    spec.patterns = [
        PlantKind::Chain,
        PlantKind::Sunflower,
        PlantKind::Relay,
        PlantKind::Staging,
        PlantKind::Sponsorship,
        PlantKind::Cautious,
        PlantKind::Blatant,
    ]
    .into_iter()
    .map(|k| PatternSpec::new(k, instances))
    .collect();
    spec.noise = NoiseSpec { traders: members / 4, decoys: instances * 2, external_edges: members / 4, ..spec.noise };
    spec
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage = match cli.command {
        Command::Synth { seed, spec, members, instances } => {
            let spec = match spec {
                Some(p) => ScenarioSpec { seed, ..read_spec(&p)? },
                None => default_spec(seed, members, instances),
            };
            let out = cli.out.unwrap_or_else(|| PathBuf::from("synth"));
            synth_to_dir(&spec, &out)?;
            log::info!("wrote scenario and run.toml to {}", out.display());
            return Ok(());
        }
        Command::Ingest => Some(Stage::Ingest),
        Command::Graph => Some(Stage::Graph),
        Command::Cluster => Some(Stage::Cluster),
        Command::Detect => Some(Stage::Detect),
        Command::Eligibility => Some(Stage::Eligibility),
        Command::Stats => Some(Stage::Stats),
        Command::Report => Some(Stage::Report),
        Command::RunAll => None,
    };
    let path = cli.config.ok_or_else(|| config_error("--config is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(days) = cli.slice_interval {
        config.graph.slice_interval_days = days;
    }
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
        Format::Graphml => OutputFormat::Graphml,
        Format::Dot => OutputFormat::Dot,
    };
    let pipeline = Pipeline::new(config)?.with_format(format);
    match stage {
        Some(s) => pipeline.run_stage(s),
        None => pipeline.run_all(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("AIRDROP_FORENSICS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = config_error(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
