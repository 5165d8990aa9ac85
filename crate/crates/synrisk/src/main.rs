use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use synrisk::config::{self, RunConfig};
use synrisk::error::{CliError, Result};
use synrisk::pipeline;

/// Disclosure risk assessment for partially synthetic microdata.
#[derive(Debug, Parser)]
#[command(name = "synrisk", version, about)]
struct Cli {
    /// Run configuration (JSON). Command-line flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory. Falls back to $SYNRISK_OUT_DIR, then ./synrisk-out.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Leave per-record and per-target detail out of the report.
    #[arg(long, global = true)]
    summary_only: bool,
    /// More logging (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthesizerKind {
    Mixture,
    Cart,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "CSV")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "JSON")]
    schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    synthesizer: Option<SynthesizerKind>,
    /// Number of synthetic datasets.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a synthesizer and write a release directory.
    Synthesize {
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Attribute disclosure risk of an existing release.
    AttributeRisk {
        #[arg(long, value_name = "JSON")]
        release_manifest: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        schema: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        /// Intruder scenario (JSON, same shape as the `attribute` section).
        #[arg(long, value_name = "JSON")]
        scenario: Option<PathBuf>,
        /// `all` or a comma-separated list of record ids.
        #[arg(long)]
        records: Option<String>,
        /// Report path; defaults to <out-dir>/report.json.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Identification disclosure risk of an existing release.
    IdentificationRisk {
        #[arg(long, value_name = "JSON")]
        release_manifest: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        schema: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        targets: Option<PathBuf>,
        /// Matching configuration (JSON, same shape as the `identification`
        /// section).
        #[arg(long = "config", id = "match_config", value_name = "JSON")]
        match_config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Synthesize, then assess attribute and identification risk.
    Full {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, value_name = "CSV")]
        targets: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        scenario: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        match_config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Check a configuration and print it with every default filled in.
    Validate {
        /// Configuration file; overrides the top-level --config.
        file: Option<PathBuf>,
    },
}

fn set_path(map: &mut Map<String, Value>, key: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        map.insert(key.into(), json!(p));
    }
}

fn set_synth(map: &mut Map<String, Value>, synth: &SynthArgs) {
    set_path(map, "data", &synth.data);
    set_path(map, "schema", &synth.schema);
    if let Some(kind) = synth.synthesizer {
        let kind = match kind {
            SynthesizerKind::Mixture => "mixture",
            SynthesizerKind::Cart => "cart",
        };
        let same = map.get("synthesizer").and_then(|s| s.get("kind")).and_then(Value::as_str) == Some(kind);
        if !same {
            map.insert("synthesizer".into(), json!({ "kind": kind }));
        }
    }
    if let Some(m) = synth.m {
        let entry = map.entry("synthesizer").or_insert_with(|| json!({ "kind": "mixture" }));
        if let Value::Object(s) = entry {
            s.insert("m".into(), json!(m));
        }
    }
}

fn set_section(map: &mut Map<String, Value>, key: &str, file: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = file {
        map.insert(key.into(), config::read_section(path)?);
    }
    Ok(())
}

fn parse_records(text: &str) -> Result<Value> {
    if text.trim() == "all" {
        return Ok(json!("all"));
    }
    let ids = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config { violations: vec![format!("--records: {e}")] })?;
    Ok(json!({ "ids": ids }))
}

/// Merges the config file (if any) with the command line.
fn assemble(cli: &Cli) -> Result<(Map<String, Value>, Option<PathBuf>)> {
    let file = match &cli.command {
        Command::Validate { file: Some(f) } => Some(f.clone()),
        _ => cli.config.clone(),
    };
    let mut map = match &file {
        Some(f) => config::read_document(f)?,
        None => Map::new(),
    };
    let mut out = None;
    let pipeline = match &cli.command {
        Command::Synthesize { synth } => {
            set_synth(&mut map, synth);
            Some("synthesize")
        }
        Command::AttributeRisk { release_manifest, schema, data, scenario, records, out: o } => {
            set_path(&mut map, "release_manifest", release_manifest);
            set_path(&mut map, "schema", schema);
            set_path(&mut map, "data", data);
            set_section(&mut map, "attribute", scenario)?;
            if let Some(r) = records {
                let value = parse_records(r)?;
                let section = map.entry("attribute").or_insert_with(|| json!({}));
                if let Value::Object(s) = section {
                    s.insert("records".into(), value);
                }
            }
            out.clone_from(o);
            Some("attribute-risk")
        }
        Command::IdentificationRisk { release_manifest, schema, data, targets, match_config, out: o } => {
            set_path(&mut map, "release_manifest", release_manifest);
            set_path(&mut map, "schema", schema);
            set_path(&mut map, "data", data);
            set_path(&mut map, "targets", targets);
            set_section(&mut map, "identification", match_config)?;
            out.clone_from(o);
            Some("identification-risk")
        }
        Command::Full { synth, targets, scenario, match_config, out: o } => {
            set_synth(&mut map, synth);
            set_path(&mut map, "targets", targets);
            set_section(&mut map, "attribute", scenario)?;
            set_section(&mut map, "identification", match_config)?;
            out.clone_from(o);
            Some("full")
        }
        Command::Validate { .. } => None,
    };
    if let Some(p) = pipeline {
        map.insert("pipeline".into(), json!(p));
    }
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), json!(seed));
    }
    if let Some(jobs) = cli.jobs {
        map.insert("jobs".into(), json!(jobs));
    }
    set_path(&mut map, "output_dir", &cli.out_dir);
    if cli.summary_only {
        map.insert("summary_only".into(), json!(true));
    }
    Ok((map, out))
}

fn execute(cli: &Cli) -> Result<()> {
    let (map, out) = assemble(cli)?;
    let config: RunConfig = config::normalize(&map)?;
    if let Command::Validate { .. } = cli.command {
        println!("{}", serde_json::to_string_pretty(&config).expect("serializable"));
        return Ok(());
    }
    log::info!("running {} with config hash {}", config.pipeline.name(), config.hash());
    let outcome = pipeline::run(&config, out.as_deref())?;
    for f in &outcome.files {
        println!("{}", display(f));
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("serializable"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
