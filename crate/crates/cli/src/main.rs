//! `qeii`: knowledge graph quality duels from the command line.

mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qeii::duel::DuelError;
use qeii::kg::{ablate_triples, common_subgraph, KnowledgeGraph, Metrics};
use qeii::protocol::Message;

/// Input the user can fix: bad config, missing files, malformed graphs.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
}

#[derive(Parser)]
#[command(
    name = "qeii",
    version,
    about = "Compare two knowledge graphs by a question duel"
)]
struct Cli {
    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full duel and write scores plus every exchanged message.
    Duel(run::DuelArgs),
    /// Print the shallow statistics of one graph.
    Metrics { kg: PathBuf },
    /// Write the triples two graphs share.
    CommonKg {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Remove `n` triples from KG, split between triples unique to it and
    /// triples shared with OTHER by RATIO (unique per common).
    Ablate {
        kg: PathBuf,
        other: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(short, long, default_value_t = 4.0)]
        ratio: f64,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Validate one exchanged message against its schema.
    Inspect { file: PathBuf },
}

pub fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    if !path.is_file() {
        return Err(config_error(format!(
            "no such graph file: {}",
            path.display()
        )));
    }
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("kg")
        .to_owned();
    KnowledgeGraph::load(path, name).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn metrics(path: &Path) -> Result<()> {
    let kg = load_kg(path)?;
    let m = Metrics::compute(&kg).with_context(|| format!("metrics of {}", path.display()))?;
    print!("{}", m.to_lines());
    Ok(())
}

fn common(a: &Path, b: &Path, out: &Path) -> Result<()> {
    let (ka, kb) = (load_kg(a)?, load_kg(b)?);
    let c = common_subgraph(&ka, &kb);
    write_file(out, &c.to_tsv())?;
    println!(
        "{} common triples written to {}",
        c.num_triples(),
        out.display()
    );
    Ok(())
}

fn ablate(kg: &Path, other: &Path, n: usize, ratio: f64, seed: u64, out: &Path) -> Result<()> {
    let (k, o) = (load_kg(kg)?, load_kg(other)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut =
        ablate_triples(&k, &o, n, ratio, &mut rng).map_err(|e| config_error(e.to_string()))?;
    write_file(out, &cut.to_tsv())?;
    println!(
        "{} of {} triples kept, written to {}",
        cut.num_triples(),
        k.num_triples(),
        out.display()
    );
    Ok(())
}

fn inspect(file: &Path) -> Result<()> {
    let msg = Message::read(file).with_context(|| format!("inspecting {}", file.display()))?;
    println!("{}: valid {}", file.display(), msg.summary());
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(DuelError::Config(_)) = cause.downcast_ref::<DuelError>() {
            return 2;
        }
        if let Some(qeii::protocol::ProtocolError::UnknownFile(_)) = cause.downcast_ref() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Duel(args) => run::duel(args),
        Command::Metrics { kg } => metrics(&kg),
        Command::CommonKg { a, b, out } => common(&a, &b, &out),
        Command::Ablate {
            kg,
            other,
            n,
            ratio,
            seed,
            out,
        } => ablate(&kg, &other, n, ratio, seed, &out),
        Command::Inspect { file } => inspect(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
