use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qeii::duel::{run_duel, DuelConfig, DuelReport, Exchange, TunerKind};

use crate::{config_error, load_kg, Format};

/// Config file layout: graph paths and output settings at the top level,
/// duel hyperparameters under `[duel]`. Relative paths are resolved against
/// the config file's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: Option<PathBuf>,
    pub beta: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub format: Option<Format>,
    pub duel: DuelConfig,
}

#[derive(Args)]
pub struct DuelArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Alpha's graph (TSV), overrides the config.
    #[arg(long)]
    alpha: Option<PathBuf>,
    #[arg(long)]
    beta: Option<PathBuf>,
    /// Output directory for messages, scores and manifest.
    #[arg(short, long, env = "QEII_WORKDIR")]
    workdir: Option<PathBuf>,
    #[arg(long, value_enum)]
    tuner: Option<CliTuner>,
    #[arg(long)]
    seed_shared: Option<u64>,
    #[arg(long)]
    seed_alpha: Option<u64>,
    #[arg(long)]
    seed_beta: Option<u64>,
    #[arg(long)]
    repeat_sets: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum CliTuner {
    Rule,
    Bayes,
    Retrieval,
}

impl From<CliTuner> for TunerKind {
    fn from(t: CliTuner) -> Self {
        match t {
            CliTuner::Rule => TunerKind::Rule,
            CliTuner::Bayes => TunerKind::Bayes,
            CliTuner::Retrieval => TunerKind::Retrieval,
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.alpha, &mut cfg.beta, &mut cfg.workdir]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

/// Config file, then flags (and the workdir environment variable) on top.
fn resolve(args: DuelArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if args.alpha.is_some() {
        cfg.alpha = args.alpha;
    }
    if args.beta.is_some() {
        cfg.beta = args.beta;
    }
    if args.workdir.is_some() {
        cfg.workdir = args.workdir;
    }
    if args.format.is_some() {
        cfg.format = args.format;
    }
    if let Some(t) = args.tuner {
        cfg.duel.tuner = t.into();
    }
    if let Some(s) = args.seed_shared {
        cfg.duel.seeds.shared = s;
    }
    if let Some(s) = args.seed_alpha {
        cfg.duel.seeds.alpha = s;
    }
    if let Some(s) = args.seed_beta {
        cfg.duel.seeds.beta = s;
    }
    if let Some(n) = args.repeat_sets {
        cfg.duel.repeat_sets = n;
    }
    if cfg.alpha.is_none() || cfg.beta.is_none() {
        return Err(config_error(
            "both graphs are required (config alpha/beta or --alpha/--beta)",
        ));
    }
    if cfg.workdir.is_none() {
        cfg.workdir = Some(PathBuf::from("qeii-run"));
    }
    cfg.duel
        .validate()
        .map_err(|e| config_error(e.to_string()))?;
    Ok(cfg)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
    triples: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    config: &'a DuelConfig,
    seeds: qeii::duel::Seeds,
    alpha: InputRecord,
    beta: InputRecord,
}

/// One row per question set, then the means and the verdict.
pub fn score_table(r: &DuelReport) -> String {
    let mut out = String::from("set\talpha_cross\tbeta_cross\talpha_self\tbeta_self\n");
    for s in &r.sets {
        let _ = writeln!(
            out,
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            s.index, s.alpha_cross.score, s.beta_cross.score, s.alpha_self, s.beta_self
        );
    }
    let _ = writeln!(
        out,
        "mean\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
        r.mean_alpha_cross, r.mean_beta_cross, r.mean_alpha_self, r.mean_beta_self
    );
    let _ = writeln!(out, "verdict\t{}", r.verdict);
    out
}

pub fn duel(args: DuelArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let (alpha_path, beta_path) = (cfg.alpha.clone().unwrap(), cfg.beta.clone().unwrap());
    let workdir = cfg.workdir.clone().unwrap();
    let kg_alpha = load_kg(&alpha_path)?;
    let kg_beta = load_kg(&beta_path)?;
    std::fs::create_dir_all(&workdir).with_context(|| format!("creating {}", workdir.display()))?;

    let config_json = serde_json::to_string(&cfg.duel)?;
    let record = |p: &Path, triples| -> Result<InputRecord> {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(InputRecord {
            path: p.display().to_string(),
            sha256: sha256_hex(&bytes),
            triples,
        })
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(config_json.as_bytes()),
        config: &cfg.duel,
        seeds: cfg.duel.seeds,
        alpha: record(&alpha_path, kg_alpha.num_triples())?,
        beta: record(&beta_path, kg_beta.num_triples())?,
    };
    std::fs::write(
        workdir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )
    .context("writing manifest")?;

    let mut ex = Exchange::on_disk(&workdir);
    let duel = run_duel(kg_alpha, kg_beta, &cfg.duel, &mut ex)?;
    let report = &duel.report;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let table = score_table(report);
    std::fs::write(workdir.join("scores.tsv"), &table).context("writing scores")?;
    let report_json = serde_json::to_string_pretty(report)?;
    std::fs::write(workdir.join("report.json"), &report_json).context("writing report")?;
    match cfg.format.unwrap_or(Format::Table) {
        Format::Table => print!("{table}"),
        Format::Json => println!("{report_json}"),
    }
    Ok(())
}
