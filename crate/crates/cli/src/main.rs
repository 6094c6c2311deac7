// Negated comparisons are how NaN gets rejected in range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use antispoof::artifact_gen::ArtifactKind;
use antispoof::dataset::{Split, Task};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::PipelineConfig;

/// Artifact-augmented audio deepfake detection pipeline.
///
/// Settings come from built-in defaults, then the `--config` TOML file, then
/// `ANTISPOOF_*` environment variables, then flags; later sources win.
#[derive(Debug, Parser)]
#[command(name = "antispoof", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, env = "ANTISPOOF_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed for splits, artifacts and training.
    #[arg(long, global = true, env = "ANTISPOOF_SEED")]
    seed: Option<u64>,
    /// Worker threads for file-level parallelism (0: one per core).
    #[arg(long, global = true, env = "ANTISPOOF_JOBS")]
    jobs: Option<usize>,
    /// Directory holding every pipeline output.
    #[arg(long, global = true, env = "ANTISPOOF_WORK_DIR")]
    work_dir: Option<PathBuf>,
    /// Directory that relative corpus audio paths resolve against.
    #[arg(long, global = true, env = "ANTISPOOF_CORPUS_ROOT")]
    corpus_root: Option<PathBuf>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the corpus manifest (`manifests/all.tsv`).
    Import(ImportArgs),
    /// Stratified train/val/test split of the corpus manifest.
    Split(SplitArgs),
    /// Generate artifact-augmented fakes for each split.
    Gen(GenArgs),
    /// Compute mel features for every manifest record.
    Featurize(SplitsArg),
    /// Run the training stages.
    Train(TrainArgs),
    /// Score a split and write a metric report.
    Eval(EvalArgs),
    /// Export hidden-layer embeddings of a split.
    Embed(EvalArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct ImportSource {
    /// ASVspoof LA protocol file.
    #[arg(long)]
    asvspoof: Option<PathBuf>,
    /// Native TSV manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write a synthetic corpus to the corpus root and import it.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[command(flatten)]
    source: ImportSource,
    /// Audio directory for `--asvspoof` (default: the corpus root).
    #[arg(long, requires = "asvspoof")]
    audio_root: Option<PathBuf>,
    /// Audio file extension for `--asvspoof`.
    #[arg(long, default_value = "wav", requires = "asvspoof")]
    ext: String,
    /// Speakers in the synthetic corpus.
    #[arg(long, default_value_t = 30, requires = "synthetic")]
    speakers: usize,
    /// Real and fake clips per synthetic speaker.
    #[arg(long, default_value_t = 10, requires = "synthetic")]
    per_speaker: usize,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Train, val and test fractions, e.g. `0.7,0.15,0.15`.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SplitsArg {
    /// Splits to process.
    #[arg(long, value_delimiter = ',', value_parser = parse_split, default_value = "train,val,test")]
    split: Vec<Split>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Artifact kind: fixed_freq, time_segment, dynamic_freq or background_noise.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ArtifactKind>,
    /// Band `start:end` in Hz for fixed_freq.
    #[arg(long)]
    band: Option<String>,
    /// Mixing weight for background_noise.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    splits: SplitsArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    All,
    Baseline,
    Adm,
    Final,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint file, or `baseline`, `adm` or `final` for the work-dir checkpoints.
    #[arg(long)]
    checkpoint: String,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    /// `main` (real vs fake) or `adm` (fake vs artifact); defaults to `adm`
    /// for the ADM checkpoint and `main` otherwise.
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
}

fn parse_kind(s: &str) -> Result<ArtifactKind, String> {
    s.parse().map_err(|e: antispoof::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: antispoof::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: antispoof::Error| e.to_string())
}

const EXIT_USAGE: u8 = 64;

fn resolve_config(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut config = match &g.config {
        Some(path) if !path.exists() => return Err(Failure::missing(path)),
        Some(path) => PipelineConfig::load(path).map_err(Failure::validation)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(dir) = &g.work_dir {
        config.paths.work_dir = dir.clone();
    }
    if let Some(dir) = &g.corpus_root {
        config.paths.corpus_root = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = resolve_config(&cli.global)?;
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::validation(anyhow::anyhow!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(&config);
    match cli.command {
        Command::Import(a) => {
            let source = if let Some(p) = a.source.asvspoof {
                commands::ImportSource::Asvspoof {
                    protocol: p,
                    audio_root: a.audio_root,
                    ext: a.ext,
                }
            } else if let Some(p) = a.source.manifest {
                commands::ImportSource::Manifest(p)
            } else {
                commands::ImportSource::Synthetic {
                    speakers: a.speakers,
                    per_speaker: a.per_speaker,
                }
            };
            ctx.import(source)
        }
        Command::Split(a) => {
            if let Some(f) = a.fractions {
                let f: [f64; 3] = f.try_into().map_err(|f: Vec<f64>| {
                    commands::Failure::validation(anyhow::anyhow!("--fractions needs 3 values, got {}", f.len()))
                })?;
                config.split.fractions = f;
            }
            config.validate().map_err(Failure::validation)?;
            commands::Context::new(&config).split()
        }
        Command::Gen(a) => {
            if let Some(kind) = a.kind {
                config.artifact.kind = kind;
            }
            if let Some(band) = a.band {
                config.artifact.band = band;
            }
            if let Some(alpha) = a.alpha {
                config.artifact.noise_alpha = alpha;
            }
            config.validate().map_err(Failure::validation)?;
            commands::Context::new(&config).gen(&a.splits.split)
        }
        Command::Featurize(a) => ctx.featurize(&a.split),
        Command::Train(a) => ctx.train(match a.stage {
            Stage::All => None,
            Stage::Baseline => Some(commands::StageName::Baseline),
            Stage::Adm => Some(commands::StageName::Adm),
            Stage::Final => Some(commands::StageName::Final),
        }),
        Command::Eval(a) => ctx.eval(&a.checkpoint, a.split, a.task),
        Command::Embed(a) => ctx.embed(&a.checkpoint, a.split, a.task),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
