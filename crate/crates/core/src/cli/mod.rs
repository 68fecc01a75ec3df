//! The `cca-infer` command line.
//!
//! Every subcommand writes `<output>.meta.json` next to its main output with the
//! full configuration, the seed, the RNG algorithm and SHA-256 checksums of all
//! inputs and outputs. Rerunning with the same arguments reproduces the outputs
//! byte for byte.

mod commands;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::decoder::{DecoderConfig, InitMode};
use crate::error::{Error, Result};
use crate::ingest::Split;
use crate::seed;

pub use commands::{format_decode_output, parse_range};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "cca-infer",
    version,
    about = "CCA projections and annealed caption decoding"
)]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Turn loader warnings into errors.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Estimate the context table Q from a caption file.
    BuildQ(BuildQArgs),
    /// Train a CCA model.
    Train(TrainArgs),
    /// Decode captions for every scene.
    Decode(DecodeArgs),
    /// Score hypotheses with BLEU, or compute reference self-BLEU.
    Eval(EvalArgs),
    /// Train and decode the dev split for a range of m.
    Sweep(SweepArgs),
    /// Print a summary of a model, context table or phrase inventory.
    Inspect(InspectArgs),
}

/// Restricts scene-keyed inputs to one split of a manifest.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// `scene_id<TAB>split` lines.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Keep only scenes of this split (needs --manifest).
    #[arg(long, value_enum, requires = "manifest")]
    pub split: Option<SplitName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl From<SplitName> for Split {
    fn from(s: SplitName) -> Split {
        match s {
            SplitName::Train => Split::Train,
            SplitName::Dev => Split::Dev,
            SplitName::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildQArgs {
    /// `scene_id<TAB>caption` lines.
    #[arg(long)]
    pub captions: PathBuf,
    /// One phrase per line. Without it phrases are extracted from the captions.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Longest extracted phrase, in words.
    #[arg(long, default_value_t = 5)]
    pub max_phrase_len: usize,
    /// Where to write the extracted inventory.
    #[arg(long)]
    pub inventory_out: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Context table TSV.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// `scene_id<TAB>index:value ...` lines.
    #[arg(long)]
    pub features: PathBuf,
    /// Visual feature dimension d.
    #[arg(long)]
    pub dim: usize,
    /// `scene_id<TAB>caption` lines.
    #[arg(long)]
    pub captions: PathBuf,
    /// Output phrase inventory, one phrase per line.
    #[arg(long)]
    pub inventory: PathBuf,
    /// Number of canonical components.
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub svd: SvdArgs,
    /// Model file.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SvdArgs {
    /// Largest min(rows, cols) solved by a dense SVD.
    #[arg(long, default_value_t = 200)]
    pub dense_limit: usize,
    /// Power iterations of the randomized solver.
    #[arg(long, default_value_t = 4)]
    pub power_iters: usize,
    /// Extra random directions of the randomized solver.
    #[arg(long, default_value_t = 10)]
    pub oversample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    TrainingCaption,
    Greedy,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecoderArgs {
    /// Length bonus per word.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Starting temperature T.
    #[arg(long, default_value_t = 10_000.0)]
    pub start_temp: f64,
    /// Cooling factor tau.
    #[arg(long, default_value_t = 0.995)]
    pub cooling: f64,
    /// Annealing stops below this temperature.
    #[arg(long, default_value_t = 0.1)]
    pub min_temp: f64,
    /// Proposals longer than this many words are rejected.
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    /// Floor for the reverse proposal probability.
    #[arg(long, default_value_t = 0.0)]
    pub reverse_epsilon: f64,
    /// Divide the length bonus by the temperature along with the cosine.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub eta_inside_temperature: bool,
    /// Starting caption of each chain.
    #[arg(long, value_enum, default_value_t = InitName::TrainingCaption)]
    pub init: InitName,
    /// Captions used as starting points (required for `training-caption` init).
    #[arg(long)]
    pub init_captions: Option<PathBuf>,
}

impl DecoderArgs {
    pub fn config(&self, seed: u64, trace: bool) -> DecoderConfig {
        DecoderConfig {
            eta: self.eta,
            start_temp: self.start_temp,
            cooling: self.cooling,
            min_temp: self.min_temp,
            seed,
            max_len: self.max_len,
            reverse_epsilon: self.reverse_epsilon,
            eta_inside_temperature: self.eta_inside_temperature,
            init: match self.init {
                InitName::TrainingCaption => InitMode::TrainingCaption,
                InitName::Greedy => InitMode::Greedy,
            },
            trace,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecodeArgs {
    /// Model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// The inventory the model was trained with.
    #[arg(long)]
    pub inventory: PathBuf,
    /// Visual features of the scenes to decode.
    #[arg(long)]
    pub features: PathBuf,
    /// Context table file.
    #[arg(long)]
    pub table: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    /// Write a per-step trace TSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// `scene_id<TAB>caption<TAB>score` lines.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Hypotheses `scene_id<TAB>caption[<TAB>...]`; not used with --self-bleu-batch.
    #[arg(long, required_unless_present = "self_bleu_batch")]
    pub hyps: Option<PathBuf>,
    /// Reference captions file.
    #[arg(long)]
    pub refs: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Score the b-th reference of every scene (0-based) against the others.
    #[arg(long)]
    pub self_bleu_batch: Option<usize>,
    /// Write per-scene sentence BLEU (`scene_id<TAB>bleu`) here.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Key-value report.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Visual features of all scenes.
    #[arg(long)]
    pub features: PathBuf,
    /// Visual feature dimension d.
    #[arg(long)]
    pub dim: usize,
    /// Captions of all scenes; train captions fit the model, dev captions score it.
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub inventory: PathBuf,
    /// Context table file.
    #[arg(long)]
    pub table: PathBuf,
    /// `scene_id<TAB>split` lines.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `start:end:step`, end inclusive.
    #[arg(long, default_value = "30:300:10")]
    pub range: String,
    /// Record failing m values and keep going.
    #[arg(long)]
    pub continue_on_error: bool,
    #[command(flatten)]
    pub svd: SvdArgs,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    /// `m<TAB>bleu<TAB>status` table.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Also write the summary here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Maps an error to the process exit status: 2 for invalid input, usage or a
/// missing file, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        1
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()));
        }
        // The first global pool configuration in a process wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.command {
        Command::BuildQ(a) => commands::build_q(cli, a),
        Command::Train(a) => commands::train(cli, a),
        Command::Decode(a) => commands::decode(cli, a),
        Command::Eval(a) => commands::eval(cli, a),
        Command::Sweep(a) => commands::sweep(cli, a),
        Command::Inspect(a) => commands::inspect(cli, a),
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    invocation: &'a Cli,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    summary: serde_json::Value,
}

/// Path of the metadata file written for `output`.
pub fn meta_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn checksums(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| {
            let sum = seed::sha256_file(p).map_err(|e| Error::io(*p, e))?;
            Ok((p.display().to_string(), sum))
        })
        .collect()
}

fn write_meta(
    cli: &Cli,
    main_output: &Path,
    inputs: &[&Path],
    outputs: &[&Path],
    summary: serde_json::Value,
) -> Result<()> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        rng: seed::RNG_NAME,
        invocation: cli,
        inputs: checksums(inputs)?,
        outputs: checksums(outputs)?,
        summary,
    };
    let path = meta_path(main_output);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
