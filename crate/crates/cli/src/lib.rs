//! Command-line front end for `skd-core`.
//!
//! Exit codes: 0 success, 1 failed gradient check or unreadable input,
//! 2 bad configuration or mismatched dimensions, 3 numeric abort.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use skd_core::config::parse_override;
use skd_core::gradcheck::{run_gradcheck, Corruption, GradcheckOptions};
use skd_core::network::PARAM_NAMES;
use skd_core::run::{self, PreparedData};
use skd_core::synthetic::ClusteredLanguage;
use skd_core::{checkpoint, encode, eval_nll_chunked, ModelDims, Objective, RunConfig, SkdError, Vocabulary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "skd", version, about = "Self-knowledge distillation for LSTM language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its run directory.
    Train(TrainArgs),
    /// Score a text file with a trained checkpoint; prints JSON.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of the network.
    Gradcheck(GradcheckArgs),
    /// Train all four objectives for several seeds and tabulate the results.
    Compare(CompareArgs),
    /// Write a synthetic clustered-vocabulary corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat JSON run config; relative corpus paths are read against its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; the value is parsed as JSON, else taken as a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory [default: runs/<objective>-seed<seed>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary file [default: vocab.txt next to the checkpoint]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Tokens per evaluation window; the score does not depend on it.
    #[arg(long, default_value_t = 4096)]
    pub chunk: usize,
    /// Text to score, one sentence per line.
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 2018)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub vocab: usize,
    #[arg(long, default_value_t = 5)]
    pub embed_in: usize,
    #[arg(long, default_value_t = 6)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub embed_out: usize,
    /// Sequence length.
    #[arg(long, default_value_t = 12)]
    pub len: usize,
    /// Break the analytic gradient: a parameter name, or `distill`.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value = "compare")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100_000)]
    pub tokens: usize,
    #[arg(long, default_value_t = 100)]
    pub clusters: usize,
    #[arg(long, default_value_t = 20)]
    pub words_per_cluster: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure already reported to the user, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<SkdError> for Failure {
    fn from(e: SkdError) -> Self {
        let code = match e {
            SkdError::NonFiniteLoss { .. } | SkdError::InfiniteLoss { .. } => EXIT_NUMERIC,
            SkdError::Io { .. } | SkdError::Csv(_) => EXIT_FAILURE,
            SkdError::Config(_) | SkdError::Domain(_) | SkdError::Checkpoint { .. } | SkdError::Json(_) => {
                EXIT_CONFIG
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn load_config(args: &ConfigArgs, extra: Vec<(String, Value)>) -> Result<RunConfig, Failure> {
    let mut overrides = args
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<skd_core::Result<Vec<_>>>()?;
    overrides.extend(extra);
    let config = match &args.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => {
            let map = overrides.into_iter().collect::<serde_json::Map<_, _>>();
            let mut config = RunConfig::from_value(Value::Object(map))?;
            config.resolve_paths(Path::new(""));
            config
        }
    };
    Ok(config)
}

fn report(out: &mut dyn Write, text: impl std::fmt::Display) -> CmdResult {
    writeln!(out, "{text}").map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("writing output: {e}"),
    })
}

pub fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(o) = args.objective {
        extra.push(("objective".to_owned(), Value::String(o.to_string())));
    }
    if let Some(s) = args.seed {
        extra.push(("seed".to_owned(), Value::from(s)));
    }
    let config = load_config(&args.config, extra)?;
    let dir = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-seed{}", config.objective, config.seed)));
    let outcome = run::run_to_dir(&config, &dir)?;
    let valid = outcome
        .report
        .valid
        .map(|r| format!(", valid token NLL {:.4}", r.token_nll))
        .unwrap_or_default();
    report(
        out,
        format!(
            "{} run: {} iterations{}; wrote {}",
            config.objective.label(),
            outcome.report.iterations,
            valid,
            dir.display()
        ),
    )
}

pub fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let vocab_path = args.vocab.unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new(""))
            .join(run::VOCAB_FILE)
    });
    let model = checkpoint::load(&args.checkpoint)?;
    let vocab = Vocabulary::read(&vocab_path)?;
    if model.dims().vocab != vocab.len() {
        return Err(config_failure(format!(
            "checkpoint has {} output classes but {} lists {} tokens",
            model.dims().vocab,
            vocab_path.display(),
            vocab.len()
        )));
    }
    let text = fs::read_to_string(&args.data).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", args.data.display()),
    })?;
    let nll = eval_nll_chunked(&model, &encode(&text, &vocab), args.chunk)?;
    let json = serde_json::to_string_pretty(&nll).map_err(SkdError::from)?;
    report(out, json)
}

fn parse_corruption(name: &str) -> Result<Corruption, Failure> {
    if name == "distill" {
        Ok(Corruption::DistillTerm)
    } else if PARAM_NAMES.contains(&name) {
        Ok(Corruption::Parameter(name.to_owned()))
    } else {
        Err(config_failure(format!(
            "unknown corruption target {name:?}; expected distill or one of {}",
            PARAM_NAMES.join(", ")
        )))
    }
}

pub fn cmd_gradcheck(args: GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    if args.vocab > 20 || args.hidden > 8 {
        return Err(config_failure(
            "finite differences need vocab <= 20 and hidden <= 8",
        ));
    }
    let options = GradcheckOptions {
        dims: ModelDims {
            vocab: args.vocab,
            embed_in: args.embed_in,
            hidden: args.hidden,
            embed_out: args.embed_out,
        },
        seed: args.seed,
        sequence_len: args.len,
        corruption: args.corrupt.as_deref().map(parse_corruption).transpose()?,
        ..GradcheckOptions::default()
    };
    let result = run_gradcheck(&options)?;
    for case in &result.cases {
        report(
            out,
            format!(
                "{:<4} alpha={:<4} max_rel_error={:.3e} worst={}[{}]",
                case.objective, case.alpha, case.max_rel_error, case.worst_parameter, case.worst_index
            ),
        )?;
    }
    report(out, format!("max relative error {:.3e}", result.max_rel_error()))?;
    if result.passed() {
        return Ok(());
    }
    let worst = result.worst().expect("a failing report has cases");
    Err(Failure {
        code: EXIT_FAILURE,
        message: format!(
            "gradient check failed for {} (entry {}, {} alpha={}): relative error {:.3e} >= {:e}",
            worst.worst_parameter,
            worst.worst_index,
            worst.objective,
            worst.alpha,
            worst.max_rel_error,
            result.tolerance
        ),
    })
}

pub fn cmd_compare(args: CompareArgs, out: &mut dyn Write) -> CmdResult {
    if args.seeds.is_empty() {
        return Err(config_failure("--seeds needs at least one seed"));
    }
    // each objective validates its own requirements, so check them all first
    let base = load_config(&args.config, Vec::new())?;
    for objective in Objective::ALL {
        RunConfig { objective, ..base.clone() }.validate()?;
    }
    let data: PreparedData = run::prepare_data(&base)?;
    let runs = run::compare(&base, &args.seeds, &data, Some(&args.out))?;
    let table = run::render_table(&run::summarize(&runs));
    run::write_compare_csv(&runs, &args.out.join("compare.csv"))?;
    let summary = args.out.join("summary.md");
    fs::write(&summary, &table).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", summary.display()),
    })?;
    report(out, table.trim_end())
}

pub fn cmd_synth(args: SynthArgs, out: &mut dyn Write) -> CmdResult {
    if args.clusters == 0 || args.words_per_cluster == 0 || args.tokens == 0 {
        return Err(config_failure("tokens, clusters and words-per-cluster must be positive"));
    }
    let lang = ClusteredLanguage::new(args.clusters, args.words_per_cluster, args.seed);
    fs::create_dir_all(&args.out).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", args.out.display()),
    })?;
    // 90/5/5 split, each drawn with its own seed
    let held_out = (args.tokens / 20).max(1);
    let splits = [
        ("train.txt", args.tokens.saturating_sub(2 * held_out), 1),
        ("valid.txt", held_out, 2),
        ("test.txt", held_out, 3),
    ];
    for (name, tokens, offset) in splits {
        let path = args.out.join(name);
        let text = lang.generate(tokens.max(1), args.seed.wrapping_mul(1000).wrapping_add(offset));
        fs::write(&path, text).map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    report(out, format!("wrote {}", args.out.display()))
}
