use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use leakprobe::corpus::{ContextOptions, SIMILARITY_FORMULA};
use leakprobe::pairminer::{verify_pair, Selection};
use leakprobe::pipeline::{self, PipelineError, ReportFormat, RunConfig};
use leakprobe::prompts::PromptTemplate;
use leakprobe::{
    dataset_stats, load_manifest, min_word_distance, mine_pairs, stem, Condition, ContextMode,
    Distance, DistanceConfig, Lexicon, MiningConfig,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "leakprobe", version, about = "Measure context-induced transcription leakage")]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true, env = "LEAKPROBE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DictArg {
    /// Pronunciation dictionary in CMU format.
    #[arg(long, env = "LEAKPROBE_DICT")]
    dict: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary inspection.
    Lex {
        #[command(subcommand)]
        command: LexCommand,
    },
    /// Minimum phoneme distance between two words.
    Dist {
        w1: String,
        w2: String,
        #[command(flatten)]
        dict: DictArg,
        #[arg(long)]
        keep_stress: bool,
        #[arg(long, default_value_t = 2)]
        max_distance: usize,
    },
    /// Porter stem of each word (lowercased first).
    Stem {
        #[arg(required = true)]
        words: Vec<String>,
    },
    /// Mine acoustic/context word pairs from an entity list.
    Mine(MineArgs),
    /// Check a manifest against the item rules.
    Validate {
        manifest: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Dataset statistics for a manifest, as JSON.
    Stats {
        manifest: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Assemble textual contexts for every item.
    Contexts(ContextsArgs),
    /// Score model transcripts against a manifest.
    Score(ScoreArgs),
    /// Merge score files into comparison tables.
    Report {
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum LexCommand {
    /// Headword, pronunciation and phoneme counts.
    Stats { file: PathBuf },
}

#[derive(Args)]
struct MineArgs {
    /// TSV of `entity<TAB>dataset` lines.
    #[arg(long)]
    entities: PathBuf,
    #[command(flatten)]
    dict: DictArg,
    #[arg(long, default_value_t = 2)]
    max_distance: usize,
    #[arg(long)]
    keep_stress: bool,
    #[arg(long)]
    no_first_phoneme: bool,
    #[arg(long)]
    keep_same_stem: bool,
    /// Emit every qualifying candidate instead of the closest one.
    #[arg(long)]
    all_candidates: bool,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Args)]
struct ContextsArgs {
    manifest: PathBuf,
    /// Context mode (none, word, sent1, sent5, sent10) or `all` for the full matrix.
    #[arg(long, default_value = "all")]
    mode: String,
    #[arg(long)]
    mitigation: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = " ")]
    joiner: String,
    /// Also render the inference prompt (phi4 or qwen).
    #[arg(long)]
    template: Option<PromptTemplate>,
    #[arg(long)]
    strict: bool,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    hypotheses: PathBuf,
    #[arg(long = "out-dir", short)]
    out_dir: PathBuf,
    /// Restrict to these condition ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Dictionary whose hash is recorded in the provenance header.
    #[arg(long, env = "LEAKPROBE_DICT")]
    dict: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
    // Downstream reader went away (`| head`).
    ClosedPipe,
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            CliError::ClosedPipe
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::ClosedPipe) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn load_lexicon(path: &Path) -> Result<Lexicon, CliError> {
    let parsed = Lexicon::from_path(path).map_err(|e| CliError::Failure(e.to_string()))?;
    for issue in &parsed.issues {
        warn!("{}:{}: {}", path.display(), issue.line, issue.reason);
    }
    Ok(parsed.lexicon)
}

fn print_json<T: serde::Serialize>(out: &mut impl Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| match e.io_error_kind() {
        Some(kind) => std::io::Error::from(kind).into(),
        None => CliError::Failure(e.to_string()),
    })?;
    writeln!(out)?;
    Ok(())
}

fn run(command: Command) -> Result<u8, CliError> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Lex {
            command: LexCommand::Stats { file },
        } => {
            let lex = load_lexicon(&file)?;
            print_json(&mut stdout, &lex.stats())?;
        }
        Command::Dist {
            w1,
            w2,
            dict,
            keep_stress,
            max_distance,
        } => {
            let lex = load_lexicon(&dict.dict)?;
            let cfg = DistanceConfig {
                strip_stress: !keep_stress,
                max_distance,
            };
            match min_word_distance(&lex, &w1, &w2, &cfg) {
                Ok(Distance::Within(d)) => writeln!(stdout, "{d}")?,
                Ok(Distance::AboveCap) => writeln!(stdout, ">{max_distance}")?,
                Err(e) => return Err(CliError::Failure(e.to_string())),
            }
        }
        Command::Stem { words } => {
            for w in &words {
                writeln!(stdout, "{}", stem(&w.to_lowercase()))?;
            }
        }
        Command::Mine(args) => mine(args)?,
        Command::Validate { manifest, strict } => {
            let m = load_manifest(&manifest, false).map_err(|e| CliError::Failure(e.to_string()))?;
            for v in &m.report.violations {
                writeln!(
                    stdout,
                    "line {}\t{}\t{}\t{}",
                    v.line,
                    v.item_id.as_deref().unwrap_or("-"),
                    v.rule,
                    v.detail
                )?;
            }
            eprintln!("{} valid items, {} violations", m.items.len(), m.report.violations.len());
            if strict && !m.report.is_clean() {
                return Ok(EXIT_FAILURE);
            }
        }
        Command::Stats { manifest, strict } => {
            let m = load_manifest(&manifest, strict).map_err(|e| CliError::Failure(e.to_string()))?;
            for v in &m.report.violations {
                warn!("line {}: {} ({})", v.line, v.rule, v.detail);
            }
            let stats = dataset_stats(&m.items);
            print_json(&mut stdout, &serde_json::json!({
                "similarity_formula": SIMILARITY_FORMULA,
                "stats": stats,
            }))?;
        }
        Command::Contexts(args) => contexts(args)?,
        Command::Score(args) => {
            let dictionary_sha256 = match &args.dict {
                Some(p) => Some(pipeline::sha256_file(p)?),
                None => None,
            };
            let summary = pipeline::cmd_score(&RunConfig {
                manifest: args.manifest,
                hypotheses: args.hypotheses,
                conditions: args.conditions,
                out_dir: args.out_dir,
                seed: args.seed,
                strict: args.strict,
                format: args.format,
                dictionary_sha256,
            })?;
            for w in &summary.warnings {
                warn!("{w}");
            }
            eprintln!("scored {} records", summary.records);
            for f in &summary.files {
                writeln!(stdout, "{}", f.display())?;
            }
        }
        Command::Report { scores, format, output } => {
            let text = pipeline::cmd_report(&scores, format)?;
            let mut out = pipeline::output_writer(&output)?;
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(0)
}

fn mine(args: MineArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.entities)
        .map_err(|e| CliError::Failure(format!("{}: {e}", args.entities.display())))?;
    let entities = pipeline::parse_entities_tsv(&text)?;
    let lex = load_lexicon(&args.dict.dict)?;
    let cfg = MiningConfig {
        max_distance: args.max_distance,
        strip_stress: !args.keep_stress,
        require_same_first_phoneme: !args.no_first_phoneme,
        exclude_same_stem: !args.keep_same_stem,
        selection: if args.all_candidates {
            Selection::AllCandidates
        } else {
            Selection::BestOne
        },
        ..MiningConfig::default()
    };
    if cfg.is_nonstandard() {
        warn!("max distance {} is outside the standard 1..=2 range", cfg.max_distance);
    }
    let outcome = mine_pairs(&entities, &lex, &cfg);
    for pair in &outcome.pairs {
        if let Err(v) = verify_pair(&lex, pair, &cfg) {
            return Err(CliError::Failure(format!("internal check failed: {v:?}")));
        }
    }
    for skip in &outcome.skips {
        log::info!("skipped {:?} ({:?})", skip.entity, skip.reason);
    }
    let mut out = pipeline::output_writer(&args.output)?;
    pipeline::write_pairs(&mut out, &lex, &cfg, entities.len(), &outcome)?;
    out.flush()?;
    eprintln!(
        "{} entities, {} pairs, {} skipped",
        entities.len(),
        outcome.pairs.len(),
        outcome.skips.len()
    );
    Ok(())
}

fn contexts(args: ContextsArgs) -> Result<(), CliError> {
    let conditions = if args.mode == "all" {
        if args.mitigation {
            return Err(CliError::Usage("--mitigation needs a single --mode".into()));
        }
        Condition::all()
    } else {
        let mode: ContextMode = args.mode.parse().map_err(|e: leakprobe::corpus::ConditionError| CliError::Usage(e.to_string()))?;
        vec![Condition::new(mode, args.mitigation).map_err(|e| CliError::Usage(e.to_string()))?]
    };
    let manifest = load_manifest(&args.manifest, args.strict).map_err(|e| CliError::Failure(e.to_string()))?;
    for v in &manifest.report.violations {
        warn!("line {}: {} ({})", v.line, v.rule, v.detail);
    }
    let opts = ContextOptions { joiner: args.joiner };
    let records = pipeline::build_contexts(&manifest.items, &conditions, args.seed, &opts, args.template)?;
    let mut out = pipeline::output_writer(&args.output)?;
    pipeline::write_contexts(&mut out, &records)?;
    out.flush()?;
    Ok(())
}
