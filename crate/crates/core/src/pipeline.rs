//! Orchestration behind the command-line tool: mining output, context files,
//! transcript scoring and report tables.
//!
//! Everything here is deterministic. Work fans out over rayon's current pool
//! but results are merged in a fixed order, so outputs are byte-identical for
//! any worker count.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{normalize, NORMALIZATION_POLICY};
use crate::corpus::{
    assemble_context_with, condition_rank, load_manifest, similarity, stratify, Condition, ConditionError,
    ContextError, ContextOptions, EvalItem, ManifestError, SIMILARITY_FORMULA,
};
use crate::jsonl;
use crate::metrics::{aggregate, score_item, AggregateReport, GroupKey, PairTokens, ScoreRecord};
use crate::pairminer::{MiningConfig, MiningOutcome};
use crate::prompts::{inference_prompt, InferencePrompt, PromptTemplate};
use crate::pronlex::{Lexicon, LexiconError};
use crate::TOOL_VERSION;

pub const SCORES_SCHEMA: &str = "leakprobe.scores/1";
pub const PAIRS_SCHEMA: &str = "leakprobe.pairs/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("{path}:{line}: {message}")]
    Jsonl { path: String, line: usize, message: String },
    #[error("entities line {line}: {message}")]
    Entities { line: usize, message: String },
    #[error("hypothesis references unknown item {0:?}")]
    UnknownItem(String),
    #[error("duplicate hypothesis for item {item_id:?}, condition {condition_id:?}, model {model:?}")]
    DuplicateHypothesis {
        item_id: String,
        condition_id: String,
        model: String,
    },
    #[error("{path}: expected schema {expected}, found {found:?}")]
    Schema {
        path: String,
        expected: &'static str,
        found: Option<String>,
    },
    #[error("model {model:?} condition {condition:?} appears in both {first} and {second}")]
    ConflictingRows {
        model: String,
        condition: String,
        first: String,
        second: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

// ---------------------------------------------------------------------------
// mining

/// Reads `word<TAB>dataset` lines. The dataset column is optional
/// (defaults to `other`); blank lines and `#` comments are skipped.
pub fn parse_entities_tsv(text: &str) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let word = cols.next().unwrap_or("").trim();
        if word.is_empty() {
            return Err(PipelineError::Entities {
                line: idx + 1,
                message: "empty entity column".into(),
            });
        }
        let dataset = cols.next().map(str::trim).filter(|d| !d.is_empty()).unwrap_or("other");
        out.push((word.to_string(), dataset.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryInfo {
    pub source: String,
    pub sha256: String,
    pub headwords: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairsHeader {
    pub schema: String,
    pub tool_version: String,
    pub dictionary: DictionaryInfo,
    pub config: MiningConfig,
    pub nonstandard_max_distance: bool,
    pub n_entities: usize,
    pub n_pairs: usize,
    pub splits: Vec<crate::pairminer::EntitySplit>,
    pub skips: Vec<crate::pairminer::SkippedEntity>,
}

/// Writes the header record followed by one pair per line.
pub fn write_pairs<W: Write>(
    out: &mut W,
    lex: &Lexicon,
    cfg: &MiningConfig,
    n_entities: usize,
    outcome: &MiningOutcome,
) -> io::Result<()> {
    let header = PairsHeader {
        schema: PAIRS_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        dictionary: DictionaryInfo {
            source: lex.source().into(),
            sha256: lex.sha256().into(),
            headwords: lex.len(),
        },
        config: cfg.clone(),
        nonstandard_max_distance: cfg.is_nonstandard(),
        n_entities,
        n_pairs: outcome.pairs.len(),
        splits: outcome.splits.clone(),
        skips: outcome.skips.clone(),
    };
    jsonl::write_line(out, &header)?;
    for pair in &outcome.pairs {
        jsonl::write_line(out, pair)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// contexts

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub item_id: String,
    pub condition_id: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<InferencePrompt>,
}

/// Assembles contexts for every item under every condition, in item order
/// then condition order.
pub fn build_contexts(
    items: &[EvalItem],
    conditions: &[Condition],
    seed: u64,
    opts: &ContextOptions,
    template: Option<PromptTemplate>,
) -> Result<Vec<ContextRecord>, PipelineError> {
    let per_item: Vec<Result<Vec<ContextRecord>, ContextError>> = items
        .par_iter()
        .map(|item| {
            conditions
                .iter()
                .map(|cond| {
                    let context = assemble_context_with(item, cond, seed, opts)?;
                    Ok(ContextRecord {
                        item_id: item.item_id.clone(),
                        condition_id: cond.id(),
                        prompt: template.map(|t| inference_prompt(t, &context)),
                        context,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for records in per_item {
        out.extend(records?);
    }
    Ok(out)
}

pub fn write_contexts<W: Write>(out: &mut W, records: &[ContextRecord]) -> io::Result<()> {
    for record in records {
        jsonl::write_line(out, record)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scoring

/// One model transcript for an (item, condition).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub item_id: String,
    pub condition_id: String,
    #[serde(default)]
    pub text: String,
    pub model: String,
    /// Set by the adapter when the backend failed; such records are skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn parse_hypotheses(text: &str, path: &str) -> Result<Vec<HypothesisRecord>, PipelineError> {
    let file = jsonl::parse::<HypothesisRecord>(text, "item_id").map_err(|e| PipelineError::Jsonl {
        path: path.into(),
        line: e.line,
        message: e.message,
    })?;
    Ok(file.records.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    /// Only score these condition ids when set.
    pub conditions: Option<Vec<String>>,
    /// Unknown item ids become errors instead of warnings.
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreRun {
    pub records: Vec<ScoreRecord>,
    pub warnings: Vec<String>,
}

struct PreparedItem<'a> {
    item: &'a EvalItem,
    reference: crate::align::TokenSeq,
    pair: PairTokens,
    similarity: f64,
}

/// Scores every hypothesis against its manifest item.
///
/// Records come back sorted by (model, condition, item id). Hypotheses with
/// an adapter error marker are skipped with a warning; every other hypothesis
/// yields exactly one record.
pub fn score_hypotheses(
    items: &[EvalItem],
    hypotheses: &[HypothesisRecord],
    opts: &ScoreOptions,
) -> Result<ScoreRun, PipelineError> {
    let prepared: HashMap<&str, PreparedItem<'_>> = items
        .par_iter()
        .map(|item| {
            (
                item.item_id.as_str(),
                PreparedItem {
                    item,
                    reference: normalize(&item.reference_transcript),
                    pair: PairTokens::new(&item.pair.acoustic_word, &item.pair.context_word),
                    similarity: similarity(&item.context_sentence, &item.reference_transcript),
                },
            )
        })
        .collect();

    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    let mut selected = Vec::new();
    for hyp in hypotheses {
        if !seen.insert((&hyp.item_id, &hyp.condition_id, &hyp.model)) {
            return Err(PipelineError::DuplicateHypothesis {
                item_id: hyp.item_id.clone(),
                condition_id: hyp.condition_id.clone(),
                model: hyp.model.clone(),
            });
        }
        if let Some(filter) = &opts.conditions {
            if !filter.contains(&hyp.condition_id) {
                continue;
            }
        }
        if !prepared.contains_key(hyp.item_id.as_str()) {
            if opts.strict {
                return Err(PipelineError::UnknownItem(hyp.item_id.clone()));
            }
            warnings.push(format!("hypothesis for unknown item {:?} skipped", hyp.item_id));
            continue;
        }
        if let Some(err) = &hyp.error {
            warnings.push(format!(
                "hypothesis {}/{}/{} carries backend error ({err}); skipped",
                hyp.model, hyp.condition_id, hyp.item_id
            ));
            continue;
        }
        if hyp.text.trim().is_empty() {
            warnings.push(format!(
                "empty hypothesis for {}/{}/{}; scored as empty",
                hyp.model, hyp.condition_id, hyp.item_id
            ));
        }
        selected.push(hyp);
    }

    let mut records: Vec<ScoreRecord> = selected
        .par_iter()
        .map(|hyp| {
            let p = &prepared[hyp.item_id.as_str()];
            let hypothesis = normalize(&hyp.text);
            let score = score_item(&p.reference, &hypothesis, &p.pair);
            let (bg_rate, bg_errors, bg_len) = score
                .background
                .map_or((0.0, 0, 0), |w| (w.rate, w.errors(), w.reference_len));
            ScoreRecord {
                item_id: hyp.item_id.clone(),
                condition_id: hyp.condition_id.clone(),
                model: hyp.model.clone(),
                dataset: p.item.dataset.clone(),
                acoustic_word: p.item.pair.acoustic_word.clone(),
                context_word: p.item.pair.context_word.clone(),
                positions: score.counts.positions,
                acoustic_matches: score.counts.acoustic_matches,
                leakage_matches: score.counts.leakage_matches,
                background_wer: bg_rate,
                background_errors: bg_errors,
                background_ref_len: bg_len,
                similarity: p.similarity,
                similarity_bucket: stratify(p.similarity),
                phoneme_distance: p.item.pair.phoneme_distance,
                flagged: score.counts.positions == 0,
            }
        })
        .collect();
    records.sort_by(|a, b| {
        (&a.model, condition_rank(&a.condition_id), &a.condition_id, &a.item_id).cmp(&(
            &b.model,
            condition_rank(&b.condition_id),
            &b.condition_id,
            &b.item_id,
        ))
    });

    for r in records.iter().filter(|r| r.flagged) {
        warnings.push(format!(
            "item {} has no occurrence of {:?} in its reference; excluded from ratios",
            r.item_id, r.acoustic_word
        ));
    }

    let mut covered: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in &records {
        *covered.entry((r.model.as_str(), r.condition_id.as_str())).or_default() += 1;
    }
    for ((model, condition), n) in &covered {
        if *n < items.len() {
            warnings.push(format!(
                "model {model} condition {condition}: {} of {} items have no hypothesis",
                items.len() - n,
                items.len()
            ));
        }
    }

    Ok(ScoreRun { records, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
    Jsonl,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv, markdown or jsonl)")),
        }
    }
}

/// Settings echoed into every report so results can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub tool_version: String,
    pub manifest_sha256: String,
    pub hypotheses_sha256: String,
    pub dictionary_sha256: Option<String>,
    pub seed: u64,
    pub similarity_formula: String,
    pub normalization_policy: String,
}

impl Provenance {
    fn lines(&self) -> Vec<(&'static str, String)> {
        vec![
            ("schema", self.schema.clone()),
            ("tool_version", self.tool_version.clone()),
            ("manifest_sha256", self.manifest_sha256.clone()),
            ("hypotheses_sha256", self.hypotheses_sha256.clone()),
            ("dictionary_sha256", self.dictionary_sha256.clone().unwrap_or_else(|| "none".into())),
            ("seed", self.seed.to_string()),
            ("similarity_formula", self.similarity_formula.clone()),
            ("normalization_policy", self.normalization_policy.clone()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub hypotheses: PathBuf,
    pub conditions: Option<Vec<String>>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub strict: bool,
    pub format: ReportFormat,
    pub dictionary_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScoreSummary {
    pub records: usize,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Groupings written by `score`, as (file stem, keys).
pub const AGGREGATE_VIEWS: [(&str, &[GroupKey]); 4] = [
    ("aggregate_by_condition", &[GroupKey::Model, GroupKey::Condition]),
    (
        "aggregate_by_similarity",
        &[GroupKey::Model, GroupKey::Condition, GroupKey::SimilarityBucket],
    ),
    (
        "aggregate_by_distance",
        &[GroupKey::Model, GroupKey::Condition, GroupKey::PhonemeDistance],
    ),
    (
        "aggregate_by_dataset",
        &[GroupKey::Model, GroupKey::Dataset, GroupKey::Condition],
    ),
];

/// Runs the full scoring pipeline and writes `scores.jsonl`, the aggregate
/// views, `tradeoff.csv` and `provenance.json` into `cfg.out_dir`.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreSummary, PipelineError> {
    let manifest = load_manifest(&cfg.manifest, cfg.strict)?;
    let mut warnings: Vec<String> = manifest
        .report
        .violations
        .iter()
        .map(|v| format!("manifest line {}: {} ({})", v.line, v.rule, v.detail))
        .collect();
    let hyp_text = read_text(&cfg.hypotheses)?;
    let hypotheses = parse_hypotheses(&hyp_text, &cfg.hypotheses.display().to_string())?;
    let run = score_hypotheses(
        &manifest.items,
        &hypotheses,
        &ScoreOptions {
            conditions: cfg.conditions.clone(),
            strict: cfg.strict,
        },
    )?;
    warnings.extend(run.warnings.iter().cloned());

    let provenance = Provenance {
        schema: SCORES_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        manifest_sha256: sha256_file(&cfg.manifest)?,
        hypotheses_sha256: hex::encode(Sha256::digest(hyp_text.as_bytes())),
        dictionary_sha256: cfg.dictionary_sha256.clone(),
        seed: cfg.seed,
        similarity_formula: SIMILARITY_FORMULA.into(),
        normalization_policy: NORMALIZATION_POLICY.into(),
    };

    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let mut files = Vec::new();
    let mut emit = |name: String, body: Vec<u8>| -> Result<(), PipelineError> {
        let path = cfg.out_dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        files.push(path);
        Ok(())
    };

    let mut scores = Vec::new();
    jsonl::write_line(&mut scores, &provenance).expect("in-memory write");
    for record in &run.records {
        jsonl::write_line(&mut scores, record).expect("in-memory write");
    }
    emit("scores.jsonl".into(), scores)?;

    for (stem, keys) in AGGREGATE_VIEWS {
        let agg = aggregate(&run.records, keys);
        for omitted in &agg.omitted {
            warnings.push(format!("{stem}: group {omitted} omitted (no acoustic positions)"));
        }
        let body = render_aggregate(&agg.reports, keys, cfg.format, &provenance);
        emit(format!("{stem}.{}", cfg.format.extension()), body.into_bytes())?;
    }

    let by_condition = aggregate(&run.records, &[GroupKey::Model, GroupKey::Condition]);
    emit("tradeoff.csv".into(), render_tradeoff(&by_condition.reports).into_bytes())?;
    let prov_json = serde_json::to_string_pretty(&provenance).expect("serializable") + "\n";
    emit("provenance.json".into(), prov_json.into_bytes())?;

    Ok(ScoreSummary {
        records: run.records.len(),
        files,
        warnings,
    })
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn key_columns(keys: &[GroupKey]) -> Vec<&'static str> {
    keys.iter()
        .map(|k| match k {
            GroupKey::Model => "model",
            GroupKey::Dataset => "dataset",
            GroupKey::Condition => "condition",
            GroupKey::SimilarityBucket => "similarity_bucket",
            GroupKey::PhonemeDistance => "phoneme_distance",
        })
        .collect()
}

fn key_values(r: &AggregateReport, keys: &[GroupKey]) -> Vec<String> {
    keys.iter()
        .map(|k| match k {
            GroupKey::Model => r.model.clone().unwrap_or_default(),
            GroupKey::Dataset => r.dataset.clone().unwrap_or_default(),
            GroupKey::Condition => r.condition.clone().unwrap_or_default(),
            GroupKey::SimilarityBucket => r.similarity_bucket.map(|b| b.to_string()).unwrap_or_default(),
            GroupKey::PhonemeDistance => r.phoneme_distance.map(|d| d.to_string()).unwrap_or_default(),
        })
        .collect()
}

const METRIC_COLUMNS: [&str; 11] = [
    "n_items",
    "n_flagged",
    "positions",
    "acoustic_matches",
    "leakage_matches",
    "acoustic_accuracy",
    "leakage_rate",
    "macro_acoustic_accuracy",
    "macro_leakage_rate",
    "mean_background_wer",
    "corpus_background_wer",
];

fn metric_values(r: &AggregateReport) -> Vec<String> {
    vec![
        r.n_items.to_string(),
        r.n_flagged.to_string(),
        r.positions.to_string(),
        r.acoustic_matches.to_string(),
        r.leakage_matches.to_string(),
        fmt4(r.acoustic_accuracy),
        fmt4(r.leakage_rate),
        fmt4(r.macro_acoustic_accuracy),
        fmt4(r.macro_leakage_rate),
        fmt4(r.mean_background_wer),
        fmt4(r.corpus_background_wer),
    ]
}

/// Renders aggregate rows with a provenance header.
pub fn render_aggregate(
    reports: &[AggregateReport],
    keys: &[GroupKey],
    format: ReportFormat,
    provenance: &Provenance,
) -> String {
    let mut header: Vec<&str> = key_columns(keys);
    header.extend(METRIC_COLUMNS);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = key_values(r, keys);
            row.extend(metric_values(r));
            row
        })
        .collect();

    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for (k, v) in provenance.lines() {
                let _ = writeln!(out, "# {k}: {v}");
            }
            let _ = writeln!(out, "{}", header.join(","));
            for row in rows {
                let cells: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        ReportFormat::Markdown => {
            for (k, v) in provenance.lines() {
                let _ = writeln!(out, "- {k}: `{v}`");
            }
            out.push('\n');
            out.push_str(&markdown_table(&header, &rows));
        }
        ReportFormat::Jsonl => {
            let _ = writeln!(out, "{}", serde_json::to_string(provenance).expect("serializable"));
            for row in rows {
                let obj: serde_json::Map<String, serde_json::Value> = header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
                    .collect();
                let _ = writeln!(out, "{}", serde_json::Value::Object(obj));
            }
        }
    }
    out
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", vec!["---"; header.len()].join("|"));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

/// Plot-ready `(leakage_rate, acoustic_accuracy)` points per model and condition.
pub fn render_tradeoff(reports: &[AggregateReport]) -> String {
    let mut out = String::from("model,condition,leakage_rate,acoustic_accuracy,positions\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(r.model.as_deref().unwrap_or("")),
            csv_field(r.condition.as_deref().unwrap_or("")),
            fmt4(r.leakage_rate),
            fmt4(r.acoustic_accuracy),
            r.positions
        );
    }
    out
}

// ---------------------------------------------------------------------------
// report

pub fn read_scores(path: &Path) -> Result<(Provenance, Vec<ScoreRecord>), PipelineError> {
    let text = read_text(path)?;
    let file = jsonl::parse::<ScoreRecord>(&text, "item_id").map_err(|e| PipelineError::Jsonl {
        path: path.display().to_string(),
        line: e.line,
        message: e.message,
    })?;
    let found = file
        .header
        .as_ref()
        .and_then(|h| h.get("schema"))
        .and_then(|s| s.as_str())
        .map(str::to_string);
    if found.as_deref() != Some(SCORES_SCHEMA) {
        return Err(PipelineError::Schema {
            path: path.display().to_string(),
            expected: SCORES_SCHEMA,
            found,
        });
    }
    let provenance: Provenance =
        serde_json::from_value(file.header.expect("checked")).map_err(|e| PipelineError::Jsonl {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?;
    Ok((provenance, file.records.into_iter().map(|(_, r)| r).collect()))
}

const REPORT_METRICS: [&str; 3] = ["acoustic_accuracy", "leakage_rate", "mean_background_wer"];

/// Merges score files into one comparison table per metric: rows are
/// conditions in matrix order, columns are models.
pub fn cmd_report(files: &[PathBuf], format: ReportFormat) -> Result<String, PipelineError> {
    let mut owner: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut records = Vec::new();
    for path in files {
        let (_, recs) = read_scores(path)?;
        let label = path.display().to_string();
        let keys: BTreeSet<(String, String)> = recs
            .iter()
            .map(|r| (r.model.clone(), r.condition_id.clone()))
            .collect();
        for key in keys {
            if let Some(first) = owner.get(&key) {
                return Err(PipelineError::ConflictingRows {
                    model: key.0,
                    condition: key.1,
                    first: first.clone(),
                    second: label,
                });
            }
            owner.insert(key, label.clone());
        }
        records.extend(recs);
    }

    let agg = aggregate(&records, &[GroupKey::Model, GroupKey::Condition]);
    let models: BTreeSet<&str> = agg.reports.iter().filter_map(|r| r.model.as_deref()).collect();
    let mut conditions: Vec<&str> = agg
        .reports
        .iter()
        .filter_map(|r| r.condition.as_deref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    conditions.sort_by_key(|c| (condition_rank(c), c.to_string()));
    let cell: HashMap<(&str, &str), &AggregateReport> = agg
        .reports
        .iter()
        .map(|r| ((r.model.as_deref().unwrap_or(""), r.condition.as_deref().unwrap_or("")), r))
        .collect();
    let value = |r: &AggregateReport, metric: &str| match metric {
        "acoustic_accuracy" => r.acoustic_accuracy,
        "leakage_rate" => r.leakage_rate,
        _ => r.mean_background_wer,
    };

    let mut out = String::new();
    for (mi, metric) in REPORT_METRICS.iter().enumerate() {
        let rows: Vec<Vec<String>> = conditions
            .iter()
            .map(|c| {
                let mut row = vec![c.to_string()];
                row.extend(models.iter().map(|m| {
                    cell.get(&(*m, *c)).map(|r| fmt4(value(r, metric))).unwrap_or_default()
                }));
                row
            })
            .collect();
        match format {
            ReportFormat::Markdown => {
                if mi > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "## {metric}\n");
                let mut header = vec!["condition"];
                header.extend(models.iter().copied());
                out.push_str(&markdown_table(&header, &rows));
            }
            ReportFormat::Csv => {
                if mi == 0 {
                    let mut header = vec!["metric".to_string(), "condition".to_string()];
                    header.extend(models.iter().map(|m| csv_field(m)));
                    let _ = writeln!(out, "{}", header.join(","));
                }
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                    let _ = writeln!(out, "{metric},{}", cells.join(","));
                }
            }
            ReportFormat::Jsonl => {
                for row in rows {
                    let values: serde_json::Map<String, serde_json::Value> = models
                        .iter()
                        .zip(&row[1..])
                        .map(|(m, v)| (m.to_string(), serde_json::Value::String(v.clone())))
                        .collect();
                    let obj = serde_json::json!({"metric": metric, "condition": row[0], "values": values});
                    let _ = writeln!(out, "{obj}");
                }
            }
        }
    }
    Ok(out)
}

/// Opens `path` for writing, or stdout for `-`.
pub fn output_writer(path: &Path) -> Result<Box<dyn Write>, PipelineError> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(Box::new(BufWriter::new(file)))
}
