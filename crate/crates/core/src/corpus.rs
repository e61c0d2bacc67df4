//! Evaluation manifests: loading, validation, prompt-context assembly,
//! similarity stratification and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{normalize, TokenSeq};
use crate::pairminer::WordPair;

pub const MANIFEST_SCHEMA: &str = "leakprobe.manifest/1";

/// Formula used by [`similarity`], echoed into report headers.
pub const SIMILARITY_FORMULA: &str =
    "2*LCS_chars(norm(a),norm(b))/(|norm(a)|+|norm(b)|), norm = lowercase + collapse whitespace; 1.0 if both empty";

/// Number of filler sentences each item carries (enough for the 10-sentence condition).
pub const FILLERS_PER_ITEM: usize = 9;

/// One utterance of the evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    /// FLEURS, ACL6060, VoxPopuli or any other tag.
    pub dataset: String,
    pub reference_transcript: String,
    pub pair: WordPair,
    /// Sentence containing the context word.
    pub context_sentence: String,
    /// Sentence containing the acoustic word, used by mitigation conditions.
    pub acoustic_sentence: String,
    pub filler_sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    None,
    Word,
    Sent1,
    Sent5,
    Sent10,
}

impl ContextMode {
    pub const ALL: [ContextMode; 5] = [
        ContextMode::None,
        ContextMode::Word,
        ContextMode::Sent1,
        ContextMode::Sent5,
        ContextMode::Sent10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::None => "none",
            ContextMode::Word => "word",
            ContextMode::Sent1 => "sent1",
            ContextMode::Sent5 => "sent5",
            ContextMode::Sent10 => "sent10",
        }
    }

    /// Total sentences in the assembled context for sentence modes.
    pub fn sentence_count(self) -> Option<usize> {
        match self {
            ContextMode::Sent1 => Some(1),
            ContextMode::Sent5 => Some(5),
            ContextMode::Sent10 => Some(10),
            ContextMode::None | ContextMode::Word => None,
        }
    }
}

impl FromStr for ContextMode {
    type Err = ConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => ContextMode::None,
            "word" => ContextMode::Word,
            "sent1" | "1" => ContextMode::Sent1,
            "sent5" | "5" => ContextMode::Sent5,
            "sent10" | "10" => ContextMode::Sent10,
            _ => return Err(ConditionError::UnknownMode(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("unknown context mode {0:?} (expected none, word, sent1, sent5 or sent10)")]
    UnknownMode(String),
    #[error("mitigation requires a context mode other than none")]
    MitigationWithoutContext,
}

/// A cell of the evaluation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub mode: ContextMode,
    pub mitigation: bool,
    /// Free-form label such as `base` or `prompt-adapted`; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customisation: Option<String>,
}

const MITIGATION_SUFFIX: &str = "+mit";

impl Condition {
    pub fn new(mode: ContextMode, mitigation: bool) -> Result<Self, ConditionError> {
        if mitigation && mode == ContextMode::None {
            return Err(ConditionError::MitigationWithoutContext);
        }
        Ok(Self {
            mode,
            mitigation,
            customisation: None,
        })
    }

    /// Canonical identifier, e.g. `sent5` or `sent5+mit`.
    pub fn id(&self) -> String {
        if self.mitigation {
            format!("{}{MITIGATION_SUFFIX}", self.mode.as_str())
        } else {
            self.mode.as_str().to_string()
        }
    }

    pub fn parse(id: &str) -> Result<Self, ConditionError> {
        match id.strip_suffix(MITIGATION_SUFFIX) {
            Some(mode) => Self::new(mode.parse()?, true),
            None => Self::new(id.parse()?, false),
        }
    }

    /// The nine conditions in reporting order.
    pub fn all() -> Vec<Condition> {
        ContextMode::ALL
            .iter()
            .flat_map(|&mode| {
                [false, true]
                    .into_iter()
                    .filter_map(move |mit| Condition::new(mode, mit).ok())
            })
            .collect()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Sort rank for a condition id: canonical conditions first in matrix order,
/// anything else after them.
pub fn condition_rank(id: &str) -> usize {
    let all = Condition::all();
    all.iter().position(|c| c.id() == id).unwrap_or(all.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("item {item_id}: {mode} needs {needed} filler sentences, found {available}")]
    InsufficientFillers {
        item_id: String,
        mode: &'static str,
        needed: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextOptions {
    /// Separator between sentences of a multi-sentence context.
    pub joiner: String,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self { joiner: " ".into() }
    }
}

/// Deterministic per-(seed, item, condition) RNG seed.
pub fn context_seed(global_seed: u64, item_id: &str, condition_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"leakprobe/context/v1\0");
    h.update(global_seed.to_le_bytes());
    h.update(item_id.as_bytes());
    h.update([0u8]);
    h.update(condition_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn assemble_context(item: &EvalItem, cond: &Condition, global_seed: u64) -> Result<String, ContextError> {
    assemble_context_with(item, cond, global_seed, &ContextOptions::default())
}

/// Builds the prompt context for one item under one condition.
///
/// * `none`: empty string.
/// * `word`: the context word; with mitigation `"<context>, <acoustic>"`.
/// * `sent1`: the context sentence; with mitigation both sentences in seeded order.
/// * `sent5`/`sent10`: the target sentence(s) at seeded positions among the
///   leading fillers so that the total sentence count stays 5 or 10.
pub fn assemble_context_with(
    item: &EvalItem,
    cond: &Condition,
    global_seed: u64,
    opts: &ContextOptions,
) -> Result<String, ContextError> {
    let mut rng = ChaCha8Rng::seed_from_u64(context_seed(global_seed, &item.item_id, &cond.id()));
    let pair = &item.pair;
    let mut targets: Vec<&str> = vec![&item.context_sentence];
    if cond.mitigation {
        targets.push(&item.acoustic_sentence);
    }

    match cond.mode {
        ContextMode::None => Ok(String::new()),
        ContextMode::Word if cond.mitigation => Ok(format!("{}, {}", pair.context_word, pair.acoustic_word)),
        ContextMode::Word => Ok(pair.context_word.clone()),
        mode => {
            // sent1 under mitigation carries both target sentences and no filler.
            let total = mode.sentence_count().expect("sentence mode").max(targets.len());
            let fillers_needed = total - targets.len();
            if item.filler_sentences.len() < fillers_needed {
                return Err(ContextError::InsufficientFillers {
                    item_id: item.item_id.clone(),
                    mode: mode.as_str(),
                    needed: fillers_needed,
                    available: item.filler_sentences.len(),
                });
            }
            let mut slots: Vec<Option<&str>> = vec![None; total];
            let first = rng.gen_range(0..total);
            slots[first] = Some(targets[0]);
            if let Some(&second_target) = targets.get(1) {
                let mut second = rng.gen_range(0..total - 1);
                if second >= first {
                    second += 1;
                }
                slots[second] = Some(second_target);
            }
            let mut fillers = item.filler_sentences.iter();
            let sentences: Vec<&str> = slots
                .into_iter()
                .map(|slot| slot.unwrap_or_else(|| fillers.next().expect("filler count checked")))
                .collect();
            Ok(sentences.join(&opts.joiner))
        }
    }
}

fn similarity_norm(s: &str) -> Vec<char> {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .collect()
}

/// Character-level LCS ratio in `[0, 1]`; see [`SIMILARITY_FORMULA`].
pub fn similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (similarity_norm(a), similarity_norm(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in &a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    2.0 * prev[b.len()] as f64 / (a.len() + b.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimilarityBucket {
    Distinct = 0,
    Related = 1,
    Similar = 2,
}

impl SimilarityBucket {
    pub const ALL: [SimilarityBucket; 3] = [
        SimilarityBucket::Distinct,
        SimilarityBucket::Related,
        SimilarityBucket::Similar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityBucket::Distinct => "Distinct",
            SimilarityBucket::Related => "Related",
            SimilarityBucket::Similar => "Similar",
        }
    }
}

impl fmt::Display for SimilarityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distinct: <= 0.4, Related: (0.4, 0.7], Similar: > 0.7.
pub fn stratify(ratio: f64) -> SimilarityBucket {
    if ratio <= 0.4 {
        SimilarityBucket::Distinct
    } else if ratio <= 0.7 {
        SimilarityBucket::Related
    } else {
        SimilarityBucket::Similar
    }
}

/// A rule violation found while validating a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub items: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported manifest schema {0:?} (expected {MANIFEST_SCHEMA})")]
    Schema(String),
    #[error("manifest failed validation with {} violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub items: Vec<EvalItem>,
    pub report: ValidationReport,
}

pub fn load_manifest(path: impl AsRef<Path>, strict: bool) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text, strict)
}

/// Parses JSONL manifest text. An optional first record
/// `{"schema": "leakprobe.manifest/1"}` declares the version.
///
/// In strict mode malformed lines and rule violations are errors; otherwise
/// both are collected in the report and the valid items returned.
pub fn parse_manifest(text: &str, strict: bool) -> Result<Manifest, ManifestError> {
    let mut items = Vec::new();
    let mut lines_of = Vec::new();
    let mut report = ValidationReport::default();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                if strict {
                    return Err(ManifestError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    });
                }
                report.violations.push(Violation {
                    line: line_no,
                    item_id: None,
                    rule: "malformed-json".into(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if value.get("item_id").is_none() {
            if let Some(schema) = value.get("schema").and_then(|s| s.as_str()) {
                if schema != MANIFEST_SCHEMA {
                    return Err(ManifestError::Schema(schema.to_string()));
                }
                continue;
            }
        }
        match serde_json::from_value::<EvalItem>(value) {
            Ok(item) => {
                items.push(item);
                lines_of.push(line_no);
            }
            Err(e) => {
                if strict {
                    return Err(ManifestError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    });
                }
                report.violations.push(Violation {
                    line: line_no,
                    item_id: None,
                    rule: "malformed-json".into(),
                    detail: e.to_string(),
                });
            }
        }
    }

    let mut seen = HashSet::new();
    for (item, &line) in items.iter().zip(&lines_of) {
        if !seen.insert(item.item_id.as_str()) {
            report.violations.push(Violation {
                line,
                item_id: Some(item.item_id.clone()),
                rule: "duplicate-item-id".into(),
                detail: "item_id already used".into(),
            });
        }
        for (rule, detail) in validate_item(item) {
            report.violations.push(Violation {
                line,
                item_id: Some(item.item_id.clone()),
                rule: rule.into(),
                detail,
            });
        }
    }
    report.items = items.len();

    if strict && !report.is_clean() {
        return Err(ManifestError::Invalid(report));
    }
    Ok(Manifest { items, report })
}

/// Checks one item against the manifest rules; returns `(rule, detail)` pairs.
pub fn validate_item(item: &EvalItem) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    let acoustic = normalize(&item.pair.acoustic_word).tokens;
    let context = normalize(&item.pair.context_word).tokens;
    let reference = normalize(&item.reference_transcript);

    if acoustic.is_empty() || context.is_empty() {
        out.push(("empty-pair-word", "acoustic or context word normalizes to nothing".into()));
        return out;
    }
    if acoustic == context {
        out.push(("pair-words-identical", format!("{:?}", item.pair.acoustic_word)));
    }
    if !(1..=2).contains(&item.pair.phoneme_distance) {
        out.push((
            "phoneme-distance-out-of-range",
            format!("distance {} not in 1..=2", item.pair.phoneme_distance),
        ));
    }
    if reference.is_empty() {
        out.push(("empty-reference", "reference transcript has no words".into()));
    } else if !reference.contains_seq(&acoustic) {
        out.push((
            "acoustic-word-missing",
            format!("reference does not contain {:?}", item.pair.acoustic_word),
        ));
    }
    if !normalize(&item.context_sentence).contains_seq(&context) {
        out.push((
            "context-sentence-missing-context-word",
            format!("context sentence does not contain {:?}", item.pair.context_word),
        ));
    }
    if !normalize(&item.acoustic_sentence).contains_seq(&acoustic) {
        out.push((
            "acoustic-sentence-missing-acoustic-word",
            format!("acoustic sentence does not contain {:?}", item.pair.acoustic_word),
        ));
    }
    if item.filler_sentences.len() != FILLERS_PER_ITEM {
        out.push((
            "filler-count",
            format!("expected {FILLERS_PER_ITEM} fillers, found {}", item.filler_sentences.len()),
        ));
    }
    for (i, filler) in item.filler_sentences.iter().enumerate() {
        let tokens: TokenSeq = normalize(filler);
        if tokens.contains_seq(&acoustic) {
            out.push(("filler-contains-acoustic-word", format!("filler {i}")));
        }
        if tokens.contains_seq(&context) {
            out.push(("filler-contains-context-word", format!("filler {i}")));
        }
    }
    if let Some(d) = item.audio_duration_s {
        if !(d.is_finite() && d >= 0.0) {
            out.push(("bad-audio-duration", format!("{d}")));
        }
    }
    out
}

/// Counts for one dataset or for the whole manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub n_pairs: usize,
    pub n_distance1: usize,
    pub n_distance2: usize,
    /// Pairs whose distance is neither 1 nor 2 (zero for a valid manifest).
    pub n_distance_other: usize,
    pub n_with_audio: usize,
    pub total_audio_s: f64,
    pub mean_audio_s: f64,
    pub n_context_sentences: usize,
    pub n_acoustic_sentences: usize,
    pub n_filler_sentences: usize,
    pub n_distinct: usize,
    pub n_related: usize,
    pub n_similar: usize,
}

impl StatsRow {
    fn add(&mut self, item: &EvalItem) {
        self.n_pairs += 1;
        match item.pair.phoneme_distance {
            1 => self.n_distance1 += 1,
            2 => self.n_distance2 += 1,
            _ => self.n_distance_other += 1,
        }
        if let Some(d) = item.audio_duration_s {
            self.n_with_audio += 1;
            self.total_audio_s += d;
        }
        self.n_context_sentences += usize::from(!item.context_sentence.trim().is_empty());
        self.n_acoustic_sentences += usize::from(!item.acoustic_sentence.trim().is_empty());
        self.n_filler_sentences += item.filler_sentences.len();
        match stratify(similarity(&item.context_sentence, &item.reference_transcript)) {
            SimilarityBucket::Distinct => self.n_distinct += 1,
            SimilarityBucket::Related => self.n_related += 1,
            SimilarityBucket::Similar => self.n_similar += 1,
        }
    }

    fn finish(&mut self) {
        self.mean_audio_s = if self.n_with_audio == 0 {
            0.0
        } else {
            self.total_audio_s / self.n_with_audio as f64
        };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(flatten)]
    pub totals: StatsRow,
    pub per_dataset: BTreeMap<String, StatsRow>,
}

pub fn dataset_stats(items: &[EvalItem]) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for item in items {
        stats.totals.add(item);
        stats.per_dataset.entry(item.dataset.clone()).or_default().add(item);
    }
    stats.totals.finish();
    stats.per_dataset.values_mut().for_each(StatsRow::finish);
    stats
}
