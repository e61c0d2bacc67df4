//! Background WER, acoustic accuracy and leakage rate.
//!
//! Positions are located by aligning the unmasked reference and hypothesis.
//! Masking happens only inside [`background_wer`]: the acoustic word in the
//! reference and both pair words in the hypothesis collapse to one shared
//! sentinel, so a leaked context word lines up with the masked acoustic word
//! and costs nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::{align_tokens, normalize, wer_tokens, AlignOp, EditKind, TokenSeq, WerCounts, WerError};
use crate::corpus::{condition_rank, SimilarityBucket};

/// Replacement token for masked words. Cannot be produced by [`normalize`].
pub const MASK_TOKEN: &str = "<mask>";

/// Normalized token forms of an (acoustic, context) word pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTokens {
    pub acoustic: Vec<String>,
    pub context: Vec<String>,
}

impl PairTokens {
    pub fn new(acoustic_word: &str, context_word: &str) -> Self {
        Self {
            acoustic: normalize(acoustic_word).tokens,
            context: normalize(context_word).tokens,
        }
    }
}

/// Replaces every occurrence of any of `words` with [`MASK_TOKEN`]. Scans
/// left to right; when several words match at one position the longest wins.
pub fn mask_tokens(seq: &TokenSeq, words: &[&[String]]) -> TokenSeq {
    let tokens = &seq.tokens;
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let hit = words
            .iter()
            .filter(|w| !w.is_empty() && tokens[i..].starts_with(w))
            .map(|w| w.len())
            .max();
        match hit {
            Some(len) => {
                out.push(MASK_TOKEN.to_string());
                i += len;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    TokenSeq {
        tokens: out,
        raw: seq.raw.clone(),
    }
}

/// WER after masking the acoustic word in the reference and both pair words in
/// the hypothesis.
pub fn background_wer(
    reference: &TokenSeq,
    hypothesis: &TokenSeq,
    pair: &PairTokens,
) -> Result<WerCounts, WerError> {
    let masked_ref = mask_tokens(reference, &[&pair.acoustic]);
    let masked_hyp = mask_tokens(hypothesis, &[&pair.acoustic, &pair.context]);
    wer_tokens(&masked_ref.tokens, &masked_hyp.tokens)
}

/// Per-utterance position counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PositionCounts {
    pub positions: usize,
    pub acoustic_matches: usize,
    pub leakage_matches: usize,
}

/// Counts how often each acoustic-word position in the reference comes out as
/// the acoustic word or as the context word in the hypothesis.
pub fn score_positions(reference: &TokenSeq, hypothesis: &TokenSeq, pair: &PairTokens) -> PositionCounts {
    let starts = reference.find_all(&pair.acoustic);
    let mut counts = PositionCounts {
        positions: starts.len(),
        ..Default::default()
    };
    if starts.is_empty() {
        return counts;
    }
    let alignment = align_tokens(&reference.tokens, &hypothesis.tokens);
    for start in starts {
        let end = start + pair.acoustic.len() - 1;
        let verdict = span_verdict(&alignment.ops, start, end, &hypothesis.tokens, pair);
        match verdict {
            Some(SpanVerdict::Acoustic) => counts.acoustic_matches += 1,
            Some(SpanVerdict::Leak) => counts.leakage_matches += 1,
            None => {}
        }
    }
    counts
}

enum SpanVerdict {
    Acoustic,
    Leak,
}

/// Compares the hypothesis tokens aligned to reference tokens `start..=end`.
///
/// The core span is every hypothesis token emitted by the ops between the
/// first and last op touching the reference span. Insertions directly
/// adjacent to the core may extend it, so a multi-token word split into
/// substitution plus insertion still compares whole. A fully deleted span is
/// never a match.
fn span_verdict(
    ops: &[AlignOp],
    start: usize,
    end: usize,
    hyp: &[String],
    pair: &PairTokens,
) -> Option<SpanVerdict> {
    let first = ops.iter().position(|op| op.ref_index == Some(start))?;
    let last = ops.iter().rposition(|op| op.ref_index == Some(end))?;
    let core: Vec<usize> = ops[first..=last].iter().filter_map(|op| op.hyp_index).collect();
    let (&lo, &hi) = (core.first()?, core.last()?);
    let left = ops[..first]
        .iter()
        .rev()
        .take_while(|op| op.kind == EditKind::Insert)
        .count();
    let right = ops[last + 1..]
        .iter()
        .take_while(|op| op.kind == EditKind::Insert)
        .count();

    let window_matches = |target: &[String]| {
        !target.is_empty()
            && (lo - left..=lo).any(|a| (hi..=hi + right).any(|b| hyp[a..=b] == *target))
    };
    if window_matches(&pair.acoustic) {
        Some(SpanVerdict::Acoustic)
    } else if window_matches(&pair.context) {
        Some(SpanVerdict::Leak)
    } else {
        None
    }
}

/// Score of one hypothesis against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub counts: PositionCounts,
    pub background: Option<WerCounts>,
}

pub fn score_item(reference: &TokenSeq, hypothesis: &TokenSeq, pair: &PairTokens) -> ItemScore {
    ItemScore {
        counts: score_positions(reference, hypothesis, pair),
        background: background_wer(reference, hypothesis, pair).ok(),
    }
}

/// One scored (item, condition, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub item_id: String,
    pub condition_id: String,
    pub model: String,
    pub dataset: String,
    pub acoustic_word: String,
    pub context_word: String,
    pub positions: usize,
    pub acoustic_matches: usize,
    pub leakage_matches: usize,
    pub background_wer: f64,
    pub background_errors: usize,
    pub background_ref_len: usize,
    pub similarity: f64,
    pub similarity_bucket: SimilarityBucket,
    pub phoneme_distance: usize,
    /// Set when the acoustic word does not occur in the reference.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Model,
    Dataset,
    Condition,
    SimilarityBucket,
    PhonemeDistance,
}

/// Aggregated metrics for one group. Fields for keys that were not grouped on
/// are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub condition: Option<String>,
    pub similarity_bucket: Option<SimilarityBucket>,
    pub phoneme_distance: Option<usize>,
    pub n_items: usize,
    pub n_flagged: usize,
    pub positions: usize,
    pub acoustic_matches: usize,
    pub leakage_matches: usize,
    pub acoustic_accuracy: f64,
    pub leakage_rate: f64,
    pub macro_acoustic_accuracy: f64,
    pub macro_leakage_rate: f64,
    pub mean_background_wer: f64,
    pub corpus_background_wer: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregation {
    pub reports: Vec<AggregateReport>,
    /// Groups dropped because none of their items had an acoustic position.
    pub omitted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SortPart {
    Text(String),
    Ranked(usize, String),
    Number(usize),
}

fn group_sort_key(record: &ScoreRecord, keys: &[GroupKey]) -> Vec<SortPart> {
    keys.iter()
        .map(|key| match key {
            GroupKey::Model => SortPart::Text(record.model.clone()),
            GroupKey::Dataset => SortPart::Text(record.dataset.clone()),
            GroupKey::Condition => {
                SortPart::Ranked(condition_rank(&record.condition_id), record.condition_id.clone())
            }
            GroupKey::SimilarityBucket => SortPart::Number(record.similarity_bucket as usize),
            GroupKey::PhonemeDistance => SortPart::Number(record.phoneme_distance),
        })
        .collect()
}

/// Groups records by `keys` and computes micro and macro ratios.
///
/// Micro ratios divide summed matches by summed positions; macro ratios
/// average per-item ratios. Flagged records (no acoustic position) are
/// counted in `n_flagged` and otherwise ignored.
pub fn aggregate(records: &[ScoreRecord], keys: &[GroupKey]) -> Aggregation {
    let mut groups: BTreeMap<Vec<SortPart>, Vec<&ScoreRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(group_sort_key(record, keys)).or_default().push(record);
    }

    let mut out = Aggregation::default();
    for members in groups.values() {
        let first = members[0];
        let label = |key: GroupKey| keys.contains(&key);
        let scored: Vec<&&ScoreRecord> = members.iter().filter(|r| r.positions > 0).collect();
        let describe = || {
            keys.iter()
                .map(|k| match k {
                    GroupKey::Model => format!("model={}", first.model),
                    GroupKey::Dataset => format!("dataset={}", first.dataset),
                    GroupKey::Condition => format!("condition={}", first.condition_id),
                    GroupKey::SimilarityBucket => format!("similarity={}", first.similarity_bucket),
                    GroupKey::PhonemeDistance => format!("distance={}", first.phoneme_distance),
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        if scored.is_empty() {
            log::warn!("group {} has no acoustic positions; omitted", describe());
            out.omitted.push(describe());
            continue;
        }
        let positions: usize = scored.iter().map(|r| r.positions).sum();
        let acoustic: usize = scored.iter().map(|r| r.acoustic_matches).sum();
        let leak: usize = scored.iter().map(|r| r.leakage_matches).sum();
        let n = scored.len() as f64;
        let mean = |f: &dyn Fn(&ScoreRecord) -> f64| scored.iter().map(|r| f(r)).sum::<f64>() / n;
        let bg_errors: usize = scored.iter().map(|r| r.background_errors).sum();
        let bg_len: usize = scored.iter().map(|r| r.background_ref_len).sum();

        out.reports.push(AggregateReport {
            model: label(GroupKey::Model).then(|| first.model.clone()),
            dataset: label(GroupKey::Dataset).then(|| first.dataset.clone()),
            condition: label(GroupKey::Condition).then(|| first.condition_id.clone()),
            similarity_bucket: label(GroupKey::SimilarityBucket).then_some(first.similarity_bucket),
            phoneme_distance: label(GroupKey::PhonemeDistance).then_some(first.phoneme_distance),
            n_items: members.len(),
            n_flagged: members.len() - scored.len(),
            positions,
            acoustic_matches: acoustic,
            leakage_matches: leak,
            acoustic_accuracy: acoustic as f64 / positions as f64,
            leakage_rate: leak as f64 / positions as f64,
            macro_acoustic_accuracy: mean(&|r| r.acoustic_matches as f64 / r.positions as f64),
            macro_leakage_rate: mean(&|r| r.leakage_matches as f64 / r.positions as f64),
            mean_background_wer: mean(&|r| r.background_wer),
            corpus_background_wer: if bg_len == 0 { 0.0 } else { bg_errors as f64 / bg_len as f64 },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> TokenSeq {
        normalize(s)
    }

    fn words(s: &str) -> Vec<String> {
        normalize(s).tokens
    }

    #[test]
    fn mask_examples() {
        let texas = words("texas");
        assert_eq!(mask_tokens(&toks("we visited texas"), &[&texas]).tokens, ["we", "visited", MASK_TOKEN]);
        assert_eq!(mask_tokens(&toks("a b"), &[]).tokens, ["a", "b"]);
        let ny = words("new york");
        assert_eq!(mask_tokens(&toks("new york city"), &[&ny]).tokens, [MASK_TOKEN, "city"]);
    }

    #[test]
    fn mask_prefers_longest_at_a_position() {
        let new = words("new");
        let ny = words("new york");
        assert_eq!(mask_tokens(&toks("new york new"), &[&new, &ny]).tokens, [MASK_TOKEN, MASK_TOKEN]);
    }

    #[test]
    fn background_wer_examples() {
        let pair = PairTokens::new("texas", "nexus");
        let bg = background_wer(&toks("we visited texas yesterday"), &toks("we visited nexus yesterday"), &pair).unwrap();
        assert_eq!(bg.rate, 0.0);
        let plain = background_wer(&toks("the cat sat"), &toks("the cat"), &pair).unwrap();
        assert_eq!(plain.rate, 1.0 / 3.0);
        let bg = background_wer(&toks("we visited texas"), &toks("they visited nexus"), &pair).unwrap();
        assert_eq!(bg.rate, 1.0 / 3.0);
        assert_eq!(bg.substitutions, 1);
        assert!(background_wer(&toks(""), &toks("x"), &pair).is_err());
    }

    #[test]
    fn score_examples() {
        let pair = PairTokens::new("Texas", "Nexus");
        let leak = score_positions(&toks("we visited Texas"), &toks("we visited nexus"), &pair);
        assert_eq!(leak, PositionCounts { positions: 1, acoustic_matches: 0, leakage_matches: 1 });
        let same = score_positions(&toks("we visited Texas."), &toks("We visited texas"), &pair);
        assert_eq!(same, PositionCounts { positions: 1, acoustic_matches: 1, leakage_matches: 0 });
        let mixed = score_positions(&toks("texas met texas"), &toks("texas met nexus"), &pair);
        assert_eq!(mixed, PositionCounts { positions: 2, acoustic_matches: 1, leakage_matches: 1 });
    }

    #[test]
    fn deletion_is_neither() {
        let pair = PairTokens::new("texas", "nexus");
        let c = score_positions(&toks("we visited texas yesterday"), &toks("we visited yesterday"), &pair);
        assert_eq!(c, PositionCounts { positions: 1, acoustic_matches: 0, leakage_matches: 0 });
    }

    #[test]
    fn missing_acoustic_word_gives_zero_positions() {
        let pair = PairTokens::new("texas", "nexus");
        let c = score_positions(&toks("nothing here"), &toks("nothing here"), &pair);
        assert_eq!(c.positions, 0);
    }

    #[test]
    fn multi_token_context_word_split_across_insertion() {
        let pair = PairTokens::new("texas", "new york");
        let c = score_positions(&toks("we love texas"), &toks("we love new york"), &pair);
        assert_eq!(c.leakage_matches, 1);
        let pair = PairTokens::new("new york", "newark");
        let c = score_positions(&toks("flights to new york today"), &toks("flights to newark today"), &pair);
        assert_eq!(c.leakage_matches, 1);
        let c = score_positions(&toks("flights to new york today"), &toks("flights to new today"), &pair);
        assert_eq!(c, PositionCounts { positions: 1, acoustic_matches: 0, leakage_matches: 0 });
    }

    fn record(positions: usize, acc: usize, leak: usize) -> ScoreRecord {
        ScoreRecord {
            item_id: "i".into(),
            condition_id: "sent1".into(),
            model: "m".into(),
            dataset: "FLEURS".into(),
            acoustic_word: "texas".into(),
            context_word: "nexus".into(),
            positions,
            acoustic_matches: acc,
            leakage_matches: leak,
            background_wer: 0.25,
            background_errors: 1,
            background_ref_len: 4,
            similarity: 0.5,
            similarity_bucket: SimilarityBucket::Related,
            phoneme_distance: 1,
            flagged: positions == 0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let agg = aggregate(&[record(1, 1, 0), record(1, 0, 1)], &[GroupKey::Condition]);
        assert_eq!(agg.reports.len(), 1);
        let r = &agg.reports[0];
        assert_eq!((r.acoustic_accuracy, r.leakage_rate), (0.5, 0.5));
        assert_eq!(r.condition.as_deref(), Some("sent1"));
        assert_eq!(r.model, None);

        let agg = aggregate(&[record(1, 1, 0)], &[GroupKey::Model]);
        assert_eq!((agg.reports[0].acoustic_accuracy, agg.reports[0].leakage_rate), (1.0, 0.0));

        let agg = aggregate(&[record(0, 0, 0), record(0, 0, 0)], &[GroupKey::Model]);
        assert!(agg.reports.is_empty());
        assert_eq!(agg.omitted, ["model=m"]);
    }

    #[test]
    fn micro_and_macro_differ() {
        let agg = aggregate(&[record(3, 3, 0), record(1, 0, 1)], &[]);
        let r = &agg.reports[0];
        assert_eq!(r.acoustic_accuracy, 0.75);
        assert_eq!(r.macro_acoustic_accuracy, 0.5);
        assert_eq!(r.leakage_rate, 0.25);
        assert_eq!(r.macro_leakage_rate, 0.5);
    }

    #[test]
    fn flagged_records_are_counted_not_scored() {
        let agg = aggregate(&[record(2, 1, 1), record(0, 0, 0)], &[]);
        let r = &agg.reports[0];
        assert_eq!((r.n_items, r.n_flagged, r.positions), (2, 1, 2));
    }
}
