//! Tooling for measuring context-induced transcription leakage in customised
//! speech recognizers.
//!
//! The crate covers the whole offline half of the evaluation loop:
//!
//! * [`pronlex`] parses CMU Pronouncing Dictionary files.
//! * [`phonedist`] computes phoneme-level Levenshtein distances.
//! * [`stemmer`] is a Porter stemmer used to drop morphological variants.
//! * [`pairminer`] mines phonetically confusable (acoustic, context) word pairs.
//! * [`align`] normalizes transcripts and aligns them word by word.
//! * [`metrics`] scores background WER, acoustic accuracy and leakage rate.
//! * [`corpus`] loads and validates evaluation manifests and assembles prompt contexts.
//! * [`prompts`] holds the byte-exact inference and generation prompt templates.
//! * [`pipeline`] wires everything into the `score` and `report` commands.

pub mod align;
pub mod corpus;
pub mod metrics;
pub mod pairminer;
pub mod phonedist;
pub mod pipeline;
pub mod prompts;
pub mod pronlex;
pub mod stemmer;

mod jsonl;

pub use align::{align_words, normalize, wer, Alignment, EditKind, TokenSeq, WerCounts};
pub use corpus::{
    assemble_context, dataset_stats, load_manifest, similarity, stratify, Condition, ContextMode,
    DatasetStats, EvalItem, SimilarityBucket,
};
pub use metrics::{aggregate, background_wer, mask_tokens, score_item, AggregateReport, ScoreRecord};
pub use pairminer::{mine_pairs, MiningConfig, WordPair};
pub use phonedist::{min_word_distance, phoneme_distance, Distance, DistanceConfig};
pub use pronlex::{parse_lexicon, Lexicon, Phoneme, Pronunciation};
pub use stemmer::{same_stem, stem};

/// Version string echoed into every report header.
pub const TOOL_VERSION: &str = concat!("leakprobe ", env!("CARGO_PKG_VERSION"));
