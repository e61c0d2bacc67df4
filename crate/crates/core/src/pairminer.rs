//! Mining phonetically confusable (acoustic word, context word) pairs.
//!
//! For every entity token found in the lexicon, each dictionary headword
//! within the phoneme distance cap is a candidate, subject to the enabled
//! filters: same first phoneme, different Porter stem, alphabetic headword.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonedist::{bounded_levenshtein, min_word_distance, phoneme_distance, Distance, DistanceConfig};
use crate::pronlex::{is_clean_headword, Lexicon, Pronunciation};
use crate::stemmer::same_stem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    AllCandidates,
    /// Smallest distance, then lexicographically first candidate.
    #[default]
    BestOne,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub max_distance: usize,
    pub strip_stress: bool,
    pub require_same_first_phoneme: bool,
    pub exclude_same_stem: bool,
    pub exclude_non_alphabetic: bool,
    pub selection: Selection,
    /// Entity tokens shorter than this (in characters) are rejected.
    pub min_token_len: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            max_distance: 2,
            strip_stress: true,
            require_same_first_phoneme: true,
            exclude_same_stem: true,
            exclude_non_alphabetic: true,
            selection: Selection::BestOne,
            min_token_len: 3,
        }
    }
}

impl MiningConfig {
    pub fn distance_config(&self) -> DistanceConfig {
        DistanceConfig {
            strip_stress: self.strip_stress,
            max_distance: self.max_distance,
        }
    }

    /// True for caps outside the 1..=2 range the evaluation set was built with.
    pub fn is_nonstandard(&self) -> bool {
        !(1..=2).contains(&self.max_distance)
    }
}

/// A mined pair: `acoustic_word` is spoken, `context_word` is its
/// phonetically similar substitute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordPair {
    pub acoustic_word: String,
    pub context_word: String,
    pub phoneme_distance: usize,
    #[serde(default)]
    pub source_dataset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NotInLexicon,
    TooShort,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEntity {
    pub entity: String,
    pub dataset: String,
    pub reason: SkipReason,
}

/// How a multi-token (or too short) entity was turned into mining tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySplit {
    pub entity: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub pairs: Vec<WordPair>,
    pub skips: Vec<SkippedEntity>,
    pub splits: Vec<EntitySplit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityTokens {
    Tokens(Vec<String>),
    Rejected,
}

/// Splits an entity on whitespace, lowercases, and keeps tokens of at least
/// `min_len` characters.
pub fn multi_token_entity_policy(entity: &str, min_len: usize) -> EntityTokens {
    let tokens: Vec<String> = entity
        .split_whitespace()
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= min_len)
        .collect();
    if tokens.is_empty() {
        EntityTokens::Rejected
    } else {
        EntityTokens::Tokens(tokens)
    }
}

/// Lexicon pre-encoded for repeated distance queries.
struct MiningIndex<'a> {
    words: Vec<&'a str>,
    clean: Vec<bool>,
    /// Per word, per pronunciation: phoneme codes (stress kept or not per config).
    codes: Vec<Vec<Vec<u16>>>,
    /// Per word, per pronunciation: stress-stripped first phoneme code.
    firsts: Vec<Vec<u16>>,
    by_first: HashMap<u16, Vec<usize>>,
    positions: HashMap<&'a str, usize>,
}

#[derive(Default)]
struct Interner(HashMap<String, u16>);

impl Interner {
    fn code(&mut self, key: String) -> u16 {
        let next = self.0.len() as u16;
        *self.0.entry(key).or_insert(next)
    }
}

impl<'a> MiningIndex<'a> {
    fn build(lex: &'a Lexicon, strip_stress: bool) -> Self {
        let mut phones = Interner::default();
        let mut stripped = Interner::default();
        let mut index = MiningIndex {
            words: Vec::with_capacity(lex.len()),
            clean: Vec::with_capacity(lex.len()),
            codes: Vec::with_capacity(lex.len()),
            firsts: Vec::with_capacity(lex.len()),
            by_first: HashMap::new(),
            positions: HashMap::with_capacity(lex.len()),
        };
        for (idx, (word, prons)) in lex.iter().enumerate() {
            index.words.push(word);
            index.positions.insert(word, idx);
            index.clean.push(is_clean_headword(word));
            let mut codes = Vec::with_capacity(prons.len());
            let mut firsts = Vec::with_capacity(prons.len());
            for pron in prons {
                codes.push(encode(pron, strip_stress, &mut phones));
                firsts.push(stripped.code(pron.first().symbol().to_string()));
            }
            for &f in &firsts {
                let bucket = index.by_first.entry(f).or_default();
                if bucket.last() != Some(&idx) {
                    bucket.push(idx);
                }
            }
            index.codes.push(codes);
            index.firsts.push(firsts);
        }
        index
    }

    /// Minimum distance between two words and whether some minimizing
    /// pronunciation pair starts with the same phoneme.
    fn best(&self, a: usize, b: usize, cap: usize) -> Option<(usize, bool)> {
        let mut best: Option<(usize, bool)> = None;
        for (pa, fa) in self.codes[a].iter().zip(&self.firsts[a]) {
            for (pb, fb) in self.codes[b].iter().zip(&self.firsts[b]) {
                let Some(d) = bounded_levenshtein(pa, pb, cap) else {
                    continue;
                };
                let same_first = fa == fb;
                best = match best {
                    Some((bd, _)) if d < bd => Some((d, same_first)),
                    Some((bd, bf)) if d == bd => Some((bd, bf || same_first)),
                    None => Some((d, same_first)),
                    keep => keep,
                };
            }
        }
        best
    }
}

fn encode(pron: &Pronunciation, strip_stress: bool, interner: &mut Interner) -> Vec<u16> {
    pron.phonemes()
        .iter()
        .map(|p| {
            if strip_stress {
                interner.code(p.symbol().to_string())
            } else {
                interner.code(p.to_string())
            }
        })
        .collect()
}

fn mine_token(index: &MiningIndex<'_>, token: &str, cfg: &MiningConfig) -> Option<Vec<(usize, String)>> {
    let upper = token.to_uppercase();
    let &entity = index.positions.get(upper.as_str())?;

    let candidates: Vec<usize> = if cfg.require_same_first_phoneme {
        let mut set: Vec<usize> = index.firsts[entity]
            .iter()
            .flat_map(|f| index.by_first.get(f).into_iter().flatten().copied())
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    } else {
        (0..index.words.len()).collect()
    };

    let mut found = Vec::new();
    for cand in candidates {
        if cand == entity || (cfg.exclude_non_alphabetic && !index.clean[cand]) {
            continue;
        }
        let Some((d, same_first)) = index.best(entity, cand, cfg.max_distance) else {
            continue;
        };
        if d == 0 || (cfg.require_same_first_phoneme && !same_first) {
            continue;
        }
        let word = index.words[cand].to_lowercase();
        if cfg.exclude_same_stem && same_stem(token, &word) {
            continue;
        }
        found.push((d, word));
    }
    found.sort();
    Some(found)
}

/// Mines context-word candidates for each `(entity, dataset)` input.
///
/// Entities are split into tokens (see [`multi_token_entity_policy`]) and
/// deduplicated case-insensitively, the first dataset tag winning. Output is
/// sorted by (entity, distance, candidate) and identical for any thread count.
pub fn mine_pairs(entities: &[(String, String)], lex: &Lexicon, cfg: &MiningConfig) -> MiningOutcome {
    let mut outcome = MiningOutcome::default();
    let mut seen = HashSet::new();
    let mut tokens: Vec<(String, String)> = Vec::new();
    for (entity, dataset) in entities {
        let split = multi_token_entity_policy(entity, cfg.min_token_len);
        let multi = entity.split_whitespace().count() > 1;
        match split {
            EntityTokens::Rejected => {
                outcome.skips.push(SkippedEntity {
                    entity: entity.clone(),
                    dataset: dataset.clone(),
                    reason: SkipReason::TooShort,
                });
                if multi {
                    outcome.splits.push(EntitySplit {
                        entity: entity.clone(),
                        tokens: Vec::new(),
                    });
                }
            }
            EntityTokens::Tokens(parts) => {
                if multi {
                    outcome.splits.push(EntitySplit {
                        entity: entity.clone(),
                        tokens: parts.clone(),
                    });
                }
                for token in parts {
                    if seen.insert(token.clone()) {
                        tokens.push((token, dataset.clone()));
                    }
                }
            }
        }
    }
    tokens.sort();

    let index = MiningIndex::build(lex, cfg.strip_stress);
    let results: Vec<Option<Vec<(usize, String)>>> = tokens
        .par_iter()
        .map(|(token, _)| mine_token(&index, token, cfg))
        .collect();

    for ((token, dataset), result) in tokens.into_iter().zip(results) {
        let reason = match result {
            None => Some(SkipReason::NotInLexicon),
            Some(found) if found.is_empty() => Some(SkipReason::NoCandidate),
            Some(found) => {
                let keep = match cfg.selection {
                    Selection::AllCandidates => found.len(),
                    Selection::BestOne => 1,
                };
                outcome.pairs.extend(found.into_iter().take(keep).map(|(d, word)| WordPair {
                    acoustic_word: token.clone(),
                    context_word: word,
                    phoneme_distance: d,
                    source_dataset: dataset.clone(),
                }));
                None
            }
        };
        if let Some(reason) = reason {
            outcome.skips.push(SkippedEntity {
                entity: token,
                dataset,
                reason,
            });
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairViolation {
    #[error("{0} not in lexicon")]
    NotInLexicon(String),
    #[error("acoustic and context word are the same")]
    SameWord,
    #[error("recorded distance {recorded} but recomputed {actual:?}")]
    DistanceMismatch { recorded: usize, actual: Distance },
    #[error("distance {0} outside 1..=max_distance")]
    DistanceOutOfRange(usize),
    #[error("no minimizing pronunciation pair shares the first phoneme")]
    FirstPhoneme,
    #[error("words share a Porter stem")]
    SameStem,
    #[error("context word {0:?} is not alphabetic")]
    NonAlphabetic(String),
}

/// Re-checks a mined pair from scratch through [`min_word_distance`] and the
/// per-pronunciation distances, without the mining index.
pub fn verify_pair(lex: &Lexicon, pair: &WordPair, cfg: &MiningConfig) -> Result<(), PairViolation> {
    let (a, c) = (&pair.acoustic_word, &pair.context_word);
    if a.eq_ignore_ascii_case(c) {
        return Err(PairViolation::SameWord);
    }
    let dcfg = cfg.distance_config();
    let actual = min_word_distance(lex, a, c, &dcfg).map_err(|e| match e {
        crate::phonedist::DistanceError::NotInLexicon(w) => PairViolation::NotInLexicon(w),
    })?;
    if actual != Distance::Within(pair.phoneme_distance) {
        return Err(PairViolation::DistanceMismatch {
            recorded: pair.phoneme_distance,
            actual,
        });
    }
    if pair.phoneme_distance == 0 || pair.phoneme_distance > cfg.max_distance {
        return Err(PairViolation::DistanceOutOfRange(pair.phoneme_distance));
    }
    if cfg.require_same_first_phoneme {
        let ok = lex.lookup(a).iter().any(|pa| {
            lex.lookup(c).iter().any(|pc| {
                phoneme_distance(pa, pc, &dcfg) == actual && pa.first().symbol() == pc.first().symbol()
            })
        });
        if !ok {
            return Err(PairViolation::FirstPhoneme);
        }
    }
    if cfg.exclude_same_stem && same_stem(a, c) {
        return Err(PairViolation::SameStem);
    }
    if cfg.exclude_non_alphabetic && !is_clean_headword(c) {
        return Err(PairViolation::NonAlphabetic(c.clone()));
    }
    Ok(())
}
