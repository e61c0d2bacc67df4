//! Transcript normalization and word-level alignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalization policy echoed into report headers.
pub const NORMALIZATION_POLICY: &str = "lowercase; drop punctuation and symbols except apostrophes/hyphens between two alphanumerics; split on whitespace";

/// A normalized word sequence, with the raw text kept for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub raw: String,
}

impl TokenSeq {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let raw = tokens.join(" ");
        Self { tokens, raw }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    /// Start indices of non-overlapping occurrences of `needle`, left to right.
    pub fn find_all(&self, needle: &[String]) -> Vec<usize> {
        find_all(&self.tokens, needle)
    }

    pub fn contains_seq(&self, needle: &[String]) -> bool {
        !needle.is_empty() && self.tokens.windows(needle.len()).any(|w| w == needle)
    }
}

pub(crate) fn find_all<T: PartialEq>(hay: &[T], needle: &[T]) -> Vec<usize> {
    let mut out = Vec::new();
    if needle.is_empty() {
        return out;
    }
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if hay[i..i + needle.len()] == *needle {
            out.push(i);
            i += needle.len();
        } else {
            i += 1;
        }
    }
    out
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '\u{2010}' | '\u{2011}')
}

/// Lowercases, strips punctuation (keeping apostrophes and hyphens that sit
/// between two alphanumerics) and splits on whitespace.
pub fn normalize(text: &str) -> TokenSeq {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            cleaned.push(' ');
        } else if is_joiner(c)
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cleaned.push(if c == '\u{2019}' || c == '\'' { '\'' } else { '-' });
        }
    }
    TokenSeq {
        tokens: cleaned.split_whitespace().map(str::to_string).collect(),
        raw: text.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: EditKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

impl AlignOp {
    fn new(kind: EditKind, ref_index: Option<usize>, hyp_index: Option<usize>) -> Self {
        Self {
            kind,
            ref_index,
            hyp_index,
        }
    }
}

/// Ordered edit script turning the reference into the hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
}

impl Alignment {
    pub fn count(&self, kind: EditKind) -> usize {
        self.ops.iter().filter(|op| op.kind == kind).count()
    }

    /// Number of non-match operations.
    pub fn cost(&self) -> usize {
        self.ops.iter().filter(|op| op.kind != EditKind::Match).count()
    }

    /// Rebuilds the hypothesis by applying the script to `reference`.
    pub fn replay<T: Clone>(&self, reference: &[T], hypothesis: &[T]) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match op.kind {
                EditKind::Match => op.ref_index.map(|i| reference[i].clone()),
                EditKind::Substitute | EditKind::Insert => op.hyp_index.map(|j| hypothesis[j].clone()),
                EditKind::Delete => None,
            })
            .collect()
    }
}

pub fn align_words(reference: &TokenSeq, hypothesis: &TokenSeq) -> Alignment {
    align_tokens(&reference.tokens, &hypothesis.tokens)
}

/// Minimum edit alignment. The backtrace runs from the end and at each cell
/// prefers match, then substitute, then delete, then insert.
pub fn align_tokens<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        d[i * width] = i;
    }
    for (j, cell) in d.iter_mut().take(m + 1).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            if reference[i - 1] == hypothesis[j - 1] && here == diag {
                ops.push(AlignOp::new(EditKind::Match, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
            if here == diag + 1 && reference[i - 1] != hypothesis[j - 1] {
                ops.push(AlignOp::new(EditKind::Substitute, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * width + j] + 1 {
            ops.push(AlignOp::new(EditKind::Delete, Some(i - 1), None));
            i -= 1;
        } else {
            ops.push(AlignOp::new(EditKind::Insert, None, Some(j - 1)));
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerCounts {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
    pub rate: f64,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WerError {
    #[error("reference transcript is empty")]
    EmptyReference,
}

pub fn wer(reference: &TokenSeq, hypothesis: &TokenSeq) -> Result<WerCounts, WerError> {
    wer_tokens(&reference.tokens, &hypothesis.tokens)
}

pub fn wer_tokens<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerCounts, WerError> {
    if reference.is_empty() {
        return Err(WerError::EmptyReference);
    }
    let alignment = align_tokens(reference, hypothesis);
    let substitutions = alignment.count(EditKind::Substitute);
    let deletions = alignment.count(EditKind::Delete);
    let insertions = alignment.count(EditKind::Insert);
    Ok(WerCounts {
        hits: alignment.count(EditKind::Match),
        substitutions,
        deletions,
        insertions,
        reference_len: reference.len(),
        rate: (substitutions + deletions + insertions) as f64 / reference.len() as f64,
    })
}
