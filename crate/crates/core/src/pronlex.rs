//! CMU Pronouncing Dictionary parsing.
//!
//! The reader accepts the flat-file layout the dictionary is distributed in
//! (`WORD  PH1 PH2 ...`, `;;;` comment lines, `WORD(1)` alternates) as well as
//! the lowercase `word(2) ...` layout with trailing `# comment` used by newer
//! releases. Headwords are stored uppercase; alternates are folded under the
//! base headword in file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// ARPAbet vowels. Only these may carry a stress digit.
pub const ARPABET_VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("dictionary input is empty")]
    Empty,
    #[error("failed to read dictionary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A single ARPAbet phoneme with its optional stress digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phoneme {
    symbol: String,
    stress: Option<u8>,
}

impl Phoneme {
    /// Parses a raw dictionary token such as `EH1` or `K`.
    pub fn parse(token: &str) -> Result<Self, PhonemeError> {
        let (symbol, stress) = match token.as_bytes().last() {
            Some(d) if d.is_ascii_digit() => (&token[..token.len() - 1], Some(d - b'0')),
            _ => (token, None),
        };
        if symbol.is_empty() || !symbol.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(PhonemeError::BadSymbol(token.to_string()));
        }
        if let Some(level) = stress {
            if level > 2 {
                return Err(PhonemeError::BadStress(token.to_string()));
            }
            if !ARPABET_VOWELS.contains(&symbol) {
                return Err(PhonemeError::StressedConsonant(token.to_string()));
            }
        }
        Ok(Self {
            symbol: symbol.to_string(),
            stress,
        })
    }

    pub fn new(symbol: impl Into<String>, stress: Option<u8>) -> Self {
        Self {
            symbol: symbol.into(),
            stress,
        }
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn stress(&self) -> Option<u8> {
        self.stress
    }

    pub fn is_vowel(&self) -> bool {
        ARPABET_VOWELS.contains(&self.symbol.as_str())
    }

    pub fn without_stress(&self) -> Self {
        Self {
            symbol: self.symbol.clone(),
            stress: None,
        }
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stress {
            Some(level) => write!(f, "{}{}", self.symbol, level),
            None => f.write_str(&self.symbol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhonemeError {
    #[error("invalid phoneme symbol {0:?}")]
    BadSymbol(String),
    #[error("stress digit out of range in {0:?}")]
    BadStress(String),
    #[error("stress digit on non-vowel {0:?}")]
    StressedConsonant(String),
}

/// A non-empty phoneme sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pronunciation(Vec<Phoneme>);

impl Pronunciation {
    /// Returns `None` for an empty sequence.
    pub fn new(phonemes: Vec<Phoneme>) -> Option<Self> {
        if phonemes.is_empty() {
            None
        } else {
            Some(Self(phonemes))
        }
    }

    /// Parses a whitespace separated phoneme string, e.g. `"T EH1 K S AH0 S"`.
    pub fn parse(text: &str) -> Result<Self, PhonemeError> {
        let phonemes = text
            .split_whitespace()
            .map(Phoneme::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(phonemes).ok_or_else(|| PhonemeError::BadSymbol(String::new()))
    }

    pub fn phonemes(&self) -> &[Phoneme] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Phoneme {
        &self.0[0]
    }
}

impl fmt::Display for Pronunciation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// A recoverable per-line problem found while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineIssue {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

/// Word to pronunciations mapping. Immutable once built.
///
/// Two lexicons compare equal when they hold the same entries; the provenance
/// fields are not part of equality.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Pronunciation>>,
    source: String,
    sha256: String,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Lexicon {}

/// Result of [`parse_lexicon`]: the lexicon plus all recoverable line errors.
#[derive(Debug, Clone)]
pub struct ParsedLexicon {
    pub lexicon: Lexicon,
    pub issues: Vec<LineIssue>,
}

/// Parses dictionary text. `source` is recorded as provenance.
///
/// Fails only when the input holds no non-blank line at all. Lines without a
/// phoneme field, with malformed phonemes or with undecodable bytes are
/// collected in [`ParsedLexicon::issues`] and skipped.
pub fn parse_lexicon(input: impl AsRef<[u8]>, source: &str) -> Result<ParsedLexicon, LexiconError> {
    let bytes = input.as_ref();
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(LexiconError::Empty);
    }
    let sha256 = hex::encode(Sha256::digest(bytes));

    let mut entries: BTreeMap<String, Vec<Pronunciation>> = BTreeMap::new();
    let mut issues = Vec::new();

    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.starts_with(b";;;") || raw.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let line = match std::str::from_utf8(raw) {
            Ok(line) => line,
            Err(_) => {
                issues.push(LineIssue {
                    line: line_no,
                    reason: "undecodable bytes".into(),
                });
                continue;
            }
        };
        match parse_entry(line) {
            Ok((word, pron)) => entries.entry(word).or_default().push(pron),
            Err(reason) => issues.push(LineIssue {
                line: line_no,
                reason,
            }),
        }
    }

    Ok(ParsedLexicon {
        lexicon: Lexicon {
            entries,
            source: source.to_string(),
            sha256,
        },
        issues,
    })
}

fn parse_entry(line: &str) -> Result<(String, Pronunciation), String> {
    let mut fields = line.split_whitespace();
    let head = fields.next().ok_or("missing headword")?;
    let word = base_headword(head);
    if word.is_empty() {
        return Err(format!("empty headword in {head:?}"));
    }
    let phonemes = fields
        .take_while(|tok| !tok.starts_with('#'))
        .map(|tok| Phoneme::parse(&tok.to_ascii_uppercase()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let pron = Pronunciation::new(phonemes).ok_or_else(|| format!("no phoneme field for {head:?}"))?;
    Ok((word, pron))
}

/// Strips an alternate marker such as `(1)` and uppercases.
fn base_headword(head: &str) -> String {
    head.strip_suffix(')')
        .and_then(|h| h.rsplit_once('('))
        .filter(|(base, idx)| {
            !base.is_empty() && !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit())
        })
        .map_or(head, |(base, _)| base)
        .to_uppercase()
}

/// True when a headword consists only of ASCII letters. Other headwords
/// (punctuation entries, digits, apostrophes, hyphens) are kept in the lexicon
/// but should not be offered as transcript words.
pub fn is_clean_headword(word: &str) -> bool {
    !word.is_empty() && word.bytes().all(|b| b.is_ascii_alphabetic())
}

impl Lexicon {
    /// Reads and parses a dictionary file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<ParsedLexicon, LexiconError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_lexicon(bytes, &path.display().to_string())
    }

    /// Builds a lexicon directly from `(word, pronunciation)` pairs.
    pub fn from_entries<I, S>(entries: I, source: &str) -> Self
    where
        I: IntoIterator<Item = (S, Pronunciation)>,
        S: AsRef<str>,
    {
        let mut map: BTreeMap<String, Vec<Pronunciation>> = BTreeMap::new();
        for (word, pron) in entries {
            map.entry(word.as_ref().to_uppercase()).or_default().push(pron);
        }
        let mut lex = Self {
            entries: map,
            source: source.to_string(),
            sha256: String::new(),
        };
        lex.sha256 = hex::encode(Sha256::digest(lex.to_dict_format().as_bytes()));
        lex
    }

    /// Case-insensitive exact headword lookup; empty when absent.
    pub fn lookup(&self, word: &str) -> &[Pronunciation] {
        self.entries
            .get(&word.to_uppercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, word: &str) -> bool {
        !self.lookup(word).is_empty()
    }

    /// Iterates headwords (uppercase) in sorted order with their pronunciations.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Pronunciation])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// SHA-256 of the raw bytes the lexicon was parsed from.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    /// Serializes back to dictionary format: base entry first, then
    /// `WORD(1)`, `WORD(2)`, ... for alternates.
    pub fn to_dict_format(&self) -> String {
        let mut out = String::new();
        for (word, prons) in &self.entries {
            for (i, pron) in prons.iter().enumerate() {
                if i == 0 {
                    out.push_str(word);
                } else {
                    out.push_str(&format!("{word}({i})"));
                }
                out.push_str("  ");
                out.push_str(&pron.to_string());
                out.push('\n');
            }
        }
        out
    }

    pub fn stats(&self) -> LexiconStats {
        let mut inventory = BTreeSet::new();
        let mut pronunciations = 0;
        let mut with_alternates = 0;
        let mut flagged = 0;
        for (word, prons) in &self.entries {
            pronunciations += prons.len();
            if prons.len() > 1 {
                with_alternates += 1;
            }
            if !is_clean_headword(word) {
                flagged += 1;
            }
            for pron in prons {
                inventory.extend(pron.phonemes().iter().map(|p| p.symbol().to_string()));
            }
        }
        LexiconStats {
            source: self.source.clone(),
            sha256: self.sha256.clone(),
            headwords: self.entries.len(),
            pronunciations,
            headwords_with_alternates: with_alternates,
            non_alphabetic_headwords: flagged,
            phoneme_inventory: inventory.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconStats {
    pub source: String,
    pub sha256: String,
    pub headwords: usize,
    pub pronunciations: usize,
    pub headwords_with_alternates: usize,
    pub non_alphabetic_headwords: usize,
    pub phoneme_inventory: Vec<String>,
}
