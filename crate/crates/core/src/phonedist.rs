//! Phoneme-level Levenshtein distance.
//!
//! Unit costs for insertion, deletion and substitution. Distances above the
//! configured cap are reported as [`Distance::AboveCap`] rather than as a number,
//! which lets the banded DP give up early.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pronlex::{Lexicon, Phoneme, Pronunciation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Compare phoneme symbols only, ignoring stress digits.
    pub strip_stress: bool,
    pub max_distance: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            strip_stress: true,
            max_distance: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Within(usize),
    AboveCap,
}

impl Distance {
    pub fn value(self) -> Option<usize> {
        match self {
            Distance::Within(d) => Some(d),
            Distance::AboveCap => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistanceError {
    #[error("word not in lexicon: {0}")]
    NotInLexicon(String),
}

pub fn strip_stress(p: &Pronunciation) -> Pronunciation {
    Pronunciation::new(p.phonemes().iter().map(Phoneme::without_stress).collect())
        .expect("pronunciations are non-empty")
}

fn phoneme_eq(strip: bool) -> impl Fn(&Phoneme, &Phoneme) -> bool {
    move |a, b| {
        if strip {
            a.symbol() == b.symbol()
        } else {
            a == b
        }
    }
}

/// Levenshtein distance between two pronunciations, capped at `cfg.max_distance`.
pub fn phoneme_distance(a: &Pronunciation, b: &Pronunciation, cfg: &DistanceConfig) -> Distance {
    match bounded_levenshtein_by(
        a.phonemes(),
        b.phonemes(),
        cfg.max_distance,
        phoneme_eq(cfg.strip_stress),
    ) {
        Some(d) => Distance::Within(d),
        None => Distance::AboveCap,
    }
}

/// Minimum distance over every pronunciation of `w1` against every
/// pronunciation of `w2`.
pub fn min_word_distance(
    lex: &Lexicon,
    w1: &str,
    w2: &str,
    cfg: &DistanceConfig,
) -> Result<Distance, DistanceError> {
    let left = lex.lookup(w1);
    if left.is_empty() {
        return Err(DistanceError::NotInLexicon(w1.to_string()));
    }
    let right = lex.lookup(w2);
    if right.is_empty() {
        return Err(DistanceError::NotInLexicon(w2.to_string()));
    }
    Ok(left
        .iter()
        .flat_map(|a| right.iter().map(move |b| phoneme_distance(a, b, cfg)))
        .min()
        .unwrap_or(Distance::AboveCap))
}

/// Plain two-row Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn bounded_levenshtein<T: PartialEq>(a: &[T], b: &[T], cap: usize) -> Option<usize> {
    bounded_levenshtein_by(a, b, cap, |x, y| x == y)
}

/// Levenshtein distance restricted to a diagonal band of half-width `cap`.
///
/// Returns `None` as soon as the distance is known to exceed `cap`. Cells
/// outside the band hold `cap + 1`, which is enough because any path leaving
/// the band already costs more than `cap`.
pub fn bounded_levenshtein_by<T, F>(a: &[T], b: &[T], cap: usize, eq: F) -> Option<usize>
where
    F: Fn(&T, &T) -> bool,
{
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > cap {
        return None;
    }
    let inf = cap + 1;
    let mut prev: Vec<usize> = (0..=m).map(|j| j.min(inf)).collect();
    let mut cur = vec![inf; m + 1];
    for i in 1..=n {
        let lo = i.saturating_sub(cap).max(1);
        let hi = (i + cap).min(m);
        cur[0] = i.min(inf);
        cur[lo - 1] = if lo == 1 { cur[0] } else { inf };
        let mut row_min = cur[lo - 1];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(!eq(&a[i - 1], &b[j - 1]));
            let best = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(inf);
            cur[j] = best;
            row_min = row_min.min(best);
        }
        if hi < m {
            cur[hi + 1] = inf;
        }
        if row_min > cap {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m];
    (d <= cap).then_some(d)
}
