//! C ABI over the leakprobe core.
//!
//! Conventions: every fallible call returns an [`LpStatus`] and writes its
//! result through an out pointer. On failure [`lp_last_error`] describes the
//! problem for the calling thread. Strings returned to the caller are owned by
//! the caller and released with [`lp_string_free`]. Panics never cross the
//! boundary; they surface as [`LpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use leakprobe::{
    align, metrics, min_word_distance, parse_lexicon, same_stem, similarity, stem, stratify, Distance,
    DistanceConfig, Lexicon, SimilarityBucket,
};

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    NotInLexicon = 5,
    InvalidArgument = 6,
    Panic = 99,
}

/// Similarity bucket codes, see [`lp_stratify`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpBucket {
    Distinct = 0,
    Related = 1,
    Similar = 2,
}

/// Opaque pronunciation dictionary handle.
pub struct LpLexicon {
    inner: Lexicon,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpWer {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
    pub rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpItemScore {
    pub positions: usize,
    pub acoustic_matches: usize,
    pub leakage_matches: usize,
    /// False when the masked reference is empty; `background` is then zeroed.
    pub has_background: bool,
    pub background: LpWer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(LpStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(LpStatus::NullPointer, format!("{what} is null"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn lexicon_arg<'a>(p: *const LpLexicon) -> Result<&'a Lexicon, Failure> {
    p.as_ref().map(|l| &l.inner).ok_or_else(|| Failure::null("lexicon"))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(LpStatus::InvalidArgument, "result contains a nul byte".into()))
}

fn wer_out(w: &align::WerCounts) -> LpWer {
    LpWer {
        hits: w.hits,
        substitutions: w.substitutions,
        deletions: w.deletions,
        insertions: w.insertions,
        reference_len: w.reference_len,
        rate: w.rate,
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!("leakprobe ", env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version has interior nul"),
    };
    VERSION.as_ptr()
}

/// Loads a CMU-format dictionary from `path`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_lexicon_open(path: *const c_char, out: *mut *mut LpLexicon) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let bytes = std::fs::read(path).map_err(|e| Failure(LpStatus::Io, format!("{path}: {e}")))?;
        let parsed = parse_lexicon(bytes, path).map_err(|e| Failure(LpStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(LpLexicon { inner: parsed.lexicon }));
        Ok(())
    })
}

/// Parses dictionary text held in memory (`len` bytes, need not be terminated).
///
/// # Safety
/// `text` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_lexicon_from_text(text: *const c_char, len: usize, out: *mut *mut LpLexicon) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if text.is_null() {
            return Err(Failure::null("text"));
        }
        let bytes = std::slice::from_raw_parts(text.cast::<u8>(), len);
        let parsed = parse_lexicon(bytes, "<memory>").map_err(|e| Failure(LpStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(LpLexicon { inner: parsed.lexicon }));
        Ok(())
    })
}

/// Releases a lexicon. Null is ignored.
///
/// # Safety
/// `lex` must come from `lp_lexicon_open`/`lp_lexicon_from_text` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lp_lexicon_free(lex: *mut LpLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

/// Number of headwords, or 0 for null.
///
/// # Safety
/// `lex` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_lexicon_word_count(lex: *const LpLexicon) -> usize {
    lex.as_ref().map_or(0, |l| l.inner.len())
}

/// Total pronunciations including alternates, or 0 for null.
///
/// # Safety
/// `lex` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_lexicon_pronunciation_count(lex: *const LpLexicon) -> usize {
    lex.as_ref()
        .map_or(0, |l| l.inner.iter().map(|(_, prons)| prons.len()).sum())
}

/// Minimum phoneme distance between two words. Writes -1 when the distance
/// exceeds `max_distance`.
///
/// # Safety
/// Pointers must be valid; strings nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn lp_word_distance(
    lex: *const LpLexicon,
    w1: *const c_char,
    w2: *const c_char,
    max_distance: u32,
    strip_stress: bool,
    out: *mut i32,
) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let lex = lexicon_arg(lex)?;
        let cfg = DistanceConfig {
            strip_stress,
            max_distance: max_distance as usize,
        };
        let d = min_word_distance(lex, str_arg(w1, "w1")?, str_arg(w2, "w2")?, &cfg)
            .map_err(|e| Failure(LpStatus::NotInLexicon, e.to_string()))?;
        *out = match d {
            Distance::Within(d) => i32::try_from(d).unwrap_or(i32::MAX),
            Distance::AboveCap => -1,
        };
        Ok(())
    })
}

/// Porter stem of `word`. Release the result with [`lp_string_free`].
///
/// # Safety
/// `word` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_stem(word: *const c_char, out: *mut *mut c_char) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = to_c_string(stem(str_arg(word, "word")?))?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn lp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Whether two words share a Porter stem (case-insensitive).
///
/// # Safety
/// Strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_same_stem(w1: *const c_char, w2: *const c_char, out: *mut bool) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = same_stem(str_arg(w1, "w1")?, str_arg(w2, "w2")?);
        Ok(())
    })
}

/// Word error rate of `hyp` against `reference` after normalization.
///
/// # Safety
/// Strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_wer(reference: *const c_char, hyp: *const c_char, out: *mut LpWer) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let reference = align::normalize(str_arg(reference, "reference")?);
        let w = align::wer(&reference, &align::normalize(str_arg(hyp, "hyp")?))
            .map_err(|e| Failure(LpStatus::InvalidArgument, e.to_string()))?;
        *out = wer_out(&w);
        Ok(())
    })
}

/// Scores one transcript for an (acoustic word, context word) pair.
///
/// # Safety
/// Strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_score_item(
    reference: *const c_char,
    hyp: *const c_char,
    acoustic_word: *const c_char,
    context_word: *const c_char,
    out: *mut LpItemScore,
) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pair = metrics::PairTokens::new(str_arg(acoustic_word, "acoustic_word")?, str_arg(context_word, "context_word")?);
        let score = metrics::score_item(
            &align::normalize(str_arg(reference, "reference")?),
            &align::normalize(str_arg(hyp, "hyp")?),
            &pair,
        );
        *out = LpItemScore {
            positions: score.counts.positions,
            acoustic_matches: score.counts.acoustic_matches,
            leakage_matches: score.counts.leakage_matches,
            has_background: score.background.is_some(),
            background: score.background.as_ref().map(wer_out).unwrap_or_default(),
        };
        Ok(())
    })
}

/// Character-LCS similarity ratio in [0, 1].
///
/// # Safety
/// Strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = similarity(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

/// Bucket for a similarity ratio. NaN is rejected.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_stratify(ratio: f64, out: *mut LpBucket) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if ratio.is_nan() {
            return Err(Failure(LpStatus::InvalidArgument, "ratio is NaN".into()));
        }
        *out = match stratify(ratio) {
            SimilarityBucket::Distinct => LpBucket::Distinct,
            SimilarityBucket::Related => LpBucket::Related,
            SimilarityBucket::Similar => LpBucket::Similar,
        };
        Ok(())
    })
}
