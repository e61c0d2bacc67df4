#![allow(dead_code)]

use std::path::PathBuf;

use leakprobe::{EvalItem, WordPair};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn cmudict() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cmudict/cmudict.dict")
}

const FILLERS: [&str; 12] = [
    "The weather stayed mild for most of the afternoon.",
    "Several volunteers arrived early to set up the chairs.",
    "A new bakery opened near the old train station.",
    "The committee will publish its findings next month.",
    "Students gathered in the library before the exam.",
    "Local farmers expect a good harvest this autumn.",
    "The museum extended its opening hours for the holidays.",
    "Traffic was heavier than usual on the main road.",
    "Engineers tested the bridge after the heavy rain.",
    "The orchestra rehearsed the final piece twice.",
    "A small boat drifted slowly across the harbour.",
    "The report was shared with every department.",
];

/// A synthetic item whose pair words are `w{n}a`/`w{n}c`-style tokens that
/// never occur in fillers or background text.
pub fn synthetic_item(n: usize, dataset: &str, distance: usize) -> EvalItem {
    let wa = format!("alpha{n}");
    let wc = format!("gamma{n}");
    EvalItem {
        item_id: format!("{}-{n:04}", dataset.to_lowercase()),
        dataset: dataset.into(),
        reference_transcript: format!("The speaker mentioned {wa} twice during the talk about item {n}."),
        pair: WordPair {
            acoustic_word: wa.clone(),
            context_word: wc.clone(),
            phoneme_distance: distance,
            source_dataset: dataset.into(),
        },
        context_sentence: format!("Yesterday {wc} was on the agenda."),
        acoustic_sentence: format!("Yesterday {wa} was on the agenda."),
        filler_sentences: (0..9).map(|i| FILLERS[(n + i) % FILLERS.len()].to_string()).collect(),
        audio_path: Some(format!("audio/{n}.wav")),
        audio_duration_s: Some(3.0 + (n % 7) as f64 * 0.5),
    }
}

/// 679 items laid out like the published pair set: per dataset
/// (name, distance-1 count, distance-2 count).
pub const PUBLISHED_LAYOUT: [(&str, usize, usize); 3] = [("FLEURS", 134, 20), ("ACL6060", 20, 4), ("VoxPopuli", 450, 51)];

pub fn published_layout_items() -> Vec<EvalItem> {
    let mut items = Vec::new();
    let mut n = 0;
    for (dataset, d1, d2) in PUBLISHED_LAYOUT {
        for i in 0..d1 + d2 {
            items.push(synthetic_item(n, dataset, if i < d1 { 1 } else { 2 }));
            n += 1;
        }
    }
    items
}

pub fn write_manifest(path: &std::path::Path, items: &[EvalItem]) {
    let mut text = String::from("{\"schema\":\"leakprobe.manifest/1\"}\n");
    for item in items {
        text.push_str(&serde_json::to_string(item).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Replaces every occurrence of the acoustic word's tokens with the context
/// word's tokens in the normalized reference.
pub fn swap_pair(reference: &str, pair: &WordPair) -> String {
    let tokens = leakprobe::normalize(reference).tokens;
    let wa = leakprobe::normalize(&pair.acoustic_word).tokens;
    let wc = leakprobe::normalize(&pair.context_word).tokens;
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i..].starts_with(&wa) {
            out.extend(wc.iter().cloned());
            i += wa.len();
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    out.join(" ")
}
