mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data;

fn leakprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakprobe"))
        .args(args)
        .env_remove("LEAKPROBE_DICT")
        .env_remove("LEAKPROBE_JOBS")
        .output()
        .expect("run leakprobe")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn score_mixed(out_dir: &Path) {
    let out = leakprobe(&[
        "score",
        "--manifest",
        p(&data("fixture12.jsonl")),
        "--hypotheses",
        p(&data("hyps_mixed.jsonl")),
        "-o",
        p(out_dir),
    ]);
    stdout(&out);
}

#[test]
fn dist_and_stem() {
    let dict = data("mini.dict");
    assert_eq!(stdout(&leakprobe(&["dist", "Texas", "nexus", "--dict", p(&dict)])), "1\n");
    assert_eq!(stdout(&leakprobe(&["dist", "texas", "taxes", "--dict", p(&dict)])), "2\n");
    assert_eq!(stdout(&leakprobe(&["dist", "texas", "boston", "--dict", p(&dict)])), ">2\n");
    assert_eq!(stdout(&leakprobe(&["dist", "paris", "parish", "--dict", p(&dict)])), "1\n");
    let missing = leakprobe(&["dist", "texas", "ohio", "--dict", p(&dict)]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(stdout(&leakprobe(&["stem", "Relational", "ponies", "is"])), "relat\nponi\nis\n");
}

#[test]
fn dictionary_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_leakprobe"))
        .args(["dist", "texas", "nexus"])
        .env("LEAKPROBE_DICT", data("mini.dict"))
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "1\n");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(leakprobe(&["dist", "texas"]).status.code(), Some(2));
    assert_eq!(leakprobe(&["frobnicate"]).status.code(), Some(2));
    let m = data("fixture12.jsonl");
    assert_eq!(leakprobe(&["contexts", p(&m), "--mode", "sent7"]).status.code(), Some(2));
    assert_eq!(leakprobe(&["contexts", p(&m), "--mitigation"]).status.code(), Some(2));
    assert_eq!(leakprobe(&["report", p(&m), "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn lex_stats() {
    let v: serde_json::Value = serde_json::from_str(&stdout(&leakprobe(&["lex", "stats", p(&data("mini.dict"))]))).unwrap();
    assert_eq!(v["headwords"], 11);
    assert_eq!(v["pronunciations"], 12);
    assert_eq!(v["headwords_with_alternates"], 1);
    assert_eq!(v["non_alphabetic_headwords"], 1);
}

#[test]
fn mine_writes_header_and_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let entities = dir.path().join("entities.tsv");
    std::fs::write(&entities, "Texas\tFLEURS\nParis\tFLEURS\nTexas\tVoxPopuli\nOhio\tACL6060\nSt Paris\tACL6060\n").unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let dict = data("mini.dict");
    stdout(&leakprobe(&["mine", "--entities", p(&entities), "--dict", p(&dict), "-o", p(&pairs)]));
    let text = std::fs::read_to_string(&pairs).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let header = &lines[0];
    assert_eq!(header["schema"], "leakprobe.pairs/1");
    assert_eq!(header["n_entities"], 5);
    assert_eq!(header["config"]["max_distance"], 2);
    assert_eq!(header["nonstandard_max_distance"], false);
    assert_eq!(header["dictionary"]["headwords"], 11);
    assert_eq!(header["skips"][0]["entity"], "ohio");
    assert_eq!(header["splits"][0]["tokens"], serde_json::json!(["paris"]));
    let pairs: Vec<(String, String, u64, String)> = lines[1..]
        .iter()
        .map(|v| {
            (
                v["acoustic_word"].as_str().unwrap().into(),
                v["context_word"].as_str().unwrap().into(),
                v["phoneme_distance"].as_u64().unwrap(),
                v["source_dataset"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(
        pairs,
        [
            ("paris".into(), "parish".into(), 1, "FLEURS".into()),
            ("texas".into(), "texan".into(), 1, "FLEURS".into()),
        ]
    );

    let all = dir.path().join("all.jsonl");
    stdout(&leakprobe(&[
        "mine", "--entities", p(&entities), "--dict", p(&dict), "--all-candidates", "--no-first-phoneme", "-o", p(&all),
    ]));
    let text = std::fs::read_to_string(&all).unwrap();
    assert!(text.contains(r#""acoustic_word":"texas","context_word":"nexus","phoneme_distance":1"#));
    assert!(text.contains(r#""acoustic_word":"texas","context_word":"taxes","phoneme_distance":2"#));
    assert!(!text.contains(r#""context_word":"tax""#));
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let good = std::fs::read_to_string(data("fixture12.jsonl")).unwrap();
    let mut lines: Vec<String> = good.lines().map(str::to_string).collect();
    lines[2] = lines[2].replace("\"phoneme_distance\": 1", "\"phoneme_distance\": 3");
    lines.push(lines[1].clone());
    lines.push("{not json".into());
    std::fs::write(&bad, lines.join("\n")).unwrap();

    let lenient = leakprobe(&["validate", p(&bad)]);
    let report = stdout(&lenient);
    assert!(report.contains("phoneme-distance-out-of-range"));
    assert!(report.contains("duplicate-item-id"));
    assert!(report.contains("malformed-json"));
    assert_eq!(leakprobe(&["validate", p(&bad), "--strict"]).status.code(), Some(1));
    assert_eq!(leakprobe(&["validate", p(&data("fixture12.jsonl")), "--strict"]).status.code(), Some(0));
    assert_eq!(leakprobe(&["stats", p(&bad), "--strict"]).status.code(), Some(1));
}

#[test]
fn contexts_cover_the_matrix() {
    let text = stdout(&leakprobe(&["contexts", p(&data("fixture12.jsonl")), "--seed", "3"]));
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 12 * 9);
    let first: Vec<&str> = records[..9].iter().map(|r| r["condition_id"].as_str().unwrap()).collect();
    assert_eq!(
        first,
        ["none", "word", "word+mit", "sent1", "sent1+mit", "sent5", "sent5+mit", "sent10", "sent10+mit"]
    );
    assert_eq!(records[1]["context"], "taxes");
    assert_eq!(records[2]["context"], "taxes, texas");
    let other_seed = stdout(&leakprobe(&["contexts", p(&data("fixture12.jsonl")), "--seed", "4"]));
    assert_ne!(text, other_seed);

    let qwen = stdout(&leakprobe(&[
        "contexts",
        p(&data("fixture12.jsonl")),
        "--mode",
        "word",
        "--template",
        "qwen",
    ]));
    let r: serde_json::Value = serde_json::from_str(qwen.lines().next().unwrap()).unwrap();
    assert_eq!(r["prompt"]["user"], "Context: taxes\nPlease transcribe the audio.");
    assert!(r["prompt"]["system"].as_str().unwrap().starts_with("You are Qwen"));
}

#[test]
fn score_mixed_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    score_mixed(dir.path());
    let tradeoff = std::fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff, std::fs::read_to_string(data("golden/tradeoff_mixed.csv")).unwrap());

    let agg = std::fs::read_to_string(dir.path().join("aggregate_by_condition.csv")).unwrap();
    assert!(agg.starts_with("# schema: leakprobe.scores/1\n"));
    let rows: Vec<&str> = agg.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[2], "m1,word,4,0,4,1,2,0.2500,0.5000,0.2500,0.5000,0.0625,0.0606");
    assert_eq!(rows[3], "m2,none,3,0,3,2,0,0.6667,0.0000,0.6667,0.0000,0.3333,0.3333");

    let report = stdout(&leakprobe(&["report", p(&dir.path().join("scores.jsonl"))]));
    assert_eq!(report, std::fs::read_to_string(data("golden/report_mixed.md")).unwrap());

    for name in ["aggregate_by_similarity.csv", "aggregate_by_distance.csv", "aggregate_by_dataset.csv", "provenance.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn report_formats_and_merging() {
    let dir = tempfile::tempdir().unwrap();
    score_mixed(dir.path());
    let scores = dir.path().join("scores.jsonl");

    let csv = stdout(&leakprobe(&["report", p(&scores), "--format", "csv"]));
    assert_eq!(csv.lines().next().unwrap(), "metric,condition,m1,m2");
    assert!(csv.contains("leakage_rate,word,0.5000,\n"));

    let jsonl = stdout(&leakprobe(&["report", p(&scores), "--format", "jsonl"]));
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["metric"], "acoustic_accuracy");
    assert_eq!(first["values"]["m2"], "0.6667");

    // The same (model, condition) rows in two files conflict.
    let conflict = leakprobe(&["report", p(&scores), p(&scores)]);
    assert_eq!(conflict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&conflict.stderr).contains("appears in both"));

    // Files holding different models merge into one table.
    let text = std::fs::read_to_string(&scores).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let (m1, m2): (Vec<&str>, Vec<&str>) = lines.partition(|l| l.contains("\"model\":\"m1\""));
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    std::fs::write(&a, format!("{header}\n{}\n", m1.join("\n"))).unwrap();
    std::fs::write(&b, format!("{header}\n{}\n", m2.join("\n"))).unwrap();
    let merged = stdout(&leakprobe(&["report", p(&a), p(&b)]));
    assert_eq!(merged, std::fs::read_to_string(data("golden/report_mixed.md")).unwrap());

    let unversioned = dir.path().join("c.jsonl");
    std::fs::write(&unversioned, m1.join("\n")).unwrap();
    let out = leakprobe(&["report", p(&unversioned)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected schema"));
}

#[test]
fn score_rejects_duplicates_and_strict_unknowns() {
    let dir = tempfile::tempdir().unwrap();
    let hyps = dir.path().join("h.jsonl");
    let line = r#"{"item_id":"fleurs-01","condition_id":"none","model":"m","text":"x"}"#;
    std::fs::write(&hyps, format!("{line}\n{line}\n")).unwrap();
    let m = data("fixture12.jsonl");
    let out = leakprobe(&["score", "--manifest", p(&m), "--hypotheses", p(&hyps), "-o", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(&hyps, r#"{"item_id":"nope","condition_id":"none","model":"m","text":"x"}"#).unwrap();
    let strict = leakprobe(&[
        "score", "--manifest", p(&m), "--hypotheses", p(&hyps), "-o", p(&dir.path().join("o")), "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(1));
    let lenient = leakprobe(&["score", "--manifest", p(&m), "--hypotheses", p(&hyps), "-o", p(&dir.path().join("o"))]);
    assert_eq!(lenient.status.code(), Some(0));
}

#[test]
fn markdown_and_jsonl_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let out = leakprobe(&[
        "score",
        "--manifest",
        p(&data("fixture12.jsonl")),
        "--hypotheses",
        p(&data("hyps_mixed.jsonl")),
        "-o",
        p(dir.path()),
        "--format",
        "markdown",
        "--dict",
        p(&data("mini.dict")),
    ]);
    stdout(&out);
    let md = std::fs::read_to_string(dir.path().join("aggregate_by_distance.md")).unwrap();
    assert!(md.contains("| model | condition | phoneme_distance | n_items |"));
    assert!(md.contains("- dictionary_sha256: `"));
    assert!(!md.contains("dictionary_sha256: `none`"));
}
