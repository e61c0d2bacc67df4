mod common;

use leakprobe::pronlex::{parse_lexicon, Lexicon};

#[test]
fn full_dictionary_loads_and_round_trips() {
    let parsed = Lexicon::from_path(common::cmudict()).expect("cmudict");
    let stats = parsed.lexicon.stats();
    assert_eq!(stats.headwords, 126_052);
    assert_eq!(stats.pronunciations, 135_166);
    assert!(stats.headwords_with_alternates > 0);

    let texas = parsed.lexicon.lookup("texas");
    assert!(!texas.is_empty());
    assert_eq!(texas[0].first().symbol(), "T");

    let again = parse_lexicon(parsed.lexicon.to_dict_format(), "round-trip").expect("reparse");
    assert!(again.issues.is_empty());
    assert_eq!(again.lexicon.stats().headwords, stats.headwords);
    assert_eq!(again.lexicon.stats().pronunciations, stats.pronunciations);
    for (word, prons) in parsed.lexicon.iter().step_by(97) {
        assert_eq!(again.lexicon.lookup(word), prons, "{word}");
    }
}
