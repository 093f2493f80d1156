mod common;

use std::collections::BTreeSet;

use common::{check_fixture, fixture_dir, fixture_table};
use cuescreen::chat::parse_document;

#[test]
fn every_fixture_meets_its_expectation() {
    let failures: Vec<String> = fixture_table()
        .iter()
        .filter_map(|(name, expect)| {
            check_fixture(name, expect)
                .err()
                .map(|e| format!("{name}: {e}"))
        })
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn table_covers_fixture_directory() {
    let on_disk: BTreeSet<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let listed: BTreeSet<String> = fixture_table().iter().map(|(n, _)| n.to_string()).collect();
    assert_eq!(on_disk, listed);
    assert!(listed.len() >= 20);
}

fn load(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap()
}

#[test]
fn header_continuation_joins_value() {
    let doc = parse_document("h", &load("v13_headers.cha")).unwrap();
    assert_eq!(doc.header("Comment"), Some("line one line two"));
    assert_eq!(doc.header("Media"), Some("001-0, audio"));
    assert_eq!(doc.participants(), vec!["PAR", "INV"]);
}

#[test]
fn dependent_tiers_stay_with_their_utterance() {
    let doc = parse_document("d", &load("v05_dependent_tiers.cha")).unwrap();
    let names: Vec<&str> = doc.utterances[0]
        .dependent_tiers
        .iter()
        .map(|(n, _)| n.as_str())
        .collect();
    assert_eq!(names, ["mor", "gra", "com"]);
    assert_eq!(doc.utterances[1].dependent_tiers.len(), 1);
}

#[test]
fn crlf_and_lf_agree() {
    let a = parse_document("x", &load("v01_minimal.cha")).unwrap();
    let b = parse_document("x", &load("v11_crlf.cha")).unwrap();
    assert_eq!(a.utterances, b.utterances);
}

#[test]
fn investigator_text_is_excluded() {
    let doc = parse_document("i", &load("v02_interleaved.cha")).unwrap();
    let par = cuescreen::chat::extract_participant_text(&doc, "PAR").unwrap();
    assert!(!par.text.contains("kitchen") && !par.text.contains("cookie"));
    let inv = cuescreen::chat::extract_participant_text(&doc, "INV").unwrap();
    assert!(inv.text.contains("kitchen"));
}
