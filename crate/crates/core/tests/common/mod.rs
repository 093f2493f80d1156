//! Fixtures and independent reference implementations shared by the
//! integration tests. The oracles here deliberately avoid the library code
//! they check.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cuescreen::chat::{
    annotate, clean_text, extract_participant_text, parse_document, AnnotationKind, ChatError,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cha")
}

pub struct ValidCase {
    pub utterances: usize,
    pub par_utterances: usize,
    pub par_text: &'static str,
    pub pauses: (usize, usize, usize),
    pub repetitions: usize,
    pub retraces: usize,
}

pub enum Expect {
    Valid(ValidCase),
    Error(fn(&ChatError) -> bool, usize),
}

const fn valid(utterances: usize, par_utterances: usize, par_text: &'static str) -> ValidCase {
    ValidCase {
        utterances,
        par_utterances,
        par_text,
        pauses: (0, 0, 0),
        repetitions: 0,
        retraces: 0,
    }
}

fn missing_begin(e: &ChatError) -> bool {
    matches!(e, ChatError::MissingBegin { .. })
}
fn duplicate_begin(e: &ChatError) -> bool {
    matches!(e, ChatError::DuplicateBegin { .. })
}
fn unknown_xxx(e: &ChatError) -> bool {
    matches!(e, ChatError::UnknownSpeaker { speaker, .. } if speaker == "XXX")
}
fn unknown_inv(e: &ChatError) -> bool {
    matches!(e, ChatError::UnknownSpeaker { speaker, .. } if speaker == "INV")
}
fn malformed(e: &ChatError) -> bool {
    matches!(e, ChatError::MalformedTier { .. })
}

/// Hand-derived expectations for every file in `tests/fixtures/cha`.
pub fn fixture_table() -> Vec<(&'static str, Expect)> {
    use Expect::*;
    vec![
        (
            "v01_minimal.cha",
            Valid(ValidCase {
                pauses: (1, 0, 0),
                ..valid(1, 1, "the boy is falling")
            }),
        ),
        (
            "v02_interleaved.cha",
            Valid(valid(
                4,
                2,
                "the mother is drying a dish the water is running over",
            )),
        ),
        (
            "v03_three_par.cha",
            Valid(valid(
                3,
                3,
                "there is a girl and a boy on a stool that's all",
            )),
        ),
        (
            "v04_continuation.cha",
            Valid(valid(
                1,
                1,
                "the little boy is up on the stool and he is reaching for the cookies",
            )),
        ),
        (
            "v05_dependent_tiers.cha",
            Valid(valid(2, 2, "the sink is overflowing she is washing dishes")),
        ),
        (
            "v06_pauses.cha",
            Valid(ValidCase {
                pauses: (2, 1, 1),
                ..valid(1, 1, "the boy is on the stool")
            }),
        ),
        (
            "v07_repetition.cha",
            Valid(ValidCase {
                repetitions: 2,
                ..valid(1, 1, "the boy is on the stool")
            }),
        ),
        (
            "v08_retrace.cha",
            Valid(ValidCase {
                retraces: 2,
                ..valid(1, 1, "the boy is stealing cookies")
            }),
        ),
        (
            "v09_error_codes.cha",
            Valid(valid(
                2,
                2,
                "the boy is falling off the stoop and the mother",
            )),
        ),
        (
            "v10_timestamps.cha",
            Valid(valid(2, 2, "the window is open and the curtains")),
        ),
        (
            "v11_crlf.cha",
            Valid(ValidCase {
                pauses: (1, 0, 0),
                ..valid(1, 1, "the boy is falling")
            }),
        ),
        (
            "v12_other_codes.cha",
            Valid(valid(3, 3, "the kitchen is a mess the boy")),
        ),
        ("v13_headers.cha", Valid(valid(1, 1, "mother is washing"))),
        (
            "v14_unicode.cha",
            Valid(valid(1, 1, "the naïve boy is on the stool")),
        ),
        (
            "v15_blank_lines.cha",
            Valid(valid(2, 2, "the jar is open and the cabinet too")),
        ),
        (
            "v16_no_end.cha",
            Valid(valid(1, 1, "the children are in the kitchen")),
        ),
        (
            "v17_participant_continuation.cha",
            Valid(valid(2, 1, "a stool that is tipping")),
        ),
        ("m01_speaker_before_begin.cha", Error(missing_begin, 3)),
        ("m02_no_begin.cha", Error(missing_begin, 3)),
        ("m03_duplicate_begin.cha", Error(duplicate_begin, 4)),
        ("m04_unknown_speaker.cha", Error(unknown_xxx, 6)),
        ("m05_lowercase_speaker.cha", Error(malformed, 5)),
        ("m06_dependent_first.cha", Error(malformed, 5)),
        ("m07_no_colon.cha", Error(malformed, 5)),
        ("m08_empty.cha", Error(missing_begin, 1)),
        ("m09_orphan_continuation.cha", Error(malformed, 1)),
        ("m10_stray_text.cha", Error(malformed, 6)),
        ("m11_undeclared_inv.cha", Error(unknown_inv, 5)),
    ]
}

fn span_matches_kind(kind: AnnotationKind, s: &str) -> bool {
    match kind {
        AnnotationKind::PauseShort => s == "(.)",
        AnnotationKind::PauseMed => s == "(..)",
        AnnotationKind::PauseLong => s == "(...)",
        AnnotationKind::Retrace => s.ends_with("[//]"),
        AnnotationKind::Repetition => s.ends_with("[/]"),
        AnnotationKind::ErrorCode => s.starts_with("[*") && s.ends_with(']'),
        AnnotationKind::Unintelligible => s == "xxx",
        AnnotationKind::Timestamp => {
            let bullet = |c: char| c == '•' || c == '\u{15}';
            s.starts_with(bullet) && s.ends_with(bullet)
        }
        AnnotationKind::OtherCode => !s.is_empty(),
    }
}

/// Checks one fixture; `Err` carries a description of the first mismatch.
pub fn check_fixture(name: &str, expect: &Expect) -> Result<(), String> {
    let raw = std::fs::read_to_string(fixture_dir().join(name)).map_err(|e| e.to_string())?;
    let parsed = parse_document(name, &raw);
    match (expect, parsed) {
        (Expect::Error(pred, line), Err(e)) => {
            if !pred(&e) {
                return Err(format!("unexpected error variant {e:?}"));
            }
            if e.line() != Some(*line) {
                return Err(format!("error at line {:?}, expected {line}", e.line()));
            }
            Ok(())
        }
        (Expect::Error(..), Ok(_)) => Err("parsed, expected an error".into()),
        (Expect::Valid(_), Err(e)) => Err(format!("unexpected error {e}")),
        (Expect::Valid(v), Ok(doc)) => {
            if doc.utterances.len() != v.utterances {
                return Err(format!("{} utterances", doc.utterances.len()));
            }
            // order: tiers appear in file order
            if doc.utterances.windows(2).any(|w| w[0].line >= w[1].line) {
                return Err("utterances out of file order".into());
            }
            for u in &doc.utterances {
                // provenance: every span points at text of its kind
                let mut prev_end = 0;
                for s in &u.annotations {
                    if s.start < prev_end || s.end > u.raw_text.len() || s.start >= s.end {
                        return Err(format!("bad span {s:?} in {:?}", u.raw_text));
                    }
                    let text = u
                        .raw_text
                        .get(s.start..s.end)
                        .ok_or_else(|| format!("span {s:?} splits a character"))?;
                    if !span_matches_kind(s.kind, text) {
                        return Err(format!("span {:?} is not {:?}", text, s.kind));
                    }
                    prev_end = s.end;
                }
                // idempotence: cleaning clean text changes nothing
                let (once, _) = clean_text(&u.raw_text);
                let (twice, counts) = clean_text(&once);
                if once != twice || counts.total() != 0 {
                    return Err(format!("cleaning not idempotent on {:?}", u.raw_text));
                }
                if annotate(&u.raw_text) != u.annotations {
                    return Err("annotations differ from a fresh scan".into());
                }
            }
            let t = extract_participant_text(&doc, "PAR").map_err(|e| e.to_string())?;
            if t.text != v.par_text {
                return Err(format!("PAR text {:?}", t.text));
            }
            if t.utterance_count != v.par_utterances {
                return Err(format!("{} PAR utterances", t.utterance_count));
            }
            let p = &t.pause_counts;
            if (p.short, p.med, p.long) != v.pauses {
                return Err(format!("pauses {p:?}"));
            }
            if t.repetition_count != v.repetitions || t.retrace_count != v.retraces {
                return Err(format!(
                    "repetitions {} retraces {}",
                    t.repetition_count, t.retrace_count
                ));
            }
            Ok(())
        }
    }
}

/// Edge trim done by index scanning, independent of `cue::tokenize`.
fn normalize(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut lo = 0;
    while lo < chars.len() && !chars[lo].is_alphanumeric() {
        lo += 1;
    }
    let mut hi = chars.len();
    while hi > lo && !chars[hi - 1].is_alphanumeric() {
        hi -= 1;
    }
    chars[lo..hi].iter().collect::<String>().to_lowercase()
}

pub struct OracleReport {
    pub matched: Vec<String>,
    pub proportion: f64,
    pub counts: BTreeMap<String, usize>,
}

/// Nested-loop variant-set intersection over raw whitespace tokens.
pub fn brute_force_cues(text: &str, lexicon: &[(&str, Vec<&str>)]) -> OracleReport {
    let words: Vec<String> = text
        .split_whitespace()
        .map(normalize)
        .filter(|w| !w.is_empty())
        .collect();
    let mut matched = Vec::new();
    let mut counts = BTreeMap::new();
    for (lemma, variants) in lexicon {
        let mut n = 0;
        for w in &words {
            let mut hit = false;
            for v in variants {
                if w == v {
                    hit = true;
                }
            }
            if hit {
                n += 1;
            }
        }
        if n > 0 {
            matched.push(lemma.to_string());
        }
        counts.insert(lemma.to_string(), n);
    }
    OracleReport {
        proportion: matched.len() as f64 / lexicon.len() as f64,
        matched,
        counts,
    }
}

/// The fixed scene lexicon, written out by hand.
pub fn reference_lexicon() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("stool", vec!["stool", "stools"]),
        ("sink", vec!["sink", "sinks"]),
        ("dish", vec!["dish", "dishes"]),
        ("wash", vec!["wash", "washes", "washed", "washing"]),
        ("jar", vec!["jar", "jars"]),
        ("cookie", vec!["cookie", "cookies", "cookie's"]),
        ("child", vec!["child", "children", "child's", "children's"]),
        ("mother", vec!["mother", "mothers", "mother's"]),
        ("window", vec!["window", "windows"]),
        ("cabinet", vec!["cabinet", "cabinets"]),
        ("kitchen", vec!["kitchen", "kitchens"]),
        ("water", vec!["water", "waters", "watered", "watering"]),
    ]
}

const NEAR_MISSES: &[&str] = &[
    "dishwasher",
    "sinking",
    "stooled",
    "jarring",
    "motherly",
    "kitchenette",
    "childhood",
    "windowsill",
    "cookiejar",
    "washer",
    "waterfall",
    "cabinetry",
    "mom",
    "kid",
    "plate",
];
const FILLER: &[&str] = &[
    "the", "a", "is", "and", "boy", "girl", "she", "he", "falling", "over", "on", "in", "there",
    "um", "uh", "looking", "reaching", "curtain", "floor", "outside",
];
const WRAPS: &[(&str, &str)] = &[
    ("", ""),
    ("", "."),
    ("", ","),
    ("(", ")"),
    ("\"", "\""),
    ("", "!"),
    ("'", "'"),
    ("", "?"),
];

/// Random transcript mixing variants (with case and punctuation noise),
/// near misses and filler.
pub fn random_transcript(rng: &mut ChaCha8Rng) -> String {
    let lex = reference_lexicon();
    let n = rng.random_range(0..80);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let w: String = match rng.random_range(0..10) {
            0..=2 => {
                let (_, vs) = lex.choose(rng).unwrap();
                vs.choose(rng).unwrap().to_string()
            }
            3 => NEAR_MISSES.choose(rng).unwrap().to_string(),
            _ => FILLER.choose(rng).unwrap().to_string(),
        };
        let w = match rng.random_range(0..4) {
            0 => w.to_uppercase(),
            1 => {
                let mut c = w.chars();
                c.next()
                    .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
                    .unwrap_or_default()
            }
            _ => w,
        };
        let (pre, post) = WRAPS.choose(rng).unwrap();
        words.push(format!("{pre}{w}{post}"));
    }
    let sep = if rng.random_bool(0.1) { "  \t" } else { " " };
    words.join(sep)
}

/// F1 through precision and recall, each 0 on an empty denominator.
pub fn definitional_f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// (accuracy, f1_pos, f1_neg, macro_f1) from first principles.
pub fn definitional_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> (f64, f64, f64, f64) {
    let total = (tp + fp + fn_ + tn) as f64;
    let pos = definitional_f1(tp, fp, fn_);
    let neg = definitional_f1(tn, fn_, fp);
    ((tp + tn) as f64 / total, pos, neg, (pos + neg) / 2.0)
}

/// Every (tp, fp, fn, tn) with 1 <= total <= `max_total`.
pub fn all_matrices(max_total: u64) -> Vec<(u64, u64, u64, u64)> {
    let mut out = Vec::new();
    for tp in 0..=max_total {
        for fp in 0..=max_total - tp {
            for fn_ in 0..=max_total - tp - fp {
                for tn in 0..=max_total - tp - fp - fn_ {
                    if tp + fp + fn_ + tn > 0 {
                        out.push((tp, fp, fn_, tn));
                    }
                }
            }
        }
    }
    out
}

/// The reference confusion matrices (tp, fp, fn, tn) behind the published
/// method rows, in report order.
pub const REFERENCE_ROWS: [(&str, (u64, u64, u64, u64)); 4] = [
    ("Baseline", (16, 4, 8, 20)),
    ("Zero-shot", (0, 1, 24, 23)),
    ("Few-shot", (3, 1, 21, 23)),
    ("CoT", (18, 2, 6, 22)),
];

/// The published (accuracy %, F1 %) for each reference row.
pub const REFERENCE_VALUES: [(f64, f64); 4] = [
    (75.00, 74.83),
    (47.92, 32.39),
    (54.17, 44.54),
    (83.33, 83.22),
];

/// Matrices consistent with the ground-truth-text rows of the second results
/// table, with their published (accuracy %, F1 %).
pub const GROUND_TRUTH_ROWS: [((u64, u64, u64, u64), (f64, f64)); 2] = [
    ((19, 3, 5, 21), (83.33, 83.30)),
    ((20, 2, 4, 22), (87.50, 87.48)),
];
