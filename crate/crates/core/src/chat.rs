//! CHAT (`.cha`) transcript parsing and participant-text extraction.
//!
//! The supported subset covers what picture-description transcripts use:
//! `@` header lines, `*` speaker tiers (with tab continuations), `%`
//! dependent tiers, pause markers `(.)` `(..)` `(...)`, retracing `[//]`,
//! repetition `[/]`, error codes `[* ...]`, unintelligible `xxx` and bullet
//! timestamps. Any other bracketed code is treated as an opaque code and
//! dropped during cleaning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("line {line}: no @Begin marker before transcript content")]
    MissingBegin { line: usize },
    #[error("line {line}: second @Begin marker")]
    DuplicateBegin { line: usize },
    #[error("line {line}: speaker {speaker} is not declared in @Participants")]
    UnknownSpeaker { line: usize, speaker: String },
    #[error("line {line}: malformed tier: {reason}")]
    MalformedTier { line: usize, reason: String },
    #[error("speaker {speaker} is not declared in @Participants")]
    SpeakerNotDeclared { speaker: String },
}

impl ChatError {
    /// 1-based line of the offending input, when the error came from parsing.
    pub fn line(&self) -> Option<usize> {
        match self {
            ChatError::MissingBegin { line }
            | ChatError::DuplicateBegin { line }
            | ChatError::UnknownSpeaker { line, .. }
            | ChatError::MalformedTier { line, .. } => Some(*line),
            ChatError::SpeakerNotDeclared { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    PauseShort,
    PauseMed,
    PauseLong,
    Retrace,
    Repetition,
    ErrorCode,
    Unintelligible,
    Timestamp,
    OtherCode,
}

/// A CHAT code located at `start..end` (byte offsets) of an utterance's raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub kind: AnnotationKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_code: String,
    pub raw_text: String,
    pub annotations: Vec<AnnotationSpan>,
    pub dependent_tiers: Vec<(String, String)>,
    /// Line on which the tier starts.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDocument {
    pub source_id: String,
    pub header_fields: Vec<(String, String)>,
    pub utterances: Vec<Utterance>,
}

impl TranscriptDocument {
    /// Speaker codes declared by the `@Participants` header(s).
    pub fn participants(&self) -> Vec<String> {
        self.header_fields
            .iter()
            .filter(|(k, _)| k == "Participants")
            .flat_map(|(_, v)| participant_codes(v))
            .collect()
    }

    pub fn header(&self, keyword: &str) -> Option<&str> {
        self.header_fields
            .iter()
            .find(|(k, _)| k == keyword)
            .map(|(_, v)| v.as_str())
    }
}

/// Per-kind removal counts reported by [`strip_annotations`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCounts {
    pub pause_short: usize,
    pub pause_med: usize,
    pub pause_long: usize,
    pub retrace: usize,
    pub repetition: usize,
    pub error_code: usize,
    pub unintelligible: usize,
    pub timestamp: usize,
    pub other_code: usize,
}

impl AnnotationCounts {
    fn bump(&mut self, kind: AnnotationKind) {
        let slot = match kind {
            AnnotationKind::PauseShort => &mut self.pause_short,
            AnnotationKind::PauseMed => &mut self.pause_med,
            AnnotationKind::PauseLong => &mut self.pause_long,
            AnnotationKind::Retrace => &mut self.retrace,
            AnnotationKind::Repetition => &mut self.repetition,
            AnnotationKind::ErrorCode => &mut self.error_code,
            AnnotationKind::Unintelligible => &mut self.unintelligible,
            AnnotationKind::Timestamp => &mut self.timestamp,
            AnnotationKind::OtherCode => &mut self.other_code,
        };
        *slot += 1;
    }

    pub fn total(&self) -> usize {
        self.pause_short
            + self.pause_med
            + self.pause_long
            + self.retrace
            + self.repetition
            + self.error_code
            + self.unintelligible
            + self.timestamp
            + self.other_code
    }

    fn add(&mut self, other: &AnnotationCounts) {
        self.pause_short += other.pause_short;
        self.pause_med += other.pause_med;
        self.pause_long += other.pause_long;
        self.retrace += other.retrace;
        self.repetition += other.repetition;
        self.error_code += other.error_code;
        self.unintelligible += other.unintelligible;
        self.timestamp += other.timestamp;
        self.other_code += other.other_code;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseCounts {
    pub short: usize,
    pub med: usize,
    pub long: usize,
}

impl PauseCounts {
    pub fn total(&self) -> usize {
        self.short + self.med + self.long
    }
}

/// Cleaned, speaker-filtered text of one transcript. One JSONL record per participant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTranscript {
    pub participant_id: String,
    pub text: String,
    pub utterance_count: usize,
    pub pause_counts: PauseCounts,
    pub repetition_count: usize,
    pub retrace_count: usize,
}

fn participant_codes(value: &str) -> impl Iterator<Item = String> + '_ {
    value
        .split(',')
        .filter_map(|entry| entry.split_whitespace().next())
        .map(str::to_string)
}

fn is_speaker_code(code: &str) -> bool {
    code.len() == 3
        && code
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

enum Last {
    Nothing,
    Header,
    Utterance,
    Dependent,
}

/// Parses a `.cha` document. `source_id` names the file for downstream records.
pub fn parse_document(source_id: &str, raw: &str) -> Result<TranscriptDocument, ChatError> {
    let mut doc = TranscriptDocument {
        source_id: source_id.to_string(),
        header_fields: Vec::new(),
        utterances: Vec::new(),
    };
    let mut participants: Vec<String> = Vec::new();
    let mut began = false;
    let mut last = Last::Nothing;
    let mut line_count = 0;

    for (idx, line) in raw.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        line_count = lineno;
        if let Some(cont) = line.strip_prefix('\t') {
            let cont = cont.trim();
            let target = match last {
                Last::Nothing => {
                    return Err(ChatError::MalformedTier {
                        line: lineno,
                        reason: "continuation line with nothing to continue".into(),
                    })
                }
                Last::Header => &mut doc.header_fields.last_mut().expect("header exists").1,
                Last::Utterance => {
                    &mut doc
                        .utterances
                        .last_mut()
                        .expect("utterance exists")
                        .raw_text
                }
                Last::Dependent => {
                    &mut doc
                        .utterances
                        .last_mut()
                        .and_then(|u| u.dependent_tiers.last_mut())
                        .expect("dependent tier exists")
                        .1
                }
            };
            if !cont.is_empty() {
                if !target.is_empty() {
                    target.push(' ');
                }
                target.push_str(cont);
            }
            if matches!(last, Last::Header) {
                if let Some((k, v)) = doc.header_fields.last() {
                    if k == "Participants" {
                        participants = participant_codes(v).collect();
                    }
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('@') {
            let (keyword, value) = match rest.split_once(':') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (rest.trim(), ""),
            };
            if keyword == "Begin" {
                if began {
                    return Err(ChatError::DuplicateBegin { line: lineno });
                }
                began = true;
            }
            if keyword == "Participants" {
                participants.extend(participant_codes(value));
            }
            doc.header_fields
                .push((keyword.to_string(), value.to_string()));
            last = Last::Header;
        } else if let Some(rest) = line.strip_prefix('*') {
            if !began {
                return Err(ChatError::MissingBegin { line: lineno });
            }
            let (code, text) = rest
                .split_once(':')
                .ok_or_else(|| ChatError::MalformedTier {
                    line: lineno,
                    reason: "speaker tier without ':'".into(),
                })?;
            if !is_speaker_code(code) {
                return Err(ChatError::MalformedTier {
                    line: lineno,
                    reason: format!("invalid speaker code {code:?}"),
                });
            }
            if !participants.iter().any(|p| p == code) {
                return Err(ChatError::UnknownSpeaker {
                    line: lineno,
                    speaker: code.to_string(),
                });
            }
            doc.utterances.push(Utterance {
                speaker_code: code.to_string(),
                raw_text: text.trim().to_string(),
                annotations: Vec::new(),
                dependent_tiers: Vec::new(),
                line: lineno,
            });
            last = Last::Utterance;
        } else if let Some(rest) = line.strip_prefix('%') {
            let (name, text) = rest
                .split_once(':')
                .ok_or_else(|| ChatError::MalformedTier {
                    line: lineno,
                    reason: "dependent tier without ':'".into(),
                })?;
            let owner = doc
                .utterances
                .last_mut()
                .ok_or_else(|| ChatError::MalformedTier {
                    line: lineno,
                    reason: "dependent tier before any speaker tier".into(),
                })?;
            owner
                .dependent_tiers
                .push((name.trim().to_string(), text.trim().to_string()));
            last = Last::Dependent;
        } else {
            return Err(ChatError::MalformedTier {
                line: lineno,
                reason: "line does not start with @, *, % or tab".into(),
            });
        }
    }

    if !began {
        return Err(ChatError::MissingBegin {
            line: line_count.max(1),
        });
    }
    for utt in &mut doc.utterances {
        utt.annotations = annotate(&utt.raw_text);
    }
    Ok(doc)
}

fn pause_kind(s: &str) -> Option<AnnotationKind> {
    match s {
        "(.)" => Some(AnnotationKind::PauseShort),
        "(..)" => Some(AnnotationKind::PauseMed),
        "(...)" => Some(AnnotationKind::PauseLong),
        _ => None,
    }
}

fn is_bullet(c: char) -> bool {
    c == '•' || c == '\u{15}'
}

/// Locates the supported CHAT codes in a tier's text. Spans are sorted and disjoint.
pub fn annotate(text: &str) -> Vec<AnnotationSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    let mut token_start = true;
    while i < text.len() {
        let c = text[i..].chars().next().expect("char boundary");
        let rest = &text[i..];
        if c.is_whitespace() {
            token_start = true;
            i += c.len_utf8();
            continue;
        }
        if c == '[' {
            if let Some(close) = rest.find(']') {
                let inner = rest[1..close].trim();
                let kind = match inner {
                    "/" => AnnotationKind::Repetition,
                    "//" => AnnotationKind::Retrace,
                    s if s.starts_with('*') => AnnotationKind::ErrorCode,
                    _ => AnnotationKind::OtherCode,
                };
                spans.push(AnnotationSpan {
                    kind,
                    start: i,
                    end: i + close + 1,
                });
                i += close + 1;
                token_start = false;
                continue;
            }
        }
        if c == '(' {
            if let Some(close) = rest.find(')') {
                if let Some(kind) = pause_kind(&rest[..=close]) {
                    spans.push(AnnotationSpan {
                        kind,
                        start: i,
                        end: i + close + 1,
                    });
                    i += close + 1;
                    token_start = false;
                    continue;
                }
            }
        }
        if is_bullet(c) {
            let after = &rest[c.len_utf8()..];
            if let Some(close) = after.find(is_bullet) {
                let closing = after[close..].chars().next().expect("bullet").len_utf8();
                let end = i + c.len_utf8() + close + closing;
                spans.push(AnnotationSpan {
                    kind: AnnotationKind::Timestamp,
                    start: i,
                    end,
                });
                i = end;
                token_start = false;
                continue;
            }
        }
        if token_start {
            let len = rest
                .find(|ch: char| ch.is_whitespace() || ch == '[' || ch == '(' || is_bullet(ch))
                .unwrap_or(rest.len());
            let token = &rest[..len];
            let bare = token.trim_end_matches(['.', ',', '?', '!']);
            let code = if bare == "xxx" {
                Some((AnnotationKind::Unintelligible, 3))
            } else if bare == "yyy" || bare == "www" {
                Some((AnnotationKind::OtherCode, 3))
            } else if token.starts_with('&') || token.starts_with('+') {
                Some((AnnotationKind::OtherCode, len))
            } else {
                None
            };
            if let Some((kind, code_len)) = code {
                spans.push(AnnotationSpan {
                    kind,
                    start: i,
                    end: i + code_len,
                });
                i += code_len;
                token_start = false;
                continue;
            }
        }
        token_start = false;
        i += c.len_utf8();
    }
    spans
}

/// Normalizes one surviving word: intra-word `(..)` omissions and `@` form
/// markers are dropped, compound joiners split, edge punctuation trimmed.
fn clean_word(word: &str) -> Vec<String> {
    let mut out = String::with_capacity(word.len());
    let mut depth = 0usize;
    for c in word.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            '@' if depth == 0 => break,
            '[' | ']' | '<' | '>' | '%' | '*' => {}
            c if is_bullet(c) => {}
            '_' | '+' if depth == 0 => out.push(' '),
            c if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation() && c != '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

enum Item {
    Word {
        pieces: Vec<String>,
        opens: usize,
        closes: usize,
    },
    Code(AnnotationKind),
}

fn items(raw: &str, spans: &[AnnotationSpan]) -> Vec<Item> {
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| s.start);
    let mut items = Vec::new();
    let push_text = |seg: &str, items: &mut Vec<Item>| {
        for w in seg.split_whitespace() {
            let opens = w.chars().take_while(|&c| c == '<').count();
            let closes = w.chars().rev().take_while(|&c| c == '>').count();
            items.push(Item::Word {
                pieces: clean_word(w),
                opens,
                closes,
            });
        }
    };
    let mut pos = 0;
    for span in &sorted {
        if span.start > pos {
            push_text(&raw[pos..span.start], &mut items);
        }
        items.push(Item::Code(span.kind));
        pos = pos.max(span.end);
    }
    if pos < raw.len() {
        push_text(&raw[pos..], &mut items);
    }
    items
}

/// Removes annotation spans from `raw` and resolves retracing/repetition.
///
/// `[//]` drops its scoped material (the preceding `<...>` group, else the
/// preceding word) so only the repair survives. `[/]` collapses the
/// duplicate: the scope is the preceding `<...>` group when present,
/// otherwise the longest run of preceding words that is repeated right
/// after the marker (at least one word).
pub fn strip_annotations(raw: &str, spans: &[AnnotationSpan]) -> (String, AnnotationCounts) {
    let items = items(raw, spans);
    let mut counts = AnnotationCounts::default();
    let mut out: Vec<String> = Vec::new();
    let mut group_starts: Vec<usize> = Vec::new();
    let mut last_closed: Option<usize> = None;

    for (idx, item) in items.iter().enumerate() {
        match item {
            Item::Word {
                pieces,
                opens,
                closes,
            } => {
                for _ in 0..*opens {
                    group_starts.push(out.len());
                }
                if !pieces.is_empty() {
                    out.extend(pieces.iter().cloned());
                    last_closed = None;
                }
                for _ in 0..*closes {
                    if let Some(start) = group_starts.pop() {
                        last_closed = Some(start);
                    }
                }
            }
            Item::Code(kind @ (AnnotationKind::Repetition | AnnotationKind::Retrace)) => {
                counts.bump(*kind);
                let start = match last_closed {
                    Some(s) => s,
                    None if *kind == AnnotationKind::Repetition => {
                        out.len() - repeated_run(&out, &items[idx + 1..])
                    }
                    None => out.len().saturating_sub(1),
                };
                out.truncate(start.min(out.len()));
                for g in &mut group_starts {
                    *g = (*g).min(out.len());
                }
                last_closed = None;
            }
            Item::Code(kind) => counts.bump(*kind),
        }
    }
    (out.join(" "), counts)
}

/// Length of the longest suffix of `out` that reappears at the head of the
/// following words; 1 when nothing matches (or 0 for empty output).
fn repeated_run(out: &[String], following: &[Item]) -> usize {
    if out.is_empty() {
        return 0;
    }
    let ahead: Vec<&String> = following
        .iter()
        .filter_map(|it| match it {
            Item::Word { pieces, .. } => Some(pieces.iter()),
            Item::Code(_) => None,
        })
        .flatten()
        .take(out.len())
        .collect();
    (1..=ahead.len().min(out.len()))
        .rev()
        .find(|&k| {
            out[out.len() - k..]
                .iter()
                .zip(&ahead[..k])
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
        })
        .unwrap_or(1)
}

/// Convenience: scan and strip in one step.
pub fn clean_text(raw: &str) -> (String, AnnotationCounts) {
    strip_annotations(raw, &annotate(raw))
}

/// Concatenates the cleaned tiers of `speaker`, in file order.
pub fn extract_participant_text(
    doc: &TranscriptDocument,
    speaker: &str,
) -> Result<CleanTranscript, ChatError> {
    if !doc.participants().iter().any(|p| p == speaker) {
        return Err(ChatError::SpeakerNotDeclared {
            speaker: speaker.to_string(),
        });
    }
    let mut parts = Vec::new();
    let mut counts = AnnotationCounts::default();
    let mut utterance_count = 0;
    for utt in doc.utterances.iter().filter(|u| u.speaker_code == speaker) {
        utterance_count += 1;
        let (clean, c) = strip_annotations(&utt.raw_text, &utt.annotations);
        counts.add(&c);
        if !clean.is_empty() {
            parts.push(clean);
        }
    }
    Ok(CleanTranscript {
        participant_id: doc.source_id.clone(),
        text: parts.join(" "),
        utterance_count,
        pause_counts: PauseCounts {
            short: counts.pause_short,
            med: counts.pause_med,
            long: counts.pause_long,
        },
        repetition_count: counts.repetition,
        retrace_count: counts.retrace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "@UTF8\n@Begin\n@Participants:\tPAR Participant, INV Investigator\n*PAR:\tthe boy (.) is falling .\n@End\n";

    #[test]
    fn minimal_fixture() {
        let doc = parse_document("minimal", MINIMAL).unwrap();
        assert_eq!(doc.utterances.len(), 1);
        let utt = &doc.utterances[0];
        assert_eq!(utt.speaker_code, "PAR");
        assert_eq!(utt.annotations.len(), 1);
        assert_eq!(utt.annotations[0].kind, AnnotationKind::PauseShort);
        assert_eq!(
            &utt.raw_text[utt.annotations[0].start..utt.annotations[0].end],
            "(.)"
        );
        assert_eq!(doc.participants(), vec!["PAR", "INV"]);
    }

    #[test]
    fn empty_input_missing_begin() {
        assert_eq!(
            parse_document("e", ""),
            Err(ChatError::MissingBegin { line: 1 })
        );
    }

    #[test]
    fn undeclared_speaker() {
        let raw = "@Begin\n@Participants:\tPAR Participant\n*PAR:\thello .\n*XXX:\twho .\n";
        assert_eq!(
            parse_document("u", raw),
            Err(ChatError::UnknownSpeaker {
                line: 4,
                speaker: "XXX".into()
            })
        );
    }

    #[test]
    fn malformed_line() {
        let raw = "@Begin\n@Participants:\tPAR Participant\nthe boy\n";
        assert!(matches!(
            parse_document("m", raw),
            Err(ChatError::MalformedTier { line: 3, .. })
        ));
    }

    #[test]
    fn crlf_and_continuation() {
        let raw = "@Begin\r\n@Participants:\tPAR Participant\r\n*PAR:\tthe water is\r\n\toverflowing .\r\n%mor:\tdet|the\r\n\tn|water\r\n@End\r\n";
        let doc = parse_document("c", raw).unwrap();
        assert_eq!(doc.utterances[0].raw_text, "the water is overflowing .");
        assert_eq!(
            doc.utterances[0].dependent_tiers,
            vec![("mor".to_string(), "det|the n|water".to_string())]
        );
    }

    #[test]
    fn repetition_example() {
        let (clean, counts) = clean_text("the boy [/] the boy is on the stool (.)");
        assert_eq!(clean, "the boy is on the stool");
        assert_eq!(counts.repetition, 1);
        assert_eq!(counts.pause_short, 1);
        assert_eq!(counts.total(), 2);
    }

    #[test]
    fn identity_without_annotations() {
        let (clean, counts) = clean_text("the girl is laughing");
        assert_eq!(clean, "the girl is laughing");
        assert_eq!(counts, AnnotationCounts::default());
    }

    #[test]
    fn unintelligible_dropped() {
        let (clean, counts) = clean_text("xxx xxx water");
        assert_eq!(clean, "water");
        assert_eq!(counts.unintelligible, 2);
    }

    #[test]
    fn retrace_keeps_repair() {
        let (clean, counts) = clean_text("<the cookie jar> [//] the cookies fell .");
        assert_eq!(clean, "the cookies fell");
        assert_eq!(counts.retrace, 1);
        let (clean, _) = clean_text("he is on the chair [//] stool .");
        assert_eq!(clean, "he is on the stool");
    }

    #[test]
    fn group_repetition_and_codes() {
        let (clean, c) = clean_text(
            "&uh <the mother> [/] the mother is dryin(g) [* p:w] dishes •1200_3400• +...",
        );
        assert_eq!(clean, "the mother is dryin dishes");
        assert_eq!(c.repetition, 1);
        assert_eq!(c.error_code, 1);
        assert_eq!(c.timestamp, 1);
        assert_eq!(c.other_code, 2);
    }

    #[test]
    fn pauses_by_length() {
        let (clean, c) = clean_text("well (..) the (...) sink (.) is full .");
        assert_eq!(clean, "well the sink is full");
        assert_eq!((c.pause_short, c.pause_med, c.pause_long), (1, 1, 1));
    }

    #[test]
    fn spans_disjoint_and_in_bounds() {
        let raw = "xxx <a b> [/] a b [//] c (.) [: cookie] &=laughs •1_2• d.";
        let spans = annotate(raw);
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        assert!(spans.iter().all(|s| s.start < s.end && s.end <= raw.len()));
    }

    #[test]
    fn extracts_only_requested_speaker() {
        let raw = "@Begin\n@Participants:\tPAR Participant, INV Investigator\n*INV:\twhat do you see ?\n*PAR:\ta kitchen .\n*INV:\tmhm .\n*PAR:\tthe sink (..) overflows .\n*PAR:\txxx .\n";
        let doc = parse_document("p1", raw).unwrap();
        let t = extract_participant_text(&doc, "PAR").unwrap();
        assert_eq!(t.text, "a kitchen the sink overflows");
        assert_eq!(t.utterance_count, 3);
        assert_eq!(t.pause_counts.med, 1);
        assert_eq!(t.participant_id, "p1");
        let inv = extract_participant_text(&doc, "INV").unwrap();
        assert_eq!(inv.text, "what do you see mhm");
        assert!(matches!(
            extract_participant_text(&doc, "CHI"),
            Err(ChatError::SpeakerNotDeclared { .. })
        ));
    }

    #[test]
    fn zero_participant_utterances() {
        let raw =
            "@Begin\n@Participants:\tPAR Participant, INV Investigator\n*INV:\thello .\n@End\n";
        let doc = parse_document("z", raw).unwrap();
        let t = extract_participant_text(&doc, "PAR").unwrap();
        assert_eq!(t.text, "");
        assert_eq!(t.utterance_count, 0);
    }

    #[test]
    fn clean_text_is_idempotent_on_examples() {
        for raw in [
            "the boy [/] the boy is on the stool (.)",
            "<the cookie jar> [//] the cookies fell .",
            "&uh she's washin(g) the dish_towel ?",
        ] {
            let (once, _) = clean_text(raw);
            let (twice, counts) = clean_text(&once);
            assert_eq!(once, twice);
            assert_eq!(counts.total(), 0);
        }
    }
}
