//! Cue coverage over the twelve-item cookie-theft scene lexicon, plus the
//! small feature vector consumed by the native baselines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::CleanTranscript;

/// Number of lemmas a lexicon must hold; coverage is reported as `k/12`.
pub const LEXICON_SIZE: usize = 12;

const BUILTIN: [(&str, &[&str]); LEXICON_SIZE] = [
    ("stool", &["stool", "stools"]),
    ("sink", &["sink", "sinks"]),
    ("dish", &["dish", "dishes"]),
    ("wash", &["wash", "washes", "washed", "washing"]),
    ("jar", &["jar", "jars"]),
    ("cookie", &["cookie", "cookies", "cookie's"]),
    ("child", &["child", "children", "child's", "children's"]),
    ("mother", &["mother", "mothers", "mother's"]),
    ("window", &["window", "windows"]),
    ("cabinet", &["cabinet", "cabinets"]),
    ("kitchen", &["kitchen", "kitchens"]),
    ("water", &["water", "waters", "watered", "watering"]),
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon must contain exactly {LEXICON_SIZE} lemmas, found {0}")]
    WrongSize(usize),
    #[error("variant {variant:?} is listed under both {first:?} and {second:?}")]
    SharedVariant {
        variant: String,
        first: String,
        second: String,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub lemma: String,
    pub variants: Vec<String>,
}

/// Ordered lemma list with exact-match surface variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueLexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<String, usize>,
}

impl Default for CueLexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

impl CueLexicon {
    pub fn builtin() -> Self {
        let entries = BUILTIN
            .iter()
            .map(|(lemma, variants)| LexiconEntry {
                lemma: lemma.to_string(),
                variants: variants.iter().map(|v| v.to_string()).collect(),
            })
            .collect();
        Self::new(entries).expect("builtin lexicon is valid")
    }

    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, LexiconError> {
        if entries.len() != LEXICON_SIZE {
            return Err(LexiconError::WrongSize(entries.len()));
        }
        let mut entries = entries;
        for entry in entries.iter_mut() {
            entry.lemma = entry.lemma.to_lowercase();
            for v in entry.variants.iter_mut() {
                *v = v.to_lowercase();
            }
            if !entry.variants.contains(&entry.lemma) {
                entry.variants.insert(0, entry.lemma.clone());
            }
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            for v in &entry.variants {
                if let Some(&j) = index.get(v) {
                    if j != i {
                        return Err(LexiconError::SharedVariant {
                            variant: v.clone(),
                            first: entries[j].lemma.clone(),
                            second: entry.lemma.clone(),
                        });
                    }
                }
                index.insert(v.clone(), i);
            }
        }
        Ok(Self { entries, index })
    }

    /// One lemma per line, comma-separated variants; the first item is the
    /// lemma. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let items: Vec<String> = line
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if items.iter().any(|s| s.contains(char::is_whitespace)) {
                return Err(LexiconError::Malformed {
                    line: i + 1,
                    reason: "variants must be single tokens".into(),
                });
            }
            let Some(lemma) = items.first().cloned() else {
                continue;
            };
            entries.push(LexiconEntry {
                lemma,
                variants: items,
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.lemma.as_str())
    }

    /// Index of the lemma that owns `token`, if any.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn all_variants(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .flat_map(|e| e.variants.iter().map(String::as_str))
    }

    /// Renders the lexicon in the plain-text file format.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| e.variants.join(", ") + "\n")
            .collect()
    }
}

/// Lowercase whitespace tokenization with edge punctuation stripped.
/// Internal apostrophes survive (`boy's`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueReport {
    /// Matched lemmas in lexicon order.
    pub matched: Vec<String>,
    pub covered: usize,
    pub lexicon_size: usize,
    pub proportion: f64,
    pub per_lemma_counts: BTreeMap<String, usize>,
    pub total_tokens: usize,
}

impl CueReport {
    /// The `k/12` line used in prompts.
    pub fn coverage_line(&self) -> String {
        format!("Cue coverage: {}/{}", self.covered, self.lexicon_size)
    }
}

/// Set-based coverage: a lemma counts once no matter how often it is said.
pub fn cue_coverage(tokens: &[String], lexicon: &CueLexicon) -> CueReport {
    let mut hits = vec![0usize; lexicon.entries.len()];
    for t in tokens {
        if let Some(i) = lexicon.lookup(t) {
            hits[i] += 1;
        }
    }
    let matched: Vec<String> = lexicon
        .entries
        .iter()
        .zip(&hits)
        .filter(|(_, &n)| n > 0)
        .map(|(e, _)| e.lemma.clone())
        .collect();
    let covered = matched.len();
    CueReport {
        proportion: covered as f64 / LEXICON_SIZE as f64,
        covered,
        lexicon_size: LEXICON_SIZE,
        matched,
        per_lemma_counts: lexicon
            .entries
            .iter()
            .zip(hits)
            .map(|(e, n)| (e.lemma.clone(), n))
            .collect(),
        total_tokens: tokens.len(),
    }
}

pub const FEATURE_NAMES: [&str; 6] = [
    "cue_proportion",
    "token_count",
    "type_token_ratio",
    "pause_total",
    "repetition_count",
    "retrace_count",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub cue_proportion: f64,
    pub token_count: usize,
    pub type_token_ratio: f64,
    pub pause_total: usize,
    pub repetition_count: usize,
    pub retrace_count: usize,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.cue_proportion,
            self.token_count as f64,
            self.type_token_ratio,
            self.pause_total as f64,
            self.repetition_count as f64,
            self.retrace_count as f64,
        ]
    }
}

pub fn featurize(t: &CleanTranscript, lexicon: &CueLexicon) -> FeatureVector {
    let tokens = tokenize(&t.text);
    let report = cue_coverage(&tokens, lexicon);
    featurize_with(t, &tokens, &report)
}

fn featurize_with(t: &CleanTranscript, tokens: &[String], report: &CueReport) -> FeatureVector {
    let distinct: HashSet<&String> = tokens.iter().collect();
    FeatureVector {
        cue_proportion: report.proportion,
        token_count: tokens.len(),
        type_token_ratio: if tokens.is_empty() {
            0.0
        } else {
            distinct.len() as f64 / tokens.len() as f64
        },
        pause_total: t.pause_counts.total(),
        repetition_count: t.repetition_count,
        retrace_count: t.retrace_count,
    }
}

/// One `analyze` JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub participant_id: String,
    pub cue: CueReport,
    pub features: FeatureVector,
}

pub fn analyze(t: &CleanTranscript, lexicon: &CueLexicon) -> Analysis {
    let tokens = tokenize(&t.text);
    let cue = cue_coverage(&tokens, lexicon);
    let features = featurize_with(t, &tokens, &cue);
    Analysis {
        participant_id: t.participant_id.clone(),
        cue,
        features,
    }
}
