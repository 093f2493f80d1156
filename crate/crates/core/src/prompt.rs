//! Deterministic prompt bundles (zero-shot, few-shot, chain-of-thought).
//!
//! Wording lives in plain-text templates with `{{transcript}}`,
//! `{{cue_line}}` and `{{matched}}` slots; the built-in `v1` set is compiled
//! in and a directory with the same file names can replace it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::CleanTranscript;
use crate::corpus::Label;
use crate::cue::CueReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    Cot,
}

impl PromptMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::FewShot => "few_shot",
            PromptMode::Cot => "cot",
        }
    }

    /// Row name used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "Zero-shot",
            PromptMode::FewShot => "Few-shot",
            PromptMode::Cot => "CoT",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(PromptMode::ZeroShot),
            "few_shot" => Ok(PromptMode::FewShot),
            "cot" => Ok(PromptMode::Cot),
            other => Err(format!("unknown prompt mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: String) -> Self {
        Message { role, content }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub messages: Vec<Message>,
    pub exemplar_ids: Vec<String>,
    pub fingerprint: String,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("chain-of-thought prompts need a cue report")]
    MissingCueReport,
    #[error("few-shot prompts need at least one exemplar")]
    EmptyExemplars,
    #[error("template {name}: {reason}")]
    Template { name: String, reason: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

const BUILTIN_SYSTEM: &str = include_str!("../templates/v1/system.txt");
const BUILTIN_ZERO_SHOT: &str = include_str!("../templates/v1/zero_shot.txt");
const BUILTIN_FEW_SHOT: &str = include_str!("../templates/v1/few_shot.txt");
const BUILTIN_COT: &str = include_str!("../templates/v1/cot.txt");

const SLOTS: [&str; 3] = ["transcript", "cue_line", "matched"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub system: String,
    pub zero_shot: String,
    pub few_shot: String,
    pub cot: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            version: "v1".into(),
            system: BUILTIN_SYSTEM.into(),
            zero_shot: BUILTIN_ZERO_SHOT.into(),
            few_shot: BUILTIN_FEW_SHOT.into(),
            cot: BUILTIN_COT.into(),
        }
    }

    /// Loads `system.txt`, `zero_shot.txt`, `few_shot.txt` and `cot.txt`
    /// from `dir`; the directory name becomes the version tag.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let set = TemplateSet {
            version: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            system: read("system.txt")?,
            zero_shot: read("zero_shot.txt")?,
            few_shot: read("few_shot.txt")?,
            cot: read("cot.txt")?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, text) in self.named() {
            let slots = placeholders(text).map_err(|reason| PromptError::Template {
                name: name.into(),
                reason,
            })?;
            let fail = |reason: String| PromptError::Template {
                name: name.into(),
                reason,
            };
            if let Some(bad) = slots.iter().find(|s| !SLOTS.contains(&s.as_str())) {
                return Err(fail(format!("unknown placeholder {{{{{bad}}}}}")));
            }
            let transcripts = slots.iter().filter(|s| *s == "transcript").count();
            match name {
                "system" if !slots.is_empty() => {
                    return Err(fail("system template takes no placeholders".into()))
                }
                "system" => {}
                _ if transcripts != 1 => {
                    return Err(fail(format!(
                        "expected exactly one {{{{transcript}}}}, found {transcripts}"
                    )))
                }
                "cot" if !slots.iter().any(|s| s == "cue_line") => {
                    return Err(fail("cot template needs {{cue_line}}".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &str); 4] {
        [
            ("system", &self.system),
            ("zero_shot", &self.zero_shot),
            ("few_shot", &self.few_shot),
            ("cot", &self.cot),
        ]
    }

    /// Digest of the template texts, recorded in run manifests.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, text) in self.named() {
            feed(&mut h, name.as_bytes());
            feed(&mut h, text.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn placeholders(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| "unterminated placeholder".to_string())?;
        out.push(after[..close].trim().to_string());
        rest = &after[close + 2..];
    }
    Ok(out)
}

/// Single-pass substitution; substituted values are never rescanned.
fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match slots.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out.trim_end().to_string()
}

fn feed(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

/// Stable hex SHA-256 over the role/content sequence (length-prefixed).
pub fn fingerprint(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        feed(&mut h, m.role.as_str().as_bytes());
        feed(&mut h, m.content.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn matched_list(report: &CueReport) -> String {
    if report.matched.is_empty() {
        "none".into()
    } else {
        report.matched.join(", ")
    }
}

/// A labelled training transcript shown as a worked example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub transcript: CleanTranscript,
    pub label: Label,
}

pub fn build_prompt(
    mode: PromptMode,
    transcript: &CleanTranscript,
    report: Option<&CueReport>,
    exemplars: &[Exemplar],
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    let mut messages = vec![Message::new(Role::System, render(&templates.system, &[]))];
    let mut exemplar_ids = Vec::new();
    match mode {
        PromptMode::ZeroShot => messages.push(Message::new(
            Role::User,
            render(&templates.zero_shot, &[("transcript", &transcript.text)]),
        )),
        PromptMode::FewShot => {
            if exemplars.is_empty() {
                return Err(PromptError::EmptyExemplars);
            }
            for ex in exemplars {
                messages.push(Message::new(
                    Role::User,
                    render(&templates.few_shot, &[("transcript", &ex.transcript.text)]),
                ));
                messages.push(Message::new(
                    Role::Assistant,
                    format!("Diagnosis: {}", ex.label.verdict()),
                ));
                exemplar_ids.push(ex.transcript.participant_id.clone());
            }
            messages.push(Message::new(
                Role::User,
                render(&templates.few_shot, &[("transcript", &transcript.text)]),
            ));
        }
        PromptMode::Cot => {
            let report = report.ok_or(PromptError::MissingCueReport)?;
            let cue_line = report.coverage_line();
            let matched = matched_list(report);
            messages.push(Message::new(
                Role::User,
                render(
                    &templates.cot,
                    &[
                        ("transcript", &transcript.text),
                        ("cue_line", &cue_line),
                        ("matched", &matched),
                    ],
                ),
            ));
        }
    }
    let fingerprint = fingerprint(&messages);
    Ok(PromptBundle {
        mode,
        messages,
        exemplar_ids,
        fingerprint,
    })
}

/// Seeded pick of one exemplar per class from a training pool (AD first).
pub fn select_exemplars(pool: &[Exemplar], seed: u64) -> Vec<Exemplar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [Label::Ad, Label::NonAd]
        .iter()
        .filter_map(|label| {
            let class: Vec<&Exemplar> = pool.iter().filter(|e| e.label == *label).collect();
            class.choose(&mut rng).map(|e| (*e).clone())
        })
        .collect()
}
