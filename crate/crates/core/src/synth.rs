//! Seeded synthetic picture-description corpora with known ground truth.
//!
//! Each participant gets a `.cha` file whose PAR narration is filler words
//! plus an independently drawn subset of the cue lemmas, with pauses and
//! repetitions injected at a class-specific rate. A truth log records exactly
//! what was injected so parsing and cue analysis can be checked end to end.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Gender, Label, ParticipantRecord, Split};
use crate::cue::CueLexicon;

/// Narration filler. Must not contain any lexicon variant.
pub const FILLER: &[&str] = &[
    "the",
    "a",
    "boy",
    "girl",
    "is",
    "are",
    "on",
    "and",
    "there",
    "he",
    "she",
    "her",
    "his",
    "up",
    "over",
    "top",
    "of",
    "to",
    "going",
    "fall",
    "falling",
    "reaching",
    "standing",
    "out",
    "in",
    "picture",
    "floor",
    "plate",
    "curtains",
    "outside",
    "grass",
    "tree",
    "trying",
    "get",
    "some",
    "overflowing",
    "spilling",
    "drying",
    "looking",
    "it's",
    "they",
    "something",
    "that",
    "with",
    "down",
    "here",
    "little",
    "lady",
    "woman",
    "cup",
    "towel",
    "counter",
    "shelf",
    "open",
    "door",
    "tipping",
    "handing",
    "laughing",
    "see",
    "what",
    "happening",
    "just",
    "well",
    "all",
    "running",
    "onto",
    "while",
    "not",
    "paying",
    "attention",
];

const INV_OPENING: &str = "just tell me everything that you see happening in that picture .";
const INV_PROMPTS: &[&str] = &[
    "and what else is happening in the kitchen ?",
    "anything else ?",
    "what about the mother ?",
    "mhm .",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub p_cue_ad: f64,
    pub p_cue_non_ad: f64,
    /// Expected pause + repetition markers per 10 tokens.
    pub disfluency_rate_ad: f64,
    pub disfluency_rate_non_ad: f64,
    pub mean_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 50,
            p_cue_ad: 0.35,
            p_cue_non_ad: 0.80,
            disfluency_rate_ad: 1.5,
            disfluency_rate_non_ad: 0.5,
            mean_tokens: 60,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.n_per_class < 1 {
            return bad("n_per_class must be at least 1");
        }
        for p in [self.p_cue_ad, self.p_cue_non_ad] {
            if !(0.0..=1.0).contains(&p) {
                return bad("cue probabilities must lie in [0, 1]");
            }
        }
        for r in [self.disfluency_rate_ad, self.disfluency_rate_non_ad] {
            // at most one marker per token
            if !(0.0..=10.0).contains(&r) {
                return bad("disfluency rates must lie in [0, 10]");
            }
        }
        if self.mean_tokens < 5 {
            return bad("mean_tokens must be at least 5");
        }
        Ok(())
    }

    fn p_cue(&self, label: Label) -> f64 {
        match label {
            Label::Ad => self.p_cue_ad,
            Label::NonAd => self.p_cue_non_ad,
        }
    }

    fn disfluency(&self, label: Label) -> f64 {
        match label {
            Label::Ad => self.disfluency_rate_ad,
            Label::NonAd => self.disfluency_rate_non_ad,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedCounts {
    pub pause_short: usize,
    pub pause_med: usize,
    pub pause_long: usize,
    pub repetition: usize,
}

/// Hidden ground truth for one generated participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub participant_id: String,
    pub label: Label,
    /// Injected lemmas in lexicon order.
    pub lemmas: Vec<String>,
    pub annotations: InjectedCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub corpus: Corpus,
    /// `(file name, contents)`, file names relative to the output directory.
    pub files: Vec<(String, String)>,
    pub truth: Vec<TruthRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const TRANSCRIPT_DIR: &str = "transcripts";

impl SynthCorpus {
    pub fn truth_jsonl(&self) -> String {
        self.truth
            .iter()
            .map(|t| serde_json::to_string(t).expect("truth serializes") + "\n")
            .collect()
    }

    /// Writes `manifest.jsonl`, `truth.jsonl` and `transcripts/*.cha` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        let tdir = dir.join(TRANSCRIPT_DIR);
        std::fs::create_dir_all(&tdir).map_err(io(&tdir))?;
        for (name, text) in &self.files {
            let p = dir.join(name);
            crate::io::write_atomic(&p, text.as_bytes()).map_err(io(&p))?;
        }
        let p = dir.join(MANIFEST_FILE);
        crate::io::write_atomic(&p, self.corpus.to_jsonl().as_bytes()).map_err(io(&p))?;
        let p = dir.join(TRUTH_FILE);
        crate::io::write_atomic(&p, self.truth_jsonl().as_bytes()).map_err(io(&p))?;
        Ok(())
    }
}

pub fn load_truth(text: &str) -> Result<Vec<TruthRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

enum Tok {
    Word(String),
    Pause(&'static str),
}

pub fn generate(config: &SynthConfig, lexicon: &CueLexicon) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    let mut files = Vec::new();
    let mut truth = Vec::new();

    for i in 0..2 * config.n_per_class {
        // interleave classes so prefixes of the corpus stay balanced
        let label = if i % 2 == 0 { Label::Ad } else { Label::NonAd };
        let id = format!("S{:03}", i + 1);
        let age = rng.random_range(55..=85u32);
        let gender = if rng.random_bool(0.5) {
            Gender::M
        } else {
            Gender::F
        };

        let mut lemmas = Vec::new();
        let mut tokens: Vec<String> = Vec::new();
        let len = ((config.mean_tokens as f64) * rng.random_range(0.75..1.25)).round() as usize;
        for _ in 0..len.max(1) {
            tokens.push(FILLER.choose(&mut rng).expect("filler").to_string());
        }
        for entry in lexicon.entries() {
            if rng.random_bool(config.p_cue(label)) {
                lemmas.push(entry.lemma.clone());
                let mentions = rng.random_range(1..=2);
                for _ in 0..mentions {
                    let variant = entry.variants.choose(&mut rng).expect("variant").clone();
                    let at = rng.random_range(0..=tokens.len());
                    tokens.insert(at, variant);
                }
            }
        }

        let mut counts = InjectedCounts::default();
        let p_event = config.disfluency(label) / 10.0;
        let mut stream: Vec<Tok> = Vec::new();
        for t in tokens {
            if rng.random_bool(p_event) {
                if rng.random_bool(0.5) {
                    let (code, slot) = match rng.random_range(0..3) {
                        0 => ("(.)", &mut counts.pause_short),
                        1 => ("(..)", &mut counts.pause_med),
                        _ => ("(...)", &mut counts.pause_long),
                    };
                    *slot += 1;
                    stream.push(Tok::Pause(code));
                    stream.push(Tok::Word(t));
                } else {
                    counts.repetition += 1;
                    stream.push(Tok::Word(t.clone()));
                    stream.push(Tok::Pause("[/]"));
                    stream.push(Tok::Word(t));
                }
            } else {
                stream.push(Tok::Word(t));
            }
        }

        let cha = render_cha(&id, label, age, gender, &stream, &mut rng);
        let path = format!("{TRANSCRIPT_DIR}/{id}.cha");
        files.push((path.clone(), cha));
        records.push(ParticipantRecord {
            participant_id: id.clone(),
            label,
            split: Split::Unassigned,
            transcript_path: path,
            age: Some(age),
            gender: Some(gender),
            segment_count: None,
        });
        truth.push(TruthRecord {
            participant_id: id,
            label,
            lemmas,
            annotations: counts,
        });
    }
    for (r, (_, text)) in records.iter_mut().zip(&files) {
        r.segment_count = Some(text.lines().filter(|l| l.starts_with("*PAR")).count() as u32);
    }
    Ok(SynthCorpus {
        config: *config,
        corpus: Corpus {
            records,
            provenance: format!("synthetic corpus, seed {}", config.seed),
        },
        files,
        truth,
    })
}

fn render_cha(
    id: &str,
    label: Label,
    age: u32,
    gender: Gender,
    stream: &[Tok],
    rng: &mut ChaCha8Rng,
) -> String {
    let group = match label {
        Label::Ad => "ProbableAD",
        Label::NonAd => "Control",
    };
    let sex = match gender {
        Gender::M => "male",
        Gender::F => "female",
    };
    let mut out = String::new();
    out.push_str("@UTF8\n@Begin\n@Languages:\teng\n");
    out.push_str("@Participants:\tPAR Participant, INV Investigator\n");
    out.push_str(&format!(
        "@ID:\teng|Synth|PAR|{age};|{sex}|{group}||Participant|||\n"
    ));
    out.push_str("@ID:\teng|Synth|INV|||||Investigator|||\n");
    out.push_str(&format!("@Media:\t{id}, audio\n"));
    out.push_str(&format!("*INV:\t{INV_OPENING}\n"));

    let mut clock = 0u32;
    let mut idx = 0;
    while idx < stream.len() {
        let mut take = rng.random_range(6..=12).min(stream.len() - idx);
        // never end a tier between a word and its [/] repeat
        while idx + take < stream.len()
            && (matches!(stream[idx + take], Tok::Pause("[/]"))
                || matches!(stream[idx + take - 1], Tok::Pause(_)))
        {
            take += 1;
        }
        let parts: Vec<&str> = stream[idx..idx + take]
            .iter()
            .map(|t| match t {
                Tok::Word(w) => w.as_str(),
                Tok::Pause(p) => p,
            })
            .collect();
        let start = clock;
        clock += 900 * take as u32 / 2;
        let line = parts.join(" ");
        // long tiers wrap onto a tab continuation line
        let body = if parts.len() > 10 {
            let (a, b) = parts.split_at(parts.len() / 2);
            format!("{}\n\t{}", a.join(" "), b.join(" "))
        } else {
            line
        };
        out.push_str(&format!(
            "*PAR:\t{body} . \u{2022}{start}_{clock}\u{2022}\n"
        ));
        if rng.random_bool(0.3) {
            out.push_str("%com:\tsynthetic tier\n");
        }
        idx += take;
        if idx < stream.len() && rng.random_bool(0.25) {
            let prompt = INV_PROMPTS.choose(rng).expect("prompt");
            out.push_str(&format!("*INV:\t{prompt}\n"));
        }
    }
    out.push_str("@End\n");
    out
}
