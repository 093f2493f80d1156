//! Participant manifests, diagnosis labels and seeded train/test splits.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "non_AD", alias = "non-AD")]
    NonAd,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Ad => "AD",
            Label::NonAd => "non_AD",
        }
    }

    /// Form used in verdict lines.
    pub fn verdict(&self) -> &'static str {
        match self {
            Label::Ad => "AD",
            Label::NonAd => "non-AD",
        }
    }

    pub fn from_score(score: f64) -> Self {
        if score > 0.0 {
            Label::Ad
        } else {
            Label::NonAd
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub label: Label,
    #[serde(default)]
    pub split: Split,
    pub transcript_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_count: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<ParticipantRecord>,
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: duplicate participant id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: record has no label")]
    MissingLabel { line: usize },
    #[error("line {line}: invalid record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("infeasible split policy: {0}")]
    InfeasiblePolicy(String),
    #[error("line {line}: unknown participant {id:?} in split table")]
    UnknownParticipant { id: String, line: usize },
}

impl Corpus {
    /// Parses manifest JSONL text. Blank lines are skipped.
    pub fn from_jsonl(text: &str, provenance: &str) -> Result<Self, CorpusError> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                    line: lineno,
                    reason: e.to_string(),
                })?;
            if value.get("label").is_none_or(|l| l.is_null()) {
                return Err(CorpusError::MissingLabel { line: lineno });
            }
            let record: ParticipantRecord =
                serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
                    line: lineno,
                    reason: e.to_string(),
                })?;
            if !seen.insert(record.participant_id.clone()) {
                return Err(CorpusError::DuplicateId {
                    id: record.participant_id,
                    line: lineno,
                });
            }
            records.push(record);
        }
        Ok(Corpus {
            records,
            provenance: provenance.to_string(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ParticipantRecord> {
        self.records.iter().find(|r| r.participant_id == id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ParticipantRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Two-column TSV (`participant_id`, `split`) with a header row.
    pub fn split_tsv(&self) -> String {
        let mut out = String::from("participant_id\tsplit\n");
        for r in &self.records {
            out.push_str(&r.participant_id);
            out.push('\t');
            out.push_str(r.split.as_str());
            out.push('\n');
        }
        out
    }

    /// Applies a split table produced by [`Corpus::split_tsv`].
    pub fn apply_split_tsv(&self, tsv: &str) -> Result<Corpus, CorpusError> {
        let mut out = self.clone();
        for (i, line) in tsv.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || (i == 0 && line.starts_with("participant_id")) {
                continue;
            }
            let (id, split) =
                line.split_once('\t')
                    .ok_or_else(|| CorpusError::MalformedRecord {
                        line: lineno,
                        reason: "expected two tab-separated columns".into(),
                    })?;
            let split = match split.trim() {
                "train" => Split::Train,
                "test" => Split::Test,
                "unassigned" => Split::Unassigned,
                other => {
                    return Err(CorpusError::MalformedRecord {
                        line: lineno,
                        reason: format!("unknown split {other:?}"),
                    })
                }
            };
            let rec = out
                .records
                .iter_mut()
                .find(|r| r.participant_id == id)
                .ok_or_else(|| CorpusError::UnknownParticipant {
                    id: id.to_string(),
                    line: lineno,
                })?;
            rec.split = split;
        }
        Ok(out)
    }
}

pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Corpus::from_jsonl(&text, &format!("manifest {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub train_count: usize,
    pub test_count: usize,
    pub stratify_by_label: bool,
    pub seed: u64,
}

impl SplitPolicy {
    /// Test share of 48/156 rounded to an even count, remainder to train.
    pub fn proportional(n: usize, seed: u64) -> Self {
        let half_test = ((n as f64) * 24.0 / 156.0).round() as usize;
        let test_count = (2 * half_test).min(n);
        SplitPolicy {
            train_count: n - test_count,
            test_count,
            stratify_by_label: true,
            seed,
        }
    }

    /// Parses `TRAIN:TEST` with an optional `:strat` / `:nostrat` suffix.
    pub fn parse(spec: &str, seed: u64) -> Result<Self, CorpusError> {
        let bad = || CorpusError::InfeasiblePolicy(format!("cannot parse split policy {spec:?}"));
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad());
        }
        let train_count = parts[0].trim().parse().map_err(|_| bad())?;
        let test_count = parts[1].trim().parse().map_err(|_| bad())?;
        let stratify_by_label = match parts.get(2).map(|s| s.trim()) {
            None | Some("strat") => true,
            Some("nostrat") => false,
            Some(_) => return Err(bad()),
        };
        Ok(SplitPolicy {
            train_count,
            test_count,
            stratify_by_label,
            seed,
        })
    }
}

fn halves(count: usize) -> (usize, usize) {
    (count / 2, count - count / 2)
}

/// Assigns splits. Records not drawn for either side become `unassigned`.
pub fn split(corpus: &Corpus, policy: &SplitPolicy) -> Result<Corpus, CorpusError> {
    let n = corpus.len();
    if policy.train_count + policy.test_count > n {
        return Err(CorpusError::InfeasiblePolicy(format!(
            "{} train + {} test exceeds {} records",
            policy.train_count, policy.test_count, n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut out = corpus.clone();
    for r in &mut out.records {
        r.split = Split::Unassigned;
    }

    let assign = |indices: &[usize], test: usize, train: usize, out: &mut Corpus| {
        for (k, &i) in indices.iter().enumerate() {
            out.records[i].split = if k < test {
                Split::Test
            } else if k < test + train {
                Split::Train
            } else {
                Split::Unassigned
            };
        }
    };

    if policy.stratify_by_label {
        let mut ad: Vec<usize> = (0..n)
            .filter(|&i| corpus.records[i].label == Label::Ad)
            .collect();
        let mut non: Vec<usize> = (0..n)
            .filter(|&i| corpus.records[i].label == Label::NonAd)
            .collect();
        let (test_ad, test_non) = halves(policy.test_count);
        let (train_ad, train_non) = halves(policy.train_count);
        // Leftover capacity in one class absorbs the odd train record when the other is short.
        let (train_ad, train_non) = rebalance(
            train_ad,
            train_non,
            ad.len() - test_ad.min(ad.len()),
            non.len() - test_non.min(non.len()),
        );
        if test_ad + train_ad > ad.len() || test_non + train_non > non.len() {
            return Err(CorpusError::InfeasiblePolicy(format!(
                "stratified split needs {}+{} AD and {}+{} non_AD, corpus has {} and {}",
                test_ad,
                train_ad,
                test_non,
                train_non,
                ad.len(),
                non.len()
            )));
        }
        ad.shuffle(&mut rng);
        non.shuffle(&mut rng);
        assign(&ad, test_ad, train_ad, &mut out);
        assign(&non, test_non, train_non, &mut out);
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        assign(&all, policy.test_count, policy.train_count, &mut out);
    }
    out.provenance = format!(
        "{}; split train={} test={} stratified={} seed={}",
        corpus.provenance,
        policy.train_count,
        policy.test_count,
        policy.stratify_by_label,
        policy.seed
    );
    Ok(out)
}

fn rebalance(mut a: usize, mut b: usize, room_a: usize, room_b: usize) -> (usize, usize) {
    while a > room_a && b < room_b {
        a -= 1;
        b += 1;
    }
    while b > room_b && a < room_a {
        b -= 1;
        a += 1;
    }
    (a, b)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub ad: usize,
    pub non_ad: usize,
    pub train: usize,
    pub test: usize,
    pub unassigned: usize,
    pub train_ad: usize,
    pub train_non_ad: usize,
    pub test_ad: usize,
    pub test_non_ad: usize,
    pub missing_transcripts: Vec<String>,
    pub findings: Vec<String>,
    pub provenance_note: String,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        format!(
            "train {} / test {}; train AD {}, non-AD {}",
            self.train, self.test, self.train_ad, self.train_non_ad
        )
    }
}

/// Reports class balance, split counts and transcript paths that do not
/// resolve (relative paths are taken against `base_dir`).
pub fn validate(corpus: &Corpus, base_dir: Option<&Path>) -> ValidationReport {
    let mut rep = ValidationReport {
        total: corpus.len(),
        ..Default::default()
    };
    for r in &corpus.records {
        let is_ad = r.label == Label::Ad;
        if is_ad {
            rep.ad += 1;
        } else {
            rep.non_ad += 1;
        }
        match r.split {
            Split::Train => {
                rep.train += 1;
                if is_ad {
                    rep.train_ad += 1
                } else {
                    rep.train_non_ad += 1
                }
            }
            Split::Test => {
                rep.test += 1;
                if is_ad {
                    rep.test_ad += 1
                } else {
                    rep.test_non_ad += 1
                }
            }
            Split::Unassigned => rep.unassigned += 1,
        }
        if let Some(base) = base_dir {
            if !resolve(base, &r.transcript_path).exists() {
                rep.missing_transcripts.push(r.participant_id.clone());
                rep.findings.push(format!(
                    "{}: transcript {} not found",
                    r.participant_id, r.transcript_path
                ));
            }
        }
    }
    if rep.ad != rep.non_ad {
        rep.findings.push(format!(
            "class imbalance: {} AD vs {} non_AD",
            rep.ad, rep.non_ad
        ));
    }
    let mut note = corpus.provenance.clone();
    if rep.train == 108 && rep.test == 48 {
        note.push_str(
            "; reference cohort: 156 = 108 train + 48 test, so training holds 54 AD + 54 non-AD \
             (a 48 + 48 training composition would only total 96)",
        );
    }
    rep.provenance_note = note;
    rep
}

pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn balanced(n_per_class: usize) -> Corpus {
        let mut records = Vec::new();
        for i in 0..n_per_class * 2 {
            records.push(ParticipantRecord {
                participant_id: format!("S{i:03}"),
                label: if i % 2 == 0 { Label::Ad } else { Label::NonAd },
                split: Split::Unassigned,
                transcript_path: format!("S{i:03}.cha"),
                age: None,
                gender: None,
                segment_count: None,
            });
        }
        Corpus {
            records,
            provenance: "fixture".into(),
        }
    }

    #[test]
    fn reference_cohort_split() {
        let c = balanced(78);
        let policy = SplitPolicy {
            train_count: 108,
            test_count: 48,
            stratify_by_label: true,
            seed: 7,
        };
        let s = split(&c, &policy).unwrap();
        let rep = validate(&s, None);
        assert_eq!(rep.test_ad, 24);
        assert_eq!(rep.test_non_ad, 24);
        assert_eq!(rep.summary(), "train 108 / test 48; train AD 54, non-AD 54");
        assert!(rep.provenance_note.contains("54 AD + 54 non-AD"));
        assert_eq!(split(&c, &policy).unwrap(), s);
    }

    #[test]
    fn infeasible() {
        let c = balanced(5);
        let policy = SplitPolicy {
            train_count: 8,
            test_count: 4,
            stratify_by_label: false,
            seed: 0,
        };
        assert!(matches!(
            split(&c, &policy),
            Err(CorpusError::InfeasiblePolicy(_))
        ));
    }

    #[test]
    fn manifest_errors() {
        let ok = r#"{"participant_id":"a","label":"AD","transcript_path":"a.cha"}"#;
        let dup = format!("{ok}\n{ok}\n");
        match Corpus::from_jsonl(&dup, "") {
            Err(CorpusError::DuplicateId { id, line }) => {
                assert_eq!(id, "a");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
        let missing = r#"{"participant_id":"a","transcript_path":"a.cha"}"#;
        assert!(matches!(
            Corpus::from_jsonl(missing, ""),
            Err(CorpusError::MissingLabel { line: 1 })
        ));
        assert!(Corpus::from_jsonl("", "").unwrap().is_empty());
        let alias = r#"{"participant_id":"b","label":"non-AD","transcript_path":"b.cha"}"#;
        assert_eq!(
            Corpus::from_jsonl(alias, "").unwrap().records[0].label,
            Label::NonAd
        );
    }

    #[test]
    fn tsv_round_trip() {
        let c = balanced(10);
        let s = split(&c, &SplitPolicy::proportional(20, 3)).unwrap();
        let back = c.apply_split_tsv(&s.split_tsv()).unwrap();
        assert_eq!(back.records, s.records);
    }

    #[test]
    fn empty_and_dangling_validation() {
        assert_eq!(
            validate(&Corpus::default(), None).summary(),
            "train 0 / test 0; train AD 0, non-AD 0"
        );
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("S000.cha"), "").unwrap();
        let c = balanced(1);
        let rep = validate(&c, Some(dir.path()));
        assert_eq!(rep.missing_transcripts, vec!["S001".to_string()]);
    }

    #[test]
    fn policy_parse() {
        let p = SplitPolicy::parse("108:48", 7).unwrap();
        assert_eq!(
            (p.train_count, p.test_count, p.stratify_by_label),
            (108, 48, true)
        );
        assert!(
            !SplitPolicy::parse("8:4:nostrat", 7)
                .unwrap()
                .stratify_by_label
        );
        assert!(SplitPolicy::parse("x", 7).is_err());
        assert_eq!(SplitPolicy::proportional(156, 0).test_count, 48);
        assert_eq!(SplitPolicy::proportional(100, 0).test_count, 30);
    }
}
