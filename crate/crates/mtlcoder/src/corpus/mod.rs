//! Dialogue data model, on-disk corpus format, label-space configuration,
//! vocabulary building, and train/validation splitting.

mod generate;
mod spaces;

pub use generate::{generate_synthetic, GeneratorSpec, LabelRule};
pub use spaces::{ctrs_label_space, misc_label_space};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeakerRole {
    Therapist,
    Client,
}

/// Binary label assignment over an ordered label space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub bits: Vec<u8>,
}

impl LabelSet {
    pub fn zeros(len: usize) -> Self {
        LabelSet { bits: vec![0; len] }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Turn,
    Session,
}

/// Ordered code names plus the grouping map (raw code -> group) and the
/// optional binarization threshold for integer-scale session labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSpace {
    pub task: String,
    pub granularity: Granularity,
    pub codes: Vec<String>,
    #[serde(default)]
    pub grouping: BTreeMap<String, String>,
    #[serde(default)]
    pub binarize_threshold: Option<i64>,
}

impl LabelSpace {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn from_json(bytes: &[u8]) -> Result<LabelSpace> {
        let space: LabelSpace = serde_json::from_slice(bytes).map_err(|e| CorpusError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        space.validate()?;
        Ok(space)
    }

    pub fn from_file(path: &Path) -> Result<LabelSpace> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        Self::from_json(&buf)
    }

    fn validate(&self) -> Result<()> {
        if self.codes.is_empty() {
            return Err(CorpusError::Data("label space has no codes".to_string()));
        }
        for group in self.grouping.values() {
            if !self.codes.contains(group) {
                return Err(CorpusError::Data(format!(
                    "grouping target '{group}' is not a code"
                )));
            }
        }
        if self.binarize_threshold.is_some() && self.granularity != Granularity::Session {
            return Err(CorpusError::Data(
                "binarization applies only to session-granularity spaces".to_string(),
            ));
        }
        Ok(())
    }

    /// Map a raw code through the grouping to its index in `codes`.
    pub fn code_index(&self, raw: &str) -> Result<usize> {
        let group = self.grouping.get(raw).map(|s| s.as_str()).unwrap_or(raw);
        self.codes
            .iter()
            .position(|c| c == group)
            .ok_or_else(|| CorpusError::Data(format!("unknown code '{raw}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub role: SpeakerRole,
    pub words: Vec<String>,
    pub labels: Option<LabelSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub task_id: String,
    pub turns: Vec<Turn>,
    pub session_labels: Option<LabelSet>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub space: LabelSpace,
    pub sessions: Vec<Session>,
}

impl Corpus {
    pub fn num_turns(&self) -> usize {
        self.sessions.iter().map(|s| s.turns.len()).sum()
    }

    pub fn num_words(&self) -> usize {
        self.sessions
            .iter()
            .flat_map(|s| &s.turns)
            .map(|t| t.words.len())
            .sum()
    }

    /// Per-turn reference labels: turn labels for turn granularity,
    /// session labels broadcast to every turn otherwise.
    pub fn turn_labels(&self, session: &Session, turn_idx: usize) -> LabelSet {
        match self.space.granularity {
            Granularity::Turn => session.turns[turn_idx]
                .labels
                .clone()
                .expect("turn-granularity corpus without turn labels"),
            Granularity::Session => session
                .session_labels
                .clone()
                .expect("session-granularity corpus without session labels"),
        }
    }
}

// On-disk JSON-lines schema.
#[derive(Serialize, Deserialize)]
struct SessionLine {
    session_id: String,
    task: String,
    session_labels: Option<BTreeMap<String, i64>>,
    turns: Vec<TurnLine>,
}

#[derive(Serialize, Deserialize)]
struct TurnLine {
    speaker: String,
    words: Vec<String>,
    labels: Option<BTreeMap<String, i64>>,
}

fn tokenize(words: &[String]) -> Vec<String> {
    words
        .iter()
        .flat_map(|w| w.split_whitespace())
        .map(|w| w.to_lowercase())
        .collect()
}

fn labels_from_map(map: &BTreeMap<String, i64>, space: &LabelSpace, binarize: bool) -> Result<LabelSet> {
    let mut bits = vec![0u8; space.len()];
    for (raw, &value) in map {
        let idx = space.code_index(raw)?;
        let bit = if binarize {
            if let Some(t) = space.binarize_threshold {
                u8::from(value >= t)
            } else if value == 0 || value == 1 {
                value as u8
            } else {
                return Err(CorpusError::Data(format!(
                    "label '{raw}' has non-binary value {value} and no binarization threshold"
                )));
            }
        } else if value == 0 || value == 1 {
            value as u8
        } else {
            return Err(CorpusError::Data(format!(
                "turn label '{raw}' has non-binary value {value}"
            )));
        };
        bits[idx] |= bit;
    }
    Ok(LabelSet { bits })
}

/// Parse a corpus from JSON lines, mapping raw codes through the grouping,
/// binarizing session scales, and dropping empty turns.
pub fn read_corpus<R: Read>(reader: R, space: &LabelSpace) -> Result<Corpus> {
    let reader = BufReader::new(reader);
    let mut sessions = Vec::new();
    let mut dropped_turns = 0usize;
    let mut dropped_sessions = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SessionLine = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no + 1,
            msg: e.to_string(),
        })?;
        let session_labels = match (&parsed.session_labels, space.granularity) {
            (Some(map), _) => Some(labels_from_map(map, space, true)?),
            (None, Granularity::Session) => {
                return Err(CorpusError::Data(format!(
                    "session '{}' lacks session labels for a session-granularity task",
                    parsed.session_id
                )))
            }
            (None, Granularity::Turn) => None,
        };
        let mut turns = Vec::new();
        for t in &parsed.turns {
            let role = match t.speaker.as_str() {
                "T" => SpeakerRole::Therapist,
                "C" => SpeakerRole::Client,
                other => {
                    return Err(CorpusError::Data(format!("unknown speaker role '{other}'")))
                }
            };
            let words = tokenize(&t.words);
            if words.is_empty() {
                dropped_turns += 1;
                continue;
            }
            let labels = match (&t.labels, space.granularity) {
                (Some(map), _) => Some(labels_from_map(map, space, false)?),
                (None, Granularity::Turn) => {
                    return Err(CorpusError::Data(format!(
                        "turn in session '{}' lacks labels for a turn-granularity task",
                        parsed.session_id
                    )))
                }
                (None, Granularity::Session) => None,
            };
            turns.push(Turn {
                role,
                words,
                labels,
            });
        }
        if turns.is_empty() {
            dropped_sessions += 1;
            continue;
        }
        sessions.push(Session {
            session_id: parsed.session_id,
            task_id: parsed.task,
            turns,
            session_labels,
        });
    }
    if dropped_turns > 0 || dropped_sessions > 0 {
        log::warn!("dropped {dropped_turns} empty turns and {dropped_sessions} empty sessions");
    }
    if sessions.is_empty() {
        log::warn!("corpus is empty");
    }
    Ok(Corpus {
        space: space.clone(),
        sessions,
    })
}

pub fn load_corpus(path: &Path, space: &LabelSpace) -> Result<Corpus> {
    read_corpus(File::open(path)?, space)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut writer = BufWriter::new(writer);
    for session in &corpus.sessions {
        let to_map = |labels: &LabelSet| -> BTreeMap<String, i64> {
            corpus
                .space
                .codes
                .iter()
                .cloned()
                .zip(labels.bits.iter().map(|&b| b as i64))
                .collect()
        };
        let line = SessionLine {
            session_id: session.session_id.clone(),
            task: session.task_id.clone(),
            session_labels: session.session_labels.as_ref().map(to_map),
            turns: session
                .turns
                .iter()
                .map(|t| TurnLine {
                    speaker: match t.role {
                        SpeakerRole::Therapist => "T".to_string(),
                        SpeakerRole::Client => "C".to_string(),
                    },
                    words: t.words.clone(),
                    labels: t.labels.as_ref().map(to_map),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &line)
            .map_err(|e| CorpusError::Data(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_corpus(corpus, File::create(path)?)
}

/// Session-level validation split: `fraction` of sessions are held out,
/// chosen uniformly at random, deterministic given the seed.
pub fn split_train_val(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    let n = corpus.sessions.len();
    if n < 10 {
        return Err(CorpusError::Usage(format!(
            "need at least 10 sessions to split, got {n}"
        )));
    }
    let n_val = ((n as f64 * fraction).round() as usize).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let val_idx: std::collections::BTreeSet<usize> = order[..n_val].iter().copied().collect();
    let mut train_sessions = Vec::new();
    let mut val_sessions = Vec::new();
    for (i, s) in corpus.sessions.iter().enumerate() {
        if val_idx.contains(&i) {
            val_sessions.push(s.clone());
        } else {
            train_sessions.push(s.clone());
        }
    }
    Ok((
        Corpus {
            space: corpus.space.clone(),
            sessions: train_sessions,
        },
        Corpus {
            space: corpus.space.clone(),
            sessions: val_sessions,
        },
    ))
}

/// Token-to-index map over the training split. Index 0 is padding, 1 is
/// the unknown token; real tokens follow in frequency-then-lexicographic
/// order. Tokens below `min_count` are excluded (they map to unknown).
pub fn build_vocab(train: &Corpus, min_count: usize) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for session in &train.sessions {
        for turn in &session.turns {
            for word in &turn.words {
                *counts.entry(word.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut tokens: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    tokens.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    tokens
        .into_iter()
        .enumerate()
        .map(|(i, (tok, _))| (tok, i + 2))
        .collect()
}
