//! Synthetic corpus generator with planted label rules. Label `l` is set
//! iff its marker token occurs in the turn (same-turn rule) or in the
//! immediately preceding turn (context rule), so the planted ground truth
//! is exactly recoverable.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Corpus, CorpusError, Granularity, LabelSet, LabelSpace, Result, Session, SpeakerRole, Turn,
};

/// One planted label: its marker token, the per-turn probability of the
/// marker appearing, and whether the label fires on the previous turn's
/// marker instead of the current turn's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRule {
    pub code: String,
    pub marker: String,
    pub probability: f64,
    #[serde(default)]
    pub context: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub task: String,
    pub vocab_size: usize,
    pub labels: Vec<LabelRule>,
    pub sessions: usize,
    pub turns_per_session: [usize; 2],
    pub words_per_turn: [usize; 2],
    #[serde(default)]
    pub session_labels: bool,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn from_json(bytes: &[u8]) -> Result<GeneratorSpec> {
        let spec: GeneratorSpec =
            serde_json::from_slice(bytes).map_err(|e| CorpusError::Parse {
                line: e.line(),
                msg: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<GeneratorSpec> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        Self::from_json(&buf)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(CorpusError::Usage("vocab_size must be positive".to_string()));
        }
        if self.labels.is_empty() {
            return Err(CorpusError::Usage("at least one label rule required".to_string()));
        }
        let mut markers = BTreeSet::new();
        for rule in &self.labels {
            if !(0.0..=1.0).contains(&rule.probability) {
                return Err(CorpusError::Usage(format!(
                    "probability {} for '{}' outside [0,1]",
                    rule.probability, rule.code
                )));
            }
            if !markers.insert(rule.marker.as_str()) {
                return Err(CorpusError::Usage(format!(
                    "marker collision on '{}'",
                    rule.marker
                )));
            }
            if rule.marker.starts_with('w')
                && rule.marker[1..].chars().all(|c| c.is_ascii_digit())
            {
                return Err(CorpusError::Usage(format!(
                    "marker '{}' collides with the filler-token namespace",
                    rule.marker
                )));
            }
        }
        for range in [&self.turns_per_session, &self.words_per_turn] {
            if range[0] == 0 || range[0] > range[1] {
                return Err(CorpusError::Usage(format!("invalid range {range:?}")));
            }
        }
        Ok(())
    }

    pub fn label_space(&self) -> LabelSpace {
        LabelSpace {
            task: self.task.clone(),
            granularity: if self.session_labels {
                Granularity::Session
            } else {
                Granularity::Turn
            },
            codes: self.labels.iter().map(|r| r.code.clone()).collect(),
            grouping: Default::default(),
            binarize_threshold: None,
        }
    }
}

pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<Corpus> {
    spec.validate()?;
    let space = spec.label_space();
    let n_labels = spec.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sessions = Vec::with_capacity(spec.sessions);
    for s in 0..spec.sessions {
        let n_turns = rng.gen_range(spec.turns_per_session[0]..=spec.turns_per_session[1]);
        let mut turns: Vec<Turn> = Vec::with_capacity(n_turns);
        let mut prev_markers: Vec<bool> = vec![false; n_labels];
        for j in 0..n_turns {
            let n_words = rng.gen_range(spec.words_per_turn[0]..=spec.words_per_turn[1]);
            let mut words: Vec<String> = (0..n_words)
                .map(|_| format!("w{:03}", rng.gen_range(0..spec.vocab_size)))
                .collect();
            let mut markers_here = vec![false; n_labels];
            for (l, rule) in spec.labels.iter().enumerate() {
                if rng.gen_bool(rule.probability) {
                    let pos = rng.gen_range(0..=words.len());
                    words.insert(pos, rule.marker.clone());
                    markers_here[l] = true;
                }
            }
            let bits: Vec<u8> = spec
                .labels
                .iter()
                .enumerate()
                .map(|(l, rule)| {
                    let fired = if rule.context {
                        prev_markers[l]
                    } else {
                        markers_here[l]
                    };
                    u8::from(fired)
                })
                .collect();
            let role = if j % 2 == 0 {
                SpeakerRole::Therapist
            } else {
                SpeakerRole::Client
            };
            turns.push(Turn {
                role,
                words,
                labels: Some(LabelSet { bits }),
            });
            prev_markers = markers_here;
        }
        let session_labels = if spec.session_labels {
            let mut bits = vec![0u8; n_labels];
            for (l, bit) in bits.iter_mut().enumerate() {
                let positives = turns
                    .iter()
                    .filter(|t| t.labels.as_ref().unwrap().bits[l] == 1)
                    .count();
                *bit = u8::from(positives * 2 > turns.len());
            }
            Some(LabelSet { bits })
        } else {
            None
        };
        sessions.push(Session {
            session_id: format!("{}-{s:04}", spec.task),
            task_id: spec.task.clone(),
            turns,
            session_labels,
        });
    }
    Ok(Corpus { space, sessions })
}
