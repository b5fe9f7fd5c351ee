//! Corpus schema, JSONL loading, validation, statistics and annotator agreement.
//!
//! A corpus file holds one dialogue per line:
//!
//! ```json
//! {"id": "d1", "split": "train", "utterances": [
//!   {"speaker": "Jade", "text": "...", "persona": true, "type": "occupation", "value": "Teaches aerobics"}
//! ]}
//! ```

mod agreement;
mod stats;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use agreement::{krippendorff_alpha, load_annotations, AnnotationRecord, AnnotationSet};
pub use stats::{corpus_stats, CorpusStats, SplitStats};
pub use validate::{validate_annotations, Violation};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaType {
    Trait,
    Likes,
    Relation,
    Occupation,
    Misc,
}

impl PersonaType {
    pub const ALL: [PersonaType; 5] = [
        PersonaType::Trait,
        PersonaType::Likes,
        PersonaType::Relation,
        PersonaType::Occupation,
        PersonaType::Misc,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PersonaType::Trait => "trait",
            PersonaType::Likes => "likes",
            PersonaType::Relation => "relation",
            PersonaType::Occupation => "occupation",
            PersonaType::Misc => "misc",
        }
    }
}

impl fmt::Display for PersonaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PersonaType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown persona type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker_id: String,
    pub text: String,
    pub has_persona: bool,
    pub persona_type: Option<PersonaType>,
    pub persona_value: Option<String>,
}

impl Utterance {
    pub fn plain(index: usize, speaker: &str, text: &str) -> Self {
        Self {
            index,
            speaker_id: speaker.to_string(),
            text: text.to_string(),
            has_persona: false,
            persona_type: None,
            persona_value: None,
        }
    }

    pub fn persona(index: usize, speaker: &str, text: &str, kind: PersonaType, value: &str) -> Self {
        Self {
            has_persona: true,
            persona_type: Some(kind),
            persona_value: Some(value.to_string()),
            ..Self::plain(index, speaker, text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub split: Split,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Build a dialogue, renumbering utterance indices to `0..n`.
    pub fn new(id: &str, split: Split, mut utterances: Vec<Utterance>) -> Self {
        for (i, u) in utterances.iter_mut().enumerate() {
            u.index = i;
        }
        Self {
            id: id.to_string(),
            split,
            utterances,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for u in &self.utterances {
            if !seen.contains(&u.speaker_id.as_str()) {
                seen.push(&u.speaker_id);
            }
        }
        seen
    }

    /// One gold instance per persona-bearing utterance.
    pub fn gold_instances(&self) -> Vec<TypedInstance> {
        self.utterances
            .iter()
            .filter(|u| u.has_persona)
            .map(|u| TypedInstance::from_dialogue(self, u.index))
            .collect()
    }
}

/// A context window `u_0 .. u_{m-1}` ending in the target utterance `u_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedInstance {
    pub dialogue_id: String,
    pub context: Vec<Utterance>,
    pub target: Utterance,
    pub gold_type: Option<PersonaType>,
    pub gold_value: Option<String>,
}

impl TypedInstance {
    /// Instance whose context is every utterance before `target_index`.
    pub fn from_dialogue(dialogue: &Dialogue, target_index: usize) -> Self {
        let target = dialogue.utterances[target_index].clone();
        Self {
            dialogue_id: dialogue.id.clone(),
            context: dialogue.utterances[..target_index].to_vec(),
            gold_type: target.persona_type,
            gold_value: target.persona_value.clone(),
            target,
        }
    }

    /// Stable identifier `"<dialogue id>#<target index>"`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.dialogue_id, self.target.index)
    }

    /// Context followed by the target.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.context.iter().chain(std::iter::once(&self.target))
    }

    pub fn len(&self) -> usize {
        self.context.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Context utterances are contiguous from the dialogue start up to the target.
    pub fn is_well_formed(&self) -> bool {
        self.context.iter().enumerate().all(|(i, u)| u.index == i) && self.target.index == self.context.len()
    }
}

/// Dialogues grouped by split, each split in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    splits: BTreeMap<Split, Vec<Dialogue>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dialogues(dialogues: impl IntoIterator<Item = Dialogue>) -> Self {
        let mut c = Self::new();
        for d in dialogues {
            c.push(d);
        }
        c
    }

    pub fn push(&mut self, dialogue: Dialogue) {
        self.splits.entry(dialogue.split).or_default().push(dialogue);
    }

    pub fn split(&self, split: Split) -> &[Dialogue] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.get(&split).is_some_and(|d| !d.is_empty())
    }

    /// All dialogues, train then dev then test.
    pub fn dialogues(&self) -> impl Iterator<Item = &Dialogue> {
        self.splits.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in self.dialogues() {
            let rec = DialogueRecord::from(d);
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceRecord {
    speaker: String,
    text: String,
    persona: bool,
    #[serde(rename = "type", default)]
    kind: Option<PersonaType>,
    #[serde(default)]
    value: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    split: Split,
    utterances: Vec<UtteranceRecord>,
}

impl From<&Dialogue> for DialogueRecord {
    fn from(d: &Dialogue) -> Self {
        Self {
            id: d.id.clone(),
            split: d.split,
            utterances: d
                .utterances
                .iter()
                .map(|u| UtteranceRecord {
                    speaker: u.speaker_id.clone(),
                    text: u.text.clone(),
                    persona: u.has_persona,
                    kind: u.persona_type,
                    value: u.persona_value.clone(),
                })
                .collect(),
        }
    }
}

impl From<DialogueRecord> for Dialogue {
    fn from(r: DialogueRecord) -> Self {
        Self {
            id: r.id,
            split: r.split,
            utterances: r
                .utterances
                .into_iter()
                .enumerate()
                .map(|(index, u)| Utterance {
                    index,
                    speaker_id: u.speaker,
                    text: u.text,
                    has_persona: u.persona,
                    persona_type: u.kind,
                    persona_value: u.value,
                })
                .collect(),
        }
    }
}

/// Parse a corpus file without checking annotation invariants.
pub fn parse_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text, path)
}

fn parse_corpus_str(text: &str, path: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DialogueRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        corpus.push(rec.into());
    }
    Ok(corpus)
}

/// Load a corpus, failing on the first annotation invariant violation.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let corpus = parse_corpus(path)?;
    if let Some(v) = validate_annotations(&corpus).into_iter().next() {
        return Err(Error::Invariant {
            dialogue_id: v.dialogue_id,
            utterance: v.utterance,
            rule: v.rule.to_string(),
        });
    }
    Ok(corpus)
}

/// The annotated example dialogue used throughout the docs and tests.
pub fn example_dialogue() -> Dialogue {
    Dialogue::new(
        "example",
        Split::Test,
        vec![
            Utterance::plain(0, "Chandler", "What've you been up to?"),
            Utterance::persona(
                1,
                "Jade",
                "Oh, you know, the usual, teaching aerobics, partying way too much.",
                PersonaType::Occupation,
                "Teaches aerobics",
            ),
            Utterance::persona(
                2,
                "Jade",
                "Oh, and in case you were wondering, those are my legs on the new James Bond poster.",
                PersonaType::Trait,
                "Boastful",
            ),
            Utterance::persona(
                3,
                "Chandler",
                "Can you hold on a moment? I have another call.  I love her.",
                PersonaType::Likes,
                "Jade",
            ),
        ],
    )
}
