use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::Corpus;

/// One broken annotation rule. `utterance` is `None` for dialogue-level rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub dialogue_id: String,
    pub utterance: Option<usize>,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.utterance {
            Some(i) => write!(f, "dialogue {}, utterance {i}: {}", self.dialogue_id, self.rule),
            None => write!(f, "dialogue {}: {}", self.dialogue_id, self.rule),
        }
    }
}

/// Every schema and annotation-guideline violation in `corpus`, in file order.
///
/// Rules: `empty-dialogue`, `duplicate-id`, `empty-speaker`, `empty-text`,
/// `type-missing` (persona without a type), `type-without-persona`,
/// `value-missing` (type without a value), `value-without-type` and
/// `empty-value`.
pub fn validate_annotations(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for d in corpus.dialogues() {
        let mut flag = |utterance: Option<usize>, rule: &'static str| {
            out.push(Violation {
                dialogue_id: d.id.clone(),
                utterance,
                rule,
            })
        };
        if !seen.insert(d.id.as_str()) {
            flag(None, "duplicate-id");
        }
        if d.utterances.is_empty() {
            flag(None, "empty-dialogue");
        }
        for (i, u) in d.utterances.iter().enumerate() {
            let at = Some(i);
            if u.speaker_id.trim().is_empty() {
                flag(at, "empty-speaker");
            }
            if u.text.trim().is_empty() {
                flag(at, "empty-text");
            }
            match (u.has_persona, u.persona_type) {
                (true, None) => flag(at, "type-missing"),
                (false, Some(_)) => flag(at, "type-without-persona"),
                _ => {}
            }
            match (&u.persona_type, &u.persona_value) {
                (Some(_), None) => flag(at, "value-missing"),
                (None, Some(_)) if u.has_persona => {}
                (None, Some(_)) => flag(at, "value-without-type"),
                _ => {}
            }
            if u.persona_value.as_deref().is_some_and(|v| v.trim().is_empty()) {
                flag(at, "empty-value");
            }
        }
    }
    out
}
