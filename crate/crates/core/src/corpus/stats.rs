use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Corpus, PersonaType, Split};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub mean_speakers_per_dialogue: f64,
    pub persona_utterances: usize,
    pub mean_persona_utterances_per_dialogue: f64,
    pub type_counts: BTreeMap<PersonaType, usize>,
}

impl SplitStats {
    pub fn type_count(&self, t: PersonaType) -> usize {
        self.type_counts.get(&t).copied().unwrap_or(0)
    }
}

/// Per-split statistics; `None` marks a split absent from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub splits: BTreeMap<Split, Option<SplitStats>>,
}

impl CorpusStats {
    pub fn get(&self, split: Split) -> Option<&SplitStats> {
        self.splits.get(&split).and_then(Option::as_ref)
    }

    /// Plain-text table; means are shown to two decimals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>7} {:>7} {:>10} {:>11} {:>14}",
            "split", "#dlg", "#utt", "avg#sp/dlg", "#persona", "avg#pers/dlg"
        );
        for split in Split::ALL {
            match self.get(split) {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{:<6} {:>7} {:>7} {:>10.2} {:>11} {:>14.2}",
                        split.as_str(),
                        s.dialogues,
                        s.utterances,
                        s.mean_speakers_per_dialogue,
                        s.persona_utterances,
                        s.mean_persona_utterances_per_dialogue
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<6} (absent)", split.as_str());
                }
            }
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<6}", "split");
        for t in PersonaType::ALL {
            let _ = write!(out, " {:>10}", t.as_str());
        }
        let _ = writeln!(out);
        for split in Split::ALL {
            if let Some(s) = self.get(split) {
                let _ = write!(out, "{:<6}", split.as_str());
                for t in PersonaType::ALL {
                    let _ = write!(out, " {:>10}", s.type_count(t));
                }
                let _ = writeln!(out);
            }
        }
        out
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let splits = Split::ALL
        .into_iter()
        .map(|split| {
            let dialogues = corpus.split(split);
            if dialogues.is_empty() {
                return (split, None);
            }
            let n = dialogues.len();
            let utterances = dialogues.iter().map(|d| d.len()).sum();
            let speakers: usize = dialogues.iter().map(|d| d.speakers().len()).sum();
            let mut type_counts: BTreeMap<PersonaType, usize> = PersonaType::ALL.iter().map(|t| (*t, 0)).collect();
            let mut persona = 0;
            for u in dialogues.iter().flat_map(|d| &d.utterances) {
                if u.has_persona {
                    persona += 1;
                    if let Some(t) = u.persona_type {
                        *type_counts.entry(t).or_default() += 1;
                    }
                }
            }
            let stats = SplitStats {
                dialogues: n,
                utterances,
                mean_speakers_per_dialogue: speakers as f64 / n as f64,
                persona_utterances: persona,
                mean_persona_utterances_per_dialogue: persona as f64 / n as f64,
                type_counts,
            };
            (split, Some(stats))
        })
        .collect();
    CorpusStats { splits }
}
