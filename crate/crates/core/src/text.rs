//! Tokenization and vocabularies shared by the models and the metrics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::PersonaType;

/// Lowercase, split on whitespace, and split punctuation into single-character
/// tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token vocabulary with reserved ids for padding, unknown, start and end
/// tokens, followed by one control token per persona type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Build from training texts; tokens are ordered by descending frequency,
    /// ties broken alphabetically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(PersonaType::ALL.iter().map(|t| control_token(*t)));
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("<unk>")
    }

    pub fn type_id(&self, t: PersonaType) -> usize {
        self.id(&control_token(t))
    }

    /// Token ids of `text`, truncated to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        tokenize(text).iter().take(max_len).map(|t| self.id(t)).collect()
    }

    /// Space-joined tokens, stopping at the first end token and skipping
    /// other reserved tokens.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i >= SPECIALS.len() + PersonaType::COUNT)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn control_token(t: PersonaType) -> String {
    format!("<type:{}>", t.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("What've you been up to?"),
            vec!["what", "'", "ve", "you", "been", "up", "to", "?"]
        );
        assert_eq!(tokenize("  Teaches   Aerobics "), vec!["teaches", "aerobics"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn vocab_reserves_specials() {
        let v = Vocab::build(["b a b", "c"]);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<eos>"), EOS);
        assert_eq!(v.token(9), "b");
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.decode(&[v.id("a"), v.id("c"), EOS, v.id("b")]), "a c");
        assert_eq!(v.encode("a b c", 2).len(), 2);
    }

    #[test]
    fn vocab_serializes_as_token_list() {
        let v = Vocab::build(["x y"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
