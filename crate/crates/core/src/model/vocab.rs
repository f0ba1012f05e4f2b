use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::Example;

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[CLS]", "[SEP]", "[PAD]", "[UNK]"];
pub const MIN_SEQ_LEN: usize = 4;

/// Dense token ↔ id bijection. Ids 0..4 are always the special tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Special tokens followed by `surface` in order; duplicates are skipped.
    pub fn new<'a>(surface: impl IntoIterator<Item = &'a String>) -> Self {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for t in surface {
            if !index.contains_key(t) {
                index.insert(t.clone(), tokens.len() as u32);
                tokens.push(t.clone());
            }
        }
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token id, or [`UNK`] for tokens outside the vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Token ids and attention mask padded to `max_seq_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Encoded {
    /// Number of real (non-padding) positions.
    pub fn len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `[CLS] a [SEP]` or `[CLS] a [SEP] b [SEP]`, truncating `b` before `a`.
pub fn encode(example: &Example, vocab: &Vocab, max_seq_len: usize) -> Result<Encoded, ModelError> {
    if max_seq_len < MIN_SEQ_LEN {
        return Err(ModelError::Config(format!("max_seq_len must be >= {MIN_SEQ_LEN}, got {max_seq_len}")));
    }
    let a = &example.tokens_a;
    let mut ids = Vec::with_capacity(max_seq_len);
    ids.push(CLS);
    match &example.tokens_b {
        None => {
            let keep = a.len().min(max_seq_len - 2);
            ids.extend(a[..keep].iter().map(|t| vocab.id(t)));
            ids.push(SEP);
        }
        Some(b) => {
            let budget = max_seq_len - 3;
            let keep_b = b.len().min(budget.saturating_sub(a.len()));
            let keep_a = a.len().min(budget - keep_b);
            ids.extend(a[..keep_a].iter().map(|t| vocab.id(t)));
            ids.push(SEP);
            ids.extend(b[..keep_b].iter().map(|t| vocab.id(t)));
            ids.push(SEP);
        }
    }
    let real = ids.len();
    ids.resize(max_seq_len, PAD);
    let mask = (0..max_seq_len).map(|i| i < real).collect();
    Ok(Encoded { ids, mask })
}

/// A batch trimmed to its longest real sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedBatch {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub seq: usize,
}

impl EncodedBatch {
    pub fn new(items: &[&Encoded]) -> Self {
        Self::with_seq_len(items, items.iter().map(|e| e.len()).max().unwrap_or(1).max(1))
    }

    /// Batch padded (or trimmed) to exactly `seq` positions.
    pub fn with_seq_len(items: &[&Encoded], seq: usize) -> Self {
        let mut ids = Vec::with_capacity(items.len() * seq);
        let mut mask = Vec::with_capacity(items.len() * seq);
        for e in items {
            for i in 0..seq {
                ids.push(e.ids.get(i).copied().unwrap_or(PAD));
                mask.push(e.mask.get(i).copied().unwrap_or(false));
            }
        }
        Self { ids, mask, batch: items.len(), seq }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(a: &[&str], b: Option<&[&str]>) -> Example {
        Example {
            tokens_a: a.iter().map(|s| s.to_string()).collect(),
            tokens_b: b.map(|b| b.iter().map(|s| s.to_string()).collect()),
            label: None,
            language: "en".into(),
            domain: "d".into(),
            gold_concepts: None,
        }
    }

    fn vocab() -> Vocab {
        let words: Vec<String> = ["w1", "w2", "w3", "w4", "w5"].iter().map(|s| s.to_string()).collect();
        Vocab::new(&words)
    }

    #[test]
    fn single_sentence_layout() {
        let v = vocab();
        let e = encode(&ex(&["w1", "w2"], None), &v, 6).unwrap();
        assert_eq!(e.ids, vec![CLS, v.id("w1"), v.id("w2"), SEP, PAD, PAD]);
        assert_eq!(e.mask, vec![true, true, true, true, false, false]);
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn pair_truncates_b_first() {
        let v = vocab();
        let e = encode(&ex(&["w1", "w2", "w3"], Some(&["w4", "w5"])), &v, 7).unwrap();
        assert_eq!(e.ids, vec![CLS, v.id("w1"), v.id("w2"), v.id("w3"), SEP, v.id("w4"), SEP]);
        let e = encode(&ex(&["w1", "w2", "w3", "w4", "w5"], Some(&["w4"])), &v, 6).unwrap();
        assert_eq!(e.ids, vec![CLS, v.id("w1"), v.id("w2"), v.id("w3"), SEP, SEP]);
    }

    #[test]
    fn unknown_token_maps_to_unk() {
        let e = encode(&ex(&["zz"], None), &vocab(), 4).unwrap();
        assert_eq!(e.ids[1], UNK);
    }

    #[test]
    fn too_short_max_len_is_config_error() {
        assert!(matches!(encode(&ex(&["w1"], None), &vocab(), 3), Err(ModelError::Config(_))));
    }

    #[test]
    fn vocab_serializes_as_token_list() {
        let v = vocab();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.starts_with("[\"[CLS]\",\"[SEP]\",\"[PAD]\",\"[UNK]\""));
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }
}
