//! Synthetic multilingual classification corpora.
//!
//! Every language expresses one shared [`ConceptSpace`] through a
//! [`CipherSpec`]: a bijective renaming of concepts into language-prefixed
//! tokens plus a windowed word-order shuffle. Examples keep their concept
//! sequences, so labels can be re-derived and target-language test sets are
//! exact translations of the source test set.

mod cipher;
mod generate;
mod io;
mod space;

pub use cipher::{derive_language, CipherSpec, LanguageRegistry};
pub use generate::{
    generate_pair_dataset, generate_sentiment_dataset, oracle_label, translate, CorpusSplits, LanguageSplits, PairSpec,
    SentimentSpec, SplitSizes,
};
pub use io::{parse_record, write_record};
pub use space::{build_concept_space, ConceptSpace, ConceptSpaceSpec, DEFAULT_SENTIMENT_AXIS, MIN_CONCEPTS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("language {0:?} already registered")]
    DuplicateLanguage(String),
    #[error("provenance error: {0}")]
    Provenance(String),
    #[error("token {token:?} is not in the {language} vocabulary")]
    UnknownToken { token: String, language: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleSentence,
    SentencePair,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub class_names: Vec<String>,
}

impl TaskSpec {
    /// Binary sentiment: label 1 iff the polarity sum is positive.
    pub fn sentiment() -> Self {
        Self { kind: TaskKind::SingleSentence, class_names: vec!["negative".into(), "positive".into()] }
    }

    pub fn pair() -> Self {
        Self {
            kind: TaskKind::SentencePair,
            class_names: vec!["entailment".into(), "contradiction".into(), "neutral".into()],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

pub const ENTAILMENT: usize = 0;
pub const CONTRADICTION: usize = 1;
pub const NEUTRAL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Unlabeled,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Unlabeled, Split::Dev, Split::Test];

    pub fn is_labeled(self) -> bool {
        self != Split::Unlabeled
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Unlabeled => "unlabeled",
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
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| CorpusError::Config(format!("unknown split {s:?}")))
    }
}

/// Concept sequences behind an example's surface tokens, in concept order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldConcepts {
    pub a: Vec<u32>,
    pub b: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens_a: Vec<String>,
    pub tokens_b: Option<Vec<String>>,
    pub label: Option<usize>,
    pub language: String,
    pub domain: String,
    pub gold_concepts: Option<GoldConcepts>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub task: TaskSpec,
    pub split: Split,
    pub language: String,
    pub domain: String,
}

impl Dataset {
    pub fn new(task: TaskSpec, split: Split, language: &str, domain: &str) -> Self {
        Self { examples: Vec::new(), task, split, language: language.to_string(), domain: domain.to_string() }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Checks that every example matches the dataset's language, domain and
    /// labeling.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let k = self.task.num_classes();
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.language != self.language || ex.domain != self.domain {
                return Err(CorpusError::Config(format!(
                    "example {i} is {}/{} in a {}/{} dataset",
                    ex.language, ex.domain, self.language, self.domain
                )));
            }
            if ex.label.is_some() != self.split.is_labeled() {
                return Err(CorpusError::Config(format!(
                    "example {i}: label presence does not match split {}",
                    self.split
                )));
            }
            if ex.label.is_some_and(|y| y >= k) {
                return Err(CorpusError::Config(format!("example {i}: label out of range")));
            }
            if (self.task.kind == TaskKind::SentencePair) != ex.tokens_b.is_some() {
                return Err(CorpusError::Config(format!("example {i}: wrong arity for task")));
            }
        }
        Ok(())
    }

    /// Line-delimited tab-separated records, one per example.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&write_record(self.split, ex));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, task: TaskSpec) -> Result<Self, CorpusError> {
        let mut examples = Vec::new();
        let mut meta: Option<(Split, String, String)> = None;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (split, ex) = parse_record(line).map_err(|msg| CorpusError::Parse { line: i + 1, msg })?;
            match &meta {
                None => meta = Some((split, ex.language.clone(), ex.domain.clone())),
                Some((s, l, d)) if *s != split || *l != ex.language || *d != ex.domain => {
                    return Err(CorpusError::Parse {
                        line: i + 1,
                        msg: "records from more than one split/language/domain".into(),
                    })
                }
                Some(_) => {}
            }
            examples.push(ex);
        }
        let (split, language, domain) =
            meta.ok_or_else(|| CorpusError::Parse { line: 0, msg: "empty dataset file".into() })?;
        let ds = Dataset { examples, task, split, language, domain };
        ds.validate()?;
        Ok(ds)
    }

    /// SHA-256 of the serialized records, hex-encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}
