use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cipher::CipherSpec;
use super::space::ConceptSpace;
use super::{CorpusError, Dataset, Example, GoldConcepts, Split, TaskKind, TaskSpec};
use super::{CONTRADICTION, ENTAILMENT, NEUTRAL};
use crate::seed;

const MAX_ATTEMPTS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub unlabeled: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Unlabeled => self.unlabeled,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentSpec {
    pub sizes: SplitSizes,
    /// Inclusive sentence-length range in concepts.
    pub sentence_len: (usize, usize),
    /// Minimum |polarity sum| of every sentence.
    pub margin: usize,
    /// Probability that a position holds a polar concept.
    pub polar_rate: f64,
    pub domain: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub sizes: SplitSizes,
    /// Inclusive premise-length range in concepts.
    pub sentence_len: (usize, usize),
    pub polar_rate: f64,
    pub domain: String,
}

/// The four splits of one language.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageSplits {
    pub train: Dataset,
    pub unlabeled: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

impl LanguageSplits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Unlabeled => &self.unlabeled,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Every split realized in every language, in cipher declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplits {
    pub task: TaskSpec,
    pub languages: Vec<(String, LanguageSplits)>,
}

impl CorpusSplits {
    pub fn language(&self, id: &str) -> Option<&LanguageSplits> {
        self.languages.iter().find(|(l, _)| l == id).map(|(_, s)| s)
    }

    pub fn get(&self, language: &str, split: Split) -> Option<&Dataset> {
        self.language(language).map(|s| s.get(split))
    }

    pub fn language_ids(&self) -> Vec<String> {
        self.languages.iter().map(|(l, _)| l.clone()).collect()
    }

    /// Content hash over every dataset in declaration order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (_, splits) in &self.languages {
            for split in Split::ALL {
                h.update(splits.get(split).to_tsv().as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn balanced_labels(n: usize, k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    labels
}

fn polarity_sum(space: &ConceptSpace, concepts: &[u32]) -> i64 {
    concepts.iter().map(|&c| space.polarity(c) as i64).sum()
}

fn sample_sentence(rng: &mut seed::Rng, len: usize, polar: &[u32], neutral: &[u32], polar_rate: f64) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let use_polar = neutral.is_empty() || (!polar.is_empty() && rng.random_bool(polar_rate));
            let pool = if use_polar { polar } else { neutral };
            *pool.choose(rng).expect("non-empty pool")
        })
        .collect()
}

fn check_common(
    len: (usize, usize),
    polar_rate: f64,
    ciphers: &[CipherSpec],
    space: &ConceptSpace,
) -> Result<(), CorpusError> {
    if ciphers.is_empty() {
        return Err(CorpusError::Config("at least one language is required".into()));
    }
    if len.0 == 0 || len.0 > len.1 {
        return Err(CorpusError::Config(format!("invalid sentence length range {len:?}")));
    }
    if !(0.0..=1.0).contains(&polar_rate) {
        return Err(CorpusError::Config(format!("polar_rate must be in [0, 1], got {polar_rate}")));
    }
    for c in ciphers {
        if c.num_concepts() != space.num_concepts() {
            return Err(CorpusError::Config(format!(
                "language {} was derived from a different concept space",
                c.language_id
            )));
        }
    }
    Ok(())
}

fn realize(
    task: &TaskSpec,
    ciphers: &[CipherSpec],
    domain: &str,
    generated: &[(Split, Vec<(GoldConcepts, usize)>)],
) -> CorpusSplits {
    let languages = ciphers
        .iter()
        .map(|cipher| {
            let mut sets = generated.iter().map(|(split, items)| {
                let mut ds = Dataset::new(task.clone(), *split, &cipher.language_id, domain);
                ds.examples = items
                    .iter()
                    .map(|(gold, label)| Example {
                        tokens_a: cipher.encode(&gold.a),
                        tokens_b: gold.b.as_ref().map(|b| cipher.encode(b)),
                        label: split.is_labeled().then_some(*label),
                        language: cipher.language_id.clone(),
                        domain: domain.to_string(),
                        gold_concepts: Some(gold.clone()),
                    })
                    .collect();
                ds
            });
            let splits = LanguageSplits {
                train: sets.next().expect("train"),
                unlabeled: sets.next().expect("unlabeled"),
                dev: sets.next().expect("dev"),
                test: sets.next().expect("test"),
            };
            (cipher.language_id.clone(), splits)
        })
        .collect();
    CorpusSplits { task: task.clone(), languages }
}

/// Binary sentiment corpus: the label is the sign of the polarity sum, and
/// every sentence clears the margin. Splits are disjoint at the concept level
/// and identical in meaning across languages.
pub fn generate_sentiment_dataset(
    space: &ConceptSpace,
    ciphers: &[CipherSpec],
    spec: &SentimentSpec,
    seed: u64,
) -> Result<CorpusSplits, CorpusError> {
    check_common(spec.sentence_len, spec.polar_rate, ciphers, space)?;
    let pos = space.concepts_with_polarity(1);
    let neg = space.concepts_with_polarity(-1);
    if pos.is_empty() || neg.is_empty() {
        return Err(CorpusError::Sizing("sentiment generation needs both positive and negative concepts".into()));
    }
    if spec.margin == 0 {
        return Err(CorpusError::Config("margin must be >= 1".into()));
    }
    if spec.margin > spec.sentence_len.1 {
        return Err(CorpusError::Sizing(format!(
            "margin {} is unreachable with sentences of at most {} concepts",
            spec.margin, spec.sentence_len.1
        )));
    }
    let polar: Vec<u32> = pos.iter().chain(&neg).copied().collect();
    let neutral = space.concepts_with_polarity(0);
    let margin = spec.margin as i64;

    let mut rng = seed::stream(seed, "corpus/sentiment");
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut generated = Vec::new();
    for split in Split::ALL {
        let labels = balanced_labels(spec.sizes.get(split), 2, &mut rng);
        let mut items = Vec::with_capacity(labels.len());
        for y in labels {
            let mut attempts = 0;
            let concepts = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(CorpusError::Sizing(format!(
                        "could not draw a fresh {} sentence with margin {} (length range {:?})",
                        if y == 1 { "positive" } else { "negative" },
                        spec.margin,
                        spec.sentence_len
                    )));
                }
                let len = rng.random_range(spec.sentence_len.0..=spec.sentence_len.1);
                let s = sample_sentence(&mut rng, len, &polar, &neutral, spec.polar_rate);
                let sum = polarity_sum(space, &s);
                let ok = if y == 1 { sum >= margin } else { sum <= -margin };
                if ok && !seen.contains(&s) {
                    seen.insert(s.clone());
                    break s;
                }
            };
            items.push((GoldConcepts { a: concepts, b: None }, y));
        }
        generated.push((split, items));
    }
    Ok(realize(&TaskSpec::sentiment(), ciphers, &spec.domain, &generated))
}

/// Three-way premise/hypothesis corpus. Hypotheses are derived from the
/// premise by rule: entailment drops one neutral concept, contradiction
/// swaps one polar concept for its antonym, neutral is a fresh sentence
/// sharing no concept with the premise.
pub fn generate_pair_dataset(
    space: &ConceptSpace,
    ciphers: &[CipherSpec],
    spec: &PairSpec,
    seed: u64,
) -> Result<CorpusSplits, CorpusError> {
    check_common(spec.sentence_len, spec.polar_rate, ciphers, space)?;
    let num_polar = space.num_polar();
    if num_polar == 0 || !num_polar.is_multiple_of(2) {
        return Err(CorpusError::Sizing(format!(
            "antonym pairing needs a positive even number of polar concepts, found {num_polar}"
        )));
    }
    if spec.sentence_len.0 < 2 {
        return Err(CorpusError::Sizing("premises need at least 2 concepts".into()));
    }
    if space.num_concepts() < 2 * spec.sentence_len.1 + 1 {
        return Err(CorpusError::Sizing(format!(
            "{} concepts cannot supply disjoint premise/hypothesis pairs of length {}",
            space.num_concepts(),
            spec.sentence_len.1
        )));
    }
    let polar: Vec<u32> = (0..space.num_concepts() as u32).filter(|&c| space.antonym(c).is_some()).collect();
    let neutral = space.concepts_with_polarity(0);
    if neutral.is_empty() {
        return Err(CorpusError::Sizing("entailment pairs need neutral concepts".into()));
    }

    let mut rng = seed::stream(seed, "corpus/pair");
    let mut seen: HashSet<(Vec<u32>, Vec<u32>)> = HashSet::new();
    let mut generated = Vec::new();
    for split in Split::ALL {
        let labels = balanced_labels(spec.sizes.get(split), 3, &mut rng);
        let mut items = Vec::with_capacity(labels.len());
        for y in labels {
            let mut attempts = 0;
            let (premise, hypothesis) = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(CorpusError::Sizing(format!(
                        "could not draw a fresh pair for class {y} (length range {:?})",
                        spec.sentence_len
                    )));
                }
                let len = rng.random_range(spec.sentence_len.0..=spec.sentence_len.1);
                let premise = sample_sentence(&mut rng, len, &polar, &neutral, spec.polar_rate);
                let Some(hypothesis) = hypothesis_for(space, &premise, y, &mut rng, spec) else {
                    continue;
                };
                let key = (premise, hypothesis);
                if !seen.contains(&key) {
                    seen.insert(key.clone());
                    break key;
                }
            };
            items.push((GoldConcepts { a: premise, b: Some(hypothesis) }, y));
        }
        generated.push((split, items));
    }
    Ok(realize(&TaskSpec::pair(), ciphers, &spec.domain, &generated))
}

fn hypothesis_for(
    space: &ConceptSpace,
    premise: &[u32],
    label: usize,
    rng: &mut seed::Rng,
    spec: &PairSpec,
) -> Option<Vec<u32>> {
    match label {
        ENTAILMENT => {
            let neutral_pos: Vec<usize> = (0..premise.len()).filter(|&i| space.polarity(premise[i]) == 0).collect();
            let &drop = neutral_pos.choose(rng)?;
            let mut h = premise.to_vec();
            h.remove(drop);
            Some(h)
        }
        CONTRADICTION => {
            let polar_pos: Vec<usize> = (0..premise.len()).filter(|&i| space.antonym(premise[i]).is_some()).collect();
            let &flip = polar_pos.choose(rng)?;
            let mut h = premise.to_vec();
            h[flip] = space.antonym(premise[flip])?;
            Some(h)
        }
        NEUTRAL => {
            let used: HashSet<u32> = premise.iter().copied().collect();
            let free: Vec<u32> = (0..space.num_concepts() as u32).filter(|c| !used.contains(c)).collect();
            let len = rng.random_range(spec.sentence_len.0..=spec.sentence_len.1);
            Some((0..len).map(|_| *free.choose(rng).expect("free concepts")).collect())
        }
        _ => None,
    }
}

/// Recomputes an example's label from its concepts; `None` if the concepts
/// do not determine a valid label.
pub fn oracle_label(space: &ConceptSpace, gold: &GoldConcepts) -> Option<usize> {
    match &gold.b {
        None => match polarity_sum(space, &gold.a) {
            s if s > 0 => Some(1),
            s if s < 0 => Some(0),
            _ => None,
        },
        Some(h) => {
            let p = &gold.a;
            if h.iter().all(|c| !p.contains(c)) {
                Some(NEUTRAL)
            } else if h.len() + 1 == p.len() {
                let i = (0..h.len()).find(|&i| h[i] != p[i]).unwrap_or(h.len());
                let dropped_neutral = space.polarity(p[i]) == 0;
                (dropped_neutral && h[i..] == p[i + 1..]).then_some(ENTAILMENT)
            } else if h.len() == p.len() && h.iter().zip(p).filter(|(a, b)| a != b).count() == 1 {
                let (hv, pv) = h.iter().zip(p).find(|(a, b)| a != b).expect("one difference");
                (space.antonym(*pv) == Some(*hv)).then_some(CONTRADICTION)
            } else {
                None
            }
        }
    }
}

/// Re-realizes an example in another language from its concepts.
pub fn translate(example: &Example, target: &CipherSpec) -> Result<Example, CorpusError> {
    let gold = example
        .gold_concepts
        .as_ref()
        .ok_or_else(|| CorpusError::Provenance("example carries no gold concepts".into()))?;
    Ok(Example {
        tokens_a: target.encode(&gold.a),
        tokens_b: gold.b.as_ref().map(|b| target.encode(b)),
        label: example.label,
        language: target.language_id.clone(),
        domain: example.domain.clone(),
        gold_concepts: Some(gold.clone()),
    })
}

impl Dataset {
    pub fn is_pair_task(&self) -> bool {
        self.task.kind == TaskKind::SentencePair
    }
}
