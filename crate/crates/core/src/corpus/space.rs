use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::seed;

/// Shared semantics behind every synthetic language: concept polarities,
/// antonym pairs, and a unit-norm embedding per concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpace {
    polarity: Vec<i8>,
    antonym: Vec<Option<u32>>,
    embedding_dim: usize,
    embeddings: Vec<f64>,
    seed: u64,
}

/// Parameters of [`ConceptSpace::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpaceSpec {
    pub num_concepts: usize,
    pub polarity_ratio: f64,
    pub embedding_dim: usize,
    /// Weight of the shared sentiment axis in polar concept embeddings,
    /// before row normalization. 0 gives purely random embeddings.
    pub sentiment_axis: f64,
    pub seed: u64,
}

pub const MIN_CONCEPTS: usize = 10;
pub const DEFAULT_SENTIMENT_AXIS: f64 = 1.0;

/// Builds a concept space with the default sentiment-axis weight.
pub fn build_concept_space(
    num_concepts: usize,
    polarity_ratio: f64,
    embedding_dim: usize,
    seed: u64,
) -> Result<ConceptSpace, CorpusError> {
    ConceptSpace::build(&ConceptSpaceSpec {
        num_concepts,
        polarity_ratio,
        embedding_dim,
        sentiment_axis: DEFAULT_SENTIMENT_AXIS,
        seed,
    })
}

impl ConceptSpace {
    pub fn build(spec: &ConceptSpaceSpec) -> Result<Self, CorpusError> {
        if spec.num_concepts < MIN_CONCEPTS {
            return Err(CorpusError::Sizing(format!(
                "need at least {MIN_CONCEPTS} concepts to form sentences, got {}",
                spec.num_concepts
            )));
        }
        if spec.embedding_dim < 2 {
            return Err(CorpusError::Sizing(format!("embedding_dim must be >= 2, got {}", spec.embedding_dim)));
        }
        if !(0.0..=1.0).contains(&spec.polarity_ratio) {
            return Err(CorpusError::Config(format!("polarity_ratio must be in [0, 1], got {}", spec.polarity_ratio)));
        }
        let n = spec.num_concepts;
        let polar = (spec.polarity_ratio * n as f64).round() as usize;
        let num_pos = polar.div_ceil(2);
        let num_neg = polar / 2;

        let mut ids: Vec<u32> = (0..n as u32).collect();
        ids.shuffle(&mut seed::stream(spec.seed, "concepts/polarity"));
        let mut polarity = vec![0i8; n];
        let (pos, rest) = ids.split_at(num_pos);
        let neg = &rest[..num_neg];
        for &c in pos {
            polarity[c as usize] = 1;
        }
        for &c in neg {
            polarity[c as usize] = -1;
        }
        let mut antonym = vec![None; n];
        for (&p, &q) in pos.iter().zip(neg) {
            antonym[p as usize] = Some(q);
            antonym[q as usize] = Some(p);
        }

        let d = spec.embedding_dim;
        let mut rng = seed::stream(spec.seed, "concepts/embeddings");
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        let mut axis: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        normalize(&mut axis);
        let mut embeddings = Vec::with_capacity(n * d);
        for &pol in &polarity {
            let mut row: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            for (x, a) in row.iter_mut().zip(&axis) {
                *x += pol as f64 * spec.sentiment_axis * a;
            }
            normalize(&mut row);
            embeddings.extend(row);
        }

        Ok(Self { polarity, antonym, embedding_dim: d, embeddings, seed: spec.seed })
    }

    pub fn num_concepts(&self) -> usize {
        self.polarity.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn polarity(&self, concept: u32) -> i8 {
        self.polarity[concept as usize]
    }

    pub fn antonym(&self, concept: u32) -> Option<u32> {
        self.antonym[concept as usize]
    }

    pub fn embedding(&self, concept: u32) -> &[f64] {
        let d = self.embedding_dim;
        &self.embeddings[concept as usize * d..(concept as usize + 1) * d]
    }

    pub fn concepts_with_polarity(&self, pol: i8) -> Vec<u32> {
        (0..self.polarity.len() as u32).filter(|&c| self.polarity[c as usize] == pol).collect()
    }

    pub fn num_polar(&self) -> usize {
        self.polarity.iter().filter(|&&p| p != 0).count()
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarity_counts_follow_ratio() {
        let s = build_concept_space(200, 0.3, 16, 7).unwrap();
        assert_eq!(s.concepts_with_polarity(1).len(), 30);
        assert_eq!(s.concepts_with_polarity(-1).len(), 30);
        assert_eq!(s.concepts_with_polarity(0).len(), 140);
    }

    #[test]
    fn odd_polar_count_gives_tie_to_positive() {
        let s = build_concept_space(10, 0.5, 4, 1).unwrap();
        assert_eq!(s.concepts_with_polarity(1).len(), 3);
        assert_eq!(s.concepts_with_polarity(-1).len(), 2);
    }

    #[test]
    fn zero_ratio_has_no_polar_concepts() {
        let s = build_concept_space(200, 0.0, 16, 7).unwrap();
        assert_eq!(s.num_polar(), 0);
    }

    #[test]
    fn regeneration_is_identical() {
        let a = build_concept_space(200, 0.3, 16, 7).unwrap();
        let b = build_concept_space(200, 0.3, 16, 7).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = build_concept_space(200, 0.3, 16, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_small_is_sizing_error() {
        assert!(matches!(build_concept_space(9, 0.3, 16, 7), Err(CorpusError::Sizing(_))));
    }

    #[test]
    fn antonyms_pair_opposite_polarities() {
        let s = build_concept_space(100, 0.4, 8, 3).unwrap();
        for c in s.concepts_with_polarity(1) {
            let a = s.antonym(c).unwrap();
            assert_eq!(s.polarity(a), -1);
            assert_eq!(s.antonym(a), Some(c));
        }
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let s = build_concept_space(50, 0.4, 8, 3).unwrap();
        for c in 0..50 {
            let n: f64 = s.embedding(c).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
