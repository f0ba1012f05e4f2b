use std::collections::HashMap;

use super::space::ConceptSpace;
use super::CorpusError;
use crate::seed;
use rand::seq::SliceRandom;

/// Surface realization of the concept space for one language: a bijective
/// renaming of concepts plus a local word-order shuffle.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherSpec {
    pub language_id: String,
    pub permutation_window: usize,
    pub noise_sigma: f64,
    surface: Vec<String>,
    /// `perms[r - 1]` reorders a chunk of length `r`.
    perms: Vec<Vec<usize>>,
    inverse: HashMap<String, u32>,
}

pub fn derive_language(
    space: &ConceptSpace,
    language_id: &str,
    permutation_window: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<CipherSpec, CorpusError> {
    if permutation_window == 0 {
        return Err(CorpusError::Config("permutation_window must be >= 1".into()));
    }
    if language_id.is_empty() || language_id.contains(|c: char| c.is_whitespace() || c == '_') {
        return Err(CorpusError::Config(format!("invalid language id {language_id:?}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(CorpusError::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let n = space.num_concepts();
    let width = (n.saturating_sub(1)).to_string().len().max(4);
    let mut rng = seed::stream(seed, &format!("cipher/{language_id}/surface"));
    let mut names: Vec<usize> = (0..n).collect();
    names.shuffle(&mut rng);
    let surface: Vec<String> = names.iter().map(|i| format!("{language_id}_w{i:0width$}")).collect();

    let mut rng = seed::stream(seed, &format!("cipher/{language_id}/order"));
    let perms = (1..=permutation_window)
        .map(|r| {
            let mut p: Vec<usize> = (0..r).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();

    let mut spec = CipherSpec {
        language_id: language_id.to_string(),
        permutation_window,
        noise_sigma,
        surface,
        perms,
        inverse: HashMap::new(),
    };
    spec.rebuild_inverse();
    Ok(spec)
}

impl CipherSpec {
    fn rebuild_inverse(&mut self) {
        self.inverse = self.surface.iter().enumerate().map(|(c, s)| (s.clone(), c as u32)).collect();
    }

    pub fn num_concepts(&self) -> usize {
        self.surface.len()
    }

    pub fn surface_token(&self, concept: u32) -> &str {
        &self.surface[concept as usize]
    }

    pub fn concept_of(&self, token: &str) -> Option<u32> {
        self.inverse.get(token).copied()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.surface
    }

    /// Concept sequence → surface sentence in this language's word order.
    pub fn encode(&self, concepts: &[u32]) -> Vec<String> {
        let mut out = Vec::with_capacity(concepts.len());
        for chunk in concepts.chunks(self.permutation_window) {
            let perm = &self.perms[chunk.len() - 1];
            out.extend(perm.iter().map(|&i| self.surface[chunk[i] as usize].clone()));
        }
        out
    }

    /// Inverse of [`CipherSpec::encode`].
    pub fn decode(&self, tokens: &[String]) -> Result<Vec<u32>, CorpusError> {
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(self.permutation_window) {
            let perm = &self.perms[chunk.len() - 1];
            let mut restored = vec![0u32; chunk.len()];
            for (pos, tok) in chunk.iter().enumerate() {
                let c = self.concept_of(tok).ok_or_else(|| CorpusError::UnknownToken {
                    token: tok.clone(),
                    language: self.language_id.clone(),
                })?;
                restored[perm[pos]] = c;
            }
            out.extend(restored);
        }
        Ok(out)
    }
}

/// Set of languages derived from one concept space; rejects duplicate ids.
#[derive(Clone, Debug, Default)]
pub struct LanguageRegistry {
    languages: Vec<CipherSpec>,
}

impl LanguageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn derive_language(
        &mut self,
        space: &ConceptSpace,
        language_id: &str,
        permutation_window: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<&CipherSpec, CorpusError> {
        if self.get(language_id).is_some() {
            return Err(CorpusError::DuplicateLanguage(language_id.to_string()));
        }
        let spec = derive_language(space, language_id, permutation_window, noise_sigma, seed)?;
        self.languages.push(spec);
        Ok(self.languages.last().expect("just pushed"))
    }

    pub fn get(&self, language_id: &str) -> Option<&CipherSpec> {
        self.languages.iter().find(|l| l.language_id == language_id)
    }

    pub fn languages(&self) -> &[CipherSpec] {
        &self.languages
    }

    pub fn into_languages(self) -> Vec<CipherSpec> {
        self.languages
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_concept_space;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn space() -> ConceptSpace {
        build_concept_space(200, 0.3, 16, 7).unwrap()
    }

    #[test]
    fn window_one_keeps_word_order() {
        let en = derive_language(&space(), "en", 1, 0.0, 1).unwrap();
        let concepts = [4, 17, 3, 99, 150];
        let decoded: Vec<u32> = en.encode(&concepts).iter().map(|t| en.concept_of(t).unwrap()).collect();
        assert_eq!(decoded, concepts);
    }

    #[test]
    fn languages_have_disjoint_vocabularies() {
        let s = space();
        let en = derive_language(&s, "en", 1, 0.0, 1).unwrap();
        let de = derive_language(&s, "de", 3, 0.1, 1).unwrap();
        let a: HashSet<_> = en.vocabulary().iter().collect();
        assert!(de.vocabulary().iter().all(|t| !a.contains(t)));
        assert!(de.vocabulary()[0].starts_with("de_w"));
    }

    #[test]
    fn permutation_stays_within_windows() {
        let de = derive_language(&space(), "de", 3, 0.1, 5).unwrap();
        let concepts: Vec<u32> = (10..18).collect();
        let tokens = de.encode(&concepts);
        for (w, chunk) in tokens.chunks(3).enumerate() {
            let mut got: Vec<u32> = chunk.iter().map(|t| de.concept_of(t).unwrap()).collect();
            got.sort_unstable();
            let mut want: Vec<u32> = concepts.chunks(3).nth(w).unwrap().to_vec();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn registry_rejects_duplicate_language() {
        let s = space();
        let mut reg = LanguageRegistry::new();
        reg.derive_language(&s, "en", 1, 0.0, 1).unwrap();
        assert!(matches!(reg.derive_language(&s, "en", 2, 0.0, 1), Err(CorpusError::DuplicateLanguage(_))));
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(derive_language(&space(), "xx", 0, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            concepts in prop::collection::vec(0u32..200, 1..30),
            window in 1usize..6,
            seed in 0u64..1000,
        ) {
            let de = derive_language(&space(), "de", window, 0.1, seed).unwrap();
            let tokens = de.encode(&concepts);
            prop_assert_eq!(de.decode(&tokens).unwrap(), concepts);
        }
    }
}
