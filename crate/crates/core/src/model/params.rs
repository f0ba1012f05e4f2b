use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::vocab::{Vocab, SPECIAL_TOKENS};
use super::{ModelConfig, ModelError, Role};
use crate::corpus::{CipherSpec, ConceptSpace};
use crate::nncore::{Real, Tensor};
use crate::seed;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<T> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub attn_norm: Norm<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub ffn_norm: Norm<T>,
}

/// Shared trainable concept table plus frozen per-language offsets.
///
/// A token of language `l` naming concept `c` embeds as
/// `concepts[c] + offsets[l * num_concepts + c]`; special tokens use their
/// own trainable rows and carry no offset.
#[derive(Clone, Debug, PartialEq)]
pub struct TiedEmbedding<T> {
    pub specials: Tensor<T>,
    pub concepts: Tensor<T>,
    pub offsets: Tensor<T>,
    pub languages: Vec<String>,
    /// `(language index, concept)` of every non-special vocabulary id.
    pub token_concepts: Vec<(u16, u32)>,
}

impl<T: Real> TiedEmbedding<T> {
    pub fn num_concepts(&self) -> usize {
        self.concepts.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Embedding<T> {
    Free { table: Tensor<T> },
    Tied(TiedEmbedding<T>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Frozen,
    Weight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub embedding: Embedding<T>,
    pub position: Tensor<T>,
    pub embed_norm: Norm<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub classifier_w: Tensor<T>,
    pub classifier_b: Tensor<T>,
}

struct Init {
    rng: seed::Rng,
    normal: Normal<f64>,
}

impl Init {
    fn new(seed: u64, stream: &str) -> Self {
        Self { rng: seed::stream(seed, stream), normal: Normal::new(0.0, INIT_STD).expect("valid std") }
    }

    fn normal<T: Real>(&mut self, shape: &[usize]) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::of_f64(self.normal.sample(&mut self.rng)))
    }

    /// Special-token rows, drawn at the same unit-norm scale as concept rows.
    fn specials<T: Real>(&mut self, hidden: usize) -> Tensor<T> {
        let scale = 1.0 / (INIT_STD * (hidden as f64).sqrt());
        let t: Tensor<f64> = self.normal(&[SPECIAL_TOKENS.len(), hidden]);
        Tensor::from_fn(t.shape(), |i| T::of_f64(t.data()[i] * scale))
    }
}

fn norm<T: Real>(h: usize) -> Norm<T> {
    Norm { gamma: Tensor::full(&[h], T::one()), beta: Tensor::zeros(&[h]) }
}

fn random_body<T: Real>(
    config: &ModelConfig,
    init: &mut Init,
) -> (Tensor<T>, Norm<T>, Vec<EncoderLayer<T>>, Tensor<T>, Tensor<T>) {
    let (h, f) = (config.hidden_dim, config.ffn_dim);
    let position = init.normal(&[config.max_seq_len, h]);
    let layers = (0..config.num_layers)
        .map(|_| EncoderLayer {
            wq: init.normal(&[h, h]),
            bq: Tensor::zeros(&[h]),
            wk: init.normal(&[h, h]),
            bk: Tensor::zeros(&[h]),
            wv: init.normal(&[h, h]),
            bv: Tensor::zeros(&[h]),
            wo: init.normal(&[h, h]),
            bo: Tensor::zeros(&[h]),
            attn_norm: norm(h),
            w1: init.normal(&[h, f]),
            b1: Tensor::zeros(&[f]),
            w2: init.normal(&[f, h]),
            b2: Tensor::zeros(&[h]),
            ffn_norm: norm(h),
        })
        .collect();
    let classifier_w = init.normal(&[h, config.num_classes]);
    let classifier_b = Tensor::zeros(&[config.num_classes]);
    (position, norm(h), layers, classifier_w, classifier_b)
}

/// Clean concept embeddings zero-padded to the hidden width.
fn concept_rows<T: Real>(space: &ConceptSpace, hidden: usize) -> Result<Vec<T>, ModelError> {
    let d = space.embedding_dim();
    if d > hidden {
        return Err(ModelError::Config(format!("concept embedding_dim {d} exceeds hidden_dim {hidden}")));
    }
    let mut rows = Vec::with_capacity(space.num_concepts() * hidden);
    for c in 0..space.num_concepts() as u32 {
        rows.extend(space.embedding(c).iter().map(|&x| T::of_f64(x)));
        rows.extend(std::iter::repeat_n(T::zero(), hidden - d));
    }
    Ok(rows)
}

fn prepare(config: &ModelConfig, role: Role, vocab_size: usize) -> Result<ModelConfig, ModelError> {
    if config.role != role {
        return Err(ModelError::Config(format!("expected a {role:?} config, got {:?}", config.role)));
    }
    let config = ModelConfig { vocab_size, ..config.clone() };
    config.validate()?;
    Ok(config)
}

/// Monolingual teacher: vocabulary covers the source language only and its
/// token rows start from the clean concept embeddings.
pub fn init_teacher<T: Real>(
    config: &ModelConfig,
    space: &ConceptSpace,
    source: &CipherSpec,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    let vocab = Vocab::new(source.vocabulary());
    let config = prepare(config, Role::Teacher, vocab.len())?;
    let h = config.hidden_dim;
    let mut init = Init::new(seed, "teacher/init");
    let specials: Tensor<T> = init.specials(h);
    let mut table = specials.into_data();
    let rows = concept_rows::<T>(space, h)?;
    for c in 0..source.num_concepts() as u32 {
        // Vocab order follows concept order, so this lines up row-for-row.
        debug_assert_eq!(vocab.id(source.surface_token(c)) as usize, SPECIAL_TOKENS.len() + c as usize);
        table.extend_from_slice(&rows[c as usize * h..(c as usize + 1) * h]);
    }
    let table = Tensor::new(vec![vocab.len(), h], table)?;
    let (position, embed_norm, layers, classifier_w, classifier_b) = random_body(&config, &mut init);
    Ok(ModelParams {
        config,
        vocab,
        embedding: Embedding::Free { table },
        position,
        embed_norm,
        layers,
        classifier_w,
        classifier_b,
    })
}

/// Multilingual student: one shared trainable concept table for every
/// language plus frozen Gaussian offsets with standard deviation
/// `noise_sigma + cipher.noise_sigma` per language.
pub fn init_student<T: Real>(
    config: &ModelConfig,
    space: &ConceptSpace,
    ciphers: &[CipherSpec],
    noise_sigma: f64,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    if ciphers.is_empty() {
        return Err(ModelError::Config("student needs at least one language".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(ModelError::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let vocab = Vocab::new(ciphers.iter().flat_map(|c| c.vocabulary()));
    let config = prepare(config, Role::Student, vocab.len())?;
    let h = config.hidden_dim;
    let nc = space.num_concepts();
    let mut init = Init::new(seed, "student/init");
    let specials = init.specials(h);
    let concepts = Tensor::new(vec![nc, h], concept_rows::<T>(space, h)?)?;

    let mut offsets = Vec::with_capacity(ciphers.len() * nc * h);
    let mut token_concepts = Vec::with_capacity(vocab.len() - SPECIAL_TOKENS.len());
    for (l, cipher) in ciphers.iter().enumerate() {
        if cipher.num_concepts() != nc {
            return Err(ModelError::Config(format!(
                "language {} does not match the concept space",
                cipher.language_id
            )));
        }
        let std = noise_sigma + cipher.noise_sigma;
        let mut rng = seed::stream(seed, &format!("student/offsets/{}", cipher.language_id));
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| ModelError::Config(e.to_string()))?;
            offsets.extend((0..nc * h).map(|_| T::of_f64(normal.sample(&mut rng))));
        } else {
            offsets.extend(std::iter::repeat_n(T::zero(), nc * h));
        }
        for c in 0..nc as u32 {
            token_concepts.push((l as u16, c));
        }
    }
    debug_assert_eq!(token_concepts.len() + SPECIAL_TOKENS.len(), vocab.len());
    let offsets = Tensor::new(vec![ciphers.len() * nc, h], offsets)?;
    let (position, embed_norm, layers, classifier_w, classifier_b) = random_body(&config, &mut init);
    Ok(ModelParams {
        config,
        vocab,
        embedding: Embedding::Tied(TiedEmbedding {
            specials,
            concepts,
            offsets,
            languages: ciphers.iter().map(|c| c.language_id.clone()).collect(),
            token_concepts,
        }),
        position,
        embed_norm,
        layers,
        classifier_w,
        classifier_b,
    })
}

const LAYER_TENSOR_NAMES: [&str; 16] = [
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "attn_norm.gamma",
    "attn_norm.beta",
    "w1",
    "b1",
    "w2",
    "b2",
    "ffn_norm.gamma",
    "ffn_norm.beta",
];

impl<T> EncoderLayer<T> {
    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.attn_norm.gamma,
            &self.attn_norm.beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ffn_norm.gamma,
            &self.ffn_norm.beta,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.attn_norm.gamma,
            &mut self.attn_norm.beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ffn_norm.gamma,
            &mut self.ffn_norm.beta,
        ]
    }
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters with the given layout; `tied` is
    /// `(num_concepts, languages, token_concepts)` for a tied embedding.
    pub fn zeros(
        config: &ModelConfig,
        vocab: Vocab,
        tied: Option<(usize, Vec<String>, Vec<(u16, u32)>)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden_dim;
        let f = config.ffn_dim;
        let embedding = match tied {
            None => Embedding::Free { table: Tensor::zeros(&[vocab.len(), h]) },
            Some((nc, languages, token_concepts)) => {
                if nc == 0 || languages.is_empty() || token_concepts.len() + SPECIAL_TOKENS.len() != vocab.len() {
                    return Err(ModelError::Config("tied embedding layout does not match the vocabulary".into()));
                }
                if token_concepts.iter().any(|&(l, c)| l as usize >= languages.len() || c as usize >= nc) {
                    return Err(ModelError::Config("token maps outside the concept table".into()));
                }
                Embedding::Tied(TiedEmbedding {
                    specials: Tensor::zeros(&[SPECIAL_TOKENS.len(), h]),
                    concepts: Tensor::zeros(&[nc, h]),
                    offsets: Tensor::zeros(&[languages.len() * nc, h]),
                    languages,
                    token_concepts,
                })
            }
        };
        Ok(Self {
            config: config.clone(),
            vocab,
            embedding,
            position: Tensor::zeros(&[config.max_seq_len, h]),
            embed_norm: norm(h),
            layers: (0..config.num_layers)
                .map(|_| EncoderLayer {
                    wq: Tensor::zeros(&[h, h]),
                    bq: Tensor::zeros(&[h]),
                    wk: Tensor::zeros(&[h, h]),
                    bk: Tensor::zeros(&[h]),
                    wv: Tensor::zeros(&[h, h]),
                    bv: Tensor::zeros(&[h]),
                    wo: Tensor::zeros(&[h, h]),
                    bo: Tensor::zeros(&[h]),
                    attn_norm: norm(h),
                    w1: Tensor::zeros(&[h, f]),
                    b1: Tensor::zeros(&[f]),
                    w2: Tensor::zeros(&[f, h]),
                    b2: Tensor::zeros(&[h]),
                    ffn_norm: norm(h),
                })
                .collect(),
            classifier_w: Tensor::zeros(&[h, config.num_classes]),
            classifier_b: Tensor::zeros(&[config.num_classes]),
        })
    }

    pub fn role(&self) -> Role {
        self.config.role
    }

    fn body_names(&self) -> Vec<String> {
        let mut names = vec!["position".to_string(), "embed_norm.gamma".into(), "embed_norm.beta".into()];
        for i in 0..self.layers.len() {
            names.extend(LAYER_TENSOR_NAMES.iter().map(|n| format!("layers.{i}.{n}")));
        }
        names.push("classifier.weight".into());
        names.push("classifier.bias".into());
        names
    }

    fn body(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.position, &self.embed_norm.gamma, &self.embed_norm.beta];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.push(&self.classifier_w);
        out.push(&self.classifier_b);
        out
    }

    /// Every tensor with its checkpoint name and kind, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>, TensorKind)> {
        let mut out = Vec::new();
        match &self.embedding {
            Embedding::Free { table } => out.push(("embedding.table".to_string(), table, TensorKind::Embedding)),
            Embedding::Tied(t) => {
                out.push(("embedding.specials".to_string(), &t.specials, TensorKind::Embedding));
                out.push(("embedding.concepts".to_string(), &t.concepts, TensorKind::Embedding));
                out.push(("embedding.offsets".to_string(), &t.offsets, TensorKind::Frozen));
            }
        }
        let names = self.body_names();
        out.extend(names.into_iter().zip(self.body()).map(|(n, t)| (n, t, TensorKind::Weight)));
        out
    }

    /// Mutable view in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let ModelParams { embedding, position, embed_norm, layers, classifier_w, classifier_b, .. } = self;
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        match embedding {
            Embedding::Free { table } => out.push(table),
            Embedding::Tied(t) => {
                out.push(&mut t.specials);
                out.push(&mut t.concepts);
                out.push(&mut t.offsets);
            }
        }
        out.push(position);
        out.push(&mut embed_norm.gamma);
        out.push(&mut embed_norm.beta);
        for layer in layers {
            out.extend(layer.tensors_mut());
        }
        out.push(classifier_w);
        out.push(classifier_b);
        out
    }

    /// Tensors updated by the optimizer. Offsets are never trainable; the
    /// embedding rows are skipped when `freeze_embeddings` is set.
    pub fn trainable(&self, freeze_embeddings: bool) -> Vec<&Tensor<T>> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, _, kind)| is_trainable(*kind, freeze_embeddings))
            .map(|(_, t, _)| t)
            .collect()
    }

    pub fn trainable_mut(&mut self, freeze_embeddings: bool) -> Vec<&mut Tensor<T>> {
        let kinds: Vec<TensorKind> = self.named_tensors().into_iter().map(|(_, _, k)| k).collect();
        self.tensors_mut()
            .into_iter()
            .zip(kinds)
            .filter(|(_, kind)| is_trainable(*kind, freeze_embeddings))
            .map(|(t, _)| t)
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t, _)| t.numel()).sum()
    }

    pub fn num_trainable_parameters(&self, freeze_embeddings: bool) -> usize {
        self.trainable(freeze_embeddings).iter().map(|t| t.numel()).sum()
    }

    /// SHA-256 over every tensor name, shape and value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t, _) in self.named_tensors() {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for x in t.data() {
                h.update(x.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Checksum of the frozen offsets alone, `None` for untied embeddings.
    pub fn offsets_checksum(&self) -> Option<String> {
        match &self.embedding {
            Embedding::Free { .. } => None,
            Embedding::Tied(t) => {
                let mut h = Sha256::new();
                for x in t.offsets.data() {
                    h.update(x.as_f64().to_le_bytes());
                }
                Some(hex::encode(h.finalize()))
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let norm = |n: &Norm<T>| Norm { gamma: n.gamma.cast(), beta: n.beta.cast() };
        ModelParams {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            embedding: match &self.embedding {
                Embedding::Free { table } => Embedding::Free { table: table.cast() },
                Embedding::Tied(t) => Embedding::Tied(TiedEmbedding {
                    specials: t.specials.cast(),
                    concepts: t.concepts.cast(),
                    offsets: t.offsets.cast(),
                    languages: t.languages.clone(),
                    token_concepts: t.token_concepts.clone(),
                }),
            },
            position: self.position.cast(),
            embed_norm: norm(&self.embed_norm),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayer {
                    wq: l.wq.cast(),
                    bq: l.bq.cast(),
                    wk: l.wk.cast(),
                    bk: l.bk.cast(),
                    wv: l.wv.cast(),
                    bv: l.bv.cast(),
                    wo: l.wo.cast(),
                    bo: l.bo.cast(),
                    attn_norm: norm(&l.attn_norm),
                    w1: l.w1.cast(),
                    b1: l.b1.cast(),
                    w2: l.w2.cast(),
                    b2: l.b2.cast(),
                    ffn_norm: norm(&l.ffn_norm),
                })
                .collect(),
            classifier_w: self.classifier_w.cast(),
            classifier_b: self.classifier_b.cast(),
        }
    }
}

fn is_trainable(kind: TensorKind, freeze_embeddings: bool) -> bool {
    match kind {
        TensorKind::Frozen => false,
        TensorKind::Embedding => !freeze_embeddings,
        TensorKind::Weight => true,
    }
}
