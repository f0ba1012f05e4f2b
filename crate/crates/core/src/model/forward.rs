use super::params::{Embedding, ModelParams, TensorKind};
use super::vocab::{Encoded, EncodedBatch, SPECIAL_TOKENS};
use super::ModelError;
use crate::nncore::{AttentionLayout, Graph, NnError, Real, Tensor, Var};

/// How parameters enter the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BindMode {
    /// Every tensor is a constant; nothing can receive a gradient.
    Inference,
    /// Trainable tensors become parameters, in [`ModelParams::trainable`] order.
    Train { freeze_embeddings: bool },
}

/// One recorded forward pass.
pub struct Forward<T> {
    pub graph: Graph<T>,
    /// `[batch × num_classes]`.
    pub logits: Var,
    /// Parameter leaves aligned with [`ModelParams::trainable`].
    pub trainable: Vec<Var>,
}

struct Binder<T> {
    graph: Graph<T>,
    mode: BindMode,
    trainable: Vec<Var>,
}

impl<T: Real> Binder<T> {
    fn bind(&mut self, t: &Tensor<T>, kind: TensorKind) -> Result<Var, NnError> {
        let train = match (self.mode, kind) {
            (BindMode::Inference, _) | (_, TensorKind::Frozen) => false,
            (BindMode::Train { freeze_embeddings }, TensorKind::Embedding) => !freeze_embeddings,
            (BindMode::Train { .. }, TensorKind::Weight) => true,
        };
        if train {
            let v = self.graph.param(t.clone())?;
            self.trainable.push(v);
            Ok(v)
        } else {
            self.graph.constant(t.clone())
        }
    }

    fn weight(&mut self, t: &Tensor<T>) -> Result<Var, NnError> {
        self.bind(t, TensorKind::Weight)
    }
}

fn out_of_range(id: u32, bound: usize) -> ModelError {
    ModelError::Nn(NnError::IndexOutOfRange { index: id as usize, bound })
}

/// Runs the encoder classifier over a batch and records the tape.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    batch: &EncodedBatch,
    mode: BindMode,
) -> Result<Forward<T>, ModelError> {
    let cfg = &params.config;
    let (b, seq, h) = (batch.batch, batch.seq, cfg.hidden_dim);
    if b == 0 || seq == 0 || seq > cfg.max_seq_len || batch.ids.len() != b * seq {
        return Err(ModelError::Config(format!("batch of {b}×{seq} does not fit max_seq_len {}", cfg.max_seq_len)));
    }
    let mut bd = Binder { graph: Graph::new(), mode, trainable: Vec::new() };

    let tokens = match &params.embedding {
        Embedding::Free { table } => {
            let tv = bd.bind(table, TensorKind::Embedding)?;
            let rows = table.shape()[0];
            let mut idx = Vec::with_capacity(batch.ids.len());
            for &id in &batch.ids {
                if id as usize >= rows {
                    return Err(out_of_range(id, rows));
                }
                idx.push(id as usize);
            }
            bd.graph.gather_rows(tv, idx)?
        }
        Embedding::Tied(tied) => {
            let specials = bd.bind(&tied.specials, TensorKind::Embedding)?;
            let concepts = bd.bind(&tied.concepts, TensorKind::Embedding)?;
            let g = &mut bd.graph;
            let table = g.concat_rows(specials, concepts)?;
            let nc = tied.num_concepts();
            let ns = SPECIAL_TOKENS.len();
            let mut idx = Vec::with_capacity(batch.ids.len());
            // Offsets are frozen, so only the rows this batch touches enter the graph.
            let mut offsets = vec![T::zero(); batch.ids.len() * h];
            for (p, &id) in batch.ids.iter().enumerate() {
                let id = id as usize;
                if id < ns {
                    idx.push(id);
                    continue;
                }
                let &(lang, concept) = tied
                    .token_concepts
                    .get(id - ns)
                    .ok_or_else(|| out_of_range(id as u32, ns + tied.token_concepts.len()))?;
                idx.push(ns + concept as usize);
                offsets[p * h..(p + 1) * h].copy_from_slice(tied.offsets.row(lang as usize * nc + concept as usize));
            }
            let looked_up = g.gather_rows(table, idx)?;
            let offsets = g.constant(Tensor::new(vec![batch.ids.len(), h], offsets)?)?;
            g.add(looked_up, offsets)?
        }
    };

    let position = bd.weight(&params.position)?;
    let (eg, eb) = (bd.weight(&params.embed_norm.gamma)?, bd.weight(&params.embed_norm.beta)?);
    let pos = bd.graph.gather_rows(position, (0..b).flat_map(|_| 0..seq).collect())?;
    let x = bd.graph.add(tokens, pos)?;
    let mut x = bd.graph.layer_norm(x, eg, eb)?;

    for layer in &params.layers {
        let wq = bd.weight(&layer.wq)?;
        let bq = bd.weight(&layer.bq)?;
        let wk = bd.weight(&layer.wk)?;
        let bk = bd.weight(&layer.bk)?;
        let wv = bd.weight(&layer.wv)?;
        let bv = bd.weight(&layer.bv)?;
        let wo = bd.weight(&layer.wo)?;
        let bo = bd.weight(&layer.bo)?;
        let ag = bd.weight(&layer.attn_norm.gamma)?;
        let ab = bd.weight(&layer.attn_norm.beta)?;
        let w1 = bd.weight(&layer.w1)?;
        let b1 = bd.weight(&layer.b1)?;
        let w2 = bd.weight(&layer.w2)?;
        let b2 = bd.weight(&layer.b2)?;
        let fg = bd.weight(&layer.ffn_norm.gamma)?;
        let fb = bd.weight(&layer.ffn_norm.beta)?;
        let g = &mut bd.graph;
        let q = g.matmul(x, wq)?;
        let q = g.add_bias(q, bq)?;
        let k = g.matmul(x, wk)?;
        let k = g.add_bias(k, bk)?;
        let v = g.matmul(x, wv)?;
        let v = g.add_bias(v, bv)?;
        let layout = AttentionLayout { batch: b, seq, heads: cfg.num_heads, mask: batch.mask.clone() };
        let a = g.attention(q, k, v, layout)?;
        let o = g.matmul(a, wo)?;
        let o = g.add_bias(o, bo)?;
        let r = g.add(x, o)?;
        x = g.layer_norm(r, ag, ab)?;
        let f = g.matmul(x, w1)?;
        let f = g.add_bias(f, b1)?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, w2)?;
        let f = g.add_bias(f, b2)?;
        let r = g.add(x, f)?;
        x = g.layer_norm(r, fg, fb)?;
    }

    let (cw, cb) = (bd.weight(&params.classifier_w)?, bd.weight(&params.classifier_b)?);
    let g = &mut bd.graph;
    let cls = g.gather_rows(x, (0..b).map(|i| i * seq).collect())?;
    let logits = g.matmul(cls, cw)?;
    let logits = g.add_bias(logits, cb)?;
    Ok(Forward { graph: bd.graph, logits, trainable: bd.trainable })
}

/// Logits for every example, computed `batch_size` at a time, as f64 rows.
pub fn predict_logits<T: Real>(
    params: &ModelParams<T>,
    examples: &[Encoded],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let batch_size = batch_size.max(1);
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size) {
        let refs: Vec<&Encoded> = chunk.iter().collect();
        let batch = EncodedBatch::new(&refs);
        let fwd = forward(params, &batch, BindMode::Inference)?;
        let logits = fwd.graph.value(fwd.logits);
        for i in 0..chunk.len() {
            out.push(logits.row(i).iter().map(|x| x.as_f64()).collect());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_concept_space, derive_language, Example};
    use crate::model::{encode, init_student, init_teacher, ModelConfig, Role};
    use crate::nncore::grad_check;

    fn config(role: Role) -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 8,
            vocab_size: 0,
            num_classes: 3,
            role,
        }
    }

    fn example(tokens: &[String]) -> Example {
        Example {
            tokens_a: tokens.to_vec(),
            tokens_b: None,
            label: None,
            language: "x".into(),
            domain: "d".into(),
            gold_concepts: None,
        }
    }

    fn student_and_batch() -> (ModelParams<f64>, EncodedBatch) {
        let space = build_concept_space(12, 0.5, 4, 1).unwrap();
        let ciphers =
            vec![derive_language(&space, "en", 1, 0.0, 1).unwrap(), derive_language(&space, "de", 2, 0.0, 2).unwrap()];
        let p = init_student(&config(Role::Student), &space, &ciphers, 0.3, 4).unwrap();
        let a = encode(&example(&ciphers[0].encode(&[0, 3, 5])), &p.vocab, 8).unwrap();
        let b = encode(&example(&ciphers[1].encode(&[7, 1])), &p.vocab, 8).unwrap();
        (p, EncodedBatch::new(&[&a, &b]))
    }

    #[test]
    fn padding_does_not_change_logits() {
        let (p, batch) = student_and_batch();
        let fwd = forward(&p, &batch, BindMode::Inference).unwrap();
        let wide = EncodedBatch {
            ids: batch.ids.chunks(batch.seq).flat_map(|r| r.iter().copied().chain([crate::model::PAD; 3])).collect(),
            mask: batch.mask.chunks(batch.seq).flat_map(|r| r.iter().copied().chain([false; 3])).collect(),
            batch: batch.batch,
            seq: batch.seq + 3,
        };
        let fwd2 = forward(&p, &wide, BindMode::Inference).unwrap();
        let (a, b) = (fwd.graph.value(fwd.logits), fwd2.graph.value(fwd2.logits));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trainable_vars_follow_param_order() {
        let (p, batch) = student_and_batch();
        let fwd = forward(&p, &batch, BindMode::Train { freeze_embeddings: false }).unwrap();
        let shapes: Vec<_> = fwd.trainable.iter().map(|&v| fwd.graph.value(v).shape().to_vec()).collect();
        let expected: Vec<_> = p.trainable(false).iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, expected);
        assert!(forward(&p, &batch, BindMode::Inference).unwrap().trainable.is_empty());
    }

    #[test]
    fn out_of_vocab_id_is_rejected() {
        let (p, mut batch) = student_and_batch();
        batch.ids[1] = p.vocab.len() as u32 + 5;
        assert!(forward(&p, &batch, BindMode::Inference).is_err());
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let (p, batch) = student_and_batch();
        let base = p.clone();
        let eval = |ts: &[Tensor<f64>]| {
            let mut q = base.clone();
            for (slot, t) in q.trainable_mut(false).into_iter().zip(ts) {
                *slot = t.clone();
            }
            let fwd = forward(&q, &batch, BindMode::Train { freeze_embeddings: false }).map_err(|e| match e {
                ModelError::Nn(e) => e,
                other => NnError::Domain(other.to_string()),
            })?;
            let mut g = fwd.graph;
            let loss = g.cross_entropy(fwd.logits, &[2, 0])?;
            let mut grads = g.backward(loss)?;
            let gs: Vec<Tensor<f64>> = fwd.trainable.iter().map(|&v| grads.take(v).unwrap()).collect();
            Ok((g.value(loss).data()[0], gs))
        };
        let params: Vec<Tensor<f64>> = p.trainable(false).into_iter().cloned().collect();
        let err = grad_check(eval, &params, 200, 1e-3, 1).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn teacher_forward_shapes() {
        let space = build_concept_space(12, 0.5, 4, 1).unwrap();
        let en = derive_language(&space, "en", 1, 0.0, 1).unwrap();
        let t: ModelParams<f32> = init_teacher(&config(Role::Teacher), &space, &en, 2).unwrap();
        let e = encode(&example(&en.encode(&[1, 2])), &t.vocab, 8).unwrap();
        let logits = predict_logits(&t, &[e.clone(), e.clone(), e], 2).unwrap();
        assert_eq!(logits.len(), 3);
        assert!(logits.iter().all(|r| r.len() == 3));
        assert_eq!(logits[0], logits[2]);
    }
}
