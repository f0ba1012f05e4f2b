use super::loss::{ce_loss, kd_loss};
use super::{KdTemperatureMode, PipelineError};
use crate::model::{forward, BindMode, EncodedBatch, ModelError, ModelParams};
use crate::nncore::{grad_check, NnError, ProbDist, Tensor};

/// The training objective to differentiate.
#[derive(Clone, Copy, Debug)]
pub enum CheckedLoss<'a> {
    CrossEntropy(&'a [usize]),
    Distill { targets: &'a [ProbDist], temperature: f64, mode: KdTemperatureMode },
}

/// Largest relative error between backpropagated and central-difference
/// gradients of `loss` with respect to every trainable tensor of `params`.
pub fn model_grad_check(
    params: &ModelParams<f64>,
    batch: &EncodedBatch,
    loss: CheckedLoss<'_>,
    freeze_embeddings: bool,
    num_samples: usize,
    h: f64,
    sample_seed: u64,
) -> Result<f64, PipelineError> {
    let mode = BindMode::Train { freeze_embeddings };
    let eval = |ts: &[Tensor<f64>]| -> Result<(f64, Vec<Tensor<f64>>), NnError> {
        let mut p = params.clone();
        for (slot, t) in p.trainable_mut(freeze_embeddings).into_iter().zip(ts) {
            *slot = t.clone();
        }
        let fwd = forward(&p, batch, mode).map_err(|e| match e {
            ModelError::Nn(e) => e,
            other => NnError::Domain(other.to_string()),
        })?;
        let mut g = fwd.graph;
        let l = match loss {
            CheckedLoss::CrossEntropy(labels) => ce_loss(&mut g, fwd.logits, labels)?,
            CheckedLoss::Distill { targets, temperature, mode } => {
                kd_loss(&mut g, fwd.logits, targets, temperature, mode)?
            }
        };
        let mut grads = g.backward(l)?;
        let gs = fwd.trainable.iter().map(|&v| grads.take(v).expect("every trainable leaf has a gradient")).collect();
        Ok((g.value(l).data()[0], gs))
    };
    let start: Vec<Tensor<f64>> = params.trainable(freeze_embeddings).into_iter().cloned().collect();
    Ok(grad_check(eval, &start, num_samples, h, sample_seed)?)
}
