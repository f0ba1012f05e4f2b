use rand::seq::SliceRandom;

use super::loss::{ce_loss, kd_loss};
use super::{DevPoint, KdTemperatureMode, Params, PipelineError, Provenance, TrainConfig, TrainedModel};
use crate::corpus::Dataset;
use crate::model::{encode, forward, predict_logits, BindMode, Encoded, EncodedBatch};
use crate::nncore::{argmax, AdamConfig, AdamState, ProbDist, Tensor};
use crate::seed;

/// Encodes a dataset with the model's own vocabulary and sequence length.
pub fn encode_dataset(ds: &Dataset, params: &Params) -> Result<Vec<Encoded>, PipelineError> {
    ds.examples.iter().map(|ex| Ok(encode(ex, &params.vocab, params.config.max_seq_len)?)).collect()
}

/// Argmax class per example; ties go to the lowest index.
pub fn predict_labels(params: &Params, encoded: &[Encoded], batch_size: usize) -> Result<Vec<usize>, PipelineError> {
    Ok(predict_logits(params, encoded, batch_size)?.iter().map(|row| argmax(row)).collect())
}

/// Fraction of labeled examples the model classifies correctly.
pub fn accuracy(params: &Params, ds: &Dataset, batch_size: usize) -> Result<f64, PipelineError> {
    let labels = gold_labels(ds, "evaluation")?;
    if labels.is_empty() {
        return Err(PipelineError::Config(format!("{} {} set is empty", ds.language, ds.split)));
    }
    let pred = predict_labels(params, &encode_dataset(ds, params)?, batch_size)?;
    Ok(agreement(&pred, &labels))
}

fn agreement(pred: &[usize], gold: &[usize]) -> f64 {
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

pub(crate) fn gold_labels(ds: &Dataset, role: &str) -> Result<Vec<usize>, PipelineError> {
    ds.examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            ex.label.ok_or_else(|| {
                PipelineError::Config(format!("{role} set {}/{}: example {i} has no label", ds.language, ds.split))
            })
        })
        .collect()
}

pub(crate) fn check_task(params: &Params, ds: &Dataset) -> Result<(), PipelineError> {
    if ds.task.num_classes() != params.config.num_classes {
        return Err(PipelineError::Config(format!(
            "dataset has {} classes, model {}",
            ds.task.num_classes(),
            params.config.num_classes
        )));
    }
    Ok(())
}

pub(crate) enum Targets<'a> {
    Hard(&'a [usize]),
    Soft { probs: &'a [ProbDist], temperature: f64, mode: KdTemperatureMode },
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Hard(y) => y.len(),
            Targets::Soft { probs, .. } => probs.len(),
        }
    }
}

pub(crate) struct LoopInput<'a> {
    pub pipeline: &'a str,
    pub train: &'a [Encoded],
    pub targets: Targets<'a>,
    pub dev: &'a [Encoded],
    pub dev_labels: &'a [usize],
    pub datasets: Vec<(String, String)>,
}

/// Minibatch Adam with periodic dev evaluation; returns the parameters of the
/// best dev step (ties keep the earliest).
pub(crate) fn train_loop(
    init: &Params,
    input: LoopInput<'_>,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    cfg.validate()?;
    let n = input.train.len();
    if n == 0 {
        return Err(PipelineError::Config(format!("{}: training set is empty", input.pipeline)));
    }
    if input.targets.len() != n {
        return Err(PipelineError::Config("targets do not match the training set".into()));
    }
    if input.dev.is_empty() || input.dev.len() != input.dev_labels.len() {
        return Err(PipelineError::Config(format!("{}: dev set is empty or unlabeled", input.pipeline)));
    }
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.max_steps.unwrap_or(cfg.epochs * steps_per_epoch);

    let mut params = init.clone();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), params.trainable(cfg.freeze_embeddings));
    let dev_acc = |p: &Params| -> Result<f64, PipelineError> {
        Ok(agreement(&predict_labels(p, input.dev, cfg.eval_batch_size)?, input.dev_labels))
    };

    let mut curve = vec![DevPoint { step: 0, accuracy: dev_acc(&params)? }];
    let mut best = (0usize, curve[0].accuracy, params.clone());
    let mut stale = 0usize;
    let mut order: Vec<usize> = Vec::new();
    let mut step = 0;
    while step < total_steps {
        let epoch = step / steps_per_epoch;
        let pos = step % steps_per_epoch;
        if pos == 0 {
            order = (0..n).collect();
            order.shuffle(&mut seed::stream(cfg.seed, &format!("train/shuffle/{epoch}")));
        }
        let idx = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(n)];
        train_step(&mut params, &mut adam, &input, idx, cfg)?;
        step += 1;

        if step % cfg.eval_every == 0 || step == total_steps {
            let accuracy = dev_acc(&params)?;
            curve.push(DevPoint { step, accuracy });
            if accuracy > best.1 {
                best = (step, accuracy, params.clone());
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
    }

    Ok(TrainedModel {
        params: best.2,
        provenance: Provenance {
            pipeline: input.pipeline.to_string(),
            config: cfg.clone(),
            init_checksum: init.checksum(),
            datasets: input.datasets,
            dev_curve: curve,
            best_step: best.0,
            steps_run: step,
            teacher_forwards: None,
            teacher_checksum: None,
            pseudo_counts: Vec::new(),
        },
    })
}

fn train_step(
    params: &mut Params,
    adam: &mut AdamState<f32>,
    input: &LoopInput<'_>,
    idx: &[usize],
    cfg: &TrainConfig,
) -> Result<(), PipelineError> {
    let items: Vec<&Encoded> = idx.iter().map(|&i| &input.train[i]).collect();
    let batch = EncodedBatch::new(&items);
    let fwd = forward(params, &batch, BindMode::Train { freeze_embeddings: cfg.freeze_embeddings })?;
    let mut g = fwd.graph;
    let loss = match &input.targets {
        Targets::Hard(labels) => {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            ce_loss(&mut g, fwd.logits, &y)?
        }
        Targets::Soft { probs, temperature, mode } => {
            let q: Vec<ProbDist> = idx.iter().map(|&i| probs[i].clone()).collect();
            kd_loss(&mut g, fwd.logits, &q, *temperature, *mode)?
        }
    };
    let mut grads = g.backward(loss)?;
    let grads: Vec<Tensor<f32>> =
        fwd.trainable.iter().map(|&v| grads.take(v).expect("every trainable leaf has a gradient")).collect();
    let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
    adam.step(&mut params.trainable_mut(cfg.freeze_embeddings), &grad_refs)?;
    Ok(())
}

/// Vanilla fine-tuning with cross-entropy on labeled data.
pub fn fine_tune(
    init: &Params,
    train: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    fine_tune_named("fine_tune", init, train, dev, cfg)
}

pub(crate) fn fine_tune_named(
    pipeline: &str,
    init: &Params,
    train: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    check_task(init, train)?;
    check_task(init, dev)?;
    if train.task != dev.task {
        return Err(PipelineError::Config("train and dev tasks differ".into()));
    }
    let labels = gold_labels(train, "training")?;
    let dev_labels = gold_labels(dev, "dev")?;
    let train_enc = encode_dataset(train, init)?;
    let dev_enc = encode_dataset(dev, init)?;
    train_loop(
        init,
        LoopInput {
            pipeline,
            train: &train_enc,
            targets: Targets::Hard(&labels),
            dev: &dev_enc,
            dev_labels: &dev_labels,
            datasets: vec![("train".into(), train.fingerprint()), ("dev".into(), dev.fingerprint())],
        },
        cfg,
    )
}
