use super::distill::check_coverage;
use super::train::{check_task, encode_dataset, fine_tune_named};
use super::{Params, PipelineError, TrainConfig, TrainedModel};
use crate::corpus::{Dataset, Split};
use crate::model::predict_logits;
use crate::nncore::softmax_with_temperature;
use crate::seed;

/// A kept prediction on an unlabeled example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoLabel {
    pub index: usize,
    pub label: usize,
    /// Top softmax probability at temperature 1.
    pub confidence: f64,
}

/// Keeps rows whose top class probability is at least `threshold`.
pub fn filter_pseudo_labels(logits: &[Vec<f64>], threshold: f64) -> Result<Vec<PseudoLabel>, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::Config(format!("confidence threshold must be in [0, 1], got {threshold}")));
    }
    let mut kept = Vec::new();
    for (index, z) in logits.iter().enumerate() {
        let p = softmax_with_temperature(z, 1.0)?;
        let confidence = p.max();
        if confidence >= threshold {
            kept.push(PseudoLabel { index, label: p.argmax(), confidence });
        }
    }
    Ok(kept)
}

/// Labels `unlabeled` with `labeler`'s argmax, dropping examples below the
/// confidence threshold. Any label already on an example is ignored.
pub fn generate_pseudo_labels(
    labeler: &Params,
    unlabeled: &Dataset,
    threshold: f64,
    batch_size: usize,
) -> Result<Dataset, PipelineError> {
    check_task(labeler, unlabeled)?;
    let encoded = encode_dataset(unlabeled, labeler)?;
    check_coverage(&encoded, unlabeled)?;
    let logits = predict_logits(labeler, &encoded, batch_size)?;
    let mut out = Dataset::new(unlabeled.task.clone(), Split::Train, &unlabeled.language, &unlabeled.domain);
    for p in filter_pseudo_labels(&logits, threshold)? {
        let mut ex = unlabeled.examples[p.index].clone();
        ex.label = Some(p.label);
        out.examples.push(ex);
    }
    Ok(out)
}

fn concat(train: &Dataset, extra: &Dataset) -> Result<Dataset, PipelineError> {
    if train.language != extra.language || train.task != extra.task {
        return Err(PipelineError::Config(format!(
            "cannot mix {} training data with {} pseudo data",
            train.language, extra.language
        )));
    }
    let mut out = train.clone();
    out.examples.extend(extra.examples.iter().cloned());
    Ok(out)
}

/// Cross-entropy fine-tuning on the training set followed by the
/// pseudo-labeled set.
pub fn train_pseudo_label(
    student_init: &Params,
    train: &Dataset,
    pseudo: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    let combined = concat(train, pseudo)?;
    let mut model = fine_tune_named("pseudo_label", student_init, &combined, dev, cfg)?;
    model.provenance.pseudo_counts = vec![pseudo.len()];
    Ok(model)
}

/// Alternates fine-tuning the student and relabeling `unlabeled` with that
/// same student. Each round replaces the previous round's pseudo data and
/// continues from the previous round's parameters; the best-dev round wins.
pub fn self_train(
    student_init: &Params,
    train: &Dataset,
    unlabeled: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    cfg.validate()?;
    let mut current = student_init.clone();
    let mut pseudo = Dataset::new(train.task.clone(), Split::Train, &train.language, &train.domain);
    let mut best: Option<TrainedModel> = None;
    let mut counts = Vec::new();
    for round in 0..cfg.self_train_rounds {
        let round_cfg = TrainConfig {
            seed: if round == 0 { cfg.seed } else { seed::derive(cfg.seed, &format!("self-train/round/{round}")) },
            ..cfg.clone()
        };
        counts.push(pseudo.len());
        let combined = concat(train, &pseudo)?;
        let model = fine_tune_named("self_train", &current, &combined, dev, &round_cfg)?;
        let improved = match &best {
            None => true,
            Some(b) => model.best_dev_accuracy() > b.best_dev_accuracy(),
        };
        current = model.params.clone();
        if improved {
            best = Some(model);
        }
        if round + 1 < cfg.self_train_rounds {
            pseudo = generate_pseudo_labels(&current, unlabeled, cfg.confidence_threshold, cfg.eval_batch_size)?;
        }
    }
    let mut best = best.expect("at least one round");
    best.provenance.config = cfg.clone();
    best.provenance.init_checksum = student_init.checksum();
    best.provenance.pseudo_counts = counts;
    Ok(best)
}
