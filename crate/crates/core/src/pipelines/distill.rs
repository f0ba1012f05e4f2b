use super::train::{check_task, encode_dataset, gold_labels, train_loop, LoopInput, Targets};
use super::{Params, PipelineError, TrainConfig, TrainedModel};
use crate::corpus::{Dataset, Split};
use crate::model::{predict_logits, Encoded, UNK};
use crate::nncore::{softmax_with_temperature, ProbDist};

/// Labeled source training data followed by source unlabeled data, in order.
pub fn build_distill_set(train: &Dataset, unlabeled: &Dataset) -> Result<Dataset, PipelineError> {
    if train.language != unlabeled.language {
        return Err(PipelineError::Config(format!(
            "distillation data must stay in one language: train is {}, unlabeled is {}",
            train.language, unlabeled.language
        )));
    }
    if train.task != unlabeled.task {
        return Err(PipelineError::Config("train and unlabeled tasks differ".into()));
    }
    let mut out = Dataset::new(train.task.clone(), Split::Train, &train.language, &train.domain);
    out.examples.extend(train.examples.iter().cloned());
    out.examples.extend(unlabeled.examples.iter().cloned());
    Ok(out)
}

/// Teacher distributions over a dataset, computed once.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherTargets {
    pub probs: Vec<ProbDist>,
    /// Example-level teacher forward passes spent producing `probs`.
    pub forwards: usize,
}

pub(crate) fn check_coverage(encoded: &[Encoded], ds: &Dataset) -> Result<(), PipelineError> {
    let unk = encoded
        .iter()
        .flat_map(|e| e.ids.iter().zip(&e.mask).filter(|(_, &m)| m).map(|(&id, _)| id))
        .filter(|&id| id == UNK)
        .count();
    if unk > 0 {
        return Err(PipelineError::Config(format!(
            "teacher vocabulary does not cover language {} ({unk} unknown tokens)",
            ds.language
        )));
    }
    Ok(())
}

/// `softmax(teacher_logits / T)` for every example of `ds`.
pub fn teacher_targets(
    teacher: &Params,
    ds: &Dataset,
    temperature: f64,
    batch_size: usize,
) -> Result<TeacherTargets, PipelineError> {
    check_task(teacher, ds)?;
    let encoded = encode_dataset(ds, teacher)?;
    check_coverage(&encoded, ds)?;
    let logits = predict_logits(teacher, &encoded, batch_size)?;
    let probs = logits.iter().map(|z| softmax_with_temperature(z, temperature)).collect::<Result<Vec<_>, _>>()?;
    Ok(TeacherTargets { probs, forwards: encoded.len() })
}

/// Trains the student on `kd_loss` against cached teacher distributions over
/// `d_c`. The teacher is only read.
pub fn distill(
    student_init: &Params,
    teacher: &TrainedModel,
    d_c: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    cfg.validate()?;
    if teacher.params.config.num_classes != student_init.config.num_classes {
        return Err(PipelineError::Config(format!(
            "teacher has {} classes, student {}",
            teacher.params.config.num_classes, student_init.config.num_classes
        )));
    }
    check_task(student_init, dev)?;
    let teacher_checksum = teacher.params.checksum();
    let targets = teacher_targets(&teacher.params, d_c, cfg.temperature, cfg.eval_batch_size)?;
    let train_enc = encode_dataset(d_c, student_init)?;
    let dev_enc = encode_dataset(dev, student_init)?;
    let dev_labels = gold_labels(dev, "dev")?;
    let mut model = train_loop(
        student_init,
        LoopInput {
            pipeline: "distill",
            train: &train_enc,
            targets: Targets::Soft {
                probs: &targets.probs,
                temperature: cfg.temperature,
                mode: cfg.kd_temperature_mode,
            },
            dev: &dev_enc,
            dev_labels: &dev_labels,
            datasets: vec![("distill".into(), d_c.fingerprint()), ("dev".into(), dev.fingerprint())],
        },
        cfg,
    )?;
    debug_assert_eq!(teacher.params.checksum(), teacher_checksum);
    model.provenance.teacher_forwards = Some(targets.forwards);
    model.provenance.teacher_checksum = Some(teacher_checksum);
    Ok(model)
}
