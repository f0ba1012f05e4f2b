//! Teacher pseudo labels on source unlabeled data: how many survive each
//! confidence threshold, how many are correct, and the student trained on
//! them.

mod common;

use monox::corpus::oracle_label;
use monox::evalx::evaluate;
use monox::model::predict_logits;
use monox::pipelines::{encode_dataset, filter_pseudo_labels, fine_tune, generate_pseudo_labels, train_pseudo_label};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let src = setup.source_splits()?;
    let cfg = setup.train_config(1);
    let teacher = fine_tune(&setup.teacher_init(1)?, &src.train, &src.dev, &cfg)?;

    let logits = predict_logits(&teacher.params, &encode_dataset(&src.unlabeled, &teacher.params)?, 64)?;
    for c in [0.0, 0.5, 0.9, 0.99, 1.0] {
        println!("threshold {c:<4} keeps {}/{}", filter_pseudo_labels(&logits, c)?.len(), logits.len());
    }

    let pseudo = generate_pseudo_labels(&teacher.params, &src.unlabeled, cfg.confidence_threshold, 64)?;
    let correct = pseudo
        .examples
        .iter()
        .filter(|ex| ex.label == oracle_label(&setup.space, ex.gold_concepts.as_ref().unwrap()))
        .count();
    println!("pseudo labels matching the gold rule: {correct}/{}", pseudo.len());

    let pl = train_pseudo_label(&setup.student_init(1)?, &src.train, &pseudo, &src.dev, &cfg)?;
    for test in setup.test_sets() {
        println!("{} {:.4}", test.language, evaluate(&pl.params, test, 64)?.accuracy);
    }
    Ok(())
}
