//! Distills the multilingual student from a frozen source-language teacher
//! and compares it with vanilla fine-tuning on every language.

mod common;

use monox::evalx::evaluate;
use monox::pipelines::{build_distill_set, distill, fine_tune, teacher_targets};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let src = setup.source_splits()?;
    let cfg = setup.train_config(1);

    let teacher = fine_tune(&setup.teacher_init(1)?, &src.train, &src.dev, &cfg)?;
    let student = setup.student_init(1)?;

    let d_c = build_distill_set(&src.train, &src.unlabeled)?;
    let cached = teacher_targets(&teacher.params, &d_c, cfg.temperature, 64)?;
    println!(
        "distillation set: {} examples, first target at T={} {:?}",
        d_c.len(),
        cfg.temperature,
        cached.probs[0].as_slice()
    );

    let before = teacher.params.checksum();
    let kd = distill(&student, &teacher, &d_c, &src.dev, &cfg)?;
    assert_eq!(before, teacher.params.checksum());
    println!(
        "teacher forwards {} (one per distillation example), best dev step {}",
        kd.provenance.teacher_forwards.unwrap(),
        kd.provenance.best_step
    );

    let vanilla = fine_tune(&student, &src.train, &src.dev, &cfg)?;
    println!("{:<6} {:>8} {:>8}", "lang", "vanilla", "kd");
    for test in setup.test_sets() {
        let v = evaluate(&vanilla.params, test, 64)?;
        let k = evaluate(&kd.params, test, 64)?;
        println!("{:<6} {:>8.4} {:>8.4}", test.language, v.accuracy, k.accuracy);
    }
    Ok(())
}
