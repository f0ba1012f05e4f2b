//! Self-training: the student labels the source unlabeled pool itself,
//! round after round, without a teacher.

mod common;

use monox::evalx::{evaluate, Method};
use monox::pipelines::self_train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let src = setup.source_splits()?;
    let cfg = setup.train_config(1);
    println!("rounds {}, confidence threshold {}", cfg.self_train_rounds, cfg.confidence_threshold);

    let st = self_train(&setup.student_init(1)?, &src.train, &src.unlabeled, &src.dev, &cfg)?;
    println!("pseudo examples entering each round: {:?}", st.provenance.pseudo_counts);
    println!("best source dev {:.4}", st.best_dev_accuracy().unwrap_or(f64::NAN));

    let vanilla = setup.run_seed(1, &[Method::Vanilla])?;
    let vanilla = vanilla.params(Method::Vanilla).unwrap();
    for test in setup.test_sets() {
        println!(
            "{:<4} vanilla {:.4}  self_train {:.4}",
            test.language,
            evaluate(vanilla, test, 64)?.accuracy,
            evaluate(&st.params, test, 64)?.accuracy
        );
    }
    Ok(())
}
