//! Finite-difference check of backpropagation through the whole student
//! encoder, for cross-entropy and for the distillation loss at two
//! temperatures, in 64-bit precision.

use monox::corpus::{build_concept_space, derive_language, Example};
use monox::model::{encode, init_student, EncodedBatch, ModelConfig, ModelParams, Role};
use monox::nncore::softmax_with_temperature;
use monox::pipelines::{model_grad_check, CheckedLoss, KdTemperatureMode};

fn sentence(tokens: Vec<String>) -> Example {
    Example {
        tokens_a: tokens,
        tokens_b: None,
        label: None,
        language: "x".into(),
        domain: "d".into(),
        gold_concepts: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = build_concept_space(16, 0.5, 8, 3)?;
    let ciphers = vec![derive_language(&space, "en", 1, 0.0, 3)?, derive_language(&space, "de", 2, 0.0, 3)?];
    let config = ModelConfig {
        num_layers: 1,
        hidden_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        max_seq_len: 10,
        vocab_size: 0,
        num_classes: 2,
        role: Role::Student,
    };
    let params: ModelParams<f64> = init_student(&config, &space, &ciphers, 0.3, 5)?;
    let items = [
        encode(&sentence(ciphers[0].encode(&[0, 4, 9, 2])), &params.vocab, 10)?,
        encode(&sentence(ciphers[1].encode(&[11, 3])), &params.vocab, 10)?,
        encode(&sentence(ciphers[0].encode(&[7, 7, 1])), &params.vocab, 10)?,
    ];
    let batch = EncodedBatch::new(&items.iter().collect::<Vec<_>>());
    println!("{} trainable parameters", params.num_trainable_parameters(false));

    let err = model_grad_check(&params, &batch, CheckedLoss::CrossEntropy(&[1, 0, 1]), false, 150, 1e-3, 1)?;
    println!("cross-entropy      max relative error {err:.2e}");

    let teacher_logits = [[1.5, -0.5], [0.2, 0.9], [-2.0, 1.0]];
    for t in [0.1, 1.0] {
        let targets = teacher_logits.iter().map(|z| softmax_with_temperature(z, t)).collect::<Result<Vec<_>, _>>()?;
        let loss = CheckedLoss::Distill { targets: &targets, temperature: t, mode: KdTemperatureMode::Both };
        let err = model_grad_check(&params, &batch, loss, false, 150, 1e-3, 2)?;
        println!("distillation T={t:<4} max relative error {err:.2e}");
    }
    Ok(())
}
