//! Builds a concept space, derives three cipher languages, and generates the
//! sentiment and sentence-pair corpora. Shows that test sets are paired
//! translations and that every stored label matches the oracle.

use monox::corpus::{
    build_concept_space, generate_pair_dataset, generate_sentiment_dataset, oracle_label, translate, Dataset,
    LanguageRegistry, PairSpec, SentimentSpec, SplitSizes,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = build_concept_space(200, 0.4, 16, 7)?;
    println!("{} concepts, {} polar", space.num_concepts(), space.num_polar());

    let mut registry = LanguageRegistry::new();
    registry.derive_language(&space, "en", 1, 0.0, 7)?;
    registry.derive_language(&space, "de", 2, 0.0, 7)?;
    registry.derive_language(&space, "ja", 4, 0.0, 7)?;
    assert!(registry.derive_language(&space, "de", 3, 0.0, 7).is_err());
    let ciphers = registry.into_languages();

    let sizes = SplitSizes { train: 200, unlabeled: 400, dev: 50, test: 100 };
    let sentiment = generate_sentiment_dataset(
        &space,
        &ciphers,
        &SentimentSpec { sizes, sentence_len: (6, 12), margin: 1, polar_rate: 0.4, domain: "books".into() },
        7,
    )?;
    println!("sentiment corpus fingerprint {}", sentiment.fingerprint());

    let en = &sentiment.language("en").unwrap().test;
    let ja = &sentiment.language("ja").unwrap().test;
    for i in 0..2 {
        println!("en [{}] {}", en.examples[i].label.unwrap(), en.examples[i].tokens_a.join(" "));
        println!("ja [{}] {}", ja.examples[i].label.unwrap(), ja.examples[i].tokens_a.join(" "));
    }
    let paired =
        en.examples.iter().zip(&ja.examples).all(|(a, b)| a.gold_concepts == b.gold_concepts && a.label == b.label);
    println!("en/ja test sets paired: {paired}");

    let back = translate(&translate(&en.examples[0], &ciphers[2])?, &ciphers[0])?;
    println!("en -> ja -> en round trip exact: {}", back == en.examples[0]);

    let pairs = generate_pair_dataset(
        &space,
        &ciphers,
        &PairSpec { sizes, sentence_len: (5, 9), polar_rate: 0.4, domain: "nli".into() },
        7,
    )?;
    let train = &pairs.language("de").unwrap().train;
    let agree =
        train.examples.iter().filter(|ex| oracle_label(&space, ex.gold_concepts.as_ref().unwrap()) == ex.label).count();
    println!("pair task: oracle agrees on {agree}/{} de train labels", train.len());

    let text = train.to_tsv();
    let reread = Dataset::from_tsv(&text, train.task.clone())?;
    println!("tsv round trip exact: {}", &reread == train);
    println!("first record: {}", text.lines().next().unwrap());
    Ok(())
}
