//! Record format, one example per line, tab-separated UTF-8:
//!
//! ```text
//! split  language  domain  label|-  tokens_a  tokens_b|-  gold_concepts|-
//! ```
//!
//! Token fields are space-separated. `gold_concepts` is the space-separated
//! concept ids of sentence a, followed by `|` and those of sentence b for
//! pair tasks.

use super::{Example, GoldConcepts, Split};

const MISSING: &str = "-";

fn join_ids(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_record(split: Split, ex: &Example) -> String {
    let label = ex.label.map_or_else(|| MISSING.to_string(), |y| y.to_string());
    let b = ex.tokens_b.as_ref().map_or_else(|| MISSING.to_string(), |t| t.join(" "));
    let gold = match &ex.gold_concepts {
        None => MISSING.to_string(),
        Some(GoldConcepts { a, b: None }) => join_ids(a),
        Some(GoldConcepts { a, b: Some(b) }) => format!("{}|{}", join_ids(a), join_ids(b)),
    };
    [split.as_str(), &ex.language, &ex.domain, &label, &ex.tokens_a.join(" "), &b, &gold].join("\t")
}

fn parse_ids(s: &str) -> Result<Vec<u32>, String> {
    s.split(' ').map(|t| t.parse::<u32>().map_err(|e| format!("bad concept id {t:?}: {e}"))).collect()
}

fn parse_tokens(s: &str) -> Result<Vec<String>, String> {
    if s.is_empty() {
        return Err("empty token field".into());
    }
    Ok(s.split(' ').map(str::to_string).collect())
}

pub fn parse_record(line: &str) -> Result<(Split, Example), String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 tab-separated fields, found {}", fields.len()));
    }
    let split: Split = fields[0].parse().map_err(|e| format!("{e}"))?;
    let label = match fields[3] {
        MISSING => None,
        s => Some(s.parse::<usize>().map_err(|e| format!("bad label {s:?}: {e}"))?),
    };
    let tokens_a = parse_tokens(fields[4])?;
    let tokens_b = match fields[5] {
        MISSING => None,
        s => Some(parse_tokens(s)?),
    };
    let gold_concepts = match fields[6] {
        MISSING => None,
        s => Some(match s.split_once('|') {
            Some((a, b)) => GoldConcepts { a: parse_ids(a)?, b: Some(parse_ids(b)?) },
            None => GoldConcepts { a: parse_ids(s)?, b: None },
        }),
    };
    Ok((
        split,
        Example {
            tokens_a,
            tokens_b,
            label,
            language: fields[1].to_string(),
            domain: fields[2].to_string(),
            gold_concepts,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_layout() {
        let ex = Example {
            tokens_a: vec!["de_w0001".into(), "de_w0042".into()],
            tokens_b: None,
            label: None,
            language: "de".into(),
            domain: "books".into(),
            gold_concepts: Some(GoldConcepts { a: vec![7, 3], b: None }),
        };
        assert_eq!(write_record(Split::Unlabeled, &ex), "unlabeled\tde\tbooks\t-\tde_w0001 de_w0042\t-\t7 3");
    }

    #[test]
    fn rejects_wrong_field_count() {
        assert!(parse_record("train\ten\tx\t1").is_err());
    }

    fn token() -> impl Strategy<Value = String> {
        "[a-z]{2}_w[0-9]{4}"
    }

    proptest! {
        #[test]
        fn record_round_trip(
            a in prop::collection::vec(token(), 1..8),
            b in prop::option::of(prop::collection::vec(token(), 1..8)),
            label in prop::option::of(0usize..3),
            gold_a in prop::collection::vec(0u32..5000, 1..8),
            gold_b in prop::option::of(prop::collection::vec(0u32..5000, 1..8)),
        ) {
            let ex = Example {
                tokens_a: a,
                tokens_b: b,
                label,
                language: "fr".into(),
                domain: "dvd".into(),
                gold_concepts: Some(GoldConcepts { a: gold_a, b: gold_b }),
            };
            let line = write_record(Split::Dev, &ex);
            prop_assert_eq!(parse_record(&line).unwrap(), (Split::Dev, ex));
        }
    }
}
