//! The main comparison: every method trained on source data only, evaluated
//! on every language, averaged over seeds, plus paired agreement with each
//! model's own source predictions.

mod common;

use monox::evalx::{evaluate, paired_agreement, Method, ReportTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let seeds = [1, 2];
    let tests = setup.test_sets();
    let columns: Vec<String> = tests.iter().map(|t| t.language.clone()).collect();
    let src = columns.iter().position(|l| *l == setup.source).unwrap();

    // values[method][seed][language]
    let mut values = vec![Vec::new(); Method::ALL.len()];
    let mut agreement = vec![vec![0.0; tests.len()]; Method::ALL.len()];
    for &s in &seeds {
        let run = setup.run_seed(s, &Method::ALL)?;
        for (mi, &m) in Method::ALL.iter().enumerate() {
            let p = run.params(m).unwrap();
            let results = tests.iter().map(|t| evaluate(p, t, 64)).collect::<Result<Vec<_>, _>>()?;
            for (li, r) in results.iter().enumerate() {
                agreement[mi][li] += paired_agreement(&results[src], r)? / seeds.len() as f64;
            }
            values[mi].push(results.iter().map(|r| r.accuracy).collect());
        }
    }
    let names: Vec<String> = Method::ALL.iter().map(|m| m.name().to_string()).collect();
    let table = ReportTable::from_seeds(&names, &columns, &values)?;
    print!("{}", table.to_csv());

    println!("\nagreement with own {} predictions", setup.source);
    for (name, row) in names.iter().zip(&agreement) {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.3}")).collect();
        println!("{name:<10} {}", cells.join(" "));
    }
    Ok(())
}
