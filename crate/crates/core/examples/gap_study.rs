//! Source-language accuracy of the monolingual teacher against the
//! multilingual student fine-tuned on the same data.

mod common;

use monox::evalx::{gap_study, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let run = setup.run_seed(1, &[Method::Teacher, Method::Vanilla])?;
    let source_test = &setup.source_splits()?.test;
    let (teacher, student) =
        gap_study(run.params(Method::Teacher).unwrap(), run.params(Method::Vanilla).unwrap(), source_test, 64)?;
    println!("{} test, {} examples", source_test.language, source_test.len());
    println!("teacher  {:.4}", teacher.accuracy);
    println!("student  {:.4}", student.accuracy);
    println!("gap      {:+.2} points", 100.0 * (teacher.accuracy - student.accuracy));
    println!("teacher confusion {:?}", teacher.confusion);
    Ok(())
}
