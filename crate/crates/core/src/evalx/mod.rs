//! Zero-shot evaluation, report tables, sweep curves, and the experiment
//! runner shared by the command line and the acceptance suite.

mod experiment;
mod table;

pub use experiment::{
    data_size_sweep, nested_subsets, temperature_sweep, ExperimentSetup, Method, MethodRun, SeedRun, SizeSweep,
    TemperatureSweep,
};
pub use table::{curves_to_table, mean, population_std, ReportRow, ReportTable, SweepAxis, SweepCurve, SweepPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Dataset};
use crate::model::ModelError;
use crate::pipelines::{encode_dataset, predict_labels, Params, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl EvalError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, EvalError::Pipeline(e) if e.is_numeric())
    }
}

/// Accuracy and confusion counts of one model on one labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub language: String,
    pub domain: String,
    pub num_examples: usize,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

/// Argmax predictions of `model` on `test`, tokenized with the model's own
/// vocabulary (uncovered tokens become `[UNK]`).
pub fn evaluate(model: &Params, test: &Dataset, batch_size: usize) -> Result<EvalResult, EvalError> {
    let k = test.task.num_classes();
    if k != model.config.num_classes {
        return Err(EvalError::Config(format!("test set has {k} classes, model {}", model.config.num_classes)));
    }
    if test.is_empty() {
        return Err(EvalError::Config(format!("{} test set is empty", test.language)));
    }
    let gold: Vec<usize> = test
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            ex.label.ok_or_else(|| EvalError::Config(format!("{} test example {i} has no label", test.language)))
        })
        .collect::<Result<_, _>>()?;
    let predictions = predict_labels(model, &encode_dataset(test, model)?, batch_size)?;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&g, &p) in gold.iter().zip(&predictions) {
        confusion[g][p] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(EvalResult {
        language: test.language.clone(),
        domain: test.domain.clone(),
        num_examples: gold.len(),
        accuracy: correct as f64 / gold.len() as f64,
        confusion,
        predictions,
    })
}

/// Fraction of examples on which two evaluations over translated test sets
/// predict the same class.
pub fn paired_agreement(a: &EvalResult, b: &EvalResult) -> Result<f64, EvalError> {
    if a.predictions.len() != b.predictions.len() || a.predictions.is_empty() {
        return Err(EvalError::Config(format!("{} and {} test sets are not paired", a.language, b.language)));
    }
    let same = a.predictions.iter().zip(&b.predictions).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.predictions.len() as f64)
}

fn column_name(ds: &Dataset, multi_domain: bool) -> String {
    if multi_domain {
        format!("{}/{}", ds.language, ds.domain)
    } else {
        ds.language.clone()
    }
}

/// One row per method, one column per test set, plus the unweighted average.
pub fn zero_shot_report(
    methods: &[(String, &Params)],
    tests: &[&Dataset],
    batch_size: usize,
) -> Result<ReportTable, EvalError> {
    if tests.is_empty() {
        return Err(EvalError::Config("zero-shot report needs at least one test set".into()));
    }
    let task = &tests[0].task;
    if tests.iter().any(|t| &t.task != task) {
        return Err(EvalError::Config("test sets disagree on the task".into()));
    }
    let multi_domain = tests.iter().any(|t| t.domain != tests[0].domain);
    let columns: Vec<String> = tests.iter().map(|t| column_name(t, multi_domain)).collect();
    let mut values = Vec::with_capacity(methods.len());
    for (_, params) in methods {
        let row = tests
            .iter()
            .map(|t| Ok(evaluate(params, t, batch_size)?.accuracy))
            .collect::<Result<Vec<f64>, EvalError>>()?;
        values.push(vec![row]);
    }
    let names: Vec<String> = methods.iter().map(|(n, _)| n.clone()).collect();
    ReportTable::from_seeds(&names, &columns, &values)
}

/// Source-language accuracies of the teacher and the vanilla student.
pub fn gap_study(
    teacher: &Params,
    student: &Params,
    source_test: &Dataset,
    batch_size: usize,
) -> Result<(EvalResult, EvalResult), EvalError> {
    Ok((evaluate(teacher, source_test, batch_size)?, evaluate(student, source_test, batch_size)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(lang: &str, predictions: Vec<usize>) -> EvalResult {
        EvalResult {
            language: lang.into(),
            domain: "d".into(),
            num_examples: predictions.len(),
            accuracy: 0.0,
            confusion: vec![],
            predictions,
        }
    }

    #[test]
    fn paired_agreement_counts_matches() {
        let a = result("en", vec![0, 1, 1, 0]);
        let b = result("de", vec![0, 1, 0, 0]);
        assert_eq!(paired_agreement(&a, &b).unwrap(), 0.75);
        assert!(paired_agreement(&a, &result("fr", vec![0])).is_err());
    }
}
