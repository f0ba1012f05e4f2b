use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::run_dir::{to_json, MethodMetrics, RunDir};
use super::{CliError, RunConfig};
use crate::evalx::{
    curves_to_table, data_size_sweep, evaluate, paired_agreement, temperature_sweep, ExperimentSetup, Method,
    ReportTable,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Generate the corpus into the run directory.
    GenCorpus,
    /// Fine-tune the monolingual teacher on source data.
    TrainTeacher,
    /// Fine-tune the multilingual student on source data.
    Finetune,
    /// Distill the student from a trained teacher.
    Distill,
    /// Train the student on teacher pseudo labels.
    PseudoLabel,
    /// Self-training baseline.
    SelfTrain,
    /// Zero-shot evaluation of every trained checkpoint.
    Evaluate,
    /// Tables and report.json from evaluation metrics.
    Report,
    /// Accuracy against training-set size.
    SweepSize,
    /// Distillation dev accuracy against temperature.
    SweepTemp,
    /// Corpus, all methods, evaluation and report.
    FullExperiment,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::GenCorpus,
        Command::TrainTeacher,
        Command::Finetune,
        Command::Distill,
        Command::PseudoLabel,
        Command::SelfTrain,
        Command::Evaluate,
        Command::Report,
        Command::SweepSize,
        Command::SweepTemp,
        Command::FullExperiment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenCorpus => "gen-corpus",
            Command::TrainTeacher => "train-teacher",
            Command::Finetune => "finetune",
            Command::Distill => "distill",
            Command::PseudoLabel => "pseudo-label",
            Command::SelfTrain => "self-train",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
            Command::SweepSize => "sweep-size",
            Command::SweepTemp => "sweep-temp",
            Command::FullExperiment => "full-experiment",
        }
    }

    /// The method a single-method training command produces.
    fn trains(self) -> Option<Method> {
        match self {
            Command::TrainTeacher => Some(Method::Teacher),
            Command::Finetune => Some(Method::Vanilla),
            Command::Distill => Some(Method::Kd),
            Command::PseudoLabel => Some(Method::Pl),
            Command::SelfTrain => Some(Method::SelfTrain),
            _ => None,
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::config("command", format!("unknown command {s:?}")))
    }
}

/// What a finished command leaves behind.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    /// Human-readable result, printed by the binary.
    pub summary: String,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    setup: ExperimentSetup,
    dir: RunDir,
    seeds: Vec<u64>,
    fingerprint: String,
}

/// Runs `cfg.command` against the run directory named by `cfg.output`.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let command: Command = cfg.command.parse()?;
    let start = Instant::now();
    let setup = cfg.build_setup()?;
    let dir = RunDir::create(&cfg.run_dir())?;
    let fingerprint = dir.ensure_corpus(&setup.corpus)?;
    dir.write("config.toml", cfg.to_toml().as_bytes())?;
    let ctx = Ctx { cfg, setup, dir, seeds: cfg.seed_plan(), fingerprint };
    let summary = match command {
        Command::GenCorpus => gen_corpus_summary(&ctx),
        Command::Evaluate => evaluate_all(&ctx)?,
        Command::Report => report(&ctx, start)?,
        Command::SweepSize => sweep_size(&ctx)?,
        Command::SweepTemp => sweep_temp(&ctx)?,
        Command::FullExperiment => {
            let mut methods = cfg.experiment.methods.clone();
            if methods.iter().any(|m| m.needs_teacher()) && !methods.contains(&Method::Teacher) {
                methods.insert(0, Method::Teacher);
            }
            train_methods(&ctx, &methods, true)?;
            evaluate_all(&ctx)?;
            report(&ctx, start)?
        }
        c => {
            let method = c.trains().expect("training command");
            train_methods(&ctx, &[method], false)?
        }
    };
    Ok(Outcome { run_dir: ctx.dir.root().to_path_buf(), summary })
}

fn gen_corpus_summary(ctx: &Ctx<'_>) -> String {
    let mut s = format!("corpus fingerprint {}\n", ctx.fingerprint);
    for (lang, splits) in &ctx.setup.corpus.languages {
        s.push_str(&format!(
            "{lang}: train {} unlabeled {} dev {} test {}\n",
            splits.train.len(),
            splits.unlabeled.len(),
            splits.dev.len(),
            splits.test.len()
        ));
    }
    s
}

/// Trains each method for every seed, skipping checkpoints already on disk.
/// With `auto_teacher` unset, methods that read the teacher require its
/// checkpoint to exist.
fn train_methods(ctx: &Ctx<'_>, methods: &[Method], auto_teacher: bool) -> Result<String, CliError> {
    let train = &ctx.setup.source_splits()?.train;
    let mut summary = String::new();
    for (i, &seed) in ctx.seeds.iter().enumerate() {
        let needs_teacher = methods.iter().any(|&m| m != Method::Teacher && m.needs_teacher());
        let mut teacher = None;
        if needs_teacher {
            if !ctx.dir.has_model(i, Method::Teacher) && auto_teacher {
                train_one(ctx, i, seed, Method::Teacher, None, train)?;
            }
            teacher = Some(ctx.dir.load_model(i, Method::Teacher)?);
        }
        for &method in methods {
            if ctx.dir.has_model(i, method) {
                summary.push_str(&format!("seed-{i} {method}: checkpoint present, skipped\n"));
                continue;
            }
            let model = train_one(ctx, i, seed, method, teacher.as_ref(), train)?;
            summary.push_str(&format!(
                "seed-{i} {method}: best dev {:.4} at step {}\n",
                model.best_dev_accuracy().unwrap_or(f64::NAN),
                model.provenance.best_step
            ));
        }
    }
    Ok(summary)
}

fn train_one(
    ctx: &Ctx<'_>,
    index: usize,
    seed: u64,
    method: Method,
    teacher: Option<&crate::pipelines::TrainedModel>,
    train: &crate::corpus::Dataset,
) -> Result<crate::pipelines::TrainedModel, CliError> {
    let t0 = Instant::now();
    if method == Method::Pl {
        let pseudo = ctx.setup.pseudo_labels(teacher.expect("loaded above"))?;
        super::run_dir::write_atomic(&ctx.dir.pseudo_path(index), pseudo.to_tsv().as_bytes())?;
    }
    let model = ctx.setup.train_method(seed, method, train, teacher)?;
    ctx.dir.save_model(index, method, &model)?;
    ctx.dir.record_timing(index, method, t0.elapsed().as_secs_f64())?;
    Ok(model)
}

fn method_metrics(
    ctx: &Ctx<'_>,
    seed: u64,
    method: Method,
    model: &crate::pipelines::TrainedModel,
) -> Result<MethodMetrics, CliError> {
    let batch = ctx.cfg.train.eval_batch_size;
    let results =
        ctx.setup.test_sets().into_iter().map(|t| evaluate(&model.params, t, batch)).collect::<Result<Vec<_>, _>>()?;
    let src = results.iter().find(|r| r.language == ctx.setup.source).expect("source language is in the corpus");
    let mut agreement_with_source = BTreeMap::new();
    for r in &results {
        if r.language != ctx.setup.source {
            agreement_with_source.insert(r.language.clone(), paired_agreement(src, r)?);
        }
    }
    Ok(MethodMetrics { method, seed, results, agreement_with_source, provenance: model.provenance.clone() })
}

fn evaluate_all(ctx: &Ctx<'_>) -> Result<String, CliError> {
    let mut summary = String::new();
    let mut found = 0;
    for (i, &seed) in ctx.seeds.iter().enumerate() {
        for method in Method::ALL {
            if !ctx.dir.has_model(i, method) {
                continue;
            }
            found += 1;
            let model = ctx.dir.load_model(i, method)?;
            let m = method_metrics(ctx, seed, method, &model)?;
            ctx.dir.save_metrics(i, &m)?;
            let accs: Vec<String> = m.results.iter().map(|r| format!("{} {:.4}", r.language, r.accuracy)).collect();
            summary.push_str(&format!("seed-{i} {method}: {}\n", accs.join(" ")));
        }
    }
    if found == 0 {
        return Err(CliError::missing(
            &ctx.dir.path("checkpoints"),
            "no trained checkpoints to evaluate; run a training command first",
        ));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a RunConfig,
    corpus_fingerprint: &'a str,
    zero_shot: &'a ReportTable,
    target_languages: Option<&'a ReportTable>,
    gap: Option<&'a ReportTable>,
    agreement_with_source: Option<&'a ReportTable>,
    training_seconds: BTreeMap<String, BTreeMap<String, f64>>,
    wall_clock_seconds: f64,
    artifacts: Vec<String>,
}

fn report(ctx: &Ctx<'_>, start: Instant) -> Result<String, CliError> {
    let languages = ctx.setup.corpus.language_ids();
    let targets = ctx.setup.target_languages();
    let mut names = Vec::new();
    let mut all_vals = Vec::new();
    let mut tgt_vals = Vec::new();
    let mut agree_vals = Vec::new();
    let mut gap_vals = Vec::new();
    for method in Method::ALL {
        let mut per_seed = Vec::new();
        for i in 0..ctx.seeds.len() {
            if let Some(m) = ctx.dir.load_metrics(i, method)? {
                per_seed.push(m);
            }
        }
        if per_seed.is_empty() {
            continue;
        }
        let acc = |m: &MethodMetrics, l: &str| {
            m.results.iter().find(|r| r.language == l).map(|r| r.accuracy).ok_or_else(|| {
                CliError::config("corpus.languages", format!("metrics lack language {l}; rerun evaluate"))
            })
        };
        let rows = |langs: &[String]| -> Result<Vec<Vec<f64>>, CliError> {
            per_seed.iter().map(|m| langs.iter().map(|l| acc(m, l)).collect()).collect()
        };
        names.push(method.name().to_string());
        all_vals.push(rows(&languages)?);
        if !targets.is_empty() {
            tgt_vals.push(rows(&targets)?);
            agree_vals.push(
                per_seed
                    .iter()
                    .map(|m| {
                        targets.iter().map(|l| m.agreement_with_source.get(l).copied().unwrap_or(f64::NAN)).collect()
                    })
                    .collect(),
            );
        }
        if matches!(method, Method::Teacher | Method::Vanilla) {
            gap_vals.push((method.name().to_string(), rows(std::slice::from_ref(&ctx.setup.source))?));
        }
    }
    if names.is_empty() {
        return Err(CliError::missing(&ctx.dir.path("metrics"), "no evaluation metrics; run evaluate first"));
    }
    let zero_shot = ReportTable::from_seeds(&names, &languages, &all_vals)?;
    let (target_table, agreement) = if targets.is_empty() {
        (None, None)
    } else {
        (
            Some(ReportTable::from_seeds(&names, &targets, &tgt_vals)?),
            Some(ReportTable::from_seeds(&names, &targets, &agree_vals)?),
        )
    };
    let gap = if gap_vals.len() == 2 {
        let (n, v): (Vec<String>, Vec<Vec<Vec<f64>>>) = gap_vals.into_iter().unzip();
        Some(ReportTable::from_seeds(&n, std::slice::from_ref(&ctx.setup.source), &v)?)
    } else {
        None
    };

    let mut artifacts = vec![ctx.dir.write("tables/zero_shot.csv", zero_shot.to_csv().as_bytes())?];
    if let (Some(t), Some(a)) = (&target_table, &agreement) {
        artifacts.push(ctx.dir.write("tables/target_languages.csv", t.to_csv().as_bytes())?);
        artifacts.push(ctx.dir.write("tables/agreement.csv", a.to_csv().as_bytes())?);
    }
    if let Some(g) = &gap {
        artifacts.push(ctx.dir.write("tables/gap.csv", g.to_csv().as_bytes())?);
    }
    let mut training_seconds = BTreeMap::new();
    for i in 0..ctx.seeds.len() {
        let t = ctx.dir.timings(i)?;
        if !t.is_empty() {
            training_seconds.insert(format!("seed-{i}"), t);
        }
    }
    let rel = |p: &PathBuf| p.strip_prefix(ctx.dir.root()).unwrap_or(p).display().to_string();
    let mut artifact_names: Vec<String> = artifacts.iter().map(rel).collect();
    for i in 0..ctx.seeds.len() {
        for m in Method::ALL {
            if ctx.dir.has_model(i, m) {
                artifact_names.push(rel(&ctx.dir.checkpoint_path(i, m)));
            }
        }
    }
    artifact_names.push("report.json".into());
    let report = Report {
        command: &ctx.cfg.command,
        config: ctx.cfg,
        corpus_fingerprint: &ctx.fingerprint,
        zero_shot: &zero_shot,
        target_languages: target_table.as_ref(),
        gap: gap.as_ref(),
        agreement_with_source: agreement.as_ref(),
        training_seconds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        artifacts: artifact_names,
    };
    ctx.dir.write("report.json", &to_json(&report))?;
    let mut summary = format!("zero-shot test accuracy\n{}", zero_shot.to_csv());
    if let Some(t) = &target_table {
        summary.push_str(&format!("target languages only\n{}", t.to_csv()));
    }
    Ok(summary)
}

fn sweep_size(ctx: &Ctx<'_>) -> Result<String, CliError> {
    let sweep = data_size_sweep(&ctx.setup, &ctx.cfg.sweep.sizes, &ctx.seeds, &ctx.cfg.sweep.size_methods)?;
    ctx.dir.write("metrics/sweep_size.json", &to_json(&sweep))?;
    let target = curves_to_table(&sweep.target)?.to_csv();
    let all = curves_to_table(&sweep.all_languages)?.to_csv();
    ctx.dir.write("curves/size_target.csv", target.as_bytes())?;
    ctx.dir.write("curves/size_all_languages.csv", all.as_bytes())?;
    Ok(format!("mean target test accuracy by training size\n{target}"))
}

fn sweep_temp(ctx: &Ctx<'_>) -> Result<String, CliError> {
    let sweep = temperature_sweep(&ctx.setup, &ctx.cfg.sweep.temperatures, &ctx.seeds)?;
    ctx.dir.write("metrics/sweep_temp.json", &to_json(&sweep))?;
    let csv = curves_to_table(&[sweep.kd.clone(), sweep.vanilla.clone()])?.to_csv();
    ctx.dir.write("curves/temperature.csv", csv.as_bytes())?;
    Ok(format!("mean target dev accuracy by temperature\n{csv}"))
}
