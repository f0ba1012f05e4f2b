use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::table::{check_increasing, mean, SweepAxis, SweepCurve};
use super::{evaluate, EvalError};
use crate::corpus::{CipherSpec, ConceptSpace, CorpusSplits, Dataset, LanguageSplits};
use crate::model::{init_student, init_teacher, ModelConfig};
use crate::pipelines::{
    accuracy, build_distill_set, distill, fine_tune, generate_pseudo_labels, self_train, train_pseudo_label, Params,
    TrainConfig, TrainedModel,
};
use crate::seed;

/// Training recipes compared in the zero-shot tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Monolingual model fine-tuned on source data.
    Teacher,
    /// Multilingual student fine-tuned on source data.
    Vanilla,
    /// Student distilled from the teacher's soft labels.
    Kd,
    /// Student trained on teacher pseudo labels plus source data.
    Pl,
    /// Student relabeling unlabeled data with itself.
    SelfTrain,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Teacher, Method::Vanilla, Method::Kd, Method::Pl, Method::SelfTrain];

    pub fn name(self) -> &'static str {
        match self {
            Method::Teacher => "teacher",
            Method::Vanilla => "vanilla",
            Method::Kd => "kd",
            Method::Pl => "pl",
            Method::SelfTrain => "self_train",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Method::Teacher | Method::Kd | Method::Pl)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a run needs except the seed: corpus, languages, presets.
#[derive(Clone, Debug)]
pub struct ExperimentSetup {
    pub space: ConceptSpace,
    pub ciphers: Vec<CipherSpec>,
    pub corpus: CorpusSplits,
    pub source: String,
    pub teacher_config: ModelConfig,
    pub student_config: ModelConfig,
    /// Global standard deviation of the student's frozen per-language offsets.
    pub noise_sigma: f64,
    /// Base training config; its seed is replaced per run.
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub model: TrainedModel,
    pub seconds: f64,
}

/// All requested methods trained under one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub runs: Vec<MethodRun>,
}

impl SeedRun {
    pub fn get(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }

    pub fn params(&self, method: Method) -> Option<&Params> {
        self.get(method).map(|r| &r.model.params)
    }
}

impl ExperimentSetup {
    pub fn source_splits(&self) -> Result<&LanguageSplits, EvalError> {
        self.corpus
            .language(&self.source)
            .ok_or_else(|| EvalError::Config(format!("source language {} is not in the corpus", self.source)))
    }

    pub fn source_cipher(&self) -> Result<&CipherSpec, EvalError> {
        self.ciphers
            .iter()
            .find(|c| c.language_id == self.source)
            .ok_or_else(|| EvalError::Config(format!("source language {} has no cipher", self.source)))
    }

    /// Every corpus language except the source, in declaration order.
    pub fn target_languages(&self) -> Vec<String> {
        self.corpus.language_ids().into_iter().filter(|l| l != &self.source).collect()
    }

    /// Test sets of every language, in declaration order.
    pub fn test_sets(&self) -> Vec<&Dataset> {
        self.corpus.languages.iter().map(|(_, s)| &s.test).collect()
    }

    pub fn teacher_init(&self, seed: u64) -> Result<Params, EvalError> {
        Ok(init_teacher(&self.teacher_config, &self.space, self.source_cipher()?, seed::derive(seed, "teacher"))?)
    }

    /// Shared by every student pipeline under one seed.
    pub fn student_init(&self, seed: u64) -> Result<Params, EvalError> {
        Ok(init_student(
            &self.student_config,
            &self.space,
            &self.ciphers,
            self.noise_sigma,
            seed::derive(seed, "student"),
        )?)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed: seed::derive(seed, "train"), ..self.train.clone() }
    }

    /// Trains `methods` on the full source training set.
    pub fn run_seed(&self, seed: u64, methods: &[Method]) -> Result<SeedRun, EvalError> {
        let train = &self.source_splits()?.train;
        self.run_seed_on(seed, methods, train)
    }

    /// Trains one method under `seed` with `train` standing in for the source
    /// training set. Unlabeled and dev data stay the source language's.
    /// Distillation and pseudo-labeling read `teacher`.
    pub fn train_method(
        &self,
        seed: u64,
        method: Method,
        train: &Dataset,
        teacher: Option<&TrainedModel>,
    ) -> Result<TrainedModel, EvalError> {
        if train.language != self.source {
            return Err(EvalError::Config(format!(
                "training data must be in the source language {}, got {}",
                self.source, train.language
            )));
        }
        let src = self.source_splits()?;
        let cfg = self.train_config(seed);
        let need_teacher =
            || teacher.ok_or_else(|| EvalError::Config(format!("method {method} needs a trained teacher")));
        Ok(match method {
            Method::Teacher => fine_tune(&self.teacher_init(seed)?, train, &src.dev, &cfg)?,
            Method::Vanilla => fine_tune(&self.student_init(seed)?, train, &src.dev, &cfg)?,
            Method::Kd => {
                let d_c = build_distill_set(train, &src.unlabeled)?;
                distill(&self.student_init(seed)?, need_teacher()?, &d_c, &src.dev, &cfg)?
            }
            Method::Pl => {
                let pseudo = self.pseudo_labels(need_teacher()?)?;
                train_pseudo_label(&self.student_init(seed)?, train, &pseudo, &src.dev, &cfg)?
            }
            Method::SelfTrain => self_train(&self.student_init(seed)?, train, &src.unlabeled, &src.dev, &cfg)?,
        })
    }

    /// Teacher pseudo labels over the source unlabeled set.
    pub fn pseudo_labels(&self, teacher: &TrainedModel) -> Result<Dataset, EvalError> {
        let src = self.source_splits()?;
        Ok(generate_pseudo_labels(
            &teacher.params,
            &src.unlabeled,
            self.train.confidence_threshold,
            self.train.eval_batch_size,
        )?)
    }

    /// Trains `methods` on `train`, fitting the teacher first when any method
    /// reads it.
    pub fn run_seed_on(&self, seed: u64, methods: &[Method], train: &Dataset) -> Result<SeedRun, EvalError> {
        let timed = |method: Method, teacher: Option<&TrainedModel>| -> Result<MethodRun, EvalError> {
            let t0 = Instant::now();
            let model = self.train_method(seed, method, train, teacher)?;
            Ok(MethodRun { method, model, seconds: t0.elapsed().as_secs_f64() })
        };
        let teacher =
            if methods.iter().any(|m| m.needs_teacher()) { Some(timed(Method::Teacher, None)?) } else { None };
        let mut runs = Vec::with_capacity(methods.len());
        for &method in methods {
            runs.push(match method {
                Method::Teacher => teacher.clone().expect("trained above"),
                m => timed(m, teacher.as_ref().map(|t| &t.model))?,
            });
        }
        Ok(SeedRun { seed, runs })
    }

    fn mean_test_accuracy(&self, params: &Params, languages: &[String]) -> Result<f64, EvalError> {
        let mut accs = Vec::with_capacity(languages.len());
        for l in languages {
            let ds = &self.corpus.language(l).expect("language listed by the corpus").test;
            accs.push(evaluate(params, ds, self.train.eval_batch_size)?.accuracy);
        }
        Ok(mean(&accs))
    }

    fn mean_dev_accuracy(&self, params: &Params, languages: &[String]) -> Result<f64, EvalError> {
        let mut accs = Vec::with_capacity(languages.len());
        for l in languages {
            let ds = &self.corpus.language(l).expect("language listed by the corpus").dev;
            accs.push(accuracy(params, ds, self.train.eval_batch_size)?);
        }
        Ok(mean(&accs))
    }
}

/// Nested training subsets: the first `size` indices of one seeded shuffle,
/// kept in original order. The full size reproduces `train` exactly.
pub fn nested_subsets(train: &Dataset, sizes: &[usize], shuffle_seed: u64) -> Result<Vec<Dataset>, EvalError> {
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    check_increasing(&xs)?;
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > train.len()) {
        return Err(EvalError::Config(format!(
            "sweep size {s} must be in 1..={} (the training set size)",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut seed::stream(shuffle_seed, "sweep/size/order"));
    Ok(sizes
        .iter()
        .map(|&s| {
            let mut idx = order[..s].to_vec();
            idx.sort_unstable();
            let mut ds = Dataset::new(train.task.clone(), train.split, &train.language, &train.domain);
            ds.examples = idx.iter().map(|&i| train.examples[i].clone()).collect();
            ds
        })
        .collect())
}

/// Curves over training-set size, one per student method.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeSweep {
    /// Mean test accuracy over target languages.
    pub target: Vec<SweepCurve>,
    /// Mean test accuracy over every language including the source.
    pub all_languages: Vec<SweepCurve>,
}

/// Retrains the teacher and every method per subset size and seed.
pub fn data_size_sweep(
    setup: &ExperimentSetup,
    sizes: &[usize],
    seeds: &[u64],
    methods: &[Method],
) -> Result<SizeSweep, EvalError> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(EvalError::Config("size sweep needs at least one seed and one method".into()));
    }
    let subsets = nested_subsets(&setup.source_splits()?.train, sizes, setup.space.seed())?;
    let targets = setup.target_languages();
    let all = setup.corpus.language_ids();
    // [method][size][seed]
    let mut tgt = vec![vec![Vec::with_capacity(seeds.len()); sizes.len()]; methods.len()];
    let mut every = tgt.clone();
    for (si, subset) in subsets.iter().enumerate() {
        for &s in seeds {
            let run = setup.run_seed_on(s, methods, subset)?;
            for (mi, &m) in methods.iter().enumerate() {
                let p = run.params(m).expect("method was requested");
                tgt[mi][si].push(setup.mean_test_accuracy(p, &targets)?);
                every[mi][si].push(setup.mean_test_accuracy(p, &all)?);
            }
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let curves = |vals: &[Vec<Vec<f64>>]| -> Result<Vec<SweepCurve>, EvalError> {
        methods.iter().zip(vals).map(|(m, v)| SweepCurve::new(SweepAxis::TrainSize, m.name(), &xs, v)).collect()
    };
    Ok(SizeSweep { target: curves(&tgt)?, all_languages: curves(&every)? })
}

/// Distillation dev accuracy per temperature with the vanilla student as a
/// flat reference line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemperatureSweep {
    pub kd: SweepCurve,
    pub vanilla: SweepCurve,
}

/// Trains the teacher and vanilla student once per seed, then distills once
/// per temperature. Accuracy is the mean over target-language dev sets.
pub fn temperature_sweep(setup: &ExperimentSetup, temps: &[f64], seeds: &[u64]) -> Result<TemperatureSweep, EvalError> {
    if let Some(t) = temps.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(EvalError::Config(format!("temperature must be positive, got {t}")));
    }
    check_increasing(temps)?;
    if seeds.is_empty() {
        return Err(EvalError::Config("temperature sweep needs at least one seed".into()));
    }
    let src = setup.source_splits()?;
    let targets = setup.target_languages();
    let d_c = build_distill_set(&src.train, &src.unlabeled)?;
    let mut kd = vec![Vec::with_capacity(seeds.len()); temps.len()];
    let mut vanilla = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let base = setup.run_seed(s, &[Method::Teacher, Method::Vanilla])?;
        vanilla.push(setup.mean_dev_accuracy(base.params(Method::Vanilla).expect("requested"), &targets)?);
        let teacher = &base.get(Method::Teacher).expect("requested").model;
        let student = setup.student_init(s)?;
        for (ti, &t) in temps.iter().enumerate() {
            let cfg = TrainConfig { temperature: t, ..setup.train_config(s) };
            let model = distill(&student, teacher, &d_c, &src.dev, &cfg)?;
            kd[ti].push(setup.mean_dev_accuracy(&model.params, &targets)?);
        }
    }
    let flat = vec![vanilla; temps.len()];
    Ok(TemperatureSweep {
        kd: SweepCurve::new(SweepAxis::Temperature, Method::Kd.name(), temps, &kd)?,
        vanilla: SweepCurve::new(SweepAxis::Temperature, Method::Vanilla.name(), temps, &flat)?,
    })
}
