use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Value;

use super::CliError;
use crate::corpus::{
    generate_pair_dataset, generate_sentiment_dataset, ConceptSpace, ConceptSpaceSpec, LanguageRegistry, PairSpec,
    SentimentSpec, SplitSizes, TaskSpec,
};
use crate::evalx::{ExperimentSetup, Method};
use crate::model::{ModelConfig, Role, DESK_MAX_SEQ_LEN, PAPER_MAX_SEQ_LEN};
use crate::pipelines::TrainConfig;
use crate::seed;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MONOX_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small models and a fast learning rate for laptop runs.
    #[default]
    Desk,
    /// The published optimizer settings and 256-token truncation.
    Paper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskChoice {
    #[default]
    Sentiment,
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageConfig {
    pub id: String,
    /// Word-order shuffle window; 1 keeps source order.
    pub window: usize,
    /// Extra offset noise for this language on top of `model.noise_sigma`.
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub task: TaskChoice,
    pub seed: u64,
    pub num_concepts: usize,
    pub polarity_ratio: f64,
    pub embedding_dim: usize,
    pub sentiment_axis: f64,
    pub languages: Vec<LanguageConfig>,
    pub source: String,
    pub sizes: SplitSizes,
    pub sentence_len: [usize; 2],
    /// Sentiment only.
    pub margin: usize,
    pub polar_rate: f64,
    pub domain: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let lang = |id: &str, window| LanguageConfig { id: id.into(), window, sigma: 0.0 };
        Self {
            task: TaskChoice::Sentiment,
            seed: 1,
            num_concepts: 400,
            polarity_ratio: 0.4,
            embedding_dim: 32,
            sentiment_axis: crate::corpus::DEFAULT_SENTIMENT_AXIS,
            languages: vec![lang("en", 1), lang("de", 2), lang("fr", 3), lang("ja", 4)],
            source: "en".into(),
            sizes: SplitSizes { train: 500, unlabeled: 3000, dev: 400, test: 1000 },
            sentence_len: [6, 12],
            margin: 1,
            polar_rate: 0.4,
            domain: "books".into(),
        }
    }
}

/// Architecture of one model; the class count and vocabulary come from the
/// corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
}

impl ArchConfig {
    fn from_model(m: &ModelConfig) -> Self {
        Self {
            num_layers: m.num_layers,
            hidden_dim: m.hidden_dim,
            num_heads: m.num_heads,
            ffn_dim: m.ffn_dim,
            max_seq_len: m.max_seq_len,
        }
    }

    pub fn to_model(&self, role: Role, num_classes: usize) -> ModelConfig {
        ModelConfig {
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            max_seq_len: self.max_seq_len,
            vocab_size: 0,
            num_classes,
            role,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Standard deviation of the student's frozen per-language offsets.
    pub noise_sigma: f64,
    pub teacher: ArchConfig,
    pub student: ArchConfig,
}

impl ModelSection {
    fn preset(max_seq_len: usize) -> Self {
        let with_len = |m: ModelConfig| ArchConfig { max_seq_len, ..ArchConfig::from_model(&m) };
        Self {
            noise_sigma: 0.5,
            teacher: with_len(ModelConfig::teacher_preset(2)),
            student: with_len(ModelConfig::student_preset(2)),
        }
    }
}

/// Which language each data role reads. Anything other than the source
/// language is rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataRouting {
    pub train_language: Option<String>,
    pub unlabeled_language: Option<String>,
    pub dev_language: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub master: u64,
    pub count: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { master: 42, count: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { methods: Method::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub size_methods: Vec<Method>,
    pub temperatures: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10, 50, 200, 500],
            size_methods: vec![Method::Vanilla, Method::Kd, Method::Pl],
            temperatures: vec![1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Defaults to `$MONOX_OUT`, then `runs`.
    pub root: PathBuf,
    /// Run directory name under `root`.
    pub name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            root: std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT)),
            name: "default".into(),
        }
    }
}

/// The full resolved recipe of a run. The copy written to the run directory
/// parses back to the same value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Filled in from the command line.
    #[serde(default)]
    pub command: String,
    pub corpus: CorpusConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataRouting,
    pub seeds: SeedConfig,
    pub experiment: ExperimentConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (ModelSection::preset(DESK_MAX_SEQ_LEN), TrainConfig::default()),
            Preset::Paper => (ModelSection::preset(PAPER_MAX_SEQ_LEN), TrainConfig::paper()),
        };
        Self {
            preset,
            command: String::new(),
            corpus: CorpusConfig::default(),
            model,
            train,
            data: DataRouting::default(),
            seeds: SeedConfig::default(),
            experiment: ExperimentConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.root.join(&self.output.name)
    }

    pub fn seed_plan(&self) -> Vec<u64> {
        seed::seed_plan(self.seeds.master, self.seeds.count)
    }

    pub fn task(&self) -> TaskSpec {
        match self.corpus.task {
            TaskChoice::Sentiment => TaskSpec::sentiment(),
            TaskChoice::Pair => TaskSpec::pair(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Semantic checks that serde cannot express. Errors name the key.
    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.corpus;
        if c.languages.is_empty() {
            return Err(CliError::config("corpus.languages", "at least one language is required"));
        }
        if !c.languages.iter().any(|l| l.id == c.source) {
            return Err(CliError::config(
                "corpus.source",
                format!("source language {:?} is not listed in corpus.languages", c.source),
            ));
        }
        let routes = [
            ("data.train_language", &self.data.train_language),
            ("data.unlabeled_language", &self.data.unlabeled_language),
            ("data.dev_language", &self.data.dev_language),
        ];
        for (key, lang) in routes {
            if let Some(l) = lang {
                if l != &c.source {
                    return Err(CliError::config(
                        key,
                        format!(
                            "zero-shot runs train and select on the source language {:?} only, not {l:?}",
                            c.source
                        ),
                    ));
                }
            }
        }
        if c.sentence_len[0] > c.sentence_len[1] || c.sentence_len[0] == 0 {
            return Err(CliError::config("corpus.sentence_len", "expected [min, max] with 1 <= min <= max"));
        }
        if let Err(e) = self.train.validate() {
            // Messages lead with the offending field name.
            let msg = match e {
                crate::pipelines::PipelineError::Config(m) => m,
                other => other.to_string(),
            };
            let field: String = msg.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
            return Err(CliError::config(format!("train.{field}"), msg));
        }
        if !(self.model.noise_sigma >= 0.0) {
            return Err(CliError::config("model.noise_sigma", "must be >= 0"));
        }
        let k = self.task().num_classes();
        for (key, arch, role) in [
            ("model.teacher", &self.model.teacher, Role::Teacher),
            ("model.student", &self.model.student, Role::Student),
        ] {
            arch.to_model(role, k).validate().map_err(|e| CliError::config(key, e.to_string()))?;
        }
        if self.seeds.count == 0 {
            return Err(CliError::config("seeds.count", "must be >= 1"));
        }
        if self.experiment.methods.is_empty() {
            return Err(CliError::config("experiment.methods", "at least one method is required"));
        }
        if self.sweep.sizes.iter().any(|&s| s > c.sizes.train) {
            return Err(CliError::config(
                "sweep.sizes",
                format!("sizes must not exceed corpus.sizes.train = {}", c.sizes.train),
            ));
        }
        if self.sweep.size_methods.is_empty() {
            return Err(CliError::config("sweep.size_methods", "at least one method is required"));
        }
        if self.output.name.is_empty() || self.output.name.contains(['/', '\\']) {
            return Err(CliError::config("output.name", "must be a plain directory name"));
        }
        Ok(())
    }

    pub fn build_space(&self) -> Result<ConceptSpace, CliError> {
        let c = &self.corpus;
        ConceptSpace::build(&ConceptSpaceSpec {
            num_concepts: c.num_concepts,
            polarity_ratio: c.polarity_ratio,
            embedding_dim: c.embedding_dim,
            sentiment_axis: c.sentiment_axis,
            seed: c.seed,
        })
        .map_err(|e| CliError::config("corpus", e.to_string()))
    }

    /// Regenerates the corpus and model presets. Pure in the config.
    pub fn build_setup(&self) -> Result<ExperimentSetup, CliError> {
        let c = &self.corpus;
        let space = self.build_space()?;
        let mut registry = LanguageRegistry::new();
        for l in &c.languages {
            registry
                .derive_language(&space, &l.id, l.window, l.sigma, c.seed)
                .map_err(|e| CliError::config("corpus.languages", e.to_string()))?;
        }
        let ciphers = registry.into_languages();
        let sentence_len = (c.sentence_len[0], c.sentence_len[1]);
        let corpus = match c.task {
            TaskChoice::Sentiment => generate_sentiment_dataset(
                &space,
                &ciphers,
                &SentimentSpec {
                    sizes: c.sizes,
                    sentence_len,
                    margin: c.margin,
                    polar_rate: c.polar_rate,
                    domain: c.domain.clone(),
                },
                c.seed,
            ),
            TaskChoice::Pair => generate_pair_dataset(
                &space,
                &ciphers,
                &PairSpec { sizes: c.sizes, sentence_len, polar_rate: c.polar_rate, domain: c.domain.clone() },
                c.seed,
            ),
        }
        .map_err(|e| CliError::config("corpus", e.to_string()))?;
        let k = self.task().num_classes();
        Ok(ExperimentSetup {
            space,
            ciphers,
            corpus,
            source: c.source.clone(),
            teacher_config: self.model.teacher.to_model(Role::Teacher, k),
            student_config: self.model.student.to_model(Role::Student, k),
            noise_sigma: self.model.noise_sigma,
            train: self.train.clone(),
        })
    }
}

fn parse_document(text: &str, origin: &str) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::config(origin, format!("not a valid TOML document: {}", e.message())))
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of `--key=value`: a TOML literal when it is
/// one, a bare string otherwise.
fn parse_override_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "malformed override key"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(toml::Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::config(key, format!("{p} is not a section"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn preset_of(table: &toml::Table, origin: &str) -> Result<Option<Preset>, CliError> {
    match table.get("preset") {
        None => Ok(None),
        Some(v) => Preset::deserialize(v.clone())
            .map(Some)
            .map_err(|_| CliError::config("preset", format!("{origin}: expected \"desk\" or \"paper\", got {v}"))),
    }
}

/// Layers preset defaults, the config file, then `(key, value)` overrides,
/// and validates the result.
pub fn resolve_config(file: &str, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let file_table = parse_document(file, "config file")?;
    let mut over_table = toml::Table::new();
    for (k, v) in overrides {
        set_path(&mut over_table, k, parse_override_value(v))?;
    }
    let preset = match preset_of(&over_table, "override")? {
        Some(p) => p,
        None => preset_of(&file_table, "config file")?.unwrap_or_default(),
    };
    let mut table = toml::Table::try_from(RunConfig::preset(preset)).expect("preset serializes");
    merge(&mut table, file_table);
    merge(&mut table, over_table);
    let cfg: RunConfig = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_desk_defaults() {
        let cfg = resolve_config("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::preset(Preset::Desk));
        assert_eq!(cfg.train.learning_rate, 1e-3);
    }

    #[test]
    fn paper_preset_values() {
        let cfg = resolve_config("preset = \"paper\"", &[]).unwrap();
        assert_eq!(cfg.train.learning_rate, 5e-6);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.temperature, 0.1);
        assert_eq!(cfg.train.confidence_threshold, 0.0);
        assert_eq!(cfg.train.max_steps, Some(2500));
        assert_eq!(cfg.model.teacher.max_seq_len, 256);
        assert_eq!(cfg.model.student.max_seq_len, 256);
    }

    #[test]
    fn override_replaces_one_key() {
        let base = resolve_config("preset = \"paper\"", &[]).unwrap();
        let cfg = resolve_config("preset = \"paper\"", &ov(&[("train.temperature", "1.0")])).unwrap();
        assert_eq!(cfg.train.temperature, 1.0);
        let mut expect = base;
        expect.train.temperature = 1.0;
        assert_eq!(cfg, expect);
    }

    #[test]
    fn override_preset_wins_over_file() {
        let cfg = resolve_config("preset = \"desk\"", &ov(&[("preset", "paper")])).unwrap();
        assert_eq!(cfg.preset, Preset::Paper);
        assert_eq!(cfg.train.learning_rate, 5e-6);
    }

    #[test]
    fn nested_file_values_merge_with_defaults() {
        let cfg = resolve_config("[corpus.sizes]\ntrain = 600\n", &[]).unwrap();
        assert_eq!(cfg.corpus.sizes.train, 600);
        assert_eq!(cfg.corpus.sizes.unlabeled, 3000);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = resolve_config("[train]\nlearning_rat = 0.1\n", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("learning_rat"), "{err}");
        let err = resolve_config("", &ov(&[("model.student.hiden_dim", "8")])).unwrap_err();
        assert!(err.to_string().contains("hiden_dim"), "{err}");
    }

    #[test]
    fn type_mismatch_names_key_and_type() {
        let err = resolve_config("[train]\nbatch_size = \"eight\"\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.batch_size"), "{msg}");
        assert!(msg.contains("expected usize"), "{msg}");
    }

    #[test]
    fn target_language_routing_rejected() {
        let err = resolve_config("", &ov(&[("data.dev_language", "de")])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("data.dev_language"));
        assert!(resolve_config("", &ov(&[("data.train_language", "en")])).is_ok());
        let err = resolve_config("", &ov(&[("corpus.source", "xx")])).unwrap_err();
        assert!(err.to_string().contains("corpus.source"));
    }

    #[test]
    fn invalid_values_name_key() {
        let err = resolve_config("", &ov(&[("train.temperature", "0")])).unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "train.temperature"), "{err}");
        let err = resolve_config("", &ov(&[("train.confidence_threshold", "1.5")])).unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "train.confidence_threshold"), "{err}");
        let err = resolve_config("", &ov(&[("sweep.sizes", "[10, 5000]")])).unwrap_err();
        assert!(err.to_string().contains("sweep.sizes"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let cfg = resolve_config("", &ov(&[("train.temperature", "2.5"), ("experiment.methods", "[\"kd\"]")])).unwrap();
        let again = resolve_config(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bare_strings_accepted_as_values() {
        let cfg = resolve_config("", &ov(&[("output.name", "trial")])).unwrap();
        assert_eq!(cfg.output.name, "trial");
    }
}
