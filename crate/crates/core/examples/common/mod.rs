use monox::cli::{Preset, RunConfig};
use monox::evalx::ExperimentSetup;

/// Desk defaults shrunk so each example finishes in well under a minute.
pub fn quick_config() -> RunConfig {
    let mut cfg = RunConfig::preset(Preset::Desk);
    cfg.corpus.sizes.train = 300;
    cfg.corpus.sizes.unlabeled = 1500;
    cfg.corpus.sizes.dev = 200;
    cfg.corpus.sizes.test = 500;
    cfg.train.epochs = 2;
    cfg.sweep.sizes = vec![30, 100, 300];
    cfg
}

#[allow(dead_code)]
pub fn quick_setup() -> ExperimentSetup {
    quick_config().build_setup().expect("quick config is valid")
}
