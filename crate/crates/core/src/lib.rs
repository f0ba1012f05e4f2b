//! Transfer from a monolingual teacher to a multilingual student, studied on
//! synthetic languages that are ciphers of one concept space.
//!
//! - [`corpus`]: concept space, cipher languages, labeled datasets, TSV I/O.
//! - [`nncore`]: tensors, reverse-mode autodiff, Adam, gradient checks.
//! - [`model`]: transformer encoder classifier, vocabularies, checkpoints.
//! - [`pipelines`]: fine-tuning, distillation, pseudo-labeling, self-training.
//! - [`evalx`]: evaluation, report tables, data-size and temperature sweeps.
//! - [`cli`]: run configs, run directories and the `monox` commands.
//!
//! Runnable walkthroughs live in `examples/`, one per capability.

pub mod cli;
pub mod corpus;
pub mod evalx;
pub mod model;
pub mod nncore;
pub mod pipelines;
pub mod seed;
