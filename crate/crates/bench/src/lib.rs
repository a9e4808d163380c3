//! Shared fixtures for the benchmarks.

use nfmp::data::Demonstration;
use nfmp::tasks::{gen_dataset, make_grid, Split};
use nfmp::{init_model, Config, ModelDims, NfmpModel, TaskKind, TaskSpec};

/// Peg model with the given hidden width and image resolution; other
/// settings are the defaults.
pub fn peg_config(hidden: usize, res: usize) -> Config {
    Config { hidden, image_res: res, ..Config::default() }
}

pub fn peg_demos(cfg: &Config) -> Vec<Demonstration> {
    gen_dataset(&TaskSpec::from_config(cfg), &make_grid(3, 2).expect("grid"), Split::Train).expect("dataset")
}

pub fn peg_model(cfg: &Config, demos: &[Demonstration]) -> NfmpModel {
    let dims = ModelDims::for_task(TaskKind::Peg, demos[0].scene.channels, demos.len());
    init_model(cfg, &dims).expect("model")
}
