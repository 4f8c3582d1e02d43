#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dropf_core::solve::Problem;
use dropf_core::stats::{GeneratorConfig, Marginal, SampleSet, synth_unimodal_samples};
use dropf_core::{NetworkCase, UncertaintyModel};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn problem(name: &str) -> Problem {
    Problem::new(NetworkCase::load(&data(name)).unwrap()).unwrap()
}

pub fn three_bus() -> Problem {
    problem("three_bus.json")
}

pub fn triangular() -> Marginal {
    Marginal::Triangular {
        lo: -6.0,
        mode: -1.0,
        hi: 7.0,
    }
}

pub fn samples(dim: usize, count: usize, seed: u64) -> SampleSet {
    let cfg = GeneratorConfig {
        marginal: triangular(),
        dim,
        count,
        correlation: 0.0,
    };
    synth_unimodal_samples(&cfg, seed).unwrap()
}

pub fn model(samples: &SampleSet) -> UncertaintyModel {
    UncertaintyModel::from_samples(samples, 15, 1.0, 0.05).unwrap()
}
