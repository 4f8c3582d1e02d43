//! Fixtures shared by the criterion benches.

use dropf_core::solve::Problem;
use dropf_core::stats::{GeneratorConfig, Marginal, SampleSet, synth_unimodal_samples};
use dropf_core::{NetworkCase, UncertaintyModel};

const THREE_BUS: &str = include_str!("../../../data/three_bus.json");

pub fn three_bus() -> Problem {
    let case = NetworkCase::from_json(THREE_BUS).expect("bundled case parses");
    Problem::new(case).expect("bundled case is valid")
}

/// Triangular forecast errors for every wind plant of `problem`.
pub fn samples(problem: &Problem, count: usize, seed: u64) -> SampleSet {
    let cfg = GeneratorConfig {
        marginal: Marginal::Triangular {
            lo: -6.0,
            mode: -1.0,
            hi: 7.0,
        },
        dim: problem.uncertainty_dim(),
        count,
        correlation: 0.0,
    };
    synth_unimodal_samples(&cfg, seed).expect("valid generator")
}

pub fn model(samples: &SampleSet) -> UncertaintyModel {
    UncertaintyModel::from_samples(samples, 15, 1.0, 0.05).expect("valid model")
}
