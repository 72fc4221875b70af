//! Fixtures shared by the benchmarks.

use regulab::gallery::gen_baart;
use regulab::{ExperimentConfig, ExperimentProblem, NoisyInstance, PerturbationKind, Scenario};

/// Baart with heat perturbation at moderate noise.
pub fn baart_instance(n: usize) -> NoisyInstance {
    let scenario = Scenario {
        problem: gen_baart(n).expect("baart builds"),
        perturbation: PerturbationKind::Heat,
    };
    scenario.instance(0.01, 0.01, 11, 12).expect("instance builds")
}

/// A one-cell configuration so a realization can be timed in isolation.
pub fn single_cell_config(problem: ExperimentProblem, size: usize) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(problem);
    config.size = size;
    config.delta_levels = vec![0.01];
    config.eta_levels = vec![0.01];
    config.realizations = 1;
    config
}
