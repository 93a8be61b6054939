//! Independent runs executed together. With the `parallel` feature the runs
//! are spread over the rayon pool; without it they run in order. Results are
//! identical either way because runs share no state.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::hybridsim::{
    simulate, ClosedLoop, HybridArc, InitialCondition, PerturbationSpec, SimConfig, SimError,
};
use crate::policy::Policy;

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub system: ClosedLoop,
    pub policy: Policy,
    pub init: InitialCondition,
    pub config: SimConfig,
    pub pert: PerturbationSpec,
}

impl RunSpec {
    pub fn run(&self) -> Result<HybridArc, SimError> {
        simulate(
            &self.system,
            &self.policy,
            &self.init,
            &self.config,
            &self.pert,
        )
    }
}

/// Order-preserving map over independent items.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential map regardless of features, for comparison and debugging.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

pub fn run_batch(specs: &[RunSpec]) -> Vec<Result<HybridArc, SimError>> {
    map(specs, RunSpec::run)
}

pub fn run_batch_sequential(specs: &[RunSpec]) -> Vec<Result<HybridArc, SimError>> {
    map_sequential(specs, RunSpec::run)
}

/// Copies of `base` that differ only in the perturbation seed.
pub fn seed_sweep(base: &RunSpec, seeds: &[u64]) -> Vec<RunSpec> {
    seeds
        .iter()
        .map(|&seed| RunSpec {
            label: format!("{}-seed{seed}", base.label),
            pert: PerturbationSpec { seed, ..base.pert },
            ..base.clone()
        })
        .collect()
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
