//! Shared fixtures for the benchmarks under `benches/`.

use superburst::{sample_betas, DisorderPlan, PhysicalParams, SamplingMethod, TruncatedGaussian};

/// Default parameters with `n` atoms.
pub fn params(n: usize) -> PhysicalParams {
    PhysicalParams::new(superburst::DEFAULT_GAMMA, superburst::DEFAULT_BETA_MEAN, n).expect("valid defaults")
}

/// Couplings of realization 0 of the default distribution.
pub fn betas(n: usize) -> Vec<f64> {
    let dist = TruncatedGaussian { mean: superburst::DEFAULT_BETA_MEAN, std: superburst::DEFAULT_BETA_STD };
    sample_betas(&dist, n, DisorderPlan::default().realization_seed(0), SamplingMethod::Rejection)
        .expect("default distribution samples")
}
