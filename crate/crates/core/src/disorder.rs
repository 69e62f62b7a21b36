//! Coupling-strength disorder: truncated-Gaussian draws and realization averages.
//!
//! Every realization owns an independent ChaCha8 stream selected by
//! `(seed, realization index)`, so realization `r` draws the same couplings no
//! matter which other realizations are computed or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cascade::{propagate_ensemble, EnsembleResult, PhaseQuadrature, PreparationMode};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::observables::{burst_metrics, BurstMetrics, EtaNormalization};
use crate::params::{PhysicalParams, DEFAULT_BETA_MEAN, DEFAULT_BETA_STD};

/// Rejection sampling gives up below this acceptance probability.
const MIN_ACCEPTANCE: f64 = 1e-6;

/// Gaussian restricted to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussian {
    pub mean: f64,
    pub std: f64,
}

impl Default for TruncatedGaussian {
    fn default() -> Self {
        Self { mean: DEFAULT_BETA_MEAN, std: DEFAULT_BETA_STD }
    }
}

impl TruncatedGaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let d = Self { mean, std };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.std >= 0.0) || !self.std.is_finite() {
            return Err(Error::InvalidParameter(format!("bad coupling distribution ({}, {})", self.mean, self.std)));
        }
        if self.std == 0.0 {
            if !(0.0..=1.0).contains(&self.mean) {
                return Err(Error::InvalidParameter(format!("coupling {} outside [0, 1]", self.mean)));
            }
        } else if self.mass() < MIN_ACCEPTANCE {
            return Err(Error::InvalidParameter(format!(
                "distribution ({}, {}) has almost no mass in [0, 1]",
                self.mean, self.std
            )));
        }
        Ok(())
    }

    fn unit(&self) -> Normal {
        Normal::new(0.0, 1.0).expect("standard normal")
    }

    fn z_bounds(&self) -> (f64, f64) {
        (-self.mean / self.std, (1.0 - self.mean) / self.std)
    }

    /// Probability mass of the untruncated Gaussian inside `[0, 1]`.
    pub fn mass(&self) -> f64 {
        if self.std == 0.0 {
            return 1.0;
        }
        let (a, b) = self.z_bounds();
        let n = self.unit();
        n.cdf(b) - n.cdf(a)
    }

    /// Mean of the truncated distribution.
    pub fn truncated_mean(&self) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let (a, b) = self.z_bounds();
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        self.mean + self.std * (phi(a) - phi(b)) / self.mass()
    }

    /// Maps a uniform variate `u` in `(0, 1)` to a coupling. Smooth in
    /// `(mean, std)` at fixed `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let (a, b) = self.z_bounds();
        let n = self.unit();
        let (ca, cb) = (n.cdf(a), n.cdf(b));
        let z = n.inverse_cdf(ca + u * (cb - ca));
        (self.mean + self.std * z).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    /// Redraw Gaussian variates until they land in `[0, 1]`.
    #[default]
    Rejection,
    /// One uniform variate per atom pushed through the truncated quantile
    /// function; couplings then move continuously with the distribution
    /// parameters, which the fitter relies on.
    InverseCdf,
}

/// Identifies the random stream of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealizationSeed {
    pub seed: u64,
    pub index: u64,
}

impl RealizationSeed {
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

pub fn sample_betas(
    dist: &TruncatedGaussian,
    n_atoms: usize,
    seed: RealizationSeed,
    method: SamplingMethod,
) -> Result<Vec<f64>> {
    dist.validate()?;
    if dist.std == 0.0 {
        return Ok(vec![dist.mean; n_atoms]);
    }
    let mut rng = seed.rng();
    match method {
        SamplingMethod::Rejection => (0..n_atoms)
            .map(|_| loop {
                let z: f64 = rng.sample(StandardNormal);
                let b = dist.mean + dist.std * z;
                if (0.0..=1.0).contains(&b) {
                    break Ok(b);
                }
            })
            .collect(),
        SamplingMethod::InverseCdf => (0..n_atoms)
            .map(|_| {
                let u: f64 = rng.gen();
                let b = dist.quantile(u);
                if b.is_finite() {
                    Ok(b)
                } else {
                    Err(Error::Sampling(format!("quantile at u = {u} is not finite")))
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderPlan {
    pub dist: TruncatedGaussian,
    pub n_realizations: usize,
    pub seed: u64,
    #[serde(default)]
    pub method: SamplingMethod,
}

impl Default for DisorderPlan {
    fn default() -> Self {
        Self { dist: TruncatedGaussian::default(), n_realizations: 100, seed: 0, method: SamplingMethod::default() }
    }
}

impl DisorderPlan {
    /// A single realization with every coupling equal to `beta`.
    pub fn uniform(beta: f64) -> Self {
        Self { dist: TruncatedGaussian { mean: beta, std: 0.0 }, n_realizations: 1, seed: 0, method: SamplingMethod::Rejection }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        self.dist.validate()
    }

    pub fn realization_seed(&self, index: usize) -> RealizationSeed {
        RealizationSeed { seed: self.seed, index: index as u64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: BurstMetrics,
    pub std: BurstMetrics,
}

/// Realization-averaged ensemble output.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderAverage {
    /// Pointwise means of every series; `betas` holds the per-position mean.
    pub mean: EnsembleResult,
    /// Pointwise standard deviation of `P_f` across realizations.
    pub p_f_std: Vec<f64>,
    /// Scalar observables of each realization, in realization order.
    pub per_realization: Vec<BurstMetrics>,
}

impl DisorderAverage {
    pub fn n_realizations(&self) -> usize {
        self.per_realization.len()
    }

    /// Mean and sample standard deviation of the per-realization scalars.
    pub fn scalar_summary(&self) -> ScalarSummary {
        let n = self.per_realization.len() as f64;
        let stat = |f: &dyn Fn(&BurstMetrics) -> f64| {
            let m = self.per_realization.iter().map(f).sum::<f64>() / n;
            let v = if n > 1.0 {
                self.per_realization.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (m, v.sqrt())
        };
        let (pm, ps) = stat(&|x| x.p_max);
        let (tm, ts) = stat(&|x| x.t_delay);
        let (em, es) = stat(&|x| x.eta_f);
        ScalarSummary {
            mean: BurstMetrics { p_max: pm, t_delay: tm, eta_f: em },
            std: BurstMetrics { p_max: ps, t_delay: ts, eta_f: es },
        }
    }
}

/// Running sums in realization order; the first realization seeds the
/// accumulators so that a single realization is reproduced bit for bit.
struct Accumulator {
    count: usize,
    sum: EnsembleResult,
    pf_mean: Vec<f64>,
    pf_m2: Vec<f64>,
    metrics: Vec<BurstMetrics>,
}

impl Accumulator {
    fn new(first: EnsembleResult, m: BurstMetrics) -> Self {
        let n = first.p_f.len();
        Self { count: 1, pf_mean: first.p_f.clone(), pf_m2: vec![0.0; n], sum: first, metrics: vec![m] }
    }

    fn push(&mut self, r: EnsembleResult, m: BurstMetrics) {
        self.count += 1;
        let k = self.count as f64;
        for ((mean, m2), &x) in self.pf_mean.iter_mut().zip(&mut self.pf_m2).zip(&r.p_f) {
            let d = x - *mean;
            *mean += d / k;
            *m2 += d * (x - *mean);
        }
        let s = &mut self.sum;
        add(&mut s.betas, &r.betas);
        add(&mut s.p_f, &r.p_f);
        add(&mut s.input_power, &r.input_power);
        add(&mut s.free_space_power, &r.free_space_power);
        add(&mut s.total_pe, &r.total_pe);
        for (a, b) in s.alpha_out.iter_mut().zip(&r.alpha_out) {
            *a += b;
        }
        for (a, b) in s.per_atom_pe.iter_mut().zip(&r.per_atom_pe) {
            add(a, b);
        }
        s.stored_energy += r.stored_energy;
        self.metrics.push(m);
    }

    fn finish(self) -> DisorderAverage {
        let n = self.count;
        let mut mean = self.sum;
        if n > 1 {
            let k = n as f64;
            for v in [&mut mean.betas, &mut mean.input_power, &mut mean.free_space_power, &mut mean.total_pe] {
                v.iter_mut().for_each(|x| *x /= k);
            }
            mean.alpha_out.iter_mut().for_each(|x| *x /= k);
            mean.per_atom_pe.iter_mut().flatten().for_each(|x| *x /= k);
            mean.stored_energy /= k;
            mean.p_f = self.pf_mean;
        }
        let p_f_std = if n > 1 {
            self.pf_m2.iter().map(|m2| (m2 / (n - 1) as f64).max(0.0).sqrt()).collect()
        } else {
            vec![0.0; mean.p_f.len()]
        };
        DisorderAverage { mean, p_f_std, per_realization: self.metrics }
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Runs one ensemble per realization with fresh couplings and averages.
/// Realizations are computed concurrently in batches and reduced strictly in
/// index order, so the result does not depend on the worker count.
pub fn average_realizations(
    params: &PhysicalParams,
    plan: &DisorderPlan,
    prep: &PreparationMode,
    grid: &TimeGrid,
    quadrature: impl Into<PhaseQuadrature>,
) -> Result<DisorderAverage> {
    plan.validate()?;
    params.validate()?;
    let quad = quadrature.into();
    let batch = rayon::current_num_threads().max(1);
    let run = |r: usize| -> Result<(EnsembleResult, BurstMetrics)> {
        let betas = sample_betas(&plan.dist, params.n_atoms, plan.realization_seed(r), plan.method)?;
        let res = propagate_ensemble(params, &betas, prep, grid, quad)?;
        let m = burst_metrics(&res, params.gamma, EtaNormalization::StoredEnergy)?;
        Ok((res, m))
    };

    let mut acc: Option<Accumulator> = None;
    let mut start = 0;
    while start < plan.n_realizations {
        let end = (start + batch).min(plan.n_realizations);
        let chunk: Vec<Result<(EnsembleResult, BurstMetrics)>> = (start..end).into_par_iter().map(run).collect();
        for item in chunk {
            let (res, m) = item?;
            match acc.as_mut() {
                None => acc = Some(Accumulator::new(res, m)),
                Some(a) => a.push(res, m),
            }
        }
        log::debug!("realizations {end}/{} done", plan.n_realizations);
        start = end;
    }
    Ok(acc.expect("at least one realization").finish())
}
