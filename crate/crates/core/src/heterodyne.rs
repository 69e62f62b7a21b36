//! Heterodyne detection: the relation between a signal field, the
//! autocorrelation `g2_D` of the signal beaten against a frequency-shifted
//! local oscillator, and the first-order coherence `g1` of the signal; plus a
//! click-level Monte Carlo of the measurement.
//!
//! Correlation surfaces are indexed by `(t_i, τ_j)` on a uniform time series,
//! with `τ_j = j·dt` and `t_i + τ_j = t_{i+j}`; entries whose second time falls
//! off the end of the series are NaN.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::EnsembleResult;
use crate::error::{Error, Result};
use crate::params::DEFAULT_OMEGA_LO;

/// Extraction is masked where the visibility bound falls below this.
pub const V_MAX_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneConfig {
    /// Local-oscillator flux (photons/ns).
    pub p_lo: f64,
    /// Angular frequency offset of the local oscillator (rad/ns).
    pub omega_lo: f64,
    /// Visibility scale factor from imperfect polarization matching.
    pub polarization_overlap: f64,
}

impl Default for HeterodyneConfig {
    fn default() -> Self {
        Self { p_lo: 100.0, omega_lo: DEFAULT_OMEGA_LO, polarization_overlap: 1.0 }
    }
}

impl HeterodyneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_lo > 0.0 && self.p_lo.is_finite()) {
            return Err(Error::InvalidParameter(format!("local-oscillator power must be > 0, got {}", self.p_lo)));
        }
        if !(self.omega_lo > 0.0 && self.omega_lo.is_finite()) {
            return Err(Error::InvalidParameter(format!("LO offset must be > 0, got {}", self.omega_lo)));
        }
        if !(self.polarization_overlap > 0.0 && self.polarization_overlap <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "polarization overlap must be in (0, 1], got {}",
                self.polarization_overlap
            )));
        }
        Ok(())
    }
}

/// How the incoherent part of a field enters `g1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceModel {
    /// Only the mean coherent amplitude carries correlations:
    /// `g1 = Re[α(t)* α(t+τ)] / sqrt(P P')`.
    MeanField,
    /// The incoherent part is a field of random but fixed phase per shot,
    /// as in the click Monte Carlo: `g1 = (Re[α* α'] + sqrt(F F')) / sqrt(P P')`.
    RandomPhaseShot,
}

/// Signal field on a uniform time series.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSignal {
    pub t0: f64,
    pub dt: f64,
    /// Coherent amplitude (sqrt(photons/ns)).
    pub alpha: Vec<C64>,
    /// Incoherent flux (photons/ns).
    pub f_inc: Vec<f64>,
}

impl ClassicalSignal {
    pub fn coherent(t0: f64, dt: f64, alpha: Vec<C64>) -> Self {
        let n = alpha.len();
        Self { t0, dt, alpha, f_inc: vec![0.0; n] }
    }

    /// Resamples an ensemble output onto `t0, t0 + dt, …` up to the grid end
    /// by linear interpolation of the right-continuous sample series.
    pub fn from_ensemble(result: &EnsembleResult, t0: f64, dt: f64) -> Result<Self> {
        let grid = &result.grid;
        if !(dt > 0.0) || t0 < grid.t_start() || t0 >= grid.t_end() {
            return Err(Error::InvalidParameter(format!("cannot resample from {t0} with step {dt}")));
        }
        let ts = grid.sample_times();
        let n = ((grid.t_end() - t0) / dt + 1e-9).floor() as usize + 1;
        let mut alpha = Vec::with_capacity(n);
        let mut f_inc = Vec::with_capacity(n);
        for k in 0..n {
            let t = t0 + k as f64 * dt;
            let hi = ts.partition_point(|&x| x <= t).min(ts.len() - 1).max(1);
            let lo = hi - 1;
            let w = if ts[hi] > ts[lo] { ((t - ts[lo]) / (ts[hi] - ts[lo])).clamp(0.0, 1.0) } else { 1.0 };
            let a = result.alpha_out[lo] * (1.0 - w) + result.alpha_out[hi] * w;
            let p = result.p_f[lo] * (1.0 - w) + result.p_f[hi] * w;
            alpha.push(a);
            f_inc.push((p - a.norm_sqr()).max(0.0));
        }
        Ok(Self { t0, dt, alpha, f_inc })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t0 + k as f64 * self.dt).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.f_inc).map(|(a, f)| a.norm_sqr() + f).collect()
    }

    /// `g1(t_i, τ_j)` for `j <= max_lag`.
    pub fn g1(&self, max_lag: usize, model: CoherenceModel) -> Vec<Vec<f64>> {
        let p = self.power();
        let n = self.len();
        (0..n)
            .map(|i| {
                (0..=max_lag)
                    .map(|j| {
                        let k = i + j;
                        if k >= n {
                            return f64::NAN;
                        }
                        let norm = (p[i] * p[k]).sqrt();
                        if norm == 0.0 {
                            return 0.0;
                        }
                        let mut num = (self.alpha[i].conj() * self.alpha[k]).re;
                        if model == CoherenceModel::RandomPhaseShot {
                            num += (self.f_inc[i] * self.f_inc[k]).sqrt();
                        }
                        num / norm
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    pub times: Vec<f64>,
    pub lags: Vec<f64>,
    pub omega_lo: f64,
    pub g2_d: Vec<Vec<f64>>,
    pub v_max: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub p_d: Vec<f64>,
}

/// `g2_D = 1 + V_max cos(Ω τ) g1` with
/// `V_max = η · 2 P_LO sqrt(P P') / (P_D P_D')` and `P_D = P_LO + P`.
pub fn forward_g2(
    times: &[f64],
    power: &[f64],
    g1: &[Vec<f64>],
    cfg: &HeterodyneConfig,
) -> Result<CorrelationSurface> {
    cfg.validate()?;
    if times.len() < 2 || power.len() != times.len() || g1.len() != times.len() {
        return Err(Error::InvalidParameter("signal series lengths differ".into()));
    }
    if power.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("signal power must be >= 0".into()));
    }
    let peak = power.iter().fold(0.0f64, |m, &v| m.max(v));
    if cfg.p_lo < 100.0 * peak {
        log::warn!("P_LO = {} is not >> signal peak {peak:.3e}; the dropped g2 term matters", cfg.p_lo);
    }
    let dt = times[1] - times[0];
    let n_lag = g1[0].len();
    let lags: Vec<f64> = (0..n_lag).map(|j| j as f64 * dt).collect();
    let p_d: Vec<f64> = power.iter().map(|p| cfg.p_lo + p).collect();
    let mut v_max = vec![vec![f64::NAN; n_lag]; times.len()];
    let mut g2_d = vec![vec![f64::NAN; n_lag]; times.len()];
    for i in 0..times.len() {
        for j in 0..n_lag {
            let k = i + j;
            if k >= times.len() {
                break;
            }
            let v = cfg.polarization_overlap * 2.0 * cfg.p_lo * (power[i] * power[k]).sqrt() / (p_d[i] * p_d[k]);
            v_max[i][j] = v;
            g2_d[i][j] = 1.0 + v * (cfg.omega_lo * lags[j]).cos() * g1[i][j];
        }
    }
    Ok(CorrelationSurface { times: times.to_vec(), lags, omega_lo: cfg.omega_lo, g2_d, v_max, p: power.to_vec(), p_d })
}

/// `(g2_D - 1) / V_max`, NaN where `V_max < V_MAX_CUTOFF`.
pub fn extract_g1(surface: &CorrelationSurface) -> Vec<Vec<f64>> {
    surface
        .g2_d
        .iter()
        .zip(&surface.v_max)
        .map(|(g, v)| {
            g.iter()
                .zip(v)
                .map(|(&g, &v)| if v >= V_MAX_CUTOFF { (g - 1.0) / v } else { f64::NAN })
                .collect()
        })
        .collect()
}

/// Detector counts: `counts[r][i]` is the number of clicks in bin `i` of
/// repetition `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickRecord {
    pub edges: Vec<u64>,
    pub counts: Vec<Vec<u32>>,
    pub n_repetitions: usize,
}

/// Bin layout in units of the signal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    /// Signal samples per bin.
    pub samples_per_bin: usize,
    /// Largest lag, in bins, of the estimated surface.
    pub max_lag_bins: usize,
}

/// Per-bin integrals of the detected rate for phases `(θ, ψ)`:
/// `λ = c + Re(e^{iψ} d) + Re(e^{-iθ} (b + e^{iψ} e))`.
#[derive(Debug, Clone)]
struct BinIntegrals {
    centers: Vec<f64>,
    c: Vec<f64>,
    d: Vec<C64>,
    b: Vec<C64>,
    e: Vec<C64>,
}

fn bin_integrals(sig: &ClassicalSignal, cfg: &HeterodyneConfig, bins: &Binning) -> Result<BinIntegrals> {
    cfg.validate()?;
    let m = bins.samples_per_bin;
    if m == 0 {
        return Err(Error::InvalidParameter("bin must span at least one signal step".into()));
    }
    if sig.len() < m + 1 {
        return Err(Error::InsufficientData("signal shorter than one bin".into()));
    }
    let n_bins = (sig.len() - 1) / m;
    let amp = 2.0 * cfg.polarization_overlap * cfg.p_lo.sqrt();
    let rot = |k: usize| C64::from_polar(1.0, -cfg.omega_lo * (sig.t0 + k as f64 * sig.dt));
    let mut out = BinIntegrals {
        centers: Vec::with_capacity(n_bins),
        c: Vec::with_capacity(n_bins),
        d: Vec::with_capacity(n_bins),
        b: Vec::with_capacity(n_bins),
        e: Vec::with_capacity(n_bins),
    };
    for i in 0..n_bins {
        let (mut c, mut d, mut b, mut e) = (0.0, C64::default(), C64::default(), C64::default());
        // trapezoid over the samples of the bin
        for k in i * m..=(i + 1) * m {
            let w = if k == i * m || k == (i + 1) * m { 0.5 * sig.dt } else { sig.dt };
            let sf = sig.f_inc[k].sqrt();
            c += w * (cfg.p_lo + sig.alpha[k].norm_sqr() + sig.f_inc[k]);
            d += w * 2.0 * sig.alpha[k].conj() * sf;
            b += w * amp * rot(k) * sig.alpha[k];
            e += w * amp * rot(k) * sf;
        }
        out.centers.push(sig.t0 + (i as f64 + 0.5) * m as f64 * sig.dt);
        out.c.push(c);
        out.d.push(d);
        out.b.push(b);
        out.e.push(e);
    }
    Ok(out)
}

/// Draws Poisson clicks for `n_reps` repetitions. Each repetition has its own
/// LO phase `θ` and incoherent-field phase `ψ`, both uniform on `[0, 2π)`,
/// and its own random stream, so the record does not depend on the worker
/// count.
pub fn monte_carlo_clicks(
    sig: &ClassicalSignal,
    cfg: &HeterodyneConfig,
    bins: &Binning,
    n_reps: usize,
    seed: u64,
) -> Result<ClickRecord> {
    if n_reps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 repetitions, got {n_reps}")));
    }
    let bi = bin_integrals(sig, cfg, bins)?;
    let counts: Result<Vec<Vec<u32>>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let psi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (et, ep) = (C64::from_polar(1.0, -theta), C64::from_polar(1.0, psi));
            (0..bi.c.len())
                .map(|i| {
                    let lam = bi.c[i] + (ep * bi.d[i]).re + (et * (bi.b[i] + ep * bi.e[i])).re;
                    let lam = lam.max(0.0);
                    if lam == 0.0 {
                        return Ok(0);
                    }
                    let pois = Poisson::new(lam).map_err(|e| Error::Sampling(format!("Poisson({lam}): {e}")))?;
                    Ok(pois.sample(&mut rng) as u32)
                })
                .collect()
        })
        .collect();
    let edges = (0..=bi.c.len()).map(|i| (i * bins.samples_per_bin) as u64).collect();
    Ok(ClickRecord { edges, counts: counts?, n_repetitions: n_reps })
}

/// Estimated `g2_D` on bins with delta-method standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub centers: Vec<f64>,
    pub lags: Vec<f64>,
    pub g2: Vec<Vec<f64>>,
    pub err: Vec<Vec<f64>>,
}

/// `g2(i, j) = <n_i n_{i+j}> / (<n_i><n_{i+j}>)`, with `n (n - 1)` in place of
/// `n²` at zero lag so Poisson shot noise does not bias it.
pub fn estimate_g2(record: &ClickRecord, sig: &ClassicalSignal, bins: &Binning) -> Result<G2Estimate> {
    let r = record.n_repetitions as f64;
    if record.n_repetitions < 2 {
        return Err(Error::InsufficientData("need at least 2 repetitions".into()));
    }
    let nb = record.counts[0].len();
    let nl = bins.max_lag_bins + 1;
    let mut sy = vec![0.0; nb];
    let mut syy = vec![0.0; nb];
    let mut sx = vec![vec![0.0; nl]; nb];
    let mut sxx = vec![vec![0.0; nl]; nb];
    let mut sxy = vec![vec![0.0; nl]; nb];
    let mut sxz = vec![vec![0.0; nl]; nb];
    let mut syz = vec![vec![0.0; nl]; nb];
    for row in &record.counts {
        for i in 0..nb {
            let y = row[i] as f64;
            sy[i] += y;
            syy[i] += y * y;
            for j in 0..nl.min(nb - i) {
                let z = row[i + j] as f64;
                let x = if j == 0 { y * (y - 1.0) } else { y * z };
                sx[i][j] += x;
                sxx[i][j] += x * x;
                sxy[i][j] += x * y;
                sxz[i][j] += x * z;
                syz[i][j] += y * z;
            }
        }
    }
    let dt_bin = bins.samples_per_bin as f64 * sig.dt;
    let centers = (0..nb).map(|i| sig.t0 + (i as f64 + 0.5) * dt_bin).collect();
    let lags = (0..nl).map(|j| j as f64 * dt_bin).collect();
    let mut g2 = vec![vec![f64::NAN; nl]; nb];
    let mut err = vec![vec![f64::NAN; nl]; nb];
    let cov = |sab: f64, sa: f64, sb: f64| (sab / r - sa / r * sb / r) / (r - 1.0);
    for i in 0..nb {
        for j in 0..nl.min(nb - i) {
            let k = i + j;
            let (mx, my, mz) = (sx[i][j] / r, sy[i] / r, sy[k] / r);
            if my == 0.0 || mz == 0.0 {
                continue;
            }
            let g = mx / (my * mz);
            g2[i][j] = g;
            if mx == 0.0 {
                err[i][j] = 0.0;
                continue;
            }
            let vxx = cov(sxx[i][j], sx[i][j], sx[i][j]);
            let vyy = cov(syy[i], sy[i], sy[i]);
            let vzz = cov(syy[k], sy[k], sy[k]);
            let vxy = cov(sxy[i][j], sx[i][j], sy[i]);
            let vxz = cov(sxz[i][j], sx[i][j], sy[k]);
            let vyz = cov(syz[i][j], sy[i], sy[k]);
            let rel = vxx / (mx * mx) + vyy / (my * my) + vzz / (mz * mz) - 2.0 * vxy / (mx * my)
                - 2.0 * vxz / (mx * mz)
                + 2.0 * vyz / (my * mz);
            err[i][j] = g.abs() * rel.max(0.0).sqrt();
        }
    }
    Ok(G2Estimate { centers, lags, g2, err })
}

/// Exact expectation of [`estimate_g2`] for the binned click model:
/// with `λ = A + Re(e^{iψ} d) + Re(e^{-iθ} B(ψ))`, averaging over both phases
/// gives `E[λ_i λ_k] = A_i A_k + ½ Re(d_i d_k*) + ½ Re(b_i b_k* + e_i e_k*)`.
pub fn expected_binned_g2(sig: &ClassicalSignal, cfg: &HeterodyneConfig, bins: &Binning) -> Result<G2Estimate> {
    let bi = bin_integrals(sig, cfg, bins)?;
    let nb = bi.c.len();
    let nl = bins.max_lag_bins + 1;
    let dt_bin = bins.samples_per_bin as f64 * sig.dt;
    let mut g2 = vec![vec![f64::NAN; nl]; nb];
    for i in 0..nb {
        for j in 0..nl.min(nb - i) {
            let k = i + j;
            let num = bi.c[i] * bi.c[k]
                + 0.5 * (bi.d[i] * bi.d[k].conj()).re
                + 0.5 * (bi.b[i] * bi.b[k].conj() + bi.e[i] * bi.e[k].conj()).re;
            g2[i][j] = num / (bi.c[i] * bi.c[k]);
        }
    }
    Ok(G2Estimate {
        centers: bi.centers,
        lags: (0..nl).map(|j| j as f64 * dt_bin).collect(),
        g2,
        err: vec![vec![0.0; nl]; nb],
    })
}
