//! Parameter scans over the atom number and the pulse area.

use serde::Serialize;

use crate::config::RunConfig;
use crate::disorder::{average_realizations, DisorderAverage};
use crate::error::{Error, Result};
use crate::observables::{
    burst_metrics, cross_correlation, detect_threshold, fit_cosine_amplitude, fit_power_law, BurstMetrics, CosineFit,
    EtaNormalization, PowerLawFit, ThresholdFit,
};

/// Metrics of one disorder-averaged trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    /// Scan coordinate: atom number, or pulse area in units of π.
    pub x: f64,
    pub metrics: BurstMetrics,
    pub stored_energy: f64,
}

fn point(x: f64, avg: &DisorderAverage, gamma: f64) -> Result<ScanPoint> {
    Ok(ScanPoint {
        x,
        metrics: burst_metrics(&avg.mean, gamma, EtaNormalization::StoredEnergy)?,
        stored_energy: avg.mean.stored_energy,
    })
}

/// Threshold and power-law analysis of `P_max(N)` and `η_f(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingAnalysis {
    pub threshold: ThresholdFit,
    /// Power law of `P_max` over `N <= knee` (or the configured range).
    pub p_max_below: PowerLawFit,
    pub p_max_above: PowerLawFit,
    /// Mean `η_f` over `N <= knee`.
    pub eta_plateau: f64,
    pub eta_above: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NScan {
    pub points: Vec<ScanPoint>,
    /// Absent with fewer than six points or a degenerate knee.
    pub scaling: Option<ScalingAnalysis>,
}

/// Runs one disorder-averaged simulation per atom number. `sink` sees every
/// point as soon as it is done, so callers can flush partial results.
pub fn run_scan_n(
    cfg: &RunConfig,
    n_list: &[usize],
    mut sink: impl FnMut(&ScanPoint, &DisorderAverage) -> Result<()>,
) -> Result<NScan> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("atom-number list is empty".into()));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidParameter("atom numbers must be positive and ascending".into()));
    }
    let (grid, prep, plan, quad) = (cfg.grid()?, cfg.preparation(), cfg.plan(), cfg.quadrature());
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let params = cfg.params().with_atoms(n);
        let avg = average_realizations(&params, &plan, &prep, &grid, quad)?;
        let p = point(n as f64, &avg, params.gamma)?;
        log::info!("N = {n}: P_max = {:.4e}, t_D = {:.2} ns, eta_f = {:.4}", p.metrics.p_max, p.metrics.t_delay, p.metrics.eta_f);
        sink(&p, &avg)?;
        points.push(p);
    }
    let scaling = match analyze_scaling(&points, cfg.scan.fit_below, cfg.scan.fit_above) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("no scaling analysis: {e}");
            None
        }
    };
    Ok(NScan { points, scaling })
}

/// Locates the knee of `P_max(N)` and fits power laws on both sides; the
/// knee point belongs to both ranges unless explicit ranges are given.
pub fn analyze_scaling(
    points: &[ScanPoint],
    below: Option<(f64, f64)>,
    above: Option<(f64, f64)>,
) -> Result<ScalingAnalysis> {
    let pm: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.metrics.p_max)).collect();
    let eta: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.metrics.eta_f)).collect();
    let threshold = detect_threshold(&pm)?;
    if threshold.degenerate {
        return Err(Error::InsufficientData("P_max(N) shows no knee".into()));
    }
    let knee = threshold.n_threshold;
    let (lo, hi) = (pm[0].0, pm[pm.len() - 1].0);
    // snap the split to the nearest scanned N so that it is included
    let split = pm.iter().map(|p| p.0).min_by(|a, b| (a - knee).abs().total_cmp(&(b - knee).abs())).unwrap();
    let below = below.unwrap_or((lo, split));
    let above = above.unwrap_or((split, hi));
    let in_below: Vec<f64> = eta.iter().filter(|p| p.0 >= below.0 && p.0 <= below.1).map(|p| p.1).collect();
    if in_below.is_empty() {
        return Err(Error::InsufficientData("no points below the knee".into()));
    }
    Ok(ScalingAnalysis {
        threshold,
        p_max_below: fit_power_law(&pm, below)?,
        p_max_above: fit_power_law(&pm, above)?,
        eta_plateau: in_below.iter().sum::<f64>() / in_below.len() as f64,
        eta_above: fit_power_law(&eta, above)?,
    })
}

/// One entry of an area scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaPoint {
    pub point: ScanPoint,
    /// Laser cross-correlation at the first sample after switch-off
    /// (driven mode only).
    pub x_zero: Option<f64>,
    /// Average coherence with the laser (driven mode only).
    pub coherence: Option<CosineFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaScan {
    pub points: Vec<AreaPoint>,
    /// Sample times `t >= 0` shared by every normalised trace.
    pub times: Vec<f64>,
    /// `P_f(t) / P_max` per area; all zeros where nothing is emitted.
    pub normalized: Vec<Vec<f64>>,
}

impl AreaScan {
    /// Index of the longest delay; ties go to the smallest area.
    pub fn argmax_delay(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.point.metrics.t_delay > self.points[best].point.metrics.t_delay {
                best = i;
            }
        }
        best
    }

    /// Index of the smallest `|C|` among points that have one.
    pub fn argmin_coherence(&self) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.coherence.map(|c| (i, c.amplitude.abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// `X(τ)` relative to `t_ref` at switch-off, and its average over the burst,
/// obtained as the amplitude of the heterodyne fringe `X(τ) cos(Ω τ)`. The
/// burst extends from switch-off to the last sample where `P_f` reaches
/// `power_fraction` of its peak.
pub fn laser_coherence(avg: &DisorderAverage, t_ref: f64, power_fraction: f64, omega_lo: f64) -> Result<(f64, CosineFit)> {
    let m = &avg.mean;
    let times = m.grid.sample_times();
    let x = cross_correlation(&times, &m.alpha_out, &m.p_f, t_ref)?;
    // x[k] belongs to times[r + k]
    let r = times.len() - x.len();
    let z = m.zero_index();
    if z < r {
        return Err(Error::InvalidParameter(format!("reference time {t_ref} ns lies after switch-off")));
    }
    let peak = m.p_f[z..].iter().fold(0.0f64, |a, &b| a.max(b));
    let end = (z..times.len()).rev().find(|&i| m.p_f[i] >= power_fraction * peak).unwrap_or(z);
    let (tau, fringe): (Vec<f64>, Vec<f64>) =
        x[z - r..=end - r].iter().map(|&(dt, v)| (dt, v * (omega_lo * dt).cos())).unzip();
    Ok((x[z - r].1, fit_cosine_amplitude(&tau, &fringe, omega_lo)?))
}

/// Runs one disorder-averaged simulation per pulse area (units of π).
pub fn run_scan_area(
    cfg: &RunConfig,
    areas_pi: &[f64],
    mut sink: impl FnMut(&AreaPoint, &DisorderAverage) -> Result<()>,
) -> Result<AreaScan> {
    if areas_pi.is_empty() {
        return Err(Error::InvalidParameter("area list is empty".into()));
    }
    if let Some(a) = areas_pi.iter().find(|a| !(0.0..=2.5).contains(*a)) {
        return Err(Error::InvalidParameter(format!("area {a}π outside [0, 2.5]π")));
    }
    let params = cfg.params();
    let (grid, plan, quad) = (cfg.grid()?, cfg.plan(), cfg.quadrature());
    let base = cfg.preparation();
    let times = grid.sample_times();
    let z = crate::cascade::zero_index(&grid);
    let mut points = Vec::with_capacity(areas_pi.len());
    let mut normalized = Vec::with_capacity(areas_pi.len());
    for &a in areas_pi {
        let prep = base.with_area(a * std::f64::consts::PI);
        let avg = average_realizations(&params, &plan, &prep, &grid, quad)?;
        let sp = point(a, &avg, params.gamma)?;
        let (x_zero, coherence) = if prep.is_driven() && sp.metrics.p_max > 0.0 {
            let (x0, c) = laser_coherence(&avg, cfg.scan.t_ref, cfg.scan.coherence_power_fraction, cfg.omega_lo())?;
            (Some(x0), Some(c))
        } else {
            (None, None)
        };
        let ap = AreaPoint { point: sp, x_zero, coherence };
        log::info!(
            "A = {a:.4}π: P_max = {:.4e}, t_D = {:.2} ns, |C| = {:?}",
            sp.metrics.p_max,
            sp.metrics.t_delay,
            coherence.map(|c| c.amplitude.abs())
        );
        sink(&ap, &avg)?;
        let peak = sp.metrics.p_max;
        normalized.push(avg.mean.p_f[z..].iter().map(|&p| if peak > 0.0 { p / peak } else { 0.0 }).collect());
        points.push(ap);
    }
    Ok(AreaScan { points, times: times[z..].to_vec(), normalized })
}
