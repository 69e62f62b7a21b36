//! Figures of merit extracted from forward-power traces.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cascade::{zero_index, EnsembleResult};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstMetrics {
    /// Peak forward flux after pulse switch-off (photons/ns).
    pub p_max: f64,
    /// Time of the peak (ns), zero for a monotone decay.
    pub t_delay: f64,
    /// Fraction of the normalising energy emitted into the forward mode.
    pub eta_f: f64,
}

/// Which energy `η_f` is normalised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaNormalization {
    /// Excitation stored in the atoms at `t = 0`.
    #[default]
    StoredEnergy,
    /// Energy removed from the pulse while it was on, `∫_{t<0} (P_in - P_f) dt`.
    AbsorbedEnergy,
}

/// Maximum of `trace` over `t >= 0`; ties go to the earliest sample.
pub fn peak_and_delay(times: &[f64], trace: &[f64]) -> Result<(f64, f64)> {
    if trace.is_empty() || times.len() != trace.len() {
        return Err(Error::InsufficientData("empty or mismatched trace".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for (&t, &v) in times.iter().zip(trace) {
        if t < 0.0 {
            continue;
        }
        match best {
            Some((bv, _)) if v <= bv => {}
            _ => best = Some((v, t)),
        }
    }
    let (p_max, t_peak) = best.ok_or_else(|| Error::InsufficientData("no samples at t >= 0".into()))?;
    let t0 = times.iter().copied().find(|&t| t >= 0.0).unwrap_or(0.0);
    Ok((p_max, t_peak - t0))
}

/// `[∫_0^T P_f dt + P_f(T)/Γ] / E`, with `p_f` given at grid samples.
pub fn forward_fraction(grid: &TimeGrid, p_f: &[f64], e_stored: f64, gamma: f64) -> Result<f64> {
    if !(e_stored > 0.0) {
        return Err(Error::InvalidParameter(format!("normalising energy must be > 0, got {e_stored}")));
    }
    if p_f.len() != grid.n_samples() {
        return Err(Error::InvalidParameter("trace length does not match grid".into()));
    }
    let tail = p_f[p_f.len() - 1];
    let peak = p_f[zero_index(grid)..].iter().fold(0.0f64, |m, &v| m.max(v));
    if tail > 1e-3 * peak {
        log::warn!("forward trace has not decayed: P_f(T) = {tail:.3e} vs peak {peak:.3e}");
    }
    Ok((grid.integrate_from(p_f, 0.0) + tail / gamma) / e_stored)
}

/// `∫_{t<0} (P_in - P_f) dt`: pulse energy not transmitted.
pub fn absorbed_energy(result: &EnsembleResult) -> f64 {
    let grid = &result.grid;
    let diff: Vec<f64> = result.input_power.iter().zip(&result.p_f).map(|(a, b)| a - b).collect();
    grid.integrate_from(&diff, grid.t_start()) - grid.integrate_from(&diff, 0.0)
}

pub fn burst_metrics(result: &EnsembleResult, gamma: f64, norm: EtaNormalization) -> Result<BurstMetrics> {
    let grid = &result.grid;
    let (p_max, t_delay) = peak_and_delay(&grid.node_times(), &grid.nodes_of(&result.p_f))?;
    let energy = match norm {
        EtaNormalization::StoredEnergy => result.stored_energy,
        EtaNormalization::AbsorbedEnergy => absorbed_energy(result),
    };
    let eta_f = if energy > 0.0 { forward_fraction(grid, &result.p_f, energy, gamma)? } else { 0.0 };
    Ok(BurstMetrics { p_max, t_delay, eta_f })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_err: f64,
    pub prefactor: f64,
    pub range: (f64, f64),
    pub n_points: usize,
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - icept - slope * a).powi(2)).sum();
    (slope, icept, sse, sxx)
}

/// Least-squares line through `(ln N, ln y)` for points with `N` in `range`.
pub fn fit_power_law(points: &[(f64, f64)], range: (f64, f64)) -> Result<PowerLawFit> {
    let sel: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(n, _)| n >= range.0 && n <= range.1).collect();
    if sel.len() < 3 {
        return Err(Error::InsufficientData(format!("power-law fit needs 3 points, got {}", sel.len())));
    }
    if sel.iter().any(|&(n, y)| !(n > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParameter("power-law fit needs positive values".into()));
    }
    let x: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let (slope, icept, sse, sxx) = line_fit(&x, &y);
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("power-law fit needs distinct N".into()));
    }
    let dof = (sel.len() - 2) as f64;
    let exponent_err = if dof > 0.0 { (sse / dof / sxx).sqrt() } else { 0.0 };
    Ok(PowerLawFit { exponent: slope, exponent_err, prefactor: icept.exp(), range, n_points: sel.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub n_threshold: f64,
    pub slope_below: f64,
    pub slope_above: f64,
    pub sse: f64,
    /// The data show no usable knee (a single power law fits as well, or the
    /// best breakpoint sits at the edge of the admissible range).
    pub degenerate: bool,
}

const KNEE_SUBDIVISIONS: usize = 64;

fn hinge_fit(x: &[f64], y: &[f64], x0: f64) -> (f64, f64, f64, f64) {
    // y = a + b1 min(x - x0, 0) + b2 max(x - x0, 0)
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let r = [1.0, (xi - x0).min(0.0), (xi - x0).max(0.0)];
        for a in 0..3 {
            aty[a] += r[a] * yi;
            for b in 0..3 {
                ata[a][b] += r[a] * r[b];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
    let v = nalgebra::Vector3::from(aty);
    let sol = m.lu().solve(&v).unwrap_or_else(nalgebra::Vector3::zeros);
    let sse = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let f = sol[0] + sol[1] * (xi - x0).min(0.0) + sol[2] * (xi - x0).max(0.0);
            (yi - f).powi(2)
        })
        .sum();
    (sol[0], sol[1], sol[2], sse)
}

/// Continuous two-segment power law in log–log space; the breakpoint is
/// scanned between data points so that each side keeps at least three.
pub fn detect_threshold(points: &[(f64, f64)]) -> Result<ThresholdFit> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "threshold detection needs >= 6 points (3 per segment), got {}",
            pts.len()
        )));
    }
    if pts.iter().any(|&(n, y)| !(n > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParameter("threshold detection needs positive values".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = x.len();

    let mut best = (f64::INFINITY, x[2], 0.0, 0.0);
    for i in 2..n - 3 {
        for k in 0..KNEE_SUBDIVISIONS {
            let x0 = x[i] + (x[i + 1] - x[i]) * k as f64 / KNEE_SUBDIVISIONS as f64;
            let (_, b1, b2, sse) = hinge_fit(&x, &y, x0);
            if sse < best.0 {
                best = (sse, x0, b1, b2);
            }
        }
    }
    let (_, b1, b2, sse) = hinge_fit(&x, &y, x[n - 3]);
    if sse < best.0 {
        best = (sse, x[n - 3], b1, b2);
    }
    let (sse, x0, b1, b2) = best;

    let (_, _, sse_line, _) = line_fit(&x, &y);
    let my = y.iter().sum::<f64>() / n as f64;
    let spread: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let at_edge = (x0 - x[2]).abs() < 1e-12 || (x0 - x[n - 3]).abs() < 1e-12;
    let no_gain = sse_line <= sse + 1e-12 * (1.0 + spread);
    Ok(ThresholdFit {
        n_threshold: x0.exp(),
        slope_below: b1,
        slope_above: b2,
        sse,
        degenerate: at_edge && no_gain || no_gain,
    })
}

/// Normalised cross-correlation between the field at `t_ref` and at every
/// later time, carried by the mean coherent amplitude:
/// `X(t) = Re[α(t_ref)* α(t)] / sqrt(P(t_ref) P(t))` for `t >= t_ref`.
///
/// Returns `(τ, X)` pairs with `τ = t - t_ref`.
pub fn cross_correlation(
    times: &[f64],
    alpha: &[C64],
    power: &[f64],
    t_ref: f64,
) -> Result<Vec<(f64, f64)>> {
    if times.is_empty() || times.len() != alpha.len() || times.len() != power.len() {
        return Err(Error::InsufficientData("empty or mismatched field series".into()));
    }
    let r = times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t_ref).abs().total_cmp(&(b.1 - t_ref).abs()))
        .map(|(i, _)| i)
        .unwrap();
    if !(power[r] > 0.0) {
        return Err(Error::InvalidParameter(format!("no power at reference time {t_ref} ns")));
    }
    let a_ref = alpha[r].conj();
    Ok((r..times.len())
        .map(|i| {
            let x = if power[i] > 0.0 { (a_ref * alpha[i]).re / (power[r] * power[i]).sqrt() } else { 0.0 };
            (times[i] - times[r], x.clamp(-1.0, 1.0))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub amplitude: f64,
    pub amplitude_err: f64,
}

/// Least-squares amplitude `C` of `C cos(ω τ)`.
pub fn fit_cosine_amplitude(tau: &[f64], series: &[f64], omega: f64) -> Result<CosineFit> {
    if tau.len() != series.len() || tau.len() < 3 {
        return Err(Error::InsufficientData("cosine fit needs at least 3 samples".into()));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let span = tau[tau.len() - 1] - tau[0];
    if !(span >= period) {
        return Err(Error::InsufficientData(format!("series spans {span} ns, less than one period {period} ns")));
    }
    if span < 2.0 * period {
        log::warn!("cosine fit over less than two periods");
    }
    let (mut syc, mut scc) = (0.0, 0.0);
    for (&t, &y) in tau.iter().zip(series) {
        let c = (omega * t).cos();
        syc += y * c;
        scc += c * c;
    }
    let amplitude = syc / scc;
    let ssr: f64 = tau.iter().zip(series).map(|(&t, &y)| (y - amplitude * (omega * t).cos()).powi(2)).sum();
    let amplitude_err = (ssr / (tau.len() - 1) as f64 / scc).sqrt();
    Ok(CosineFit { amplitude, amplitude_err })
}

/// Centered moving average with a window of `window` samples (odd windows
/// are symmetric; the window shrinks at the edges). `window <= 1` is a no-op.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
