//! Least-squares fit of the coupling distribution `(β̄, σ)` to target traces.
//!
//! The objective reuses one fixed seed for every evaluation and draws
//! couplings by inverse CDF, so each atom's coupling is a smooth function of
//! `(β̄, σ)` and the objective is a deterministic, smooth surface that a
//! simplex search can follow.

use serde::{Deserialize, Serialize};

use crate::cascade::{PhaseQuadrature, PreparationMode};
use crate::disorder::{average_realizations, DisorderPlan, SamplingMethod, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::params::PhysicalParams;

/// One measured (or synthetic) trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTarget {
    pub n_atoms: usize,
    pub prep: PreparationMode,
    pub times: Vec<f64>,
    pub p_f: Vec<f64>,
    /// Per-point weights; all ones when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub beta_mean: (f64, f64),
    pub beta_std: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self { beta_mean: (0.0, 0.1), beta_std: (0.0, 0.05) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub targets: Vec<FitTarget>,
    #[serde(default)]
    pub bounds: FitBounds,
}

/// Simulation settings shared by every objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSimulation {
    pub params: PhysicalParams,
    pub grid: TimeGrid,
    pub n_realizations: usize,
    pub quadrature: PhaseQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Convergence when the simplex diameter (in units of the bound box)
    /// drops below this.
    pub x_tol: f64,
    /// ... or when the objective spread across the simplex drops below
    /// `f_tol` times the largest objective seen.
    pub f_tol: f64,
    pub max_restarts: usize,
    pub start: (f64, f64),
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evaluations: 300, x_tol: 1e-4, f_tol: 1e-10, max_restarts: 3, start: (0.015, 0.01) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStep {
    pub beta_mean: f64,
    pub beta_std: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta_mean: f64,
    pub beta_std: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// The best mean coupling sits on its lower bound, i.e. the targets carry
    /// no usable signal.
    pub degenerate: bool,
    pub history: Vec<FitStep>,
}

impl FitReport {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence { evaluations: self.evaluations })
        }
    }
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("fit needs at least one target trace".into()));
        }
        let FitBounds { beta_mean: (m0, m1), beta_std: (s0, s1) } = self.bounds;
        if !(0.0 <= m0 && m0 < m1 && m1 <= 1.0 && 0.0 <= s0 && s0 < s1) {
            return Err(Error::InvalidParameter(format!("empty or invalid fit bounds {:?}", self.bounds)));
        }
        for t in &self.targets {
            if t.times.len() != t.p_f.len() || t.times.is_empty() {
                return Err(Error::InvalidParameter("target times and values differ in length".into()));
            }
            if let Some(w) = &t.weights {
                if w.len() != t.p_f.len() || w.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::InvalidParameter("weights must be >= 0, one per point".into()));
                }
            }
        }
        Ok(())
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let hi = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let lo = hi - 1;
    let w = ((x - xs[lo]) / (xs[hi] - xs[lo])).clamp(0.0, 1.0);
    ys[lo] * (1.0 - w) + ys[hi] * w
}

/// Weighted squared residual between disorder-averaged simulations and the
/// targets, at `(beta_mean, beta_std)`.
pub fn objective(problem: &FitProblem, sim: &FitSimulation, seed: u64, beta_mean: f64, beta_std: f64) -> Result<f64> {
    let plan = DisorderPlan {
        dist: TruncatedGaussian { mean: beta_mean, std: beta_std },
        n_realizations: sim.n_realizations,
        seed,
        method: SamplingMethod::InverseCdf,
    };
    let node_t = sim.grid.node_times();
    let mut total = 0.0;
    for target in &problem.targets {
        let params = sim.params.with_atoms(target.n_atoms);
        let avg = average_realizations(&params, &plan, &target.prep, &sim.grid, sim.quadrature)?;
        let model = sim.grid.nodes_of(&avg.mean.p_f);
        for (k, (&t, &y)) in target.times.iter().zip(&target.p_f).enumerate() {
            let w = target.weights.as_ref().map_or(1.0, |w| w[k]);
            total += w * (interpolate(&node_t, &model, t) - y).powi(2);
        }
    }
    Ok(total)
}

struct Simplex {
    pts: Vec<[f64; 2]>,
    vals: Vec<f64>,
}

impl Simplex {
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..3).collect();
        idx.sort_by(|&a, &b| self.vals[a].total_cmp(&self.vals[b]));
        self.pts = idx.iter().map(|&i| self.pts[i]).collect();
        self.vals = idx.iter().map(|&i| self.vals[i]).collect();
    }

    fn diameter(&self) -> f64 {
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d(self.pts[0], self.pts[1]).max(d(self.pts[0], self.pts[2])).max(d(self.pts[1], self.pts[2]))
    }
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Nelder–Mead on the unit square (the bound box rescaled), with points
/// projected back into the box. Restarts from the best vertex until a restart
/// stops improving.
pub fn fit_disorder_params(
    problem: &FitProblem,
    sim: &FitSimulation,
    seed: u64,
    opts: &SimplexOptions,
) -> Result<FitReport> {
    problem.validate()?;
    let b = problem.bounds;
    // keep the mean strictly positive: a zero-mean, zero-width distribution
    // puts every atom at β = 0
    let m_lo = b.beta_mean.0.max(1e-6 * (b.beta_mean.1 - b.beta_mean.0));
    let to_phys = |u: [f64; 2]| {
        (m_lo + u[0] * (b.beta_mean.1 - m_lo), b.beta_std.0 + u[1] * (b.beta_std.1 - b.beta_std.0))
    };
    let to_unit = |m: f64, s: f64| {
        [(m - m_lo) / (b.beta_mean.1 - m_lo), (s - b.beta_std.0) / (b.beta_std.1 - b.beta_std.0)]
    };
    let (sm, ss) = opts.start;
    if !(sm >= b.beta_mean.0 && sm <= b.beta_mean.1 && ss >= b.beta_std.0 && ss <= b.beta_std.1) {
        return Err(Error::InvalidParameter(format!("start point {:?} outside bounds {:?}", opts.start, b)));
    }

    let mut history = Vec::new();
    let mut evals = 0usize;
    let eval = |u: [f64; 2], history: &mut Vec<FitStep>| -> Result<f64> {
        let (m, s) = to_phys(u);
        let f = objective(problem, sim, seed, m, s)?;
        history.push(FitStep { beta_mean: m, beta_std: s, objective: f });
        log::debug!("objective({m:.6}, {s:.6}) = {f:.6e}");
        Ok(f)
    };

    let mut best = clamp_unit(to_unit(sm, ss));
    let mut best_f = eval(best, &mut history)?;
    evals += 1;
    let mut f_scale = best_f.abs();
    let mut converged = false;
    let mut step = 0.25;

    for restart in 0..=opts.max_restarts {
        let mut sx = Simplex { pts: vec![best], vals: vec![best_f] };
        for d in 0..2 {
            let mut p = best;
            p[d] = if p[d] + step <= 1.0 { p[d] + step } else { p[d] - step };
            sx.vals.push(eval(p, &mut history)?);
            sx.pts.push(p);
            evals += 1;
        }
        let (start_best, start_pt) = (best_f, best);
        let mut local_converged = false;
        while evals < opts.max_evaluations {
            sx.order();
            f_scale = f_scale.max(sx.vals[2].abs());
            if sx.diameter() < opts.x_tol || sx.vals[2] - sx.vals[0] <= opts.f_tol * f_scale {
                local_converged = true;
                break;
            }
            let centroid = lerp(sx.pts[0], sx.pts[1], 0.5);
            let xr = clamp_unit(lerp(centroid, sx.pts[2], -1.0));
            let fr = eval(xr, &mut history)?;
            evals += 1;
            if fr < sx.vals[0] {
                let xe = clamp_unit(lerp(centroid, sx.pts[2], -2.0));
                let fe = eval(xe, &mut history)?;
                evals += 1;
                if fe < fr {
                    sx.pts[2] = xe;
                    sx.vals[2] = fe;
                } else {
                    sx.pts[2] = xr;
                    sx.vals[2] = fr;
                }
            } else if fr < sx.vals[1] {
                sx.pts[2] = xr;
                sx.vals[2] = fr;
            } else {
                let (xc, outside) = if fr < sx.vals[2] {
                    (lerp(centroid, xr, 0.5), true)
                } else {
                    (lerp(centroid, sx.pts[2], 0.5), false)
                };
                let fc = eval(xc, &mut history)?;
                evals += 1;
                if (outside && fc <= fr) || (!outside && fc < sx.vals[2]) {
                    sx.pts[2] = xc;
                    sx.vals[2] = fc;
                } else {
                    for k in 1..3 {
                        sx.pts[k] = lerp(sx.pts[0], sx.pts[k], 0.5);
                        sx.vals[k] = eval(sx.pts[k], &mut history)?;
                        evals += 1;
                    }
                }
            }
        }
        sx.order();
        if sx.vals[0] <= best_f {
            best = sx.pts[0];
            best_f = sx.vals[0];
        }
        converged = local_converged;
        if !local_converged {
            break;
        }
        // a restart that finds nothing better confirms the minimum
        let moved = ((best[0] - start_pt[0]).powi(2) + (best[1] - start_pt[1]).powi(2)).sqrt();
        if restart > 0 && (moved < 10.0 * opts.x_tol || start_best - best_f <= opts.f_tol * f_scale) {
            break;
        }
        step = (sx.diameter() * 4.0).clamp(10.0 * opts.x_tol, 0.25);
    }

    let (m, s) = to_phys(best);
    Ok(FitReport {
        beta_mean: m,
        beta_std: s,
        objective: best_f,
        evaluations: evals,
        converged,
        degenerate: best[0] <= 1e-6,
        history,
    })
}
