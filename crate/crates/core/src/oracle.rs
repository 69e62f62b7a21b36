//! Exact cascaded master equation for a few atoms.
//!
//! Basis states are bit strings: bit `k` set means atom `k` (counted from the
//! upstream end) is excited. With `c_k = sqrt(β_k Γ)` and the forward jump
//! operator `J = -i Σ_k c_k σ_k`, the generator is
//!
//! ```text
//! dρ/dt = -i (H ρ - ρ H†) + J ρ J† + Σ_k (1 - β_k) Γ σ_k ρ σ_k†
//! H = -(i/2) Γ Σ_k n_k - i Σ_{j<k} c_j c_k σ_k† σ_j + Σ_k c_k (α σ_k† + α* σ_k)
//! ```
//!
//! so that the forward field after the chain is `α + J`. Operators act on the
//! dense matrix through their (few) nonzero entries.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bloch::{ideal_state, make_pulse, AtomState, CoherentDrive};
use crate::cascade::{propagate_ensemble, zero_index, PhaseQuadrature, PreparationMode};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::observables::{forward_fraction, peak_and_delay};
use crate::params::{check_beta, PhysicalParams};

pub const MAX_ORACLE_ATOMS: usize = 8;

/// Positivity tolerance during evolution.
pub const POSITIVITY_TOL: f64 = 1e-6;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_atoms: usize,
    /// Row-major `dim × dim`.
    data: Vec<C64>,
}

impl DensityMatrix {
    /// Product state of single-atom states, atom 0 first.
    pub fn product(states: &[AtomState]) -> Result<Self> {
        let n = states.len();
        if n == 0 || n > MAX_ORACLE_ATOMS {
            return Err(Error::InvalidParameter(format!("oracle supports 1..={MAX_ORACLE_ATOMS} atoms, got {n}")));
        }
        // single-atom ρ[a][b], index 0 = ground, 1 = excited
        let local: Vec<[[C64; 2]; 2]> = states
            .iter()
            .map(|st| {
                let p = C64::from(st.p_e);
                [[C64::from(1.0) - p, st.s.conj()], [st.s, p]]
            })
            .collect();
        let dim = 1 << n;
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                data[r * dim + c] =
                    local.iter().enumerate().map(|(k, m)| m[(r >> k) & 1][(c >> k) & 1]).product();
            }
        }
        Ok(Self { n_atoms: n, data })
    }

    pub fn ground(n_atoms: usize) -> Result<Self> {
        Self::product(&vec![AtomState::GROUND; n_atoms])
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        // symmetrise first so rounding noise cannot make the solver complain
        let m = DMatrix::from_fn(d, d, |r, c| 0.5 * (self.get(r, c) + self.get(c, r).conj()));
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `<n_k>`.
    pub fn population(&self, k: usize) -> f64 {
        (0..self.dim()).filter(|r| r >> k & 1 == 1).map(|r| self.get(r, r).re).sum()
    }

    /// `<σ_k>`.
    pub fn coherence(&self, k: usize) -> C64 {
        (0..self.dim()).filter(|s| s >> k & 1 == 1).map(|s| self.get(s, s ^ (1 << k))).sum()
    }

    fn expect(&self, op: &SparseOp) -> C64 {
        op.0.iter().map(|&(r, s, v)| v * self.get(s, r)).sum()
    }
}

/// Nonzero entries `(row, col, value)` of an operator on the `2^N` space.
#[derive(Debug, Clone, Default)]
struct SparseOp(Vec<(usize, usize, C64)>);

impl SparseOp {
    fn sigma(n: usize, k: usize, coef: C64) -> Self {
        Self((0..1 << n).filter(|s| s >> k & 1 == 1).map(|s| (s ^ (1 << k), s, coef)).collect())
    }

    fn extend(&mut self, other: SparseOp) {
        self.0.extend(other.0);
    }

    fn dagger(&self) -> Self {
        Self(self.0.iter().map(|&(r, s, v)| (s, r, v.conj())).collect())
    }

    /// `out += coef · O ρ`
    fn left(&self, rho: &[C64], dim: usize, coef: C64, out: &mut [C64]) {
        for &(r, s, v) in &self.0 {
            let w = coef * v;
            let (src, dst) = (s * dim, r * dim);
            for c in 0..dim {
                out[dst + c] += w * rho[src + c];
            }
        }
    }

    /// `out += coef · ρ O†`
    fn right_dagger(&self, rho: &[C64], dim: usize, coef: C64, out: &mut [C64]) {
        for &(c, s, v) in &self.0 {
            let w = coef * v.conj();
            for r in 0..dim {
                out[r * dim + c] += w * rho[r * dim + s];
            }
        }
    }
}

/// Cascaded Lindblad generator for a specific set of couplings.
#[derive(Debug, Clone)]
pub struct CascadedGenerator {
    n_atoms: usize,
    gamma: f64,
    betas: Vec<f64>,
    /// Time-independent part of the non-Hermitian Hamiltonian.
    h0: SparseOp,
    /// `Σ c_k σ_k†`; multiplies α (its dagger multiplies α*).
    raise: SparseOp,
    lower: SparseOp,
    jump: SparseOp,
    jump_dag_jump: SparseOp,
}

pub fn build_generator(betas: &[f64], params: &PhysicalParams) -> Result<CascadedGenerator> {
    params.validate()?;
    let n = betas.len();
    if n == 0 || n > MAX_ORACLE_ATOMS {
        return Err(Error::InvalidParameter(format!("oracle supports 1..={MAX_ORACLE_ATOMS} atoms, got {n}")));
    }
    for &b in betas {
        check_beta(b)?;
    }
    let dim = 1usize << n;
    let gamma = params.gamma;
    let c: Vec<f64> = betas.iter().map(|b| (b * gamma).sqrt()).collect();

    let mut h0 = SparseOp((0..dim).map(|r| (r, r, -0.5 * I * gamma * (r.count_ones() as f64))).collect());
    for j in 0..n {
        for k in j + 1..n {
            let w = -I * c[j] * c[k];
            for s in 0..dim {
                if s >> j & 1 == 1 && s >> k & 1 == 0 {
                    h0.0.push((s ^ (1 << j) ^ (1 << k), s, w));
                }
            }
        }
    }
    let mut jump = SparseOp::default();
    let mut raise = SparseOp::default();
    for k in 0..n {
        jump.extend(SparseOp::sigma(n, k, -I * c[k]));
        raise.extend(SparseOp::sigma(n, k, C64::from(c[k])).dagger());
    }
    // J†J assembled densely (dim ≤ 256) and kept sparse
    let jd = jump.dagger();
    let mut dense = vec![C64::new(0.0, 0.0); dim * dim];
    for &(r, m, a) in &jd.0 {
        for &(m2, s, b) in &jump.0 {
            if m == m2 {
                dense[r * dim + s] += a * b;
            }
        }
    }
    let jump_dag_jump = SparseOp(
        (0..dim * dim).filter(|&i| dense[i].norm() > 0.0).map(|i| (i / dim, i % dim, dense[i])).collect(),
    );
    let lower = raise.dagger();
    Ok(CascadedGenerator { n_atoms: n, gamma, betas: betas.to_vec(), h0, raise, lower, jump, jump_dag_jump })
}

impl CascadedGenerator {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        1 << self.n_atoms
    }

    /// `out = L(ρ)` with drive amplitude `alpha`.
    pub fn apply(&self, rho: &[C64], alpha: C64, out: &mut [C64]) {
        let d = self.dim();
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        // -i H ρ + i ρ H†
        self.h0.left(rho, d, -I, out);
        self.h0.right_dagger(rho, d, I, out);
        if alpha != C64::new(0.0, 0.0) {
            self.raise.left(rho, d, -I * alpha, out);
            self.lower.left(rho, d, -I * alpha.conj(), out);
            self.raise.right_dagger(rho, d, I * alpha.conj(), out);
            self.lower.right_dagger(rho, d, I * alpha, out);
        }
        // J ρ J†
        let mut tmp = vec![C64::new(0.0, 0.0); d * d];
        self.jump.left(rho, d, C64::from(1.0), &mut tmp);
        self.jump.right_dagger(&tmp, d, C64::from(1.0), out);
        // free-space decay
        for (k, &b) in self.betas.iter().enumerate() {
            let rate = (1.0 - b) * self.gamma;
            if rate == 0.0 {
                continue;
            }
            let bit = 1 << k;
            for r in (0..d).filter(|r| r & bit == 0) {
                for c in (0..d).filter(|c| c & bit == 0) {
                    out[r * d + c] += rate * rho[(r | bit) * d + (c | bit)];
                }
            }
        }
    }

    /// Forward flux `<(α + J)†(α + J)>`.
    pub fn forward_power(&self, rho: &DensityMatrix, alpha: C64) -> f64 {
        let j = rho.expect(&self.jump);
        alpha.norm_sqr() + 2.0 * (alpha.conj() * j).re + rho.expect(&self.jump_dag_jump).re
    }

    /// Coherent forward amplitude `α + <J>`.
    pub fn forward_amplitude(&self, rho: &DensityMatrix, alpha: C64) -> C64 {
        alpha + rho.expect(&self.jump)
    }

    pub fn free_space_power(&self, rho: &DensityMatrix) -> f64 {
        self.betas.iter().enumerate().map(|(k, b)| (1.0 - b) * self.gamma * rho.population(k)).sum()
    }
}

/// Sample-level observables of an oracle run, laid out like
/// [`crate::EnsembleResult`] series.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub grid: TimeGrid,
    pub p_f: Vec<f64>,
    pub alpha_out: Vec<C64>,
    pub p_free: Vec<f64>,
    pub total_pe: Vec<f64>,
    /// Populations per atom at every sample.
    pub per_atom_pe: Vec<Vec<f64>>,
    pub stored_energy: f64,
    pub min_eigenvalue: f64,
    pub final_state: DensityMatrix,
}

fn record(
    g: &CascadedGenerator,
    rho: &DensityMatrix,
    alpha: C64,
    i: usize,
    out: &mut OracleResult,
) {
    out.p_f[i] = g.forward_power(rho, alpha);
    out.alpha_out[i] = g.forward_amplitude(rho, alpha);
    out.p_free[i] = g.free_space_power(rho);
    let mut tot = 0.0;
    for k in 0..g.n_atoms {
        let p = rho.population(k);
        out.per_atom_pe[k][i] = p;
        tot += p;
    }
    out.total_pe[i] = tot;
}

fn check_state(rho: &DensityMatrix, t: f64, check_positivity: bool) -> Result<f64> {
    let tr = rho.trace();
    if !(tr.re.is_finite() && tr.im.is_finite()) {
        return Err(Error::NonFinite("density matrix"));
    }
    let excess = (tr - 1.0).norm().max(rho.hermiticity_error());
    if excess > 1e-9 {
        return Err(Error::StepSize { t, what: "trace/hermiticity", excess });
    }
    if check_positivity {
        let ev = rho.min_eigenvalue();
        if ev < -POSITIVITY_TOL {
            return Err(Error::StepSize { t, what: "positivity", excess: -ev });
        }
        return Ok(ev);
    }
    Ok(0.0)
}

/// RK4 on the density matrix from the grid start. The drive (if any) is
/// taken at the grid samples; midpoint states use cubic Hermite
/// interpolation so every sample carries observables.
pub fn evolve(
    g: &CascadedGenerator,
    init: &DensityMatrix,
    drive: Option<&CoherentDrive>,
    grid: &TimeGrid,
) -> Result<OracleResult> {
    if init.n_atoms() != g.n_atoms {
        return Err(Error::InvalidParameter("initial state and generator sizes differ".into()));
    }
    if let Some(d) = drive {
        if d.grid != *grid {
            return Err(Error::InvalidGrid("drive and evolution grids differ".into()));
        }
    }
    let n_s = grid.n_samples();
    let alpha_at = |i: usize| drive.map_or(C64::new(0.0, 0.0), |d| d.alpha[i]);
    let d2 = g.dim() * g.dim();
    let mut out = OracleResult {
        grid: grid.clone(),
        p_f: vec![0.0; n_s],
        alpha_out: vec![C64::new(0.0, 0.0); n_s],
        p_free: vec![0.0; n_s],
        total_pe: vec![0.0; n_s],
        per_atom_pe: vec![vec![0.0; n_s]; g.n_atoms],
        stored_energy: 0.0,
        min_eigenvalue: check_state(init, grid.t_start(), true)?,
        final_state: init.clone(),
    };

    let mut rho = init.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut f_end) =
        (vec![C64::default(); d2], vec![C64::default(); d2], vec![C64::default(); d2], vec![C64::default(); d2], vec![C64::default(); d2]);
    let mut y = vec![C64::default(); d2];
    let mut mid = DensityMatrix { n_atoms: g.n_atoms, data: vec![C64::default(); d2] };

    for (seg, off) in grid.segments().iter().zip(grid.segment_offsets()) {
        let h = seg.step();
        record(g, &rho, alpha_at(off), off, &mut out);
        for j in 0..seg.steps {
            let i = off + 2 * j;
            let (a0, am, a1) = (alpha_at(i), alpha_at(i + 1), alpha_at(i + 2));
            g.apply(&rho.data, a0, &mut k1);
            for q in 0..d2 {
                y[q] = rho.data[q] + 0.5 * h * k1[q];
            }
            g.apply(&y, am, &mut k2);
            for q in 0..d2 {
                y[q] = rho.data[q] + 0.5 * h * k2[q];
            }
            g.apply(&y, am, &mut k3);
            for q in 0..d2 {
                y[q] = rho.data[q] + h * k3[q];
            }
            g.apply(&y, a1, &mut k4);
            for q in 0..d2 {
                y[q] = rho.data[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            g.apply(&y, a1, &mut f_end);
            for q in 0..d2 {
                mid.data[q] = 0.5 * (rho.data[q] + y[q]) + h / 8.0 * (k1[q] - f_end[q]);
            }
            std::mem::swap(&mut rho.data, &mut y);
            let t = seg.sample_time(2 * j + 2);
            let ev = check_state(&rho, t, true)?;
            out.min_eigenvalue = out.min_eigenvalue.min(ev);
            record(g, &mid, am, i + 1, &mut out);
            record(g, &rho, a1, i + 2, &mut out);
        }
    }
    out.stored_energy = match grid.segment_starting_at(0.0) {
        Some(_) => out.total_pe[zero_index(grid)],
        None => out.total_pe[0],
    };
    out.final_state = rho;
    Ok(out)
}

/// How far the mixed-coherent-state cascade is from the exact dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub n_atoms: usize,
    /// `max |ΔP_f| / max P_f` over `t >= 0`.
    pub max_pf_deviation: f64,
    /// `max |ΔP_f / P_f|` over `t >= 0` where `P_f` exceeds `1e-6` of its peak.
    pub max_pf_relative: f64,
    /// `max |Δα| / |α_oracle|` where `|α_oracle|` exceeds 10 % of its peak;
    /// zero when the oracle has no coherent output.
    pub max_coherent_relative: f64,
    pub eta_f_oracle: f64,
    pub eta_f_cascade: f64,
    pub t_delay_oracle: f64,
    pub t_delay_cascade: f64,
    /// `[∫_0^T (P_f + P_free) dt + Σ p(T) - E_st] / E_st` for the oracle.
    pub oracle_energy_residual: f64,
    pub oracle_min_eigenvalue: f64,
}

/// Runs the oracle and the cascade on the same couplings, preparation and grid.
pub struct Comparison {
    pub oracle: OracleResult,
    pub cascade: crate::cascade::EnsembleResult,
    pub report: DeviationReport,
}

pub fn compare_to_cascade(
    params: &PhysicalParams,
    betas: &[f64],
    prep: &PreparationMode,
    grid: &TimeGrid,
    quadrature: impl Into<PhaseQuadrature>,
) -> Result<Comparison> {
    let g = build_generator(betas, params)?;
    let cascade = propagate_ensemble(params, betas, prep, grid, quadrature)?;
    let oracle = match prep {
        PreparationMode::DrivenPulse(spec) => {
            let drive = make_pulse(spec, params, grid)?;
            evolve(&g, &DensityMatrix::ground(betas.len())?, Some(&drive), grid)?
        }
        PreparationMode::IdealInstantaneous { area } => {
            evolve(&g, &DensityMatrix::product(&vec![ideal_state(*area); betas.len()])?, None, grid)?
        }
    };

    let z = zero_index(grid);
    let peak = oracle.p_f[z..].iter().fold(0.0f64, |m, &v| m.max(v));
    let mut dev = 0.0f64;
    let mut rel = 0.0f64;
    for (a, b) in oracle.p_f[z..].iter().zip(&cascade.p_f[z..]) {
        dev = dev.max((a - b).abs());
        if *a > 1e-6 * peak {
            rel = rel.max((a - b).abs() / a);
        }
    }
    let amp_peak = oracle.alpha_out[z..].iter().fold(0.0f64, |m, a| m.max(a.norm()));
    let mut coh = 0.0f64;
    if amp_peak > 0.0 {
        for (a, b) in oracle.alpha_out[z..].iter().zip(&cascade.alpha_out[z..]) {
            if a.norm() > 0.1 * amp_peak {
                coh = coh.max((a - b).norm() / a.norm());
            }
        }
    }
    let e_st = oracle.stored_energy;
    let (eta_o, eta_c) = if e_st > 0.0 {
        (
            forward_fraction(grid, &oracle.p_f, e_st, params.gamma)?,
            forward_fraction(grid, &cascade.p_f, cascade.stored_energy, params.gamma)?,
        )
    } else {
        (0.0, 0.0)
    };
    let nodes = grid.node_times();
    let (_, td_o) = peak_and_delay(&nodes, &grid.nodes_of(&oracle.p_f))?;
    let (_, td_c) = peak_and_delay(&nodes, &grid.nodes_of(&cascade.p_f))?;
    let out: Vec<f64> = oracle.p_f.iter().zip(&oracle.p_free).map(|(a, b)| a + b).collect();
    let residual = if e_st > 0.0 {
        (grid.integrate_from(&out, 0.0) + oracle.total_pe[oracle.total_pe.len() - 1] - e_st) / e_st
    } else {
        0.0
    };
    let report = DeviationReport {
        n_atoms: betas.len(),
        max_pf_deviation: if peak > 0.0 { dev / peak } else { dev },
        max_pf_relative: rel,
        max_coherent_relative: coh,
        eta_f_oracle: eta_o,
        eta_f_cascade: eta_c,
        t_delay_oracle: td_o,
        t_delay_cascade: td_c,
        oracle_energy_residual: residual,
        oracle_min_eigenvalue: oracle.min_eigenvalue,
    };
    Ok(Comparison { oracle, cascade, report })
}
