//! Linear-cost propagation of the guided field through a cascaded chain.
//!
//! Between atoms the field is represented only by its coherent amplitude
//! `α_c(t)` and its incoherent flux `F(t)`. Each atom sees the phase mixture
//! of coherent drives `α_c(t) + e^{iφ} sqrt(F(t))` with `φ` uniform on
//! `[0, 2π)`; for every quadrature phase the Bloch equations are integrated,
//! and the phase averages give the field handed to the next atom:
//!
//! * coherent amplitude: `<α_out>_φ`
//! * incoherent flux: `Var_φ(α_out) + βΓ <p - |s|²>_φ`
//!
//! Higher moments are discarded at every atom boundary.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{ideal_state, integrate, make_pulse, AtomState, AtomTrajectory, CoherentDrive, PulseSpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::params::{check_beta, PhysicalParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Default number of quadrature phases.
pub const DEFAULT_N_PHI: usize = 32;

/// Guided-mode field between two atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedFieldTrace {
    pub grid: TimeGrid,
    /// Coherent amplitude, √(photons/ns).
    pub alpha_c: Vec<C64>,
    /// Incoherent photon flux, photons/ns.
    pub f_inc: Vec<f64>,
}

impl MixedFieldTrace {
    pub fn vacuum(grid: &TimeGrid) -> Self {
        let n = grid.n_samples();
        Self { grid: grid.clone(), alpha_c: vec![ZERO; n], f_inc: vec![0.0; n] }
    }

    pub fn coherent(drive: &CoherentDrive) -> Self {
        Self { grid: drive.grid.clone(), alpha_c: drive.alpha.clone(), f_inc: vec![0.0; drive.alpha.len()] }
    }

    pub fn total_flux(&self) -> Vec<f64> {
        self.alpha_c.iter().zip(&self.f_inc).map(|(a, f)| a.norm_sqr() + f).collect()
    }

    pub fn coherent_flux(&self) -> Vec<f64> {
        self.alpha_c.iter().map(|a| a.norm_sqr()).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.grid.n_samples();
        if self.alpha_c.len() != n || self.f_inc.len() != n {
            return Err(Error::InvalidParameter("field trace length does not match its grid".into()));
        }
        for (a, &f) in self.alpha_c.iter().zip(&self.f_inc) {
            if !(a.re.is_finite() && a.im.is_finite() && f.is_finite()) {
                return Err(Error::NonFinite("field trace"));
            }
            if f < 0.0 {
                return Err(Error::InvalidParameter(format!("negative incoherent flux {f}")));
            }
        }
        Ok(())
    }
}

/// Phase quadrature used to average over the mixed coherent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseQuadrature {
    pub n_phi: usize,
    /// Use exact symmetries of the quadrature to skip redundant solves:
    /// a single solve when all phases give the same populations (no coherent
    /// part and no initial dipole, or no incoherent part), and mirrored phase
    /// pairs when the coherent amplitude is real and the initial dipole
    /// imaginary.
    pub exploit_symmetry: bool,
}

impl PhaseQuadrature {
    pub fn new(n_phi: usize) -> Self {
        Self { n_phi, exploit_symmetry: true }
    }

    /// Solves every quadrature phase explicitly.
    pub fn exhaustive(n_phi: usize) -> Self {
        Self { n_phi, exploit_symmetry: false }
    }
}

impl Default for PhaseQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_N_PHI)
    }
}

impl From<usize> for PhaseQuadrature {
    fn from(n_phi: usize) -> Self {
        Self::new(n_phi)
    }
}

/// `e^{2πi j/n}`, exact at multiples of π/2.
fn unit_phase(j: usize, n: usize) -> C64 {
    if (4 * j) % n == 0 {
        match (4 * j / n) % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    } else {
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomPropagation {
    pub output: MixedFieldTrace,
    /// Phase-averaged dipole and population.
    pub trajectory: AtomTrajectory,
}

enum Reduction {
    /// Every phase gives the same populations; dipoles and fields rotate
    /// with `e^{iφ}` when `rotating` is set.
    Single { rotating: bool },
    /// Phases `j` and `n - j` are complex-conjugate mirror images.
    Mirror,
    Full,
}

/// Propagates the field through one atom.
pub fn propagate_atom(
    input: &MixedFieldTrace,
    beta: f64,
    params: &PhysicalParams,
    init: AtomState,
    quadrature: impl Into<PhaseQuadrature>,
) -> Result<AtomPropagation> {
    let quad = quadrature.into();
    if quad.n_phi < 1 {
        return Err(Error::InvalidParameter("n_phi must be >= 1".into()));
    }
    check_beta(beta)?;
    input.validate()?;
    let grid = &input.grid;
    let n = grid.n_samples();
    let gamma = params.gamma;
    let c = (beta * gamma).sqrt();
    let n_phi = quad.n_phi;

    let no_incoherent = input.f_inc.iter().all(|&f| f == 0.0);
    let no_coherent = input.alpha_c.iter().all(|a| *a == ZERO) && init.s == ZERO;
    let real_coherent = input.alpha_c.iter().all(|a| a.im == 0.0) && init.s.re == 0.0;
    let reduction = if !quad.exploit_symmetry {
        Reduction::Full
    } else if no_incoherent {
        Reduction::Single { rotating: false }
    } else if no_coherent {
        Reduction::Single { rotating: true }
    } else if real_coherent {
        Reduction::Mirror
    } else {
        Reduction::Full
    };

    let phases: Vec<usize> = match reduction {
        Reduction::Single { .. } => vec![0],
        Reduction::Mirror => (0..=n_phi / 2).collect(),
        Reduction::Full => (0..n_phi).collect(),
    };
    let sqrt_f: Vec<f64> = input.f_inc.iter().map(|f| f.sqrt()).collect();

    // Each phase is independent; results come back in phase order so the
    // reduction below is identical for any worker count.
    let solves: Vec<(Vec<C64>, Vec<f64>)> = phases
        .par_iter()
        .map(|&j| {
            let w = unit_phase(j, n_phi);
            let drive: Vec<C64> =
                input.alpha_c.iter().zip(&sqrt_f).map(|(a, f)| a + w * f).collect();
            let mut s = vec![ZERO; n];
            let mut p = vec![0.0; n];
            integrate(grid, &drive, c, gamma, init, &mut s, &mut p)?;
            Ok((s, p))
        })
        .collect::<Result<_>>()?;

    let mut alpha_out = vec![ZERO; n];
    let mut f_out = vec![0.0; n];
    let mut s_avg = vec![ZERO; n];
    let mut p_avg = vec![0.0; n];
    let inv = 1.0 / n_phi as f64;

    match reduction {
        Reduction::Single { rotating } => {
            let (s, p) = &solves[0];
            for i in 0..n {
                let a = input.alpha_c[i] + sqrt_f[i] - I * c * s[i];
                let atomic = c * c * (p[i] - s[i].norm_sqr());
                p_avg[i] = p[i];
                if rotating {
                    // α_out(φ) = e^{iφ} α_out(0): zero mean, variance |α_out(0)|²
                    f_out[i] = a.norm_sqr() + atomic;
                } else {
                    alpha_out[i] = a;
                    s_avg[i] = s[i];
                    f_out[i] = atomic;
                }
            }
        }
        Reduction::Mirror | Reduction::Full => {
            let mirror = matches!(reduction, Reduction::Mirror);
            let weights: Vec<(C64, bool)> = phases
                .iter()
                .map(|&j| (unit_phase(j, n_phi), mirror && j != 0 && 2 * j != n_phi))
                .collect();
            let mut outs = vec![ZERO; phases.len()];
            for i in 0..n {
                let mut sum_a = ZERO;
                let mut sum_s = ZERO;
                let mut sum_p = 0.0;
                let mut sum_atomic = 0.0;
                for (k, ((s, p), &(w, paired))) in solves.iter().zip(&weights).enumerate() {
                    let a = input.alpha_c[i] + w * sqrt_f[i] - I * c * s[i];
                    let atomic = c * c * (p[i] - s[i].norm_sqr());
                    outs[k] = a;
                    if paired {
                        sum_a += a + a.conj();
                        sum_s += s[i] - s[i].conj();
                        sum_p += 2.0 * p[i];
                        sum_atomic += 2.0 * atomic;
                    } else {
                        sum_a += a;
                        sum_s += s[i];
                        sum_p += p[i];
                        sum_atomic += atomic;
                    }
                }
                let mean = sum_a * inv;
                let mut var = 0.0;
                for (a, &(_, paired)) in outs.iter().zip(&weights) {
                    let d = (a - mean).norm_sqr();
                    var += if paired { 2.0 * d } else { d };
                }
                alpha_out[i] = mean;
                s_avg[i] = sum_s * inv;
                p_avg[i] = sum_p * inv;
                f_out[i] = var * inv + sum_atomic * inv;
            }
        }
    }
    for f in f_out.iter_mut() {
        *f = f.max(0.0);
    }

    Ok(AtomPropagation {
        output: MixedFieldTrace { grid: grid.clone(), alpha_c: alpha_out, f_inc: f_out },
        trajectory: AtomTrajectory { grid: grid.clone(), s: s_avg, p_e: p_avg },
    })
}

/// How the ensemble is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PreparationMode {
    /// All atoms start in the ground state and the pulse enters at atom 1.
    DrivenPulse(PulseSpec),
    /// Every atom starts in `ideal_state(area)` at `t = 0` with vacuum input.
    /// The grid must start at zero.
    IdealInstantaneous { area: f64 },
}

impl PreparationMode {
    pub fn area(&self) -> f64 {
        match self {
            PreparationMode::DrivenPulse(p) => p.area,
            PreparationMode::IdealInstantaneous { area } => *area,
        }
    }

    pub fn with_area(self, area: f64) -> Self {
        match self {
            PreparationMode::DrivenPulse(p) => PreparationMode::DrivenPulse(PulseSpec { area, ..p }),
            PreparationMode::IdealInstantaneous { .. } => PreparationMode::IdealInstantaneous { area },
        }
    }

    pub fn is_driven(&self) -> bool {
        matches!(self, PreparationMode::DrivenPulse(_))
    }
}

/// Output of one pass through the chain. Series are sample-level (see
/// [`TimeGrid`]) except `per_atom_pe`, which is on the node grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub grid: TimeGrid,
    pub betas: Vec<f64>,
    /// Total forward flux after the last atom.
    pub p_f: Vec<f64>,
    /// Coherent amplitude after the last atom.
    pub alpha_out: Vec<C64>,
    /// Flux entering the first atom.
    pub input_power: Vec<f64>,
    /// `Σ_k (1 - β_k) Γ p_k(t)`.
    pub free_space_power: Vec<f64>,
    /// `Σ_k p_k(t)`.
    pub total_pe: Vec<f64>,
    pub per_atom_pe: Vec<Vec<f64>>,
    /// `Σ_k p_k(0)` in photons.
    pub stored_energy: f64,
}

impl EnsembleResult {
    pub fn n_atoms(&self) -> usize {
        self.betas.len()
    }

    /// Sample index of `t = 0⁺`.
    pub fn zero_index(&self) -> usize {
        zero_index(&self.grid)
    }
}

pub(crate) fn zero_index(grid: &TimeGrid) -> usize {
    let seg = grid.segment_starting_at(0.0).expect("grid contains t = 0");
    grid.segment_offsets()[seg]
}

/// Sends the preparation field through `betas.len()` atoms in order.
pub fn propagate_ensemble(
    params: &PhysicalParams,
    betas: &[f64],
    prep: &PreparationMode,
    grid: &TimeGrid,
    quadrature: impl Into<PhaseQuadrature>,
) -> Result<EnsembleResult> {
    let quad = quadrature.into();
    params.validate()?;
    if betas.is_empty() {
        return Err(Error::InvalidParameter("need at least one atom".into()));
    }
    if grid.segment_starting_at(0.0).is_none() {
        return Err(Error::InvalidGrid("grid must have t = 0 as a breakpoint or start".into()));
    }
    let (mut field, init) = match prep {
        PreparationMode::DrivenPulse(spec) => {
            (MixedFieldTrace::coherent(&make_pulse(spec, params, grid)?), AtomState::GROUND)
        }
        PreparationMode::IdealInstantaneous { area } => {
            if grid.t_start().abs() > 1e-12 {
                return Err(Error::InvalidGrid("ideal preparation needs a grid starting at 0".into()));
            }
            (MixedFieldTrace::vacuum(grid), ideal_state(*area))
        }
    };
    let n = grid.n_samples();
    let input_power = field.total_flux();
    let mut free_space_power = vec![0.0; n];
    let mut total_pe = vec![0.0; n];
    let mut per_atom_pe = Vec::with_capacity(betas.len());

    for &beta in betas {
        let step = propagate_atom(&field, beta, params, init, quad)?;
        let loss = (1.0 - beta) * params.gamma;
        for (i, &p) in step.trajectory.p_e.iter().enumerate() {
            total_pe[i] += p;
            free_space_power[i] += loss * p;
        }
        per_atom_pe.push(grid.nodes_of(&step.trajectory.p_e));
        field = step.output;
    }

    let stored_energy = total_pe[zero_index(grid)];
    Ok(EnsembleResult {
        grid: grid.clone(),
        betas: betas.to_vec(),
        p_f: field.total_flux(),
        alpha_out: field.alpha_c,
        input_power,
        free_space_power,
        total_pe,
        per_atom_pe,
        stored_energy,
    })
}

/// Energy bookkeeping of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    /// `P_in - P_f - P_free - d/dt Σ p_k` at every sample, with the
    /// derivative taken by finite differences.
    pub pointwise: Vec<f64>,
    pub max_pointwise: f64,
    /// `∫_0^T (P_f + P_free - P_in) dt + Σ p_k(T) - E_st`.
    pub integrated: f64,
    /// `∫_0^T (P_f + P_free) dt + (P_f + P_free)(T)/Γ - E_st`, extrapolating
    /// the remaining emission as a single-atom exponential tail.
    pub tail_corrected: f64,
    pub stored_energy: f64,
}

pub fn energy_ledger(result: &EnsembleResult, params: &PhysicalParams) -> LedgerReport {
    let grid = &result.grid;
    let dpe = grid.derivative(&result.total_pe);
    let pointwise: Vec<f64> = (0..grid.n_samples())
        .map(|i| result.input_power[i] - result.p_f[i] - result.free_space_power[i] - dpe[i])
        .collect();
    let max_pointwise = pointwise.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let emitted: Vec<f64> =
        result.p_f.iter().zip(&result.free_space_power).map(|(a, b)| a + b).collect();
    let net: Vec<f64> = emitted.iter().zip(&result.input_power).map(|(e, p)| e - p).collect();
    let last = grid.n_samples() - 1;
    let e0 = result.stored_energy;
    let integrated = grid.integrate_from(&net, 0.0) + result.total_pe[last] - e0;
    let tail_corrected =
        grid.integrate_from(&emitted, 0.0) + emitted[last] / params.gamma - e0;
    LedgerReport { pointwise, max_pointwise, integrated, tail_corrected, stored_energy: e0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> PhysicalParams {
        PhysicalParams::new(0.032797, 0.0112, 1).unwrap()
    }

    #[test]
    fn unit_phase_is_exact_on_quarter_turns() {
        assert_eq!(unit_phase(8, 32), C64::new(0.0, 1.0));
        assert_eq!(unit_phase(16, 32), C64::new(-1.0, 0.0));
        assert_eq!(unit_phase(24, 32), C64::new(0.0, -1.0));
        assert!((unit_phase(3, 32) - C64::from_polar(1.0, 6.0 * PI / 32.0)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_ground_stays_dark() {
        let grid = TimeGrid::decay(20.0, 0.1).unwrap();
        for quad in [PhaseQuadrature::new(8), PhaseQuadrature::exhaustive(8)] {
            let r = propagate_atom(&MixedFieldTrace::vacuum(&grid), 0.0112, &params(), AtomState::GROUND, quad)
                .unwrap();
            assert!(r.output.total_flux().iter().all(|&f| f == 0.0));
            assert!(r.trajectory.p_e.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn inverted_atom_emits_incoherently() {
        let p = params();
        let grid = TimeGrid::decay(50.0, 0.1).unwrap();
        for n_phi in [1, 3, 32] {
            let r = propagate_atom(&MixedFieldTrace::vacuum(&grid), 0.0112, &p, AtomState::EXCITED, PhaseQuadrature::exhaustive(n_phi))
                .unwrap();
            for (t, (a, f)) in grid.sample_times().iter().zip(r.output.alpha_c.iter().zip(&r.output.f_inc)) {
                assert_eq!(a.norm(), 0.0);
                let exact = 0.0112 * p.gamma * (-p.gamma * t).exp();
                assert!((f - exact).abs() < 1e-10 * exact);
            }
        }
    }

    #[test]
    fn incoherent_input_yields_no_coherent_output() {
        let p = params();
        let grid = TimeGrid::decay(30.0, 0.1).unwrap();
        let mut input = MixedFieldTrace::vacuum(&grid);
        for (f, t) in input.f_inc.iter_mut().zip(grid.sample_times()) {
            *f = 0.05 * (-p.gamma * t).exp();
        }
        for init in [AtomState::EXCITED, AtomState { s: ZERO, p_e: 0.3 }] {
            let full = propagate_atom(&input, 0.0112, &p, init, PhaseQuadrature::exhaustive(32)).unwrap();
            let max_a = full.output.alpha_c.iter().fold(0.0f64, |m, a| m.max(a.norm()));
            assert!(max_a < 1e-15, "{max_a}");
            let fast = propagate_atom(&input, 0.0112, &p, init, 32).unwrap();
            for (x, y) in full.output.f_inc.iter().zip(&fast.output.f_inc) {
                assert!((x - y).abs() < 1e-13 * x.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn mirror_reduction_matches_full_quadrature() {
        let p = params();
        let grid = TimeGrid::for_pulse(4.0, 30.0, 0.02, 0.1).unwrap();
        let pulse = make_pulse(&PulseSpec::rectangular(0.9 * PI, 4.0), &p, &grid).unwrap();
        let mut input = MixedFieldTrace::coherent(&pulse);
        for (f, t) in input.f_inc.iter_mut().zip(grid.sample_times()) {
            *f = 0.01 * (1.0 + (0.3 * t).sin().powi(2));
        }
        for n_phi in [7, 8] {
            let full = propagate_atom(&input, 0.02, &p, AtomState::GROUND, PhaseQuadrature::exhaustive(n_phi)).unwrap();
            let fast = propagate_atom(&input, 0.02, &p, AtomState::GROUND, n_phi).unwrap();
            assert!(fast.output.alpha_c.iter().all(|a| a.im == 0.0));
            for i in 0..grid.n_samples() {
                assert!((full.output.alpha_c[i] - fast.output.alpha_c[i]).norm() < 1e-11);
                assert!((full.output.f_inc[i] - fast.output.f_inc[i]).abs() < 1e-11);
                assert!((full.trajectory.p_e[i] - fast.trajectory.p_e[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_zero_phases() {
        let grid = TimeGrid::decay(1.0, 0.1).unwrap();
        let v = MixedFieldTrace::vacuum(&grid);
        assert!(propagate_atom(&v, 0.01, &params(), AtomState::GROUND, 0).is_err());
    }

    #[test]
    fn single_atom_ideal_pi_decay() {
        let p = params();
        let grid = TimeGrid::decay(100.0, 0.1).unwrap();
        let r = propagate_ensemble(&p, &[0.0112], &PreparationMode::IdealInstantaneous { area: PI }, &grid, 32)
            .unwrap();
        for (t, pf) in grid.sample_times().iter().zip(&r.p_f) {
            let exact = 3.674e-4 * (-p.gamma * t).exp();
            assert!((pf - exact).abs() < 1e-3 * exact);
        }
        let ledger = energy_ledger(&r, &p);
        assert!(ledger.integrated.abs() < 1e-6);
        assert!(ledger.max_pointwise < 1e-6);
    }

    #[test]
    fn ground_ensemble_is_dark_and_balanced() {
        let p = params();
        let grid = TimeGrid::decay(20.0, 0.1).unwrap();
        let r = propagate_ensemble(&p, &[0.01; 5], &PreparationMode::IdealInstantaneous { area: 0.0 }, &grid, 8)
            .unwrap();
        assert!(r.p_f.iter().all(|&x| x == 0.0));
        let l = energy_ledger(&r, &p);
        assert_eq!(l.max_pointwise, 0.0);
        assert_eq!(l.integrated, 0.0);
    }

    #[test]
    fn ideal_mode_needs_grid_from_zero() {
        let grid = TimeGrid::for_pulse(4.0, 10.0, 0.02, 0.1).unwrap();
        let e = propagate_ensemble(&params(), &[0.01], &PreparationMode::IdealInstantaneous { area: PI }, &grid, 4);
        assert!(e.is_err());
    }
}
