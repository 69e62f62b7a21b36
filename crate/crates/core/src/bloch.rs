//! Single-atom dynamics under a classical drive.
//!
//! The resonant optical Bloch equations in the frame co-moving with the laser,
//! for the dipole `s = <σ>` and excited population `p = <σ†σ>` of an atom with
//! forward coupling `c = sqrt(βΓ)` driven by a guided-mode amplitude `α(t)`:
//!
//! ```text
//! ds/dt = -Γ/2 s - i c (1 - 2p) α
//! dp/dt = -Γ p   - 2 c Im(α* s)
//! ```
//!
//! The transmitted field is `α_out = α - i c s` and the atom adds an
//! incoherent flux `c² (p - |s|²)`. With this sign choice a resonant pulse of
//! area `A` rotates the ground state into `cos(A/2)|g> - i sin(A/2)|e>`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::params::{check_beta, PhysicalParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Tolerance on the Bloch-ball bound `|s|² <= p(1-p)` before a solve is
/// declared a step-size failure.
pub const BLOCH_BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    /// Dipole expectation `<σ>`.
    pub s: C64,
    /// Excited-state population.
    pub p_e: f64,
}

impl AtomState {
    pub const GROUND: AtomState = AtomState { s: C64 { re: 0.0, im: 0.0 }, p_e: 0.0 };
    pub const EXCITED: AtomState = AtomState { s: C64 { re: 0.0, im: 0.0 }, p_e: 1.0 };

    /// `|s|² - p(1-p)`; positive values lie outside the Bloch ball.
    pub fn bloch_excess(&self) -> f64 {
        self.s.norm_sqr() - self.p_e * (1.0 - self.p_e)
    }
}

/// Expectations of `cos(A/2)|g> - i sin(A/2)|e>`. Exact multiples of π give
/// exactly zero coherence.
pub fn ideal_state(area: f64) -> AtomState {
    let turns = area / std::f64::consts::PI;
    if turns == turns.round() {
        let p_e = if turns.rem_euclid(2.0) == 1.0 { 1.0 } else { 0.0 };
        return AtomState { s: C64::new(0.0, 0.0), p_e };
    }
    AtomState { s: C64::new(0.0, -0.5 * area.sin()), p_e: (0.5 * area).sin().powi(2) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PulseShape {
    Rectangular,
    /// Raised-cosine ramps of length `ramp` (ns) at both edges.
    SmoothedEdge { ramp: f64 },
}

/// A resonant excitation pulse that ends at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Pulse area (rad) seen by an atom with the nominal coupling.
    pub area: f64,
    /// Duration (ns).
    pub duration: f64,
    pub shape: PulseShape,
}

impl PulseSpec {
    pub fn rectangular(area: f64, duration: f64) -> Self {
        Self { area, duration, shape: PulseShape::Rectangular }
    }

    /// Envelope in `[0, 1]` at time `t`, for `t` strictly inside the pulse.
    fn envelope(&self, t: f64) -> f64 {
        let start = -self.duration;
        match self.shape {
            PulseShape::Rectangular => 1.0,
            PulseShape::SmoothedEdge { ramp } => {
                let x = (t - start).min(-t);
                if x >= ramp {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * x.max(0.0) / ramp).cos())
                }
            }
        }
    }

    /// Time integral of the envelope.
    fn envelope_area(&self) -> f64 {
        match self.shape {
            PulseShape::Rectangular => self.duration,
            PulseShape::SmoothedEdge { ramp } => self.duration - ramp,
        }
    }
}

/// Coherent guided-mode amplitude (√(photons/ns)) on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentDrive {
    pub grid: TimeGrid,
    pub alpha: Vec<C64>,
}

impl CoherentDrive {
    pub fn zero(grid: &TimeGrid) -> Self {
        Self { grid: grid.clone(), alpha: vec![C64::new(0.0, 0.0); grid.n_samples()] }
    }

    /// Multiplies the whole drive by `e^{iφ}`.
    pub fn rotated(&self, phi: f64) -> Self {
        let w = C64::from_polar(1.0, phi);
        Self { grid: self.grid.clone(), alpha: self.alpha.iter().map(|a| a * w).collect() }
    }

    pub fn flux(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Builds the pulse amplitude so that `∫ 2 sqrt(β̄Γ) |α| dt = area`.
pub fn make_pulse(spec: &PulseSpec, params: &PhysicalParams, grid: &TimeGrid) -> Result<CoherentDrive> {
    params.validate()?;
    if !(spec.duration.is_finite() && spec.duration > 0.0) {
        return Err(Error::InvalidPulse(format!("duration must be > 0, got {}", spec.duration)));
    }
    if !(spec.area.is_finite() && spec.area >= 0.0) {
        return Err(Error::InvalidPulse(format!("area must be >= 0, got {}", spec.area)));
    }
    if let PulseShape::SmoothedEdge { ramp } = spec.shape {
        if !(ramp > 0.0 && 2.0 * ramp <= spec.duration) {
            return Err(Error::InvalidPulse(format!("ramp {ramp} ns does not fit the pulse")));
        }
    }
    if !grid.contains_zero() {
        return Err(Error::InvalidPulse("grid must contain t = 0".into()));
    }
    let start = -spec.duration;
    let tol = 1e-9 * (1.0 + spec.duration);
    if start < grid.t_start() - tol {
        return Err(Error::InvalidPulse(format!(
            "pulse starts at {start} ns, before the grid start {}",
            grid.t_start()
        )));
    }
    if spec.shape == PulseShape::Rectangular && !grid.is_breakpoint(start) {
        return Err(Error::InvalidPulse(format!(
            "rectangular pulse edge at {start} ns must be a grid breakpoint"
        )));
    }

    let amp = spec.area / (2.0 * (params.beta_nominal * params.gamma).sqrt() * spec.envelope_area());
    let mut alpha = Vec::with_capacity(grid.n_samples());
    for seg in grid.segments() {
        // segment-level on/off decision keeps both one-sided limits at edges
        let inside = seg.start >= start - tol && seg.end <= tol;
        for i in 0..seg.n_samples() {
            let t = seg.sample_time(i);
            let on = match spec.shape {
                PulseShape::Rectangular => inside,
                PulseShape::SmoothedEdge { .. } => seg.end <= tol && t >= start,
            };
            let a = if on { amp * spec.envelope(t) } else { 0.0 };
            alpha.push(C64::new(a, 0.0));
        }
    }
    Ok(CoherentDrive { grid: grid.clone(), alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomTrajectory {
    pub grid: TimeGrid,
    pub s: Vec<C64>,
    pub p_e: Vec<f64>,
}

impl AtomTrajectory {
    pub fn state(&self, i: usize) -> AtomState {
        AtomState { s: self.s[i], p_e: self.p_e[i] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochSolution {
    pub trajectory: AtomTrajectory,
    /// `α - i sqrt(βΓ) s`.
    pub out_coherent: Vec<C64>,
    /// `βΓ (p - |s|²)`.
    pub out_incoherent: Vec<f64>,
}

impl BlochSolution {
    pub fn out_total_flux(&self) -> Vec<f64> {
        self.out_coherent
            .iter()
            .zip(&self.out_incoherent)
            .map(|(a, f)| a.norm_sqr() + f)
            .collect()
    }
}

/// Integrates one atom under a classical drive and returns its trajectory
/// together with the transmitted coherent amplitude and added incoherent flux.
pub fn solve_bloch(
    drive: &CoherentDrive,
    beta: f64,
    params: &PhysicalParams,
    init: AtomState,
) -> Result<BlochSolution> {
    check_beta(beta)?;
    if drive.alpha.len() != drive.grid.n_samples() {
        return Err(Error::InvalidParameter("drive length does not match its grid".into()));
    }
    if drive.alpha.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::NonFinite("drive"));
    }
    let n = drive.alpha.len();
    let mut s = vec![C64::new(0.0, 0.0); n];
    let mut p = vec![0.0; n];
    let c = (beta * params.gamma).sqrt();
    integrate(&drive.grid, &drive.alpha, c, params.gamma, init, &mut s, &mut p)?;

    let out_coherent = drive.alpha.iter().zip(&s).map(|(a, si)| a - I * c * si).collect();
    let out_incoherent = s.iter().zip(&p).map(|(si, pi)| c * c * (pi - si.norm_sqr())).collect();
    Ok(BlochSolution {
        trajectory: AtomTrajectory { grid: drive.grid.clone(), s, p_e: p },
        out_coherent,
        out_incoherent,
    })
}

#[inline(always)]
pub(crate) fn rhs(s: C64, p: f64, a: C64, c: f64, gamma: f64) -> (C64, f64) {
    let ds = -0.5 * gamma * s - I * (c * (1.0 - 2.0 * p)) * a;
    let dp = -gamma * p - 2.0 * c * (a.conj() * s).im;
    (ds, dp)
}

/// Fixed-step RK4 over every segment of `grid`. Midpoint samples are filled by
/// cubic Hermite interpolation from the endpoint states and derivatives.
pub(crate) fn integrate(
    grid: &TimeGrid,
    drive: &[C64],
    c: f64,
    gamma: f64,
    init: AtomState,
    s_out: &mut [C64],
    p_out: &mut [f64],
) -> Result<()> {
    let times = grid.sample_times();
    let mut s = init.s;
    let mut p = init.p_e;
    for (seg, off) in grid.segments().iter().zip(grid.segment_offsets()) {
        let h = seg.step();
        s_out[off] = s;
        p_out[off] = p;
        let (mut ds0, mut dp0) = rhs(s, p, drive[off], c, gamma);
        for j in 0..seg.steps {
            let i0 = off + 2 * j;
            let (a1, a2) = (drive[i0 + 1], drive[i0 + 2]);
            let (k2s, k2p) = rhs(s + 0.5 * h * ds0, p + 0.5 * h * dp0, a1, c, gamma);
            let (k3s, k3p) = rhs(s + 0.5 * h * k2s, p + 0.5 * h * k2p, a1, c, gamma);
            let (k4s, k4p) = rhs(s + h * k3s, p + h * k3p, a2, c, gamma);
            let s_new = s + h / 6.0 * (ds0 + 2.0 * k2s + 2.0 * k3s + k4s);
            let p_new = p + h / 6.0 * (dp0 + 2.0 * k2p + 2.0 * k3p + k4p);
            let (ds1, dp1) = rhs(s_new, p_new, a2, c, gamma);

            s_out[i0 + 1] = 0.5 * (s + s_new) + h / 8.0 * (ds0 - ds1);
            p_out[i0 + 1] = 0.5 * (p + p_new) + h / 8.0 * (dp0 - dp1);
            s_out[i0 + 2] = s_new;
            p_out[i0 + 2] = p_new;

            s = s_new;
            p = p_new;
            ds0 = ds1;
            dp0 = dp1;
        }
        for i in off..off + seg.n_samples() {
            let excess = s_out[i].norm_sqr() - p_out[i] * (1.0 - p_out[i]);
            if excess > BLOCH_BOUND_TOL || !p_out[i].is_finite() || !s_out[i].re.is_finite() {
                return Err(Error::StepSize { t: times[i], what: "Bloch-ball bound violated", excess });
            }
        }
    }
    Ok(())
}
