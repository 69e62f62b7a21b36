//! Physical constants and parameter sets.
//!
//! Time is measured in ns, powers are photon fluxes (photons/ns) and energies
//! are photon numbers, i.e. the photon energy is fixed to one.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Excited-state decay rate of the Cs D2 line, 2π × 5.22 MHz, in 1/ns.
pub const DEFAULT_GAMMA: f64 = 2.0 * PI * 5.22e-3;
/// Fitted mean forward coupling.
pub const DEFAULT_BETA_MEAN: f64 = 0.0112;
/// Fitted standard deviation of the forward coupling.
pub const DEFAULT_BETA_STD: f64 = 0.0065;
/// Local-oscillator detuning, 2π × 230 MHz, in rad/ns.
pub const DEFAULT_OMEGA_LO: f64 = 2.0 * PI * 0.230;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Total single-atom decay rate Γ (1/ns).
    pub gamma: f64,
    /// Nominal forward coupling β̄_f, used to define the pulse area.
    pub beta_nominal: f64,
    pub n_atoms: usize,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA, beta_nominal: DEFAULT_BETA_MEAN, n_atoms: 1000 }
    }
}

impl PhysicalParams {
    pub fn new(gamma: f64, beta_nominal: f64, n_atoms: usize) -> Result<Self> {
        let p = Self { gamma, beta_nominal, n_atoms };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.beta_nominal > 0.0 && self.beta_nominal < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta_nominal must lie in (0, 1), got {}",
                self.beta_nominal
            )));
        }
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_atoms(mut self, n_atoms: usize) -> Self {
        self.n_atoms = n_atoms;
        self
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("coupling must lie in [0, 1], got {beta}")))
    }
}
