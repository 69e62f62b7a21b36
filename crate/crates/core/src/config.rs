//! Run configuration: a flat, sectioned TOML file (JSON accepted with the
//! same keys).
//!
//! ```toml
//! [physics]
//! gamma = 0.0327982273      # 1/ns
//! beta_nominal = 0.0112     # coupling that defines the pulse area
//! n_atoms = 1000
//! max_atoms = 100000        # memory guard
//!
//! [pulse]
//! mode = "driven"           # or "ideal"
//! area_pi = 1.0             # pulse area in units of π
//! duration = 4.0            # ns, driven mode only
//! ramp = 0.0                # raised-cosine edge length (ns); 0 = rectangular
//!
//! [grid]
//! t_end = 120.0
//! dt_pulse = 0.02
//! dt_decay = 0.1
//! n_phi = 32
//! exploit_symmetry = true
//!
//! [disorder]
//! beta_mean = 0.0112
//! beta_std = 0.0065
//! n_realizations = 100
//! seed = 0
//! method = "rejection"      # or "inverse-cdf"
//!
//! [output]
//! dir = "out"
//! overwrite = false
//! ```
//!
//! Optional sections: `[heterodyne]`, `[scan]`, `[fit]` (see the field docs).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bloch::{PulseShape, PulseSpec};
use crate::cascade::{PhaseQuadrature, PreparationMode, DEFAULT_N_PHI};
use crate::disorder::{DisorderPlan, SamplingMethod, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::fitting::{FitBounds, SimplexOptions};
use crate::grid::TimeGrid;
use crate::heterodyne::{Binning, CoherenceModel, HeterodyneConfig};
use crate::params::{PhysicalParams, DEFAULT_BETA_MEAN, DEFAULT_BETA_STD, DEFAULT_GAMMA, DEFAULT_OMEGA_LO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub gamma: f64,
    pub beta_nominal: f64,
    pub n_atoms: usize,
    pub max_atoms: usize,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA, beta_nominal: DEFAULT_BETA_MEAN, n_atoms: 1000, max_atoms: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseMode {
    Driven,
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub mode: PulseMode,
    pub area_pi: f64,
    pub duration: f64,
    pub ramp: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { mode: PulseMode::Driven, area_pi: 1.0, duration: 4.0, ramp: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub t_end: f64,
    pub dt_pulse: f64,
    pub dt_decay: f64,
    pub n_phi: usize,
    pub exploit_symmetry: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { t_end: 120.0, dt_pulse: 0.02, dt_decay: 0.1, n_phi: DEFAULT_N_PHI, exploit_symmetry: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub beta_mean: f64,
    pub beta_std: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub method: SamplingMethod,
}

impl Default for DisorderSection {
    fn default() -> Self {
        Self {
            beta_mean: DEFAULT_BETA_MEAN,
            beta_std: DEFAULT_BETA_STD,
            n_realizations: 100,
            seed: 0,
            method: SamplingMethod::Rejection,
        }
    }
}

/// Heterodyne detection settings. The simulated output is resampled with
/// step `dt` from `t_start` and binned by `samples_per_bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeterodyneSection {
    pub p_lo: f64,
    pub omega_lo: f64,
    pub polarization_overlap: f64,
    pub model: CoherenceModel,
    pub t_start: f64,
    pub dt: f64,
    pub samples_per_bin: usize,
    pub max_lag_bins: usize,
    /// Monte Carlo repetitions; zero skips the click simulation.
    pub n_repetitions: usize,
}

impl Default for HeterodyneSection {
    fn default() -> Self {
        let h = HeterodyneConfig::default();
        Self {
            p_lo: h.p_lo,
            omega_lo: h.omega_lo,
            polarization_overlap: h.polarization_overlap,
            model: CoherenceModel::RandomPhaseShot,
            t_start: 0.0,
            dt: 0.1,
            samples_per_bin: 4,
            max_lag_bins: 100,
            n_repetitions: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub overwrite: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), overwrite: false }
    }
}

/// Scan orchestration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Atom numbers for `scan-n`, ascending.
    pub n_list: Vec<usize>,
    /// Pulse areas for `scan-area`, in units of π.
    pub areas_pi: Vec<f64>,
    /// Reference time of the laser cross-correlation (ns, inside the pulse).
    pub t_ref: f64,
    /// The average coherence is fitted from switch-off up to the last time
    /// the forward power is at least this fraction of its peak.
    pub coherence_power_fraction: f64,
    /// Explicit power-law ranges; when absent they are split at the knee.
    pub fit_below: Option<(f64, f64)>,
    pub fit_above: Option<(f64, f64)>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 150, 230, 300, 400, 570, 800, 1110],
            areas_pi: (0..=12).map(|k| 0.9 + 0.025 * k as f64).collect(),
            t_ref: -2.0,
            coherence_power_fraction: 0.1,
            fit_below: None,
            fit_above: None,
        }
    }
}

/// A target trace for `fit-disorder`: a CSV file with columns `t_ns, p_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitTargetSpec {
    pub file: PathBuf,
    pub n_atoms: usize,
    /// Defaults to the `[pulse]` area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_pi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub targets: Vec<FitTargetSpec>,
    pub beta_mean_bounds: (f64, f64),
    pub beta_std_bounds: (f64, f64),
    pub start: (f64, f64),
    pub max_evaluations: usize,
    pub max_restarts: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let b = FitBounds::default();
        let o = SimplexOptions::default();
        Self {
            targets: Vec::new(),
            beta_mean_bounds: b.beta_mean,
            beta_std_bounds: b.beta_std,
            start: o.start,
            max_evaluations: o.max_evaluations,
            max_restarts: o.max_restarts,
            x_tol: o.x_tol,
            f_tol: o.f_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub pulse: PulseSection,
    pub grid: GridSection,
    pub disorder: DisorderSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterodyne: Option<HeterodyneSection>,
    pub output: OutputSection,
    pub scan: ScanSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, choosing JSON for a `.json` extension and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.params().validate().map_err(cfg_err)?;
        if self.physics.n_atoms > self.physics.max_atoms {
            return Err(Error::Config(format!(
                "n_atoms = {} exceeds max_atoms = {}",
                self.physics.n_atoms, self.physics.max_atoms
            )));
        }
        if let Some(&n) = self.scan.n_list.iter().find(|&&n| n > self.physics.max_atoms) {
            return Err(Error::Config(format!("scan entry {n} exceeds max_atoms = {}", self.physics.max_atoms)));
        }
        if !(self.pulse.area_pi.is_finite() && self.pulse.area_pi >= 0.0) {
            return Err(Error::Config(format!("pulse area must be >= 0, got {}π", self.pulse.area_pi)));
        }
        if self.pulse.mode == PulseMode::Driven && !(self.pulse.ramp >= 0.0 && 2.0 * self.pulse.ramp < self.pulse.duration)
        {
            return Err(Error::Config(format!(
                "ramp {} ns does not fit twice into a {} ns pulse",
                self.pulse.ramp, self.pulse.duration
            )));
        }
        if self.grid.n_phi == 0 {
            return Err(Error::Config("n_phi must be >= 1".into()));
        }
        self.grid().map_err(cfg_err)?;
        self.plan().validate().map_err(cfg_err)?;
        if let Some(h) = &self.heterodyne {
            self.heterodyne_config().unwrap_or_default().validate().map_err(cfg_err)?;
            if !(h.dt > 0.0) || h.samples_per_bin == 0 {
                return Err(Error::Config("heterodyne dt and samples_per_bin must be > 0".into()));
            }
        }
        if !self.scan.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("scan.n_list must be strictly ascending".into()));
        }
        if self.scan.areas_pi.iter().any(|a| !(0.0..=2.5).contains(a)) {
            return Err(Error::Config("scan areas must lie in [0, 2.5]π".into()));
        }
        if !(self.scan.coherence_power_fraction > 0.0 && self.scan.coherence_power_fraction < 1.0) {
            return Err(Error::Config("coherence_power_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams { gamma: self.physics.gamma, beta_nominal: self.physics.beta_nominal, n_atoms: self.physics.n_atoms }
    }

    pub fn preparation(&self) -> PreparationMode {
        let area = self.pulse.area_pi * PI;
        match self.pulse.mode {
            PulseMode::Ideal => PreparationMode::IdealInstantaneous { area },
            PulseMode::Driven => {
                let shape = if self.pulse.ramp > 0.0 {
                    PulseShape::SmoothedEdge { ramp: self.pulse.ramp }
                } else {
                    PulseShape::Rectangular
                };
                PreparationMode::DrivenPulse(PulseSpec { area, duration: self.pulse.duration, shape })
            }
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let g = &self.grid;
        match self.pulse.mode {
            PulseMode::Ideal => TimeGrid::decay(g.t_end, g.dt_decay),
            PulseMode::Driven => TimeGrid::for_pulse(self.pulse.duration, g.t_end, g.dt_pulse, g.dt_decay),
        }
    }

    pub fn quadrature(&self) -> PhaseQuadrature {
        if self.grid.exploit_symmetry {
            PhaseQuadrature::new(self.grid.n_phi)
        } else {
            PhaseQuadrature::exhaustive(self.grid.n_phi)
        }
    }

    pub fn plan(&self) -> DisorderPlan {
        let d = &self.disorder;
        DisorderPlan {
            dist: TruncatedGaussian { mean: d.beta_mean, std: d.beta_std },
            n_realizations: d.n_realizations,
            seed: d.seed,
            method: d.method,
        }
    }

    pub fn heterodyne_config(&self) -> Option<HeterodyneConfig> {
        self.heterodyne.as_ref().map(|h| HeterodyneConfig {
            p_lo: h.p_lo,
            omega_lo: h.omega_lo,
            polarization_overlap: h.polarization_overlap,
        })
    }

    pub fn binning(&self) -> Option<Binning> {
        self.heterodyne
            .as_ref()
            .map(|h| Binning { samples_per_bin: h.samples_per_bin, max_lag_bins: h.max_lag_bins })
    }

    /// LO offset used for the coherence fit, also without a `[heterodyne]` section.
    pub fn omega_lo(&self) -> f64 {
        self.heterodyne.as_ref().map_or(DEFAULT_OMEGA_LO, |h| h.omega_lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.plan().n_realizations, 100);
        assert!(cfg.preparation().is_driven());
    }

    #[test]
    fn default_round_trips_through_both_encodings() {
        let mut cfg = RunConfig::default();
        cfg.heterodyne = Some(HeterodyneSection::default());
        cfg.fit = Some(FitSection {
            targets: vec![FitTargetSpec { file: "a.csv".into(), n_atoms: 30, area_pi: Some(1.1) }],
            ..Default::default()
        });
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[physics]\nbeta = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn memory_guard() {
        let err = RunConfig::from_toml_str("[physics]\nn_atoms = 200\nmax_atoms = 100\n").unwrap_err();
        assert!(err.to_string().contains("max_atoms"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[physics]\ngamma = -1.0\n",
            "[grid]\ndt_decay = 0.0\n",
            "[disorder]\nn_realizations = 0\n",
            "[scan]\nn_list = [10, 5]\n",
            "[scan]\nareas_pi = [3.0]\n",
            "[pulse]\nramp = 3.0\n",
        ] {
            assert!(matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn ideal_mode_uses_decay_grid() {
        let cfg = RunConfig::from_toml_str("[pulse]\nmode = \"ideal\"\narea_pi = 0.5\n").unwrap();
        assert_eq!(cfg.grid().unwrap().t_start(), 0.0);
        assert_eq!(cfg.preparation(), PreparationMode::IdealInstantaneous { area: 0.5 * PI });
    }

    #[test]
    fn json_extension_selects_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"physics": {"n_atoms": 7}}"#).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap().physics.n_atoms, 7);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_fields(
            n in 1usize..5000,
            area in 0.0f64..2.5,
            beta in 0.001f64..0.5,
            std in 0.0f64..0.05,
            seed in 0u64..(i64::MAX as u64),
            ideal in any::<bool>(),
            n_phi in 1usize..64,
            reals in 1usize..500,
        ) {
            let mut cfg = RunConfig::default();
            cfg.physics.n_atoms = n;
            cfg.physics.beta_nominal = beta;
            cfg.pulse.area_pi = area;
            cfg.pulse.mode = if ideal { PulseMode::Ideal } else { PulseMode::Driven };
            cfg.disorder.beta_mean = beta;
            cfg.disorder.beta_std = std;
            cfg.disorder.seed = seed;
            cfg.disorder.n_realizations = reals;
            cfg.grid.n_phi = n_phi;
            let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            prop_assert_eq!(&back, &cfg);
            let back = RunConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
