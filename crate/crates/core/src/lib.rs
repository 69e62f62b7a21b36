//! Simulation of collective superradiant decay in a unidirectionally
//! waveguide-coupled atomic chain.
//!
//! The chain is treated as a cascaded system: each atom is driven only by the
//! field emitted upstream. [`cascade`] propagates a mixed coherent-state
//! representation of the guided field atom by atom at a cost linear in the
//! number of atoms; [`oracle`] integrates the exact cascaded master equation
//! for a handful of atoms as a reference.

pub mod bloch;
pub mod cascade;
pub mod config;
pub mod disorder;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod heterodyne;
pub mod observables;
pub mod oracle;
pub mod output;
pub mod params;
pub mod scan;

pub use bloch::{ideal_state, make_pulse, solve_bloch, AtomState, AtomTrajectory, BlochSolution, CoherentDrive, PulseShape, PulseSpec};
pub use cascade::{
    energy_ledger, propagate_atom, propagate_ensemble, AtomPropagation, EnsembleResult, LedgerReport, MixedFieldTrace,
    PhaseQuadrature, PreparationMode, DEFAULT_N_PHI,
};
pub use config::{
    DisorderSection, FitSection, FitTargetSpec, GridSection, HeterodyneSection, OutputSection, PhysicsSection, PulseMode,
    PulseSection, RunConfig, ScanSection,
};
pub use disorder::{
    average_realizations, sample_betas, DisorderAverage, DisorderPlan, RealizationSeed, SamplingMethod, ScalarSummary,
    TruncatedGaussian,
};
pub use error::{Error, Result};
pub use fitting::{
    fit_disorder_params, objective, FitBounds, FitProblem, FitReport, FitSimulation, FitStep, FitTarget, SimplexOptions,
};
pub use grid::{Segment, TimeGrid};
pub use heterodyne::{
    estimate_g2, expected_binned_g2, extract_g1, forward_g2, monte_carlo_clicks, Binning, ClassicalSignal, ClickRecord,
    CoherenceModel, CorrelationSurface, G2Estimate, HeterodyneConfig, V_MAX_CUTOFF,
};
pub use observables::{
    absorbed_energy, burst_metrics, cross_correlation, detect_threshold, fit_cosine_amplitude, fit_power_law, forward_fraction,
    moving_average, peak_and_delay, BurstMetrics, CosineFit, EtaNormalization, PowerLawFit, ThresholdFit,
};
pub use oracle::{build_generator, compare_to_cascade, evolve, CascadedGenerator, Comparison, DensityMatrix, DeviationReport, OracleResult};
pub use params::{PhysicalParams, DEFAULT_BETA_MEAN, DEFAULT_BETA_STD, DEFAULT_GAMMA, DEFAULT_OMEGA_LO};
pub use output::{format_number, prepare_output_dir, read_target_csv, write_csv, write_json, write_summary, write_trace, Summary};
pub use scan::{analyze_scaling, laser_coherence, run_scan_area, run_scan_n, AreaPoint, AreaScan, NScan, ScalingAnalysis, ScanPoint};
