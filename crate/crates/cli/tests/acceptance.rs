//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p superburst-cli --test acceptance -- 1 7 8`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use superburst::{
    average_realizations, burst_metrics, compare_to_cascade, energy_ledger, estimate_g2, expected_binned_g2,
    extract_g1, fit_power_law, forward_g2, monte_carlo_clicks, propagate_ensemble, run_scan_area, run_scan_n,
    sample_betas, AreaScan, Binning, ClassicalSignal, CoherenceModel, DisorderPlan, EtaNormalization,
    HeterodyneConfig, PhysicalParams, PreparationMode, PulseMode, PulseSpec, RunConfig, SamplingMethod, TimeGrid,
    TruncatedGaussian, V_MAX_CUTOFF,
};

type Outcome = Result<String, String>;

// criterion 1
const SINGLE_ATOM_REL_TOL: f64 = 1e-6;
const SINGLE_ATOM_RUNTIME: Duration = Duration::from_secs(1);
// criterion 2
const LEDGER_INTEGRATED_TOL: f64 = 1e-3;
const LEDGER_POINTWISE_TOL: f64 = 1e-6;
// criterion 3
const DELAY_RANGE: (f64, f64) = (6.0, 12.0);
const DELAY_RUNTIME: Duration = Duration::from_secs(600);
// criterion 4
const N_LIST: [usize; 9] = [50, 100, 150, 230, 300, 400, 570, 800, 1110];
const EXP_BELOW: (f64, f64) = (1.0, 0.3);
const EXP_ABOVE: (f64, f64) = (2.6, 0.6);
const KNEE: (f64, f64) = (300.0, 150.0);
const ETA_PLATEAU: (f64, f64) = (0.010, 0.004);
const ETA_EXP: (f64, f64) = (1.2, 0.4);
const SCALING_RUNTIME: Duration = Duration::from_secs(45 * 60);
// criteria 5 and 6
const AREA_STEP: f64 = 0.05;
const DRIVEN_AREAS: [f64; 9] = [0.90, 0.95, 1.00, 1.05, 1.10, 1.15, 1.20, 1.25, 1.30];
const IDEAL_AREAS: [f64; 9] = [0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15, 1.20];
const AREA_REALIZATIONS: usize = 20;
const DRIVEN_ARGMAX_RANGE: (f64, f64) = (1.00, 1.15);
const ASYMMETRY_SIGMAS: f64 = 3.0;
const FULL_INVERSION_AMPLITUDE: f64 = 1e-10;
// criterion 7
const ORACLE_N1_TOL: f64 = 1e-6;
const ORACLE_CONSERVATION_TOL: f64 = 1e-3;
const ORACLE_COHERENT_TOL: f64 = 0.05;
// criterion 8
const ROUND_TRIP_TOL: f64 = 1e-12;
const MC_REPETITIONS: usize = 100_000;
const MC_SIGMAS: f64 = 3.0;
const MC_COVERAGE: f64 = 0.99;
const ERROR_RATIO_RANGE: (f64, f64) = (1.4, 2.6);
// criterion 10
const SCALING_NS: [usize; 5] = [100, 200, 400, 800, 1600];
const MAX_TIME_EXPONENT: f64 = 1.3;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(x: f64, (center, tol): (f64, f64)) -> bool {
    (x - center).abs() <= tol
}

fn reference_params(n: usize) -> PhysicalParams {
    PhysicalParams::new(0.032797, 0.0112, n).unwrap()
}

fn ideal_pi() -> PreparationMode {
    PreparationMode::IdealInstantaneous { area: PI }
}

fn driven(area: f64) -> PreparationMode {
    PreparationMode::DrivenPulse(PulseSpec::rectangular(area, 4.0))
}

fn single_atom_exactness() -> Outcome {
    let p = reference_params(1);
    let grid = TimeGrid::decay(120.0, 0.1).unwrap();
    let start = Instant::now();
    let r = propagate_ensemble(&p, &[p.beta_nominal], &ideal_pi(), &grid, 32).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for (t, pf) in grid.sample_times().iter().zip(&r.p_f) {
        let exact = p.beta_nominal * p.gamma * (-p.gamma * t).exp();
        worst = worst.max((pf - exact).abs() / exact);
    }
    ensure(worst < SINGLE_ATOM_REL_TOL, || format!("max relative error {worst:.3e}"))?;
    ensure(elapsed < SINGLE_ATOM_RUNTIME, || format!("runtime {elapsed:?}"))?;
    Ok(format!("max relative error {worst:.2e}, runtime {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn energy_conservation() -> Outcome {
    let grid = TimeGrid::decay(120.0, 0.1).unwrap();
    let mut worst_int = 0.0f64;
    for n in [1, 10, 100, 1000] {
        let p = reference_params(n);
        let uniform = vec![p.beta_nominal; n];
        let disordered = sample_betas(
            &TruncatedGaussian { mean: 0.0112, std: 0.0065 },
            n,
            DisorderPlan::default().realization_seed(0),
            SamplingMethod::Rejection,
        )
        .map_err(|e| e.to_string())?;
        for betas in [uniform, disordered] {
            let r = propagate_ensemble(&p, &betas, &ideal_pi(), &grid, 32).map_err(|e| e.to_string())?;
            let l = energy_ledger(&r, &p);
            let rel = l.tail_corrected.abs() / l.stored_energy;
            ensure(rel < LEDGER_INTEGRATED_TOL, || format!("N = {n}: integrated residual {rel:.3e} of E_st"))?;
            worst_int = worst_int.max(rel);
        }
    }
    let p = reference_params(1);
    let grid = TimeGrid::for_pulse(4.0, 60.0, 0.02, 0.1).unwrap();
    let mut worst_pt = 0.0f64;
    for area in [0.5 * PI, PI, 1.5 * PI, 2.0 * PI] {
        let r = propagate_ensemble(&p, &[p.beta_nominal], &driven(area), &grid, 32).map_err(|e| e.to_string())?;
        let l = energy_ledger(&r, &p);
        let scale = r.input_power.iter().fold(p.gamma, |m, &x| m.max(x));
        let rel = l.max_pointwise / scale;
        ensure(rel < LEDGER_POINTWISE_TOL, || format!("driven A = {:.2}π: pointwise residual {rel:.3e}", area / PI))?;
        worst_pt = worst_pt.max(rel);
    }
    Ok(format!("integrated residual <= {worst_int:.2e} E_st, driven pointwise residual <= {worst_pt:.2e} max(P_in, Γ)"))
}

fn reference_config(mode: PulseMode, n_realizations: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.pulse.mode = mode;
    cfg.disorder.n_realizations = n_realizations;
    cfg
}

fn burst_delay() -> Outcome {
    let cfg = reference_config(PulseMode::Driven, 100);
    let start = Instant::now();
    let avg = average_realizations(&cfg.params(), &cfg.plan(), &cfg.preparation(), &cfg.grid().unwrap(), cfg.quadrature())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let m = burst_metrics(&avg.mean, cfg.physics.gamma, EtaNormalization::StoredEnergy).map_err(|e| e.to_string())?;
    let detail = format!("t_D = {:.2} ns, P_max = {:.3}, runtime {:.0} s", m.t_delay, m.p_max, elapsed.as_secs_f64());
    ensure(m.t_delay >= DELAY_RANGE.0 && m.t_delay <= DELAY_RANGE.1, || {
        format!("{detail}; expected t_D in [{}, {}] ns", DELAY_RANGE.0, DELAY_RANGE.1)
    })?;
    ensure(elapsed < DELAY_RUNTIME, || format!("{detail}; too slow"))?;
    Ok(detail)
}

fn threshold_and_scaling() -> Outcome {
    let cfg = reference_config(PulseMode::Ideal, 100);
    let start = Instant::now();
    let scan = run_scan_n(&cfg, &N_LIST, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s = scan.scaling.ok_or("no scaling analysis")?;
    let detail = format!(
        "below {:.2}, above {:.2}, knee {:.0}, η plateau {:.4}, η exponent {:.2}, runtime {:.0} s",
        s.p_max_below.exponent,
        s.p_max_above.exponent,
        s.threshold.n_threshold,
        s.eta_plateau,
        s.eta_above.exponent,
        elapsed.as_secs_f64()
    );
    let ok = within(s.p_max_below.exponent, EXP_BELOW)
        && within(s.p_max_above.exponent, EXP_ABOVE)
        && within(s.threshold.n_threshold, KNEE)
        && within(s.eta_plateau, ETA_PLATEAU)
        && within(s.eta_above.exponent, ETA_EXP)
        && elapsed < SCALING_RUNTIME;
    ensure(ok, || detail.clone())?;
    Ok(detail)
}

/// An area scan plus the standard error of every normalised trace and the
/// largest coherent output amplitude after switch-off.
struct AreaRun {
    scan: AreaScan,
    norm_err: Vec<Vec<f64>>,
    max_alpha: Vec<f64>,
}

fn area_run(mode: PulseMode, areas: &[f64]) -> Result<AreaRun, String> {
    let cfg = reference_config(mode, AREA_REALIZATIONS);
    let mut norm_err = Vec::new();
    let mut max_alpha = Vec::new();
    let scan = run_scan_area(&cfg, areas, |ap, avg| {
        let z = avg.mean.zero_index();
        let k = (avg.n_realizations() as f64).sqrt();
        let peak = ap.point.metrics.p_max;
        norm_err.push(avg.p_f_std[z..].iter().map(|s| if peak > 0.0 { s / k / peak } else { 0.0 }).collect());
        max_alpha.push(avg.mean.alpha_out[z..].iter().fold(0.0f64, |m, a| m.max(a.norm())));
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok(AreaRun { scan, norm_err, max_alpha })
}

fn driven_scan() -> &'static Result<AreaRun, String> {
    static SCAN: OnceLock<Result<AreaRun, String>> = OnceLock::new();
    SCAN.get_or_init(|| area_run(PulseMode::Driven, &DRIVEN_AREAS))
}

fn ideal_scan() -> &'static Result<AreaRun, String> {
    static SCAN: OnceLock<Result<AreaRun, String>> = OnceLock::new();
    SCAN.get_or_init(|| area_run(PulseMode::Ideal, &IDEAL_AREAS))
}

/// Largest RMS difference of the normalised traces at `A* ± kδ`, in units of
/// the RMS combined standard error, over samples where either trace exceeds
/// 5 % of its peak.
fn asymmetry(run: &AreaRun, center: usize) -> Option<f64> {
    let n = run.scan.points.len();
    let mut best: Option<f64> = None;
    for k in 1..=center.min(n - 1 - center) {
        let (lo, hi) = (center - k, center + k);
        let (a, b) = (&run.scan.normalized[lo], &run.scan.normalized[hi]);
        let (ea, eb) = (&run.norm_err[lo], &run.norm_err[hi]);
        let (mut d2, mut s2, mut m) = (0.0, 0.0, 0usize);
        for i in 0..a.len() {
            if a[i].max(b[i]) >= 0.05 {
                d2 += (a[i] - b[i]).powi(2);
                s2 += ea[i].powi(2) + eb[i].powi(2);
                m += 1;
            }
        }
        if m == 0 {
            continue;
        }
        let stat = if s2 > 0.0 { (d2 / s2).sqrt() } else if d2 > 0.0 { f64::INFINITY } else { 0.0 };
        best = Some(best.map_or(stat, |b: f64| b.max(stat)));
    }
    best
}

fn area_scan_structure() -> Outcome {
    let d = driven_scan().as_ref().map_err(Clone::clone)?;
    let i = d.scan.argmax_delay();
    let a_d = DRIVEN_AREAS[i];
    let delays: Vec<String> =
        d.scan.points.iter().map(|p| format!("{:.2}:{:.1}", p.point.x, p.point.metrics.t_delay)).collect();
    ensure(a_d >= DRIVEN_ARGMAX_RANGE.0 - 1e-9 && a_d <= DRIVEN_ARGMAX_RANGE.1 + 1e-9, || {
        format!("driven argmax at {a_d}π; delays {}", delays.join(" "))
    })?;
    let ideal = ideal_scan().as_ref().map_err(Clone::clone)?;
    let j = ideal.scan.argmax_delay();
    let a_i = IDEAL_AREAS[j];
    ensure((a_i - 1.0).abs() <= AREA_STEP + 1e-9, || format!("ideal argmax at {a_i}π"))?;
    let asym_d = asymmetry(d, i).ok_or("driven maximum has no neighbours on both sides")?;
    let asym_i = asymmetry(ideal, j).ok_or("ideal maximum has no neighbours on both sides")?;
    let detail = format!(
        "driven argmax {a_d:.2}π, ideal argmax {a_i:.2}π, asymmetry {asym_d:.1}σ (driven) vs {asym_i:.2}σ (ideal)"
    );
    ensure(asym_d > ASYMMETRY_SIGMAS && asym_i <= ASYMMETRY_SIGMAS, || detail.clone())?;
    Ok(detail)
}

fn coherence_regimes() -> Outcome {
    let d = driven_scan().as_ref().map_err(Clone::clone)?;
    let low = area_run(PulseMode::Driven, &[0.93])?;
    let x_low = low.scan.points[0].x_zero.ok_or("no X(0+) at 0.93π")?;
    let hi = DRIVEN_AREAS.iter().position(|&a| (a - 1.25).abs() < 1e-9).unwrap();
    let x_high = d.scan.points[hi].x_zero.ok_or("no X(0+) at 1.25π")?;
    ensure(x_low < 0.0 && x_high > 0.0, || format!("X(0+) = {x_low:.3} at 0.93π, {x_high:.3} at 1.25π"))?;
    let dip = d.scan.argmin_coherence().ok_or("no coherence values")?;
    let peak = d.scan.argmax_delay();
    ensure(dip.abs_diff(peak) <= 1, || {
        format!("|C| dip at {}π but delay maximum at {}π", DRIVEN_AREAS[dip], DRIVEN_AREAS[peak])
    })?;
    let ideal = ideal_scan().as_ref().map_err(Clone::clone)?;
    let pi = IDEAL_AREAS.iter().position(|&a| (a - 1.0).abs() < 1e-9).unwrap();
    let amp = ideal.max_alpha[pi];
    ensure(amp < FULL_INVERSION_AMPLITUDE, || format!("coherent output {amp:.3e} at full inversion"))?;
    Ok(format!(
        "X(0+) = {x_low:.3} at 0.93π, {x_high:.3} at 1.25π; |C| dip {:.2}π, delay max {:.2}π; max |α_out| = {amp:.1e} at π",
        DRIVEN_AREAS[dip], DRIVEN_AREAS[peak]
    ))
}

fn oracle_validation() -> Outcome {
    let decay = TimeGrid::decay(80.0, 0.05).unwrap();
    let pulsed = TimeGrid::for_pulse(4.0, 60.0, 0.01, 0.05).unwrap();
    let mut worst_residual = 0.0f64;
    let mut track = |r: &superburst::DeviationReport| -> Result<(), String> {
        let res = r.oracle_energy_residual.abs();
        worst_residual = worst_residual.max(res);
        ensure(res < ORACLE_CONSERVATION_TOL, || format!("oracle N = {} residual {res:.3e}", r.n_atoms))
    };

    let p1 = reference_params(1);
    let cases = [
        (PreparationMode::IdealInstantaneous { area: PI }, &decay),
        (PreparationMode::IdealInstantaneous { area: PI / 2.0 }, &decay),
        (driven(PI), &pulsed),
        (driven(PI / 2.0), &pulsed),
    ];
    let mut worst_n1 = 0.0f64;
    for (prep, grid) in &cases {
        let c = compare_to_cascade(&p1, &[p1.beta_nominal], prep, grid, 32).map_err(|e| e.to_string())?;
        let dev = c.report.max_pf_relative.max(c.report.max_coherent_relative);
        ensure(dev < ORACLE_N1_TOL, || format!("N = 1 {prep:?}: deviation {dev:.3e}"))?;
        worst_n1 = worst_n1.max(dev);
        track(&c.report)?;
    }

    let p3 = PhysicalParams::new(0.032797, 0.05, 3).unwrap();
    let mut worst_coh = 0.0f64;
    for (prep, grid) in [(PreparationMode::IdealInstantaneous { area: PI / 2.0 }, &decay), (driven(PI / 2.0), &pulsed)] {
        let c = compare_to_cascade(&p3, &[0.05; 3], &prep, grid, 32).map_err(|e| e.to_string())?;
        let dev = c.report.max_coherent_relative;
        ensure(dev < ORACLE_COHERENT_TOL, || format!("N = 3 {prep:?}: coherent deviation {dev:.3e}"))?;
        worst_coh = worst_coh.max(dev);
        track(&c.report)?;
    }

    let mut archive = Vec::new();
    for n in 1..=4 {
        let p = PhysicalParams::new(0.032797, 0.05, n).unwrap();
        let c = compare_to_cascade(&p, &vec![0.05; n], &ideal_pi(), &decay, 32).map_err(|e| e.to_string())?;
        track(&c.report)?;
        archive.push(c.report);
    }
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("oracle_full_inversion.json");
    std::fs::write(&path, serde_json::to_string_pretty(&archive).unwrap()).map_err(|e| e.to_string())?;
    let devs: Vec<String> =
        archive.iter().map(|r| format!("N={}: {:.1e}/{:.1e}", r.n_atoms, r.max_pf_deviation, r.max_pf_relative)).collect();
    Ok(format!(
        "N = 1 deviation {worst_n1:.1e}; oracle residual <= {worst_residual:.1e}; N = 3 coherent deviation {worst_coh:.2e}; \
         full inversion ΔP_f (peak-normalised/relative) {} archived in {}",
        devs.join(", "),
        path.display()
    ))
}

fn burst_signal() -> Result<ClassicalSignal, String> {
    let p = reference_params(200);
    let betas = sample_betas(
        &TruncatedGaussian { mean: 0.0112, std: 0.0065 },
        200,
        DisorderPlan::default().realization_seed(0),
        SamplingMethod::Rejection,
    )
    .map_err(|e| e.to_string())?;
    let grid = TimeGrid::for_pulse(4.0, 30.0, 0.02, 0.1).unwrap();
    let r = propagate_ensemble(&p, &betas, &driven(0.93 * PI), &grid, 32).map_err(|e| e.to_string())?;
    ClassicalSignal::from_ensemble(&r, 0.0, 0.1).map_err(|e| e.to_string())
}

fn heterodyne_round_trip() -> Outcome {
    let sig = burst_signal()?;
    let power = sig.power();
    let p_lo = power.iter().fold(0.0f64, |m, &x| m.max(x));
    let cfg = HeterodyneConfig { p_lo, ..Default::default() };

    let max_lag = 100;
    let g1 = sig.g1(max_lag, CoherenceModel::RandomPhaseShot);
    let surf = forward_g2(&sig.times(), &power, &g1, &cfg).map_err(|e| e.to_string())?;
    let ex = extract_g1(&surf);
    let mut worst = 0.0f64;
    for i in 0..sig.len() {
        for j in 0..=max_lag {
            if surf.v_max[i][j] >= V_MAX_CUTOFF && g1[i][j].is_finite() {
                let want = (cfg.omega_lo * surf.lags[j]).cos() * g1[i][j];
                worst = worst.max((ex[i][j] - want).abs());
            }
        }
    }
    ensure(worst < ROUND_TRIP_TOL, || format!("round trip error {worst:.3e}"))?;

    let bins = Binning { samples_per_bin: 4, max_lag_bins: 30 };
    let expected = expected_binned_g2(&sig, &cfg, &bins).map_err(|e| e.to_string())?;
    let est = |reps: usize, seed: u64| {
        let rec = monte_carlo_clicks(&sig, &cfg, &bins, reps, seed).map_err(|e| e.to_string())?;
        estimate_g2(&rec, &sig, &bins).map_err(|e| e.to_string())
    };
    let e1 = est(MC_REPETITIONS, 1)?;
    let (mut inside, mut total) = (0usize, 0usize);
    for (gi, (ei, xi)) in e1.g2.iter().zip(e1.err.iter().zip(&expected.g2)) {
        for ((g, e), x) in gi.iter().zip(ei).zip(xi) {
            if g.is_finite() && x.is_finite() && *e > 0.0 {
                total += 1;
                inside += usize::from((g - x).abs() <= MC_SIGMAS * e);
            }
        }
    }
    let coverage = inside as f64 / total.max(1) as f64;
    ensure(total > 0 && coverage >= MC_COVERAGE, || format!("{inside}/{total} points within 3σ"))?;

    let e4 = est(4 * MC_REPETITIONS, 2)?;
    let mut ratios: Vec<f64> = e1
        .err
        .iter()
        .flatten()
        .zip(e4.err.iter().flatten())
        .filter(|(a, b)| a.is_finite() && b.is_finite() && **a > 0.0 && **b > 0.0)
        .map(|(a, b)| a / b)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().ok_or("no error bars to compare")?;
    ensure(median >= ERROR_RATIO_RANGE.0 && median <= ERROR_RATIO_RANGE.1, || {
        format!("error ratio {median:.3} for 4x repetitions")
    })?;
    Ok(format!(
        "round trip {worst:.1e}; {inside}/{total} points ({:.2} %) within 3σ; median error ratio {median:.3}",
        100.0 * coverage
    ))
}

const SMALL_CONFIG: &str = r#"
[physics]
n_atoms = 20

[pulse]
mode = "driven"

[grid]
t_end = 30.0
dt_pulse = 0.05
dt_decay = 0.2
n_phi = 8

[disorder]
n_realizations = 3
seed = 11

[heterodyne]
p_lo = 0.5
n_repetitions = 200
max_lag_bins = 10
"#;

fn run_cli(config: &Path, out: &Path, threads: usize, args: &[&str]) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_superburst"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .env("RUST_LOG", "error")
        .status()
        .map_err(|e| e.to_string())?;
    Ok(status.code().unwrap_or(-1))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = dir.path();
    let small = base.join("small.toml");
    std::fs::write(&small, SMALL_CONFIG).unwrap();

    // a fit target made by the simulator itself
    let seed_out = base.join("target-run");
    ensure(run_cli(&small, &seed_out, 1, &["simulate"])? == 0, || "simulate for the fit target failed".into())?;
    let trace = std::fs::read_to_string(seed_out.join("trace.csv")).unwrap();
    // the switch-off time appears twice; keep the right-continuous sample
    let mut rows: Vec<(&str, &str)> = Vec::new();
    for line in trace.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if rows.last().is_some_and(|r| r.0 == cols[0]) {
            rows.pop();
        }
        rows.push((cols[0], cols[1]));
    }
    let mut target = String::from("t_ns,p_f\n");
    for (t, p) in rows {
        target.push_str(&format!("{t},{p}\n"));
    }
    std::fs::write(base.join("target.csv"), target).unwrap();
    let fit = base.join("fit.toml");
    std::fs::write(
        &fit,
        format!("{SMALL_CONFIG}\n[fit]\nmax_evaluations = 120\ntargets = [{{ file = \"target.csv\", n_atoms = 20 }}]\n"),
    )
    .unwrap();
    let oracle = base.join("oracle.toml");
    std::fs::write(&oracle, SMALL_CONFIG.replace("n_atoms = 20", "n_atoms = 3")).unwrap();

    let runs: [(&str, &Path, &[&str]); 6] = [
        ("simulate", &small, &["simulate"]),
        ("scan-n", &small, &["scan-n", "--n", "5,10,20"]),
        ("scan-area", &small, &["scan-area", "--areas", "0.9,1.1"]),
        ("fit-disorder", &fit, &["fit-disorder"]),
        ("oracle-compare", &oracle, &["oracle-compare"]),
        ("heterodyne", &small, &["heterodyne"]),
    ];
    for (name, config, args) in runs {
        let mut outputs = Vec::new();
        for threads in [1, 2] {
            let out = base.join(format!("{name}-{threads}"));
            let code = run_cli(config, &out, threads, args)?;
            ensure(code == 0, || format!("{name} --threads {threads} exited with {code}"))?;
            let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{name}: {f}: {e}"));
            outputs.push((read("trace.csv")?, read("summary.json")?));
        }
        ensure(outputs[0].0 == outputs[1].0, || format!("{name}: trace.csv differs between thread counts"))?;
        ensure(outputs[0].1 == outputs[1].1, || format!("{name}: summary.json differs between thread counts"))?;
    }
    Ok("six subcommands byte-identical with --threads 1 and 2".into())
}

fn linear_scaling() -> Outcome {
    let grid = TimeGrid::decay(120.0, 0.1).unwrap();
    let mut points = Vec::new();
    for n in SCALING_NS {
        let p = reference_params(n);
        let betas = sample_betas(
            &TruncatedGaussian { mean: 0.0112, std: 0.0065 },
            n,
            DisorderPlan::default().realization_seed(0),
            SamplingMethod::Rejection,
        )
        .map_err(|e| e.to_string())?;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            propagate_ensemble(&p, &betas, &ideal_pi(), &grid, 32).map_err(|e| e.to_string())?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        points.push((n as f64, best));
    }
    let fit = fit_power_law(&points, (100.0, 1600.0)).map_err(|e| e.to_string())?;
    let detail = format!(
        "time exponent {:.3} ({} ms at N = 100, {} ms at N = 1600)",
        fit.exponent,
        (points[0].1 * 1e3).round(),
        (points[points.len() - 1].1 * 1e3).round()
    );
    ensure(fit.exponent < MAX_TIME_EXPONENT, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "single-atom exactness", single_atom_exactness),
        (2, "energy conservation", energy_conservation),
        (3, "burst delay", burst_delay),
        (4, "threshold and scaling", threshold_and_scaling),
        (5, "area-scan structure", area_scan_structure),
        (6, "coherence regimes", coherence_regimes),
        (7, "oracle validation", oracle_validation),
        (8, "heterodyne round trip", heterodyne_round_trip),
        (9, "determinism", determinism),
        (10, "linear scaling", linear_scaling),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.1} s] {detail}"),
            Err(detail) => {
                println!("criterion {n} ({name}): FAIL [{secs:.1} s] {detail}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
