//! Subcommand bodies. Each writes `trace.csv`, `summary.json` and the
//! resolved `config.toml` into the output directory, plus its own tables.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use superburst::output::{TRACE_COLUMNS, TRACE_FILE, SUMMARY_FILE};
use superburst::{
    average_realizations, burst_metrics, compare_to_cascade, estimate_g2, expected_binned_g2, extract_g1,
    fit_disorder_params, forward_g2, laser_coherence, monte_carlo_clicks, peak_and_delay, prepare_output_dir,
    read_target_csv, run_scan_area, run_scan_n, sample_betas, write_csv, write_json, write_summary, write_trace,
    ClassicalSignal, DisorderAverage, DisorderPlan, Error, EtaNormalization, FitBounds, FitProblem, FitSimulation,
    FitTarget, HeterodyneSection, Result, RunConfig, SamplingMethod, SimplexOptions, Summary,
};

/// Offset between the disorder seed and the click-simulation seed, so the two
/// never share a random stream.
const CLICK_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = prepare_output_dir(&cfg.output.dir, cfg.output.overwrite)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(dir)
}

fn simulate_average(cfg: &RunConfig) -> Result<DisorderAverage> {
    average_realizations(&cfg.params(), &cfg.plan(), &cfg.preparation(), &cfg.grid()?, cfg.quadrature())
}

/// Metrics of the mean trace plus the realization spread.
fn trace_summary(cfg: &RunConfig, avg: &DisorderAverage) -> Result<Summary> {
    let m = burst_metrics(&avg.mean, cfg.physics.gamma, EtaNormalization::StoredEnergy)?;
    let spread = avg.scalar_summary().std;
    let mut s = Summary { p_max: Some(m.p_max), t_delay_ns: Some(m.t_delay), eta_f: Some(m.eta_f), ..Default::default() }
        .with("n_atoms", avg.mean.n_atoms() as f64)
        .with("n_realizations", avg.n_realizations() as f64)
        .with("stored_energy", avg.mean.stored_energy)
        .with("p_max_std", spread.p_max)
        .with("t_delay_std_ns", spread.t_delay)
        .with("eta_f_std", spread.eta_f);
    if cfg.preparation().is_driven() && m.p_max > 0.0 {
        match laser_coherence(avg, cfg.scan.t_ref, cfg.scan.coherence_power_fraction, cfg.omega_lo()) {
            Ok((x0, c)) => {
                s.coherence_amplitude = Some(c.amplitude.abs());
                s = s.with("x_zero", x0).with("coherence_amplitude_err", c.amplitude_err);
            }
            Err(e) => log::warn!("no laser coherence: {e}"),
        }
    }
    Ok(s)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let dir = prepare(cfg)?;
    let avg = simulate_average(cfg)?;
    write_trace(&dir.join(TRACE_FILE), &avg)?;
    let rows = avg.per_realization.iter().enumerate().map(|(i, m)| [i as f64, m.p_max, m.t_delay, m.eta_f]);
    write_csv(&dir.join("realizations.csv"), &["realization", "p_max", "t_delay_ns", "eta_f"], rows)?;
    let s = trace_summary(cfg, &avg)?;
    write_summary(&dir.join(SUMMARY_FILE), &s)
}

fn header_refs(h: &[String]) -> Vec<&str> {
    h.iter().map(String::as_str).collect()
}

/// Time column plus one `P_f` column per scan point.
fn write_trace_matrix(path: &Path, times: &[f64], labels: &[String], columns: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["t_ns".to_string()];
    header.extend(labels.iter().cloned());
    let rows = (0..times.len()).map(|i| {
        let mut row = Vec::with_capacity(columns.len() + 1);
        row.push(times[i]);
        row.extend(columns.iter().map(|c| c[i]));
        row
    });
    write_csv(path, &header_refs(&header), rows)
}

const SCAN_N_COLUMNS: [&str; 6] = ["n_atoms", "p_max", "t_delay_ns", "eta_f", "stored_energy", "p_max_std"];

pub fn scan_n(cfg: &RunConfig, n_list: Option<Vec<usize>>) -> Result<()> {
    let dir = prepare(cfg)?;
    let n_list = n_list.unwrap_or_else(|| cfg.scan.n_list.clone());
    let table = dir.join("scan_n.csv");
    let mut rows: Vec<[f64; 6]> = Vec::new();
    let mut traces: Vec<Vec<f64>> = Vec::new();
    let mut last: Option<DisorderAverage> = None;
    let scan = run_scan_n(cfg, &n_list, |p, avg| {
        let m = p.metrics;
        rows.push([p.x, m.p_max, m.t_delay, m.eta_f, p.stored_energy, avg.scalar_summary().std.p_max]);
        traces.push(avg.mean.p_f.clone());
        last = Some(avg.clone());
        // rewrite after every point so a failure leaves the finished rows
        write_csv(&table, &SCAN_N_COLUMNS, &rows)
    })?;
    let last = last.expect("scan has at least one point");
    let labels: Vec<String> = n_list.iter().map(|n| format!("p_f_n{n}")).collect();
    write_trace_matrix(&dir.join("traces_n.csv"), &last.mean.grid.sample_times(), &labels, &traces)?;
    write_trace(&dir.join(TRACE_FILE), &last)?;

    let mut s = Summary::default().with("n_points", scan.points.len() as f64);
    if let Some(a) = &scan.scaling {
        s.exponent_below = Some(a.p_max_below.exponent);
        s.exponent_above = Some(a.p_max_above.exponent);
        s.n_threshold = Some(a.threshold.n_threshold);
        s = s
            .with("exponent_below_err", a.p_max_below.exponent_err)
            .with("exponent_above_err", a.p_max_above.exponent_err)
            .with("hinge_slope_below", a.threshold.slope_below)
            .with("hinge_slope_above", a.threshold.slope_above)
            .with("eta_f_plateau", a.eta_plateau)
            .with("eta_f_exponent", a.eta_above.exponent)
            .with("eta_f_exponent_err", a.eta_above.exponent_err);
    }
    write_summary(&dir.join(SUMMARY_FILE), &s)
}

const SCAN_AREA_COLUMNS: [&str; 8] =
    ["area_pi", "p_max", "t_delay_ns", "eta_f", "stored_energy", "x_zero", "coherence_amplitude", "coherence_err"];

pub fn scan_area(cfg: &RunConfig, areas: Option<Vec<f64>>) -> Result<()> {
    let dir = prepare(cfg)?;
    let areas = areas.unwrap_or_else(|| cfg.scan.areas_pi.clone());
    let table = dir.join("scan_area.csv");
    let mut rows: Vec<[f64; 8]> = Vec::new();
    let mut best: Option<(f64, DisorderAverage)> = None;
    let scan = run_scan_area(cfg, &areas, |p, avg| {
        let m = p.point.metrics;
        let (c, ce) = p.coherence.map_or((f64::NAN, f64::NAN), |c| (c.amplitude.abs(), c.amplitude_err));
        rows.push([p.point.x, m.p_max, m.t_delay, m.eta_f, p.point.stored_energy, p.x_zero.unwrap_or(f64::NAN), c, ce]);
        if best.as_ref().is_none_or(|(t, _)| m.t_delay > *t) {
            best = Some((m.t_delay, avg.clone()));
        }
        write_csv(&table, &SCAN_AREA_COLUMNS, &rows)
    })?;
    let labels: Vec<String> = areas.iter().map(|a| format!("area_{a:.4}pi")).collect();
    write_trace_matrix(&dir.join("normalized_traces.csv"), &scan.times, &labels, &scan.normalized)?;
    let (_, best) = best.expect("scan has at least one point");
    write_trace(&dir.join(TRACE_FILE), &best)?;

    let i = scan.argmax_delay();
    let p = &scan.points[i];
    let mut s = Summary {
        p_max: Some(p.point.metrics.p_max),
        t_delay_ns: Some(p.point.metrics.t_delay),
        eta_f: Some(p.point.metrics.eta_f),
        ..Default::default()
    }
    .with("area_max_delay_pi", p.point.x);
    if let Some(j) = scan.argmin_coherence() {
        let c = scan.points[j].coherence.expect("coherence present");
        s.coherence_amplitude = Some(c.amplitude.abs());
        s = s.with("area_min_coherence_pi", scan.points[j].point.x);
    }
    write_summary(&dir.join(SUMMARY_FILE), &s)
}

pub fn fit_disorder(cfg: &RunConfig, base: &Path) -> Result<()> {
    let fit = cfg.fit.as_ref().ok_or_else(|| Error::Config("fit-disorder needs a [fit] section".into()))?;
    if fit.targets.is_empty() {
        return Err(Error::Config("[fit] lists no targets".into()));
    }
    let dir = prepare(cfg)?;
    let mut targets = Vec::with_capacity(fit.targets.len());
    for t in &fit.targets {
        let path = if t.file.is_absolute() { t.file.clone() } else { base.join(&t.file) };
        let (times, p_f) = read_target_csv(&path)?;
        let prep = match t.area_pi {
            Some(a) => cfg.preparation().with_area(a * PI),
            None => cfg.preparation(),
        };
        targets.push(FitTarget { n_atoms: t.n_atoms, prep, times, p_f, weights: None });
    }
    let problem = FitProblem {
        targets,
        bounds: FitBounds { beta_mean: fit.beta_mean_bounds, beta_std: fit.beta_std_bounds },
    };
    let sim = FitSimulation {
        params: cfg.params(),
        grid: cfg.grid()?,
        n_realizations: cfg.disorder.n_realizations,
        quadrature: cfg.quadrature(),
    };
    let opts = SimplexOptions {
        max_evaluations: fit.max_evaluations,
        x_tol: fit.x_tol,
        f_tol: fit.f_tol,
        max_restarts: fit.max_restarts,
        start: fit.start,
    };
    let seed = cfg.disorder.seed;
    let report = fit_disorder_params(&problem, &sim, seed, &opts)?;
    write_json(&dir.join("fit_report.json"), &report)?;

    // best-fit trace for the first target, with the fitter's couplings
    let first = &problem.targets[0];
    let plan = DisorderPlan {
        dist: superburst::TruncatedGaussian { mean: report.beta_mean, std: report.beta_std },
        n_realizations: sim.n_realizations,
        seed,
        method: SamplingMethod::InverseCdf,
    };
    let avg = average_realizations(&sim.params.with_atoms(first.n_atoms), &plan, &first.prep, &sim.grid, sim.quadrature)?;
    write_trace(&dir.join(TRACE_FILE), &avg)?;
    let s = trace_summary(cfg, &avg)?
        .with("beta_mean", report.beta_mean)
        .with("beta_std", report.beta_std)
        .with("objective", report.objective)
        .with("evaluations", report.evaluations as f64)
        .with("converged", f64::from(u8::from(report.converged)))
        .with("degenerate", f64::from(u8::from(report.degenerate)));
    write_summary(&dir.join(SUMMARY_FILE), &s)?;
    if report.degenerate {
        log::warn!("best mean coupling sits on its lower bound: the targets carry no usable signal");
    }
    report.ensure_converged()
}

pub fn oracle_compare(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params();
    let plan = cfg.plan();
    let betas = sample_betas(&plan.dist, params.n_atoms, plan.realization_seed(0), plan.method)?;
    let grid = cfg.grid()?;
    let cmp = compare_to_cascade(&params, &betas, &cfg.preparation(), &grid, cfg.quadrature())?;
    let dir = prepare(cfg)?;
    let (o, c) = (&cmp.oracle, &cmp.cascade);
    let times = grid.sample_times();
    let rows = (0..times.len()).map(|i| {
        [
            times[i],
            o.p_f[i],
            c.p_f[i],
            o.alpha_out[i].norm_sqr(),
            c.alpha_out[i].norm_sqr(),
            o.p_free[i],
            c.free_space_power[i],
        ]
    });
    write_csv(
        &dir.join("paired.csv"),
        &["t_ns", "p_f_oracle", "p_f_cascade", "coherent_oracle", "coherent_cascade", "p_free_oracle", "p_free_cascade"],
        rows,
    )?;
    write_json(&dir.join("deviation.json"), &serde_json::json!({ "betas": betas, "report": cmp.report }))?;
    let rows = (0..times.len()).map(|i| [times[i], o.p_f[i], 0.0, o.p_free[i], o.total_pe[i]]);
    write_csv(&dir.join(TRACE_FILE), &TRACE_COLUMNS, rows)?;

    let r = &cmp.report;
    let z = c.zero_index();
    let (p_max, _) = peak_and_delay(&times[z..], &o.p_f[z..])?;
    let s = Summary {
        p_max: Some(p_max),
        t_delay_ns: Some(r.t_delay_oracle),
        eta_f: Some(r.eta_f_oracle),
        ..Default::default()
    }
    .with("n_atoms", r.n_atoms as f64)
    .with("max_pf_deviation", r.max_pf_deviation)
    .with("max_pf_relative", r.max_pf_relative)
    .with("max_coherent_relative", r.max_coherent_relative)
    .with("eta_f_cascade", r.eta_f_cascade)
    .with("t_delay_cascade_ns", r.t_delay_cascade)
    .with("oracle_energy_residual", r.oracle_energy_residual)
    .with("oracle_min_eigenvalue", r.oracle_min_eigenvalue);
    write_summary(&dir.join(SUMMARY_FILE), &s)
}

pub fn heterodyne(cfg: &RunConfig) -> Result<()> {
    let h = cfg.heterodyne.clone().unwrap_or_else(HeterodyneSection::default);
    let mut full = cfg.clone();
    full.heterodyne = Some(h.clone());
    let hcfg = full.heterodyne_config().expect("section set");
    let bins = full.binning().expect("section set");
    let dir = prepare(&full)?;
    let avg = simulate_average(&full)?;
    write_trace(&dir.join(TRACE_FILE), &avg)?;

    let sig = ClassicalSignal::from_ensemble(&avg.mean, h.t_start, h.dt)?;
    let max_lag = bins.max_lag_bins * bins.samples_per_bin;
    let surface = forward_g2(&sig.times(), &sig.power(), &sig.g1(max_lag, h.model), &hcfg)?;
    let g1 = extract_g1(&surface);
    // bin-resolution subsample keeps the file small
    let m = bins.samples_per_bin;
    let mut rows = Vec::new();
    for i in (0..surface.times.len()).step_by(m) {
        for j in (0..surface.lags.len()).step_by(m) {
            let g = surface.g2_d[i][j];
            if g.is_finite() {
                rows.push([surface.times[i], surface.lags[j], g, surface.v_max[i][j], g1[i][j]]);
            }
        }
    }
    write_csv(&dir.join("g2_surface.csv"), &["t_ns", "tau_ns", "g2_d", "v_max", "g1"], &rows)?;

    let mut s = trace_summary(&full, &avg)?;
    if h.n_repetitions > 0 {
        let record = monte_carlo_clicks(&sig, &hcfg, &bins, h.n_repetitions, cfg.disorder.seed.wrapping_add(CLICK_SEED_OFFSET))?;
        let est = estimate_g2(&record, &sig, &bins)?;
        let exp = expected_binned_g2(&sig, &hcfg, &bins)?;
        let mut rows = Vec::new();
        let (mut worst, mut n) = (0.0f64, 0usize);
        for i in 0..est.centers.len() {
            for j in 0..est.lags.len() {
                let (g, e, x) = (est.g2[i][j], est.err[i][j], exp.g2[i][j]);
                if g.is_finite() && x.is_finite() {
                    rows.push([est.centers[i], est.lags[j], g, e, x]);
                    if e > 0.0 {
                        worst = worst.max(((g - x) / e).abs());
                        n += 1;
                    }
                }
            }
        }
        write_csv(&dir.join("g2_clicks.csv"), &["t_ns", "tau_ns", "g2_estimate", "g2_err", "g2_expected"], &rows)?;
        s = s.with("n_repetitions", h.n_repetitions as f64).with("click_points", n as f64).with("max_abs_pull", worst);
    }
    write_summary(&dir.join(SUMMARY_FILE), &s)
}
