use std::f64::consts::PI;
use superburst::*;

fn sim() -> FitSimulation {
    FitSimulation {
        params: PhysicalParams::new(0.032797, 0.0112, 1).unwrap(),
        grid: TimeGrid::decay(60.0, 0.2).unwrap(),
        n_realizations: 4,
        quadrature: PhaseQuadrature::new(8),
    }
}

fn synthetic(sim: &FitSimulation, m: f64, s: f64, seed: u64) -> FitProblem {
    let prep = PreparationMode::IdealInstantaneous { area: PI };
    let plan = DisorderPlan {
        dist: TruncatedGaussian { mean: m, std: s },
        n_realizations: sim.n_realizations,
        seed,
        method: SamplingMethod::InverseCdf,
    };
    let targets = [30, 60]
        .iter()
        .map(|&n| {
            let avg = average_realizations(&sim.params.with_atoms(n), &plan, &prep, &sim.grid, sim.quadrature).unwrap();
            FitTarget { n_atoms: n, prep, times: sim.grid.node_times(), p_f: sim.grid.nodes_of(&avg.mean.p_f), weights: None }
        })
        .collect();
    FitProblem { targets, bounds: FitBounds::default() }
}

#[test]
fn recovers_parameters_from_synthetic_targets() {
    let s = sim();
    for (m, sd) in [(0.0112 * 4.0, 0.0065 * 4.0), (0.03, 0.01), (0.06, 0.02)] {
        let p = synthetic(&s, m, sd, 11);
        let r = fit_disorder_params(&p, &s, 11, &SimplexOptions { start: (0.02, 0.015), ..Default::default() }).unwrap();
        println!("truth ({m}, {sd}) -> ({:.6}, {:.6}) f={:.3e} evals={}", r.beta_mean, r.beta_std, r.objective, r.evaluations);
        assert!(r.converged);
        assert!((r.beta_mean - m).abs() < 0.05 * m, "{r:?}");
        assert!((r.beta_std - sd).abs() < 0.05 * sd, "{r:?}");
    }
}

#[test]
fn zero_width_target_recovers_zero_width() {
    let s = sim();
    let p = synthetic(&s, 0.04, 0.0, 2);
    let r = fit_disorder_params(&p, &s, 2, &SimplexOptions { start: (0.02, 0.015), ..Default::default() }).unwrap();
    assert!(r.beta_std < 0.001, "{r:?}");
}

#[test]
fn zero_target_is_degenerate() {
    let s = sim();
    let mut p = synthetic(&s, 0.04, 0.01, 2);
    for t in &mut p.targets {
        t.p_f.iter_mut().for_each(|v| *v = 0.0);
    }
    let r = fit_disorder_params(&p, &s, 2, &SimplexOptions::default()).unwrap();
    assert!(r.degenerate, "{r:?}");
}
