use std::f64::consts::PI;
use std::sync::Arc;

use rotqg::data::{band_limited, localized_2d_spread};
use rotqg::qg::{self, balance_residual, init_from_data, max_pv, QGState};
use rotqg::solver2d::{imaginary_defect, solve_intermediate, Intermediate, SolverConfig, State2D};
use rotqg::solver3d::{solve_perturbed, ForcingContext, Perturbed, State3D};
use rotqg::{BoxGrid, PhysicalParams, SpectralField};

fn params(delta: f64) -> PhysicalParams {
    PhysicalParams::new(1.4, delta, 1.0).unwrap()
}

fn run_2d(grid: &BoxGrid, w0: &SpectralField, delta: f64, cfg: &SolverConfig) -> SpectralField {
    let sys = Intermediate::new(grid, params(delta)).unwrap();
    let state = State2D::new(w0.clone(), 0.0).unwrap();
    solve_intermediate(&sys, &state, cfg).unwrap().trajectory.last().clone()
}

#[test]
fn fields_stay_real_over_a_thousand_steps() {
    let g = BoxGrid::square(32, 8.0 * PI).unwrap();
    let w0 = localized_2d_spread(&g, 0.5, 2.0, 0.0, 4);
    let cfg = SolverConfig {
        dt: 1e-3,
        t_final: 1.0,
        snapshot_stride: 1000,
        ..SolverConfig::default()
    };
    let end = run_2d(&g, &w0, 0.05, &cfg);
    assert!(end.is_finite());
    let defect = imaginary_defect(&end);
    assert!(defect <= 1e-12, "imaginary defect {defect:e}");
}

#[test]
fn doubling_resolution_changes_little() {
    let l = 16.0 * PI;
    let coarse = BoxGrid::square(64, l).unwrap();
    let fine = BoxGrid::square(128, l).unwrap();
    // identical Fourier content on both grids
    let w0 = localized_2d_spread(&coarse, 0.2, 4.0, 0.0, 2).resampled(&fine).unwrap();
    let cfg = SolverConfig {
        dt: 5e-3,
        t_final: 0.5,
        snapshot_stride: 100,
        ..SolverConfig::default()
    };
    let a = run_2d(&coarse, &w0.resampled(&coarse).unwrap(), 0.1, &cfg);
    let b = run_2d(&fine, &w0, 0.1, &cfg).resampled(&coarse).unwrap();
    let rel = a.sub(&b).l2_norm() / b.l2_norm();
    assert!(rel <= 1e-6, "relative change {rel:e}");
}

#[test]
fn sobolev_bound_is_uniform_in_delta() {
    let g = BoxGrid::square(64, 16.0 * PI).unwrap();
    let w0 = localized_2d_spread(&g, 0.5, 2.0, 0.0, 6);
    let ratios: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&delta| {
            let sys = Intermediate::new(&g, params(delta)).unwrap();
            let cfg = SolverConfig {
                dt: 1e-2,
                t_final: 1.0,
                snapshot_stride: 10,
                norm_index: 3.0,
                ..SolverConfig::default()
            };
            let run = solve_intermediate(&sys, &State2D::new(w0.clone(), 0.0).unwrap(), &cfg).unwrap();
            run.sup_norm / run.initial_norm
        })
        .collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo - 1.0 < 0.1, "ratios {ratios:?}");
}

#[test]
fn limit_flow_conserves_pv_and_stays_balanced() {
    let g = BoxGrid::square(64, 16.0 * PI).unwrap();
    let nu = 1.0;
    let w = localized_2d_spread(&g, 0.5, 2.5, 0.0, 8);
    let q0 = init_from_data(&w.select(&[0]), &w.select(&[1, 2]), &w.select(&[3]), nu).unwrap();
    let (traj, _) = qg::solve(&q0, nu, 1.0, 5e-3, 0.5, 20).unwrap();
    let states: Vec<QGState> = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(f, &t)| QGState::new(f.clone(), t).unwrap())
        .collect();
    let first = &states[0];
    let l2_0 = first.q().l2_norm();
    let max_0 = max_pv(first);
    for s in &states {
        let drift = (s.q().l2_norm() - l2_0).abs() / l2_0;
        assert!(drift <= 1e-6, "PV L2 drift {drift:e} at t = {}", s.time);
        assert!(max_pv(s) <= 1.01 * max_0);
        let (b, uh) = s.diagnostics(nu);
        assert!(balance_residual(&b, &uh, nu) <= 1e-12 * (1.0 + uh.l2_norm()));
    }
}

fn run_3d(sys: &Perturbed, v0: &SpectralField, dt: f64, t_final: f64) -> SpectralField {
    let cfg = SolverConfig {
        dt,
        t_final,
        snapshot_stride: (t_final / dt).round() as usize,
        ..SolverConfig::default()
    };
    let state = State3D::new(v0.clone(), 0.0).unwrap();
    solve_perturbed(sys, &state, &cfg).unwrap().trajectory.last().clone()
}

#[test]
fn perturbation_solver_is_fourth_order() {
    let g = BoxGrid::cube(32, 4.0 * PI).unwrap();
    let ctx = Arc::new(ForcingContext::zero(&g.horizontal().unwrap(), 1.0));
    let sys = Perturbed::new(&g, params(0.1), ctx).unwrap();
    let v0 = band_limited(&g, 4, 0.0, 2.5, 0.0, 20.0, 5);
    let t = 0.4;
    let runs: Vec<SpectralField> = [0.1, 0.05, 0.025].iter().map(|&dt| run_3d(&sys, &v0, dt, t)).collect();
    let e1 = runs[0].sub(&runs[1]).l2_norm();
    let e2 = runs[1].sub(&runs[2]).l2_norm();
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() < 0.3, "order {order}, differences {e1:e} {e2:e}");
}

#[test]
fn unforced_linear_perturbation_is_exact() {
    let g = BoxGrid::cube(16, 4.0 * PI).unwrap();
    let p = params(0.05);
    let ctx = Arc::new(ForcingContext::zero(&g.horizontal().unwrap(), 1.0));
    let mut sys = Perturbed::new(&g, p, ctx).unwrap();
    sys.nonlinear = false;
    let v0 = band_limited(&g, 4, 0.0, 3.0, 0.0, 1.0, 11);
    let end = run_3d(&sys, &v0, 0.1, 1.0);
    let exact = sys.eig.propagate(&v0, p.phase_time(1.0)).unwrap();
    let err = end.sub(&exact).l2_norm() / v0.l2_norm();
    assert!(err <= 1e-13, "relative error {err:e}");
}
