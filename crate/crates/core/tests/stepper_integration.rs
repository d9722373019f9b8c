use shearflow::equilibrium::FlowState;
use shearflow::experiments::{initial_data, InitialData};
use shearflow::geometry::Params;
use shearflow::spectral::ops::{l2_surface, l2_volume, trace_bottom};
use shearflow::spectral::{make_grid, Grid};
use shearflow::stepper::{project_initial_data, run, step, Scheme, StepConfig};
use shearflow::Result;
use std::f64::consts::PI;

fn grid() -> Grid {
    make_grid(2.0 * PI, 2.0 * PI, 1.0, 8, 8, 9).unwrap()
}

fn start(g: &Grid, p: &Params, cfg: &StepConfig, eps: f64) -> FlowState {
    let data = InitialData::RandomBand { seed: 3, k_max: 1, eps };
    let (u0, eta0) = initial_data(g, &data).unwrap();
    project_initial_data(&u0, &eta0, p, g, cfg).unwrap().0
}

fn final_state(g: &Grid, p: &Params, dt: f64, t_end: f64, scheme: Scheme) -> FlowState {
    let mut cfg = StepConfig::new(dt, t_end);
    cfg.scheme = scheme;
    let s0 = start(g, p, &cfg, 1e-3);
    run(s0, &cfg, p, g, &mut []).unwrap().final_state
}

fn distance(g: &Grid, a: &FlowState, b: &FlowState) -> f64 {
    let du: f64 = (0..3).map(|c| l2_volume(g, &(&a.u.c[c] - &b.u.c[c])).powi(2)).sum();
    du.sqrt() + l2_surface(g, &(&a.eta - &b.eta))
}

#[test]
fn imex1_converges_at_first_order() {
    let g = grid();
    let p = Params::for_grid(&g, 1.0, 0.3);
    let coarse = 0.04;
    let reference = final_state(&g, &p, coarse / 16.0, 0.5, Scheme::Imex1);
    let e1 = distance(&g, &final_state(&g, &p, coarse, 0.5, Scheme::Imex1), &reference);
    let e2 = distance(&g, &final_state(&g, &p, coarse / 2.0, 0.5, Scheme::Imex1), &reference);
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() <= 0.15, "observed order {order} ({e1:e}, {e2:e})");
}

#[test]
fn imex2_beats_imex1() {
    let g = grid();
    let p = Params::for_grid(&g, 1.0, 0.3);
    let reference = final_state(&g, &p, 0.04 / 16.0, 0.5, Scheme::Imex2);
    let e1 = distance(&g, &final_state(&g, &p, 0.02, 0.5, Scheme::Imex1), &reference);
    let e2 = distance(&g, &final_state(&g, &p, 0.02, 0.5, Scheme::Imex2), &reference);
    assert!(e2 < e1, "imex2 {e2:e} vs imex1 {e1:e}");
}

#[test]
fn every_snapshot_keeps_no_slip_and_mean() {
    let g = grid();
    let p = Params::for_grid(&g, 0.5, 0.5);
    let cfg = StepConfig::new(1e-2, 0.3);
    let s0 = start(&g, &p, &cfg, 1e-2);
    let m0 = s0.eta.mean() * g.area();
    let mut worst_slip = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut watch = |s: &FlowState, _k: usize| -> Result<()> {
        for c in &s.u.c {
            worst_slip = worst_slip.max(trace_bottom(c).max_abs());
        }
        worst_mean = worst_mean.max((s.eta.mean() * g.area() - m0).abs());
        Ok(())
    };
    let traj = run(s0, &cfg, &p, &g, &mut [&mut watch]).unwrap();
    assert!(traj.termination.completed());
    assert!(worst_slip <= 1e-10, "slip {worst_slip:e}");
    assert!(worst_mean <= 1e-10, "mean drift {worst_mean:e}");
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let g = grid();
    let p = Params::for_grid(&g, 1.0, 0.5);
    let cfg = StepConfig::new(1e-2, 1.0);
    let next = step(&FlowState::zeros(&g), &cfg, &p, &g).unwrap();
    assert!(next.u.max_abs() <= 1e-14);
    assert!(next.eta.max_abs() <= 1e-14);
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let g = grid();
    let p = Params::for_grid(&g, 1.0, 0.5);
    let a = final_state(&g, &p, 1e-2, 0.2, Scheme::Imex2);
    let b = final_state(&g, &p, 1e-2, 0.2, Scheme::Imex2);
    assert_eq!(a.u, b.u);
    assert_eq!(a.p, b.p);
    assert_eq!(a.eta, b.eta);
}
