//! Acceptance criteria AC-1 through AC-12. Runs as a plain binary so the
//! verdict lines are always printed.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use shearflow::diagnostics::{fit_decay, functional_h, DecayModel};
use shearflow::elliptic::{solve_capillary, solve_stokes_dirichlet, solve_stokes_stress, stokes_operator, top_stress};
use shearflow::equilibrium::{equilibrium_residual, FlowState, Snapshot};
use shearflow::experiments::{simulate, sweep_sigma, InitialData, RunConfig, RunOutcome};
use shearflow::forcing::{compute_g, state_geometry};
use shearflow::geometry::{build_geometry, div_with, piola_defect, poisson_extend, Params};
use shearflow::spectral::ops::{sobolev_norm_surface, surface_laplacian, trace_surface};
use shearflow::spectral::{diff, make_grid, Grid, SurfaceField, TensorField, VectorField, VolumeField};
use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

struct Verdict {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(id: &'static str, title: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict {
        id,
        title,
        passed,
        detail,
    }
}

fn config(sigma: f64, gamma: f64, initial: InitialData, dt: f64, t_end: f64, every: usize) -> RunConfig {
    let mut cfg = RunConfig::from_json(
        r#"{
  "grid": {"n1": 16, "n2": 16, "n3": 17},
  "physics": {"sigma": 1.0, "gamma": 0.0, "b": 1.0, "l1": 6.283185307179586, "l2": 6.283185307179586},
  "initial": {"preset": "equilibrium"},
  "step": {"dt": 0.01, "t_end": 1.0},
  "output_dir": "unused"
}"#,
    )
    .expect("base config");
    cfg.physics.sigma = sigma;
    cfg.physics.gamma = gamma;
    cfg.initial = initial;
    cfg.step.dt = dt;
    cfg.step.t_end = t_end;
    cfg.observer.every = every;
    cfg
}

fn single_mode() -> InitialData {
    InitialData::SingleMode { k: [1, 0], eps: 1e-3 }
}

/// Mass drift of every run, for AC-11.
static DRIFTS: Mutex<Vec<(&'static str, f64)>> = Mutex::new(Vec::new());

fn timed_run(label: &'static str, cfg: &RunConfig) -> (RunOutcome, Duration) {
    let grid = cfg.validate().expect("valid config");
    let t0 = Instant::now();
    let out = simulate(cfg, &grid).expect("run starts");
    let took = t0.elapsed();
    DRIFTS.lock().unwrap().push((label, out.mass_drift(&grid)));
    (out, took)
}

fn ac1() -> Verdict {
    let cfg = config(1.0, 0.5, InitialData::Equilibrium, 1e-2, 1.0, 1);
    let (out, took) = timed_run("AC-1", &cfg);
    let e_max = out.recorder.reports.iter().map(|r| r.energy.full).fold(0.0, f64::max);
    let ok = out.succeeded() && !out.recorder.reports.is_empty() && e_max <= 1e-16 && took < Duration::from_secs(60);
    verdict(
        "AC-1",
        "equilibrium fixed point",
        ok,
        format!("max E2 = {e_max:.3e} over {} reports, {:.1} s", out.recorder.reports.len(), took.as_secs_f64()),
    )
}

fn ac2() -> Verdict {
    let mut worst = 0.0f64;
    for (n1, n2, n3, l1, l2, b, gamma) in [
        (8, 8, 9, 2.0 * PI, 2.0 * PI, 1.0, 0.5),
        (16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0, 0.5),
        (12, 10, 33, 5.0, 3.0, 2.0, 1.3),
        (6, 20, 5, 1.0, 7.0, 0.4, 0.05),
    ] {
        let g = make_grid(l1, l2, b, n1, n2, n3).unwrap();
        let r = equilibrium_residual(&Params::for_grid(&g, 1.0, gamma), &g).unwrap();
        worst = worst.max(r.max());
    }
    verdict("AC-2", "equilibrium residual", worst <= 1e-10, format!("max component residual {worst:.3e}"))
}

struct DecayRun {
    fit: Option<shearflow::diagnostics::DecayFit>,
    series: Vec<(f64, f64)>,
    took: Duration,
    completed: bool,
}

fn decay_run(label: &'static str, sigma: f64) -> DecayRun {
    let cfg = config(sigma, 0.05, single_mode(), 1e-2, 10.0, 10);
    let (out, took) = timed_run(label, &cfg);
    let series = out.recorder.energy_series();
    DecayRun {
        fit: fit_decay(&series, DecayModel::Exponential, 1.0).ok(),
        series,
        took,
        completed: out.succeeded(),
    }
}

fn ac3(run: &DecayRun) -> Verdict {
    let (lam, r2) = run.fit.map(|f| (f.rate, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
    let ok = run.completed && lam > 0.0 && r2 >= 0.99 && run.took < Duration::from_secs(600);
    verdict(
        "AC-3",
        "exponential decay with surface tension",
        ok,
        format!("lambda = {lam:.4}, R2 = {r2:.6}, {:.1} s", run.took.as_secs_f64()),
    )
}

fn ac4(with: &DecayRun, without: &DecayRun) -> Verdict {
    let late: Vec<f64> = without.series.iter().filter(|(t, _)| *t > 1.0).map(|(_, e)| *e).collect();
    let decreasing = late.len() > 1 && late.windows(2).all(|w| w[1] < w[0]);
    let (l0, r0) = without.fit.map(|f| (f.rate, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
    let (l1, r1) = with.fit.map(|f| (f.rate, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
    let slower = r0 <= r1 || l0 < l1;
    verdict(
        "AC-4",
        "slower decay without surface tension",
        without.completed && decreasing && slower,
        format!(
            "strictly decreasing after t=1: {decreasing}; lambda(0) = {l0:.4} vs lambda(1) = {l1:.4}; R2(0) = {r0:.6} vs R2(1) = {r1:.6}"
        ),
    )
}

fn ac5() -> Verdict {
    let cfg = config(1.0, 0.05, single_mode(), 1e-2, 1.0, 10);
    let table = sweep_sigma(&cfg, &[1.0, 0.1, 0.01, 0.0], None, false).expect("sweep");
    let deltas: Vec<String> = table.rows.iter().map(|r| format!("{}:{:.3e}", r.sigma, r.delta)).collect();
    verdict(
        "AC-5",
        "vanishing surface tension",
        table.aborted.is_none() && table.strictly_decreasing && table.rows.len() == 4,
        format!("delta by sigma [{}]", deltas.join(", ")),
    )
}

fn ac6() -> Verdict {
    // residual at t = 0.1, reported once per run
    let mut res = Vec::new();
    let mut e0 = f64::NAN;
    for (label, dt) in [("AC-6 dt", 1e-3f64), ("AC-6 dt/2", 5e-4)] {
        let every = (0.1 / dt).round() as usize;
        let mut cfg = config(1.0, 0.05, single_mode(), dt, 0.1, every);
        // an early report fixes the energy scale
        cfg.observer.every = every / 10;
        let (out, _) = timed_run(label, &cfg);
        let reports = &out.recorder.reports;
        if dt == 1e-3 {
            e0 = reports.first().map(|r| r.energy.full).unwrap_or(f64::NAN);
        }
        res.push(reports.last().map(|r| r.budget_flattened).unwrap_or(f64::NAN));
    }
    let ratio = res[1].abs() / res[0].abs();
    let bound = 1e-3 * e0;
    let ok = res[0].abs() <= bound && (0.4..=0.6).contains(&ratio);
    verdict(
        "AC-6",
        "energy budget closure",
        ok,
        format!(
            "|res(dt)| = {:.3e} <= {bound:.3e}; |res(dt/2)|/|res(dt)| = {ratio:.4}",
            res[0].abs()
        ),
    )
}

fn ac7() -> Verdict {
    let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, 16, 16, 33).unwrap();
    let p = Params::for_grid(&g, 1.0, 0.5);
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let raw = SurfaceField::from_fn(&g, |x, y| {
            c[0] * x.cos() + c[1] * y.sin() + c[2] * (x + y).cos() + c[3] * (2.0 * x - y).sin() + c[4] * (3.0 * y).cos()
                + c[5] * (4.0 * x).sin()
        });
        let amp = 0.1 * g.b * rng.random_range(0.1..1.0);
        let eta = raw.map(|v| v * amp / raw.max_abs());
        let cache = build_geometry(&eta, None, &g, &p).unwrap();
        for row in piola_defect(&g, &cache) {
            worst = worst.max(row.max_abs());
        }
        let ja = cache.j_matrix();
        for j in 0..3 {
            worst = worst.max((&trace_surface(&ja.c[j][2]) - &cache.normal.c[j]).max_abs());
        }
    }
    verdict("AC-7", "geometric identities", worst <= 1e-8, format!("max defect {worst:.3e}"))
}

fn band_limited(g: &Grid, rng: &mut ChaCha20Rng, kmax: i64) -> SurfaceField {
    let mut terms = Vec::new();
    for k1 in -kmax..=kmax {
        for k2 in 0..=kmax {
            terms.push((k1 as f64, k2 as f64, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
    }
    let (w1, w2) = (2.0 * PI / g.l1, 2.0 * PI / g.l2);
    SurfaceField::from_fn(g, |x, y| {
        terms
            .iter()
            .map(|(k1, k2, a, b)| {
                let ph = w1 * k1 * x + w2 * k2 * y;
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    })
}

fn ac8() -> Verdict {
    let g = make_grid(2.0 * PI, 4.0, 1.0, 16, 16, 5).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut worst_res = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let f = band_limited(&g, &mut rng, 4);
        let sigma = rng.random_range(0.0..2.0);
        let gconst = rng.random_range(0.5..3.0);
        let psi = solve_capillary(&g, &f, sigma, gconst).unwrap();
        let back = &(&psi * gconst) - &(&surface_laplacian(&g, &psi) * sigma);
        worst_res = worst_res.max((&back - &f).max_abs() / f.max_abs());
        for s in [0.0, 1.0, 2.0] {
            let lhs = sobolev_norm_surface(&g, &psi, s).unwrap();
            let rhs = sobolev_norm_surface(&g, &f, s).unwrap() / gconst;
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    verdict(
        "AC-8",
        "capillary solver",
        worst_res <= 1e-12 && worst_ratio <= 1.0 + 1e-12,
        format!("inversion residual {worst_res:.3e}; max ||psi||_s g / ||f||_s = {worst_ratio:.6}"),
    )
}

fn manufactured(g: &Grid) -> (VectorField, VolumeField) {
    let b = g.b;
    let u = VectorField::new(
        VolumeField::from_fn(g, |x, y, z| (x + 2.0 * y).sin() * (z + b) * (1.0 - z * z) + 0.2 * (z + b) * z),
        VolumeField::from_fn(g, |x, y, z| (x - y).cos() * (z + b).powi(2) * (0.5 + z)),
        VolumeField::from_fn(g, |x, y, z| (2.0 * x + y).sin() * (z + b).powi(2) * (1.0 - z)),
    );
    let p = VolumeField::from_fn(g, |x, y, z| (x + y).cos() * (1.0 + z - z.powi(3)) + z * z - b * b / 3.0);
    (u, p)
}

fn ac9() -> Verdict {
    let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, 12, 12, 33).unwrap();
    let mut worst = 0.0f64;
    for gamma in [0.0, 0.5] {
        let prm = Params::for_grid(&g, 1.0, gamma);
        let (u, p) = manufactured(&g);
        let f1 = stokes_operator(&g, &prm, &u, &p).unwrap();
        let f2 = div_with(&g, &TensorField::identity(&g), &u);
        let d = solve_stokes_dirichlet(&f1, &f2, &u.trace_top(), &prm, &g).unwrap();
        let s = solve_stokes_stress(&f1, &f2, &top_stress(&g, &p, &u), &prm, &g).unwrap();
        for sol in [&d, &s] {
            worst = worst
                .max((&sol.u - &u).max_abs())
                .max((&sol.p - &p).max_abs())
                .max(sol.residuals.max());
        }
    }
    verdict("AC-9", "Stokes solvers", worst <= 1e-8, format!("max recovery error or residual {worst:.3e}"))
}

fn ac10() -> Verdict {
    let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, 16, 16, 33).unwrap();
    let mut trace_err = 0.0f64;
    let mut harm = 0.0f64;
    for (k1, k2) in [(1.0, 0.0), (2.0, 1.0), (0.0, 3.0)] {
        let eta = SurfaceField::from_fn(&g, |x, y| (k1 * x + k2 * y).cos());
        let ext = poisson_extend(&g, &eta);
        trace_err = trace_err.max((&trace_surface(&ext) - &eta).max_abs());
        let lap = &(&diff(&ext, &g, 1, 2).unwrap() + &diff(&ext, &g, 2, 2).unwrap()) + &diff(&ext, &g, 3, 2).unwrap();
        harm = harm.max(lap.max_abs());
    }
    verdict(
        "AC-10",
        "Poisson extension",
        trace_err <= 1e-12 && harm <= 1e-8,
        format!("trace error {trace_err:.3e}; harmonic residual {harm:.3e}"),
    )
}

fn ac11() -> Verdict {
    let drifts = DRIFTS.lock().unwrap();
    let worst = drifts.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    verdict(
        "AC-11",
        "mean conservation",
        drifts.len() >= 5 && worst <= 1e-10,
        format!("max |int eta(t) - int eta(0)| = {worst:.3e} over {} runs", drifts.len()),
    )
}

fn moving_state(g: &Grid, t: f64) -> (VectorField, VolumeField, SurfaceField) {
    let prof = |z: f64| (z + 1.0) * (z + 1.0);
    let (a, b) = (1.0 + 0.5 * t.sin(), (2.0 * t).cos());
    let u = VectorField::new(
        VolumeField::from_fn(g, |x, y, z| prof(z) * (a * (x + y).sin() + 0.3 * b * x.cos())),
        VolumeField::from_fn(g, |x, y, z| prof(z) * (b * x.cos() + 0.5 * (2.0 * y).sin())),
        VolumeField::from_fn(g, |x, y, z| prof(z) * (0.7 * a * (x - y).cos() + b * y.sin())),
    );
    let p = VolumeField::from_fn(g, |x, y, z| (a * (x - y).cos() + b * (2.0 * x).sin()) * (1.0 + z));
    let eta = SurfaceField::from_fn(g, |x, y| a * x.cos() + 0.5 * b * (x + y).sin());
    (u, p, eta)
}

fn slopes(eps: &[f64], vals: &[f64]) -> Vec<f64> {
    (0..vals.len() - 1)
        .map(|k| (vals[k] / vals[k + 1]).abs().ln() / (eps[k] / eps[k + 1]).ln())
        .collect()
}

fn ac12() -> Verdict {
    let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, 12, 12, 13).unwrap();
    let p = Params::for_grid(&g, 1.0, 0.5);
    let eps = [1e-1, 1e-2, 1e-3];
    let dt = 1e-2;
    let mut gn = Vec::new();
    let mut hn = Vec::new();
    for e in eps {
        let hist: Vec<Snapshot> = (0..4)
            .map(|k| {
                let t = 0.3 + k as f64 * dt;
                let (u, pr, eta) = moving_state(&g, t);
                Snapshot {
                    t,
                    u: u.scale(e),
                    p: &pr * e,
                    eta: &eta * e,
                }
            })
            .collect();
        let last = hist.last().unwrap();
        let s = FlowState::new(last.u.clone(), last.p.clone(), last.eta.clone(), last.t);
        let cache = state_geometry(&g, &p, &s.u, &s.eta).unwrap();
        gn.push(compute_g(&g, &p, &s, &cache).unwrap().norm(&g));
        hn.push(functional_h(&g, &p, &hist, 2).unwrap());
    }
    let sg = slopes(&eps, &gn);
    let sh = slopes(&eps, &hn);
    let ok = sg.iter().all(|s| (s - 2.0).abs() <= 0.1) && sh.iter().all(|s| (s - 3.0).abs() <= 0.2);
    verdict(
        "AC-12",
        "quadratic-order forcing",
        ok,
        format!("G slopes {sg:.4?}; H2 slopes {sh:.4?}"),
    )
}

fn main() {
    let started = Instant::now();
    let mut verdicts = Vec::new();
    std::thread::scope(|scope| {
        let with = scope.spawn(|| decay_run("AC-3", 1.0));
        let without = scope.spawn(|| decay_run("AC-4", 0.0));
        let sweep = scope.spawn(ac5);
        let budget = scope.spawn(ac6);
        let fixed = scope.spawn(ac1);
        verdicts.push(fixed.join().expect("AC-1 thread"));
        verdicts.push(ac2());
        let with = with.join().expect("AC-3 thread");
        let without = without.join().expect("AC-4 thread");
        verdicts.push(ac3(&with));
        verdicts.push(ac4(&with, &without));
        verdicts.push(sweep.join().expect("AC-5 thread"));
        verdicts.push(budget.join().expect("AC-6 thread"));
    });
    verdicts.push(ac7());
    verdicts.push(ac8());
    verdicts.push(ac9());
    verdicts.push(ac10());
    verdicts.push(ac11());
    verdicts.push(ac12());
    let mut failed = 0;
    println!();
    for v in &verdicts {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        if !v.passed {
            failed += 1;
        }
        println!("{} {tag} {}: {}", v.id, v.title, v.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        verdicts.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
