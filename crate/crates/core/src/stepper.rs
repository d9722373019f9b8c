//! Time stepping: the constant-coefficient linear operator is treated
//! implicitly (one factorization per Fourier mode, reused every step) and the
//! geometric nonlinearity enters explicitly through the flattened forcing.
use crate::elliptic::{solve_all, solve_stokes_stress, Collocation, ModeOperator, SurfaceCoupling, TopCondition};
use crate::equilibrium::{FlowState, Snapshot, DEFAULT_HISTORY_DEPTH};
use crate::error::{Error, Result};
use crate::forcing::{compute_g, kinematic_rate, ForcingBundle};
use crate::geometry::{build_geometry_with_floor, div_with, grad_with, Params, DEFAULT_J_MIN};
use crate::spectral::ops::{l2_volume, surface_laplacian};
use crate::spectral::{
    Grid, SurfaceField, SurfaceSpectrum, SurfaceVector, VectorField, VolumeField, VolumeSpectrum,
};
use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// Time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Backward Euler for the linear part, forward Euler for the forcing.
    #[default]
    Imex1,
    /// Second-order backward differences with extrapolated forcing.
    Imex2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Target for the interior divergence and bottom slip of projected data.
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
    #[serde(default = "default_j_min")]
    pub j_min: f64,
    #[serde(default = "default_depth")]
    pub history_depth: usize,
    /// Keep every k-th step in the returned trajectory; `None` keeps only
    /// the first and last states.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

fn default_projection_tol() -> f64 {
    1e-10
}

fn default_j_min() -> f64 {
    DEFAULT_J_MIN
}

fn default_depth() -> usize {
    DEFAULT_HISTORY_DEPTH
}

impl StepConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        StepConfig {
            dt,
            t_end,
            scheme: Scheme::Imex1,
            projection_tol: default_projection_tol(),
            j_min: default_j_min(),
            history_depth: default_depth(),
            checkpoint_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.projection_tol > 0.0) {
            return Err(Error::Config("projection tolerance must be > 0".into()));
        }
        if !(self.j_min > 0.0) {
            return Err(Error::Config("Jacobian floor must be > 0".into()));
        }
        if self.history_depth < 2 {
            return Err(Error::Config("history depth must be at least 2".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint cadence must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// What the initial projection changed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionReport {
    /// `L^2` distance between the given and the projected velocity.
    pub displacement: f64,
    pub iterations: usize,
    pub divergence: f64,
    pub bottom_slip: f64,
    pub removed_mean: f64,
}

/// Mixed Neumann (bottom) / Dirichlet (top) Poisson problem per mode.
struct PoissonModes {
    lus: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl PoissonModes {
    fn new(grid: &Grid) -> Self {
        let n = grid.n3;
        let d1 = grid.dz(1);
        let d2 = grid.dz(2);
        let mut lus = Vec::with_capacity(grid.n1 * grid.n2);
        for i2 in 0..grid.n2 {
            for i1 in 0..grid.n1 {
                let xi2 = grid.xi_sq(i1, i2);
                let mut m = DMatrix::<f64>::zeros(n, n);
                for k in 1..n - 1 {
                    for j in 0..n {
                        m[(k, j)] = d2[[k, j]];
                    }
                    m[(k, k)] -= xi2;
                }
                for j in 0..n {
                    m[(0, j)] = d1[[0, j]];
                }
                m[(n - 1, n - 1)] = 1.0;
                lus.push(m.lu());
            }
        }
        PoissonModes { lus }
    }

    /// Solve with interior data `f` and homogeneous boundary values.
    fn solve(&self, grid: &Grid, f: &VolumeField) -> Result<VolumeField> {
        let n = grid.n3;
        let spec = f.spectrum(grid);
        let mut out = VolumeSpectrum::zeros(grid);
        for i2 in 0..grid.n2 {
            for i1 in 0..grid.n1 {
                let lu = &self.lus[i2 * grid.n1 + i1];
                let mut re = DVector::<f64>::zeros(n);
                let mut im = DVector::<f64>::zeros(n);
                for k in 1..n - 1 {
                    re[k] = spec.c[[k, i2, i1]].re;
                    im[k] = spec.c[[k, i2, i1]].im;
                }
                let singular = || Error::SingularMode {
                    m1: grid.m1[i1],
                    m2: grid.m2[i2],
                };
                let xr = lu.solve(&re).ok_or_else(singular)?;
                let xi = lu.solve(&im).ok_or_else(singular)?;
                for k in 0..n {
                    out.c[[k, i2, i1]] = C::new(xr[k], xi[k]);
                }
            }
        }
        Ok(out.to_physical(grid))
    }
}

fn interior_max(f: &VolumeField) -> f64 {
    let n = f.v.dim().0;
    (1..n - 1).map(|k| f.level(k).max_abs()).fold(0.0, f64::max)
}

/// Zero-mean surface, velocity made divergence free with respect to the
/// flattened operators and vanishing on the bottom, and a pressure that
/// balances the surface load.
pub fn project_initial_data(
    u0: &VectorField,
    eta0: &SurfaceField,
    params: &Params,
    grid: &Grid,
    cfg: &StepConfig,
) -> Result<(FlowState, ProjectionReport)> {
    params.validate()?;
    params.check_grid(grid)?;
    cfg.validate()?;
    if !(u0.is_finite() && eta0.is_finite()) {
        return Err(Error::NonFinite("initial data".into()));
    }
    if let Some(&low) = eta0.v.iter().find(|&&h| h <= -grid.b) {
        return Err(Error::InvalidParams(format!(
            "initial surface reaches the bottom (eta = {low} <= -b = {})",
            -grid.b
        )));
    }
    let mean = eta0.mean();
    let eta = eta0.map(|h| h - mean);
    let cache = build_geometry_with_floor(&eta, None, grid, params, cfg.j_min)?;
    let a = &cache.matrix;

    let poisson = PoissonModes::new(grid);
    let weight = VolumeField::from_profile(grid, |z| (z / grid.b) * (z / grid.b));
    let mut u = u0.clone();
    let mut iterations = 0;
    let measure = |u: &VectorField| {
        let div = interior_max(&div_with(grid, a, u));
        let slip = u.c.iter().map(|c| c.level(0).max_abs()).fold(0.0, f64::max);
        (div, slip)
    };
    let (mut div, mut slip) = measure(&u);
    let scale = 1.0 + u0.max_abs();
    while div > cfg.projection_tol * scale || slip > cfg.projection_tol * scale {
        if iterations == 200 {
            return Err(Error::Incompatible(format!(
                "initial projection stalled: divergence {div:.3e}, bottom slip {slip:.3e}"
            )));
        }
        let phi = poisson.solve(grid, &div_with(grid, a, &u))?;
        let g = grad_with(grid, a, &phi);
        u = &u - &g;
        for c in 0..3 {
            let bottom = u.c[c].level(0).extend_constant(grid);
            u.c[c] -= &(&bottom * &weight);
        }
        iterations += 1;
        (div, slip) = measure(&u);
    }
    let displacement = (0..3)
        .map(|c| l2_volume(grid, &(&u0.c[c] - &u.c[c])).powi(2))
        .sum::<f64>()
        .sqrt();

    // pressure balancing the surface load at rest
    let lap = surface_laplacian(grid, &eta);
    let load = SurfaceVector::new(
        &eta * (-params.gamma),
        SurfaceField::zeros(grid),
        &eta - &(&lap * params.sigma),
    );
    let f2 = div_with(grid, &crate::spectral::TensorField::identity(grid), &u);
    let stokes = solve_stokes_stress(&VectorField::zeros(grid), &f2, &load, params, grid)?;
    let state = FlowState::with_depth(u, stokes.p, eta, 0.0, cfg.history_depth);
    info!(
        "projected initial data: displacement {displacement:.3e} after {iterations} iterations, \
         divergence {div:.3e}, bottom slip {slip:.3e}, removed mean {mean:.3e}"
    );
    Ok((
        state,
        ProjectionReport {
            displacement,
            iterations,
            divergence: div,
            bottom_slip: slip,
            removed_mean: mean,
        },
    ))
}

/// Factorized implicit operators plus the lagged forcing for the
/// two-step scheme.
pub struct Stepper {
    grid: Grid,
    params: Params,
    cfg: StepConfig,
    first: ModeOperator,
    second: Option<ModeOperator>,
    lagged: Option<Lagged>,
}

struct Lagged {
    t: f64,
    g: ForcingBundle,
    u: VectorField,
    eta: SurfaceField,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

fn operator(grid: &Grid, params: &Params, alpha: f64) -> ModeOperator {
    let c = params.kinematic_speed();
    let gamma = params.gamma;
    let sigma = params.sigma;
    ModeOperator::new(
        grid,
        Collocation::new(grid, params, true),
        alpha,
        TopCondition::Stress,
        |i1, i2| grid.is_resolved(i1, i2),
        move |i1, i2| {
            if i1 == 0 && i2 == 0 {
                return None;
            }
            let denom = C::new(alpha, 0.0) + grid.symbol(1, i1, 1) * c;
            Some(SurfaceCoupling {
                c1: C::new(gamma, 0.0) / denom,
                c3: -C::new(1.0 + sigma * grid.xi_sq(i1, i2), 0.0) / denom,
            })
        },
        false,
    )
}

impl Stepper {
    pub fn new(grid: &Grid, params: &Params, cfg: &StepConfig) -> Result<Self> {
        params.validate()?;
        params.check_grid(grid)?;
        cfg.validate()?;
        if params.mu != 1.0 || params.g != 1.0 {
            return Err(Error::InvalidParams(
                "the evolution is nondimensionalized with mu = g = 1".into(),
            ));
        }
        let first = operator(grid, params, 1.0 / cfg.dt);
        let second = match cfg.scheme {
            Scheme::Imex1 => None,
            Scheme::Imex2 => Some(operator(grid, params, 1.5 / cfg.dt)),
        };
        Ok(Stepper {
            grid: grid.clone(),
            params: *params,
            cfg: *cfg,
            first,
            second,
            lagged: None,
        })
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Advance by one step to `state.t + dt`.
    pub fn step(&mut self, state: &mut FlowState) -> Result<()> {
        let t = state.t + self.cfg.dt;
        self.step_to(state, t)
    }

    /// Advance by one step, labelling the new level with `t_new` (which must
    /// be `state.t + dt` up to rounding).
    pub fn step_to(&mut self, state: &mut FlowState, t_new: f64) -> Result<()> {
        let grid = &self.grid;
        let p = &self.params;
        let dt = self.cfg.dt;
        let last_good = || Error::Blowup { last_good_time: state.t };
        if !state.is_finite() {
            return Err(last_good());
        }
        let dt_eta = kinematic_rate(grid, p, &state.u, &state.eta);
        let cache = build_geometry_with_floor(&state.eta, Some(&dt_eta), grid, p, self.cfg.j_min)?;
        let g = compute_g(grid, p, state, &cache)?;
        self.advisory(state);

        // lagged data is usable only when it is exactly one step old
        let lag = self
            .lagged
            .as_ref()
            .filter(|l| self.second.is_some() && ((state.t - l.t) - dt).abs() <= 1e-9 * dt);
        let (op, alpha, mass_u, mass_eta, forcing) = match lag {
            Some(l) => {
                let mass_u = &state.u.scale(2.0 / dt) - &l.u.scale(0.5 / dt);
                let mass_eta = &(&state.eta * (2.0 / dt)) - &(&l.eta * (0.5 / dt));
                let f = extrapolate(&g, &l.g);
                (self.second.as_ref().expect("checked"), 1.5 / dt, mass_u, mass_eta, f)
            }
            None => (&self.first, 1.0 / dt, state.u.scale(1.0 / dt), &state.eta * (1.0 / dt), g.clone()),
        };

        let f1: [VolumeSpectrum; 3] = std::array::from_fn(|c| (&mass_u.c[c] + &forcing.g1().c[c]).spectrum(grid));
        let f2 = forcing.g2.spectrum(grid);
        let g3 = forcing.g3();
        let g3s: [SurfaceSpectrum; 3] = std::array::from_fn(|c| g3.c[c].spectrum(grid));
        let h = (&mass_eta + &forcing.g4()).spectrum(grid);
        let old_eta = state.eta.spectrum(grid);
        let c = p.kinematic_speed();
        let (gamma, sigma) = (p.gamma, p.sigma);
        let load = |i1: usize, i2: usize| C::new(1.0 + sigma * grid.xi_sq(i1, i2), 0.0);
        let denom = |i1: usize| C::new(alpha, 0.0) + grid.symbol(1, i1, 1) * c;
        let (us, ps) = solve_all(grid, op, &f1, &f2, |i1, i2| {
            let top = [g3s[0].c[[i2, i1]], g3s[1].c[[i2, i1]], g3s[2].c[[i2, i1]]];
            if i1 == 0 && i2 == 0 {
                // the mean elevation is conserved, so it is data here
                let z0 = old_eta.c[[0, 0]];
                [top[0] - z0 * gamma, top[1], top[2] + z0]
            } else {
                let hh = h.c[[i2, i1]] / denom(i1);
                [top[0] - hh * gamma, top[1], top[2] + load(i1, i2) * hh]
            }
        })?;
        let top = grid.top();
        let mut zeta = SurfaceSpectrum::zeros(grid);
        for i2 in 0..grid.n2 {
            for i1 in 0..grid.n1 {
                if !grid.is_resolved(i1, i2) {
                    continue;
                }
                zeta.c[[i2, i1]] = if i1 == 0 && i2 == 0 {
                    old_eta.c[[0, 0]]
                } else {
                    (h.c[[i2, i1]] + us[2].c[[top, i2, i1]]) / denom(i1)
                };
            }
        }
        let u = VectorField::new(us[0].to_physical(grid), us[1].to_physical(grid), us[2].to_physical(grid));
        let pr = ps.to_physical(grid);
        let target_mean = state.eta.mean();
        let mut eta = zeta.to_physical(grid);
        let drift = eta.mean() - target_mean;
        eta.v.mapv_inplace(|v| v - drift);
        if !(u.is_finite() && pr.is_finite() && eta.is_finite()) {
            return Err(last_good());
        }
        self.lagged = Some(Lagged {
            t: state.t,
            g,
            u: state.u.clone(),
            eta: state.eta.clone(),
        });
        state.advance(u, pr, eta, t_new)
    }

    fn advisory(&self, state: &FlowState) {
        let h = (self.grid.l1 / self.grid.n1 as f64).min(self.grid.l2 / self.grid.n2 as f64);
        let speed = state.u.max_abs() + self.params.shear(0.0).abs();
        let courant = speed * self.cfg.dt / h;
        if courant > 1.0 {
            warn!("advective Courant number {courant:.3} exceeds 1 at t = {}", state.t);
        } else {
            debug!("advective Courant number {courant:.3e}");
        }
    }
}

fn extrapolate(now: &ForcingBundle, before: &ForcingBundle) -> ForcingBundle {
    let v = |a: &VectorField, b: &VectorField| &a.scale(2.0) - b;
    let s = |a: &SurfaceVector, b: &SurfaceVector| SurfaceVector {
        c: std::array::from_fn(|c| &(&a.c[c] * 2.0) - &b.c[c]),
    };
    ForcingBundle {
        g1_hat: v(&now.g1_hat, &before.g1_hat),
        g1_tilde: v(&now.g1_tilde, &before.g1_tilde),
        g2: &(&now.g2 * 2.0) - &before.g2,
        g3_hat: s(&now.g3_hat, &before.g3_hat),
        g3_check: s(&now.g3_check, &before.g3_check),
        g3_tilde: s(&now.g3_tilde, &before.g3_tilde),
        g4_hat: &(&now.g4_hat * 2.0) - &before.g4_hat,
        g4_tilde: &(&now.g4_tilde * 2.0) - &before.g4_tilde,
    }
}

/// One step from `state` with freshly factorized operators.
pub fn step(state: &FlowState, cfg: &StepConfig, params: &Params, grid: &Grid) -> Result<FlowState> {
    let mut next = state.clone();
    Stepper::new(grid, params, cfg)?.step(&mut next)?;
    Ok(next)
}

/// Callback invoked during [`run`].
pub trait Observer {
    /// Called every `cadence()` steps, and at the initial state.
    fn observe(&mut self, state: &FlowState, step: usize) -> Result<()>;

    fn cadence(&self) -> usize {
        1
    }
}

impl<F: FnMut(&FlowState, usize) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &FlowState, step: usize) -> Result<()> {
        self(state, step)
    }
}

/// How a run ended.
#[derive(Debug)]
pub struct Termination {
    pub steps: usize,
    pub t_final: f64,
    pub last_good_time: f64,
    pub error: Option<Error>,
}

impl Termination {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug)]
pub struct Trajectory {
    pub checkpoints: Vec<Snapshot>,
    pub final_state: FlowState,
    pub termination: Termination,
}

/// Step from `state0` to `cfg.t_end`. Configuration problems are returned as
/// errors; failures during stepping end the run and are recorded in the
/// termination record.
pub fn run(
    state0: FlowState,
    cfg: &StepConfig,
    params: &Params,
    grid: &Grid,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(grid, params, cfg)?;
    let steps = cfg.steps();
    let t0 = state0.t;
    let mut state = state0;
    let mut checkpoints = vec![state.snapshot()];
    let mut error = None;
    for obs in observers.iter_mut() {
        if let Err(e) = obs.observe(&state, 0) {
            error = Some(e);
        }
    }
    let mut done = 0;
    if error.is_none() {
        for k in 1..=steps {
            if let Err(e) = stepper.step_to(&mut state, t0 + k as f64 * cfg.dt) {
                warn!("run stopped at t = {}: {e}", state.t);
                error = Some(e);
                break;
            }
            done = k;
            if cfg.checkpoint_every.is_some_and(|n| k % n == 0) {
                checkpoints.push(state.snapshot());
            }
            let mut failed = None;
            for obs in observers.iter_mut() {
                if k % obs.cadence().max(1) == 0 || k == steps {
                    if let Err(e) = obs.observe(&state, k) {
                        failed = Some(e);
                        break;
                    }
                }
            }
            if failed.is_some() {
                error = failed;
                break;
            }
        }
    }
    if checkpoints.last().map(|s| s.t) != Some(state.t) {
        checkpoints.push(state.snapshot());
    }
    let t_final = state.t;
    Ok(Trajectory {
        checkpoints,
        termination: Termination {
            steps: done,
            t_final,
            last_good_time: t_final,
            error,
        },
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn setup(n: usize, n3: usize, sigma: f64, gamma: f64) -> (Grid, Params) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, n, n, n3).unwrap();
        let p = Params::for_grid(&g, sigma, gamma);
        (g, p)
    }

    #[test]
    fn zero_state_is_fixed() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let s = FlowState::zeros(&g);
        let next = step(&s, &StepConfig::new(0.1, 1.0), &p, &g).unwrap();
        assert_eq!(next.u.max_abs() + next.p.max_abs() + next.eta.max_abs(), 0.0);
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn projection_of_zero_data_is_zero() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let cfg = StepConfig::new(0.1, 1.0);
        let (s, rep) = project_initial_data(&VectorField::zeros(&g), &SurfaceField::zeros(&g), &p, &g, &cfg).unwrap();
        assert_eq!(s.u.max_abs() + s.eta.max_abs(), 0.0);
        assert!(s.p.max_abs() < 1e-14);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn projection_keeps_solenoidal_fields() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        // stream function sin(x1) (x3 + 1)^2
        let u = VectorField::new(
            VolumeField::from_fn(&g, |x, _, z| 2.0 * x.sin() * (z + 1.0)),
            VolumeField::zeros(&g),
            VolumeField::from_fn(&g, |x, _, z| -x.cos() * (z + 1.0) * (z + 1.0)),
        );
        let (s, _) = project_initial_data(&u, &SurfaceField::zeros(&g), &p, &g, &StepConfig::new(0.1, 1.0)).unwrap();
        assert!((&s.u - &u).max_abs() < 1e-10);
    }

    #[test]
    fn projection_removes_gradients() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        // grad of sin(x1) (x3 + 1)^2 x3, which vanishes on the bottom
        let u = VectorField::new(
            VolumeField::from_fn(&g, |x, _, z| x.cos() * (z + 1.0).powi(2) * z),
            VolumeField::zeros(&g),
            VolumeField::from_fn(&g, |x, _, z| x.sin() * ((z + 1.0).powi(2) + 2.0 * (z + 1.0) * z)),
        );
        let (s, rep) = project_initial_data(&u, &SurfaceField::zeros(&g), &p, &g, &StepConfig::new(0.1, 1.0)).unwrap();
        assert!(s.u.max_abs() < 1e-8, "{}", s.u.max_abs());
        assert!(rep.displacement > 0.1);
    }

    #[test]
    fn projection_handles_curved_surface() {
        let (g, p) = setup(8, 13, 1.0, 0.5);
        let eta = SurfaceField::from_fn(&g, |x, y| 0.3 + 0.05 * (x + y).cos());
        let u = VectorField::new(
            VolumeField::from_fn(&g, |x, y, z| 0.01 * (x - y).sin() * (z + 1.0)),
            VolumeField::from_fn(&g, |x, _, z| 0.01 * x.cos() * (z + 1.0)),
            VolumeField::from_fn(&g, |_, y, z| 0.01 * y.sin() * z),
        );
        let cfg = StepConfig::new(0.1, 1.0);
        let (s, rep) = project_initial_data(&u, &eta, &p, &g, &cfg).unwrap();
        assert!(s.eta.mean().abs() < 1e-15);
        assert!((rep.removed_mean - 0.3).abs() < 1e-12);
        assert!(rep.divergence < 1e-10 && rep.bottom_slip < 1e-10, "{rep:?}");
    }

    #[test]
    fn surface_below_bottom_rejected() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let eta = SurfaceField::from_fn(&g, |x, _| -1.5 * x.cos());
        assert!(project_initial_data(&VectorField::zeros(&g), &eta, &p, &g, &StepConfig::new(0.1, 1.0)).is_err());
    }

    fn decaying_run(scheme: Scheme) -> (f64, f64, f64) {
        let (g, p) = setup(8, 9, 1.0, 0.0);
        let u0 = VectorField::new(
            VolumeField::from_fn(&g, |x, _, z| 1e-3 * 2.0 * x.sin() * (z + 1.0)),
            VolumeField::zeros(&g),
            VolumeField::from_fn(&g, |x, _, z| -1e-3 * x.cos() * (z + 1.0) * (z + 1.0)),
        );
        let mut cfg = StepConfig::new(0.01, 0.05);
        cfg.scheme = scheme;
        let (s, _) = project_initial_data(&u0, &SurfaceField::zeros(&g), &p, &g, &cfg).unwrap();
        let n0 = crate::spectral::ops::l2_volume(&g, &s.u.c[0]);
        let traj = run(s, &cfg, &p, &g, &mut []).unwrap();
        assert!(traj.termination.completed());
        let fin = &traj.final_state;
        let n1 = crate::spectral::ops::l2_volume(&g, &fin.u.c[0]);
        let bottom = fin.u.c.iter().map(|c| c.level(0).max_abs()).fold(0.0, f64::max);
        (n0, n1, bottom)
    }

    #[test]
    fn small_flow_decays_and_keeps_no_slip() {
        for scheme in [Scheme::Imex1, Scheme::Imex2] {
            let (n0, n1, bottom) = decaying_run(scheme);
            assert!(n1 < n0, "{scheme:?}: {n1} >= {n0}");
            assert!(bottom <= 1e-10);
        }
    }

    #[test]
    fn mean_elevation_is_conserved() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let eta = SurfaceField::from_fn(&g, |x, y| 0.01 * (x.cos() + (x - y).sin()));
        let cfg = StepConfig::new(0.05, 0.5);
        let (s, _) = project_initial_data(&VectorField::zeros(&g), &eta, &p, &g, &cfg).unwrap();
        let m0 = s.eta.mean();
        let mut worst = 0.0f64;
        let mut obs = |st: &FlowState, _: usize| {
            worst = worst.max((st.eta.mean() - m0).abs());
            Ok(())
        };
        let traj = run(s, &cfg, &p, &g, &mut [&mut obs]).unwrap();
        assert!(traj.termination.completed());
        assert_eq!(traj.termination.steps, 10);
        assert!(worst * g.area() <= 1e-10, "{worst}");
    }

    #[test]
    fn zero_horizon_keeps_only_initial_state() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let traj = run(FlowState::zeros(&g), &StepConfig::new(0.1, 0.0), &p, &g, &mut []).unwrap();
        assert_eq!(traj.checkpoints.len(), 1);
        assert_eq!(traj.termination.steps, 0);
    }

    #[test]
    fn steep_surface_collapses_loudly() {
        let (g, p) = setup(8, 9, 1.0, 0.5);
        let eta = SurfaceField::from_fn(&g, |x, _| -0.95 * x.cos());
        let s = FlowState::new(VectorField::zeros(&g), VolumeField::zeros(&g), eta, 0.0);
        let err = step(&s, &StepConfig::new(0.01, 1.0), &p, &g).unwrap_err();
        assert!(matches!(err, Error::DomainCollapse { .. }), "{err}");
    }

    #[test]
    fn runs_are_bit_identical() {
        let (g, p) = setup(8, 9, 1.0, 0.3);
        let eta = SurfaceField::from_fn(&g, |x, y| 0.01 * (x + 2.0 * y).cos());
        let cfg = StepConfig::new(0.02, 0.1);
        let go = || {
            let (s, _) = project_initial_data(&VectorField::zeros(&g), &eta, &p, &g, &cfg).unwrap();
            run(s, &cfg, &p, &g, &mut []).unwrap().final_state
        };
        let (a, b) = (go(), go());
        assert_eq!(a.u, b.u);
        assert_eq!(a.p, b.p);
        assert_eq!(a.eta, b.eta);
    }
}
