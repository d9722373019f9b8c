//! The steady shear flow and the perturbation state carried by the stepper.
use crate::error::{Error, Result};
use crate::geometry::{shear_profile, sym_grad_from, velocity_gradient, Params};
use crate::spectral::ops::gradient;
use crate::spectral::{trace_surface, Diff, Grid, SurfaceField, TensorField, VectorField, VolumeField};
use std::collections::VecDeque;

/// Default number of retained snapshots.
pub const DEFAULT_HISTORY_DEPTH: usize = 5;

/// One stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: VectorField,
    pub p: VolumeField,
    pub eta: SurfaceField,
}

/// Perturbation `(u, p, eta)` at time `t`, plus a bounded history of past
/// levels (oldest first, the current level is always the newest entry).
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: VectorField,
    pub p: VolumeField,
    pub eta: SurfaceField,
    pub t: f64,
    history: VecDeque<Snapshot>,
    depth: usize,
}

impl FlowState {
    pub fn new(u: VectorField, p: VolumeField, eta: SurfaceField, t: f64) -> Self {
        Self::with_depth(u, p, eta, t, DEFAULT_HISTORY_DEPTH)
    }

    pub fn with_depth(u: VectorField, p: VolumeField, eta: SurfaceField, t: f64, depth: usize) -> Self {
        let depth = depth.max(1);
        let mut s = FlowState {
            u,
            p,
            eta,
            t,
            history: VecDeque::with_capacity(depth),
            depth,
        };
        s.history.push_back(s.snapshot());
        s
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(
            VectorField::zeros(grid),
            VolumeField::zeros(grid),
            SurfaceField::zeros(grid),
            0.0,
        )
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.t,
            u: self.u.clone(),
            p: self.p.clone(),
            eta: self.eta.clone(),
        }
    }

    /// Build a state whose history is exactly the given snapshots (oldest first).
    pub fn from_history(snaps: Vec<Snapshot>, depth: usize) -> Result<Self> {
        let last = snaps
            .last()
            .cloned()
            .ok_or(Error::InsufficientHistory { needed: 1, have: 0 })?;
        if snaps.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidParams("snapshot times must increase".into()));
        }
        let depth = depth.max(snaps.len());
        Ok(FlowState {
            u: last.u,
            p: last.p,
            eta: last.eta,
            t: last.t,
            history: snaps.into(),
            depth,
        })
    }

    /// Replace the current level and push it onto the history ring.
    pub fn advance(&mut self, u: VectorField, p: VolumeField, eta: SurfaceField, t: f64) -> Result<()> {
        if !(t > self.t) {
            return Err(Error::InvalidParams(format!(
                "time must increase: {} -> {}",
                self.t, t
            )));
        }
        self.u = u;
        self.p = p;
        self.eta = eta;
        self.t = t;
        if self.history.len() == self.depth {
            self.history.pop_front();
        }
        self.history.push_back(self.snapshot());
        Ok(())
    }

    /// Overwrite the current level in place (same time), keeping history consistent.
    pub fn replace_current(&mut self, u: VectorField, p: VolumeField, eta: SurfaceField) {
        self.u = u;
        self.p = p;
        self.eta = eta;
        let snap = self.snapshot();
        if let Some(last) = self.history.back_mut() {
            *last = snap;
        }
    }

    pub fn history(&self) -> &VecDeque<Snapshot> {
        &self.history
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.p.is_finite() && self.eta.is_finite()
    }
}

/// Analytic background flow: `U = s(x3) e1`, `P = P_ext - g x3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub gamma: f64,
    pub b: f64,
    pub g: f64,
    pub p_ext: f64,
}

impl Background {
    pub fn velocity(&self, x3: f64) -> [f64; 3] {
        [shear_profile(self.gamma, self.b, x3), 0.0, 0.0]
    }

    pub fn pressure(&self, x3: f64) -> f64 {
        self.p_ext - self.g * x3
    }

    /// `s'(x3)`.
    pub fn shear_slope(&self, x3: f64) -> f64 {
        -self.gamma * x3
    }

    /// `s''`, constant.
    pub fn shear_curvature(&self) -> f64 {
        -self.gamma
    }

    /// `grad U` as `[i][k] = d_k U_i`.
    pub fn velocity_gradient(&self, x3: f64) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        m[0][2] = self.shear_slope(x3);
        m
    }

    /// Background sampled on the grid, for Eulerian reconstruction output.
    pub fn sample(&self, grid: &Grid) -> (VectorField, VolumeField) {
        let u = VectorField::new(
            VolumeField::from_profile(grid, |z| self.velocity(z)[0]),
            VolumeField::zeros(grid),
            VolumeField::zeros(grid),
        );
        (u, VolumeField::from_profile(grid, |z| self.pressure(z)))
    }
}

/// Zero perturbation plus the analytic background it perturbs.
pub fn equilibrium_state(params: &Params, grid: &Grid) -> Result<(FlowState, Background)> {
    params.validate()?;
    params.check_grid(grid)?;
    Ok((
        FlowState::zeros(grid),
        Background {
            gamma: params.gamma,
            b: params.b,
            g: params.g,
            p_ext: params.p_ext,
        },
    ))
}

/// Sup-norm residuals of the full equations at the background state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResidual {
    pub r_momentum: f64,
    pub r_div: f64,
    pub r_stress: f64,
    pub r_kinematic: f64,
    pub r_noslip: f64,
}

impl EquilibriumResidual {
    pub fn max(&self) -> f64 {
        [self.r_momentum, self.r_div, self.r_stress, self.r_kinematic, self.r_noslip]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluate the steady equations at `(U, P, eta = 0)` with the grid's
/// spectral derivatives. The background is quadratic in `x3`, so the
/// collocation derivatives are exact up to round-off.
pub fn equilibrium_residual(params: &Params, grid: &Grid) -> Result<EquilibriumResidual> {
    let (_, bg) = equilibrium_state(params, grid)?;
    let mu = params.mu;
    let (u, p) = bg.sample(grid);
    let grads = velocity_gradient(grid, &u);
    let gp = gradient(grid, &p);
    let body = [params.gamma, 0.0, -params.g];
    let mut r_mom = 0.0f64;
    for i in 0..3 {
        let mut r = &gp[i] - &VolumeField::constant(grid, body[i]);
        for k in 0..3 {
            r += &(&u.c[k] * &grads[i][k]);
        }
        let mut lap = VolumeField::zeros(grid);
        for axis in 1..=3 {
            lap += &u.c[i].diff(grid, axis, 2)?;
        }
        r -= &(&lap * mu);
        r_mom = r_mom.max(r.max_abs());
    }
    let div = &(&grads[0][0] + &grads[1][1]) + &grads[2][2];
    // (P I - mu D U) e3 = P_ext e3 on the flat top, curvature of a flat surface is 0
    let ident = TensorField::identity(grid);
    let sym = sym_grad_from(&ident, &grads);
    let mut r_stress = 0.0f64;
    for i in 0..3 {
        let mut lhs = trace_surface(&sym.c[i][2]) * (-mu);
        let mut rhs = SurfaceField::zeros(grid);
        if i == 2 {
            lhs += &trace_surface(&p);
            rhs = SurfaceField::constant(grid, params.p_ext);
        }
        r_stress = r_stress.max((&lhs - &rhs).max_abs());
    }
    // d_t eta = U3 - U1 d1 eta - U2 d2 eta with eta = 0
    let r_kin = trace_surface(&u.c[2]).max_abs();
    let r_noslip = u.c.iter().map(|c| c.level(0).max_abs()).fold(0.0, f64::max);
    Ok(EquilibriumResidual {
        r_momentum: r_mom,
        r_div: div.max_abs(),
        r_stress,
        r_kinematic: r_kin,
        r_noslip,
    })
}

/// `D U = s'(x3) M` entrywise, returned as the largest deviation on the grid.
pub fn shear_strain_defect(params: &Params, grid: &Grid) -> Result<f64> {
    let (_, bg) = equilibrium_state(params, grid)?;
    let (u, _) = bg.sample(grid);
    let sym = sym_grad_from(&TensorField::identity(grid), &velocity_gradient(grid, &u));
    let slope = VolumeField::from_profile(grid, |z| bg.shear_slope(z));
    let m = [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((&sym.c[i][j] - &(&slope * m[i][j])).max_abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;

    #[test]
    fn background_values() {
        let g = make_grid(1.0, 1.0, 1.0, 4, 4, 5).unwrap();
        let p = Params::for_grid(&g, 0.0, 1.0);
        let (state, bg) = equilibrium_state(&p, &g).unwrap();
        assert_eq!(state.u.max_abs() + state.p.max_abs() + state.eta.max_abs(), 0.0);
        assert_eq!(bg.velocity(0.0), [0.5, 0.0, 0.0]);
        assert_eq!(bg.pressure(-1.0), 1.0);
    }

    #[test]
    fn residual_vanishes() {
        for (gamma, b) in [(0.0, 1.0), (1.0, 1.0), (0.3, 2.5)] {
            let g = make_grid(1.0, 2.0, b, 4, 4, 9).unwrap();
            let p = Params::for_grid(&g, 1.0, gamma);
            let r = equilibrium_residual(&p, &g).unwrap();
            assert!(r.max() <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn strain_is_slope_times_m() {
        let g = make_grid(1.0, 1.0, 1.3, 4, 4, 9).unwrap();
        let p = Params::for_grid(&g, 0.0, 0.7);
        assert!(shear_strain_defect(&p, &g).unwrap() < 1e-12);
    }

    #[test]
    fn surface_strain_vanishes() {
        let bg = Background {
            gamma: 0.7,
            b: 1.3,
            g: 1.0,
            p_ext: 0.0,
        };
        assert_eq!(bg.velocity_gradient(0.0), [[0.0; 3]; 3]);
    }

    #[test]
    fn history_ring_is_bounded() {
        let g = make_grid(1.0, 1.0, 1.0, 4, 4, 5).unwrap();
        let mut s = FlowState::zeros(&g);
        for k in 1..10 {
            let eta = SurfaceField::constant(&g, k as f64);
            s.advance(s.u.clone(), s.p.clone(), eta, k as f64 * 0.1).unwrap();
        }
        assert_eq!(s.history().len(), DEFAULT_HISTORY_DEPTH);
        assert!(s.history().iter().zip(s.history().iter().skip(1)).all(|(a, b)| b.t > a.t));
        assert_eq!(s.history().back().unwrap().eta.v[[0, 0]], 9.0);
        assert!(s.advance(s.u.clone(), s.p.clone(), s.eta.clone(), 0.0).is_err());
    }
}
