//! Energy and dissipation functionals, the energy budgets of both linearized
//! forms, and decay fits.
use crate::equilibrium::{FlowState, Snapshot};
use crate::error::{Error, Result};
use crate::forcing::{compute_f, compute_g, state_geometry};
use crate::geometry::{sym_grad_from, velocity_gradient, Params};
use crate::spectral::ops::{
    inner_surface, inner_volume, integrate_volume, sobolev_norm_surface_sq, sobolev_norm_volume_sq,
    surface_gradient, surface_laplacian,
};
use crate::spectral::ops::{trace_surface, Diff};
use crate::spectral::{Grid, SurfaceField, TensorField, VectorField, VolumeField};
use crate::stepper::Observer;
use crate::temporal::{temporal_derivatives, TemporalDerivatives};
use log::warn;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default functional tier.
pub const DEFAULT_TIER: usize = 2;

/// One named contribution to a functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
    /// Whether the term belongs to the basic functional.
    pub basic: bool,
}

/// A basic/full pair with its breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub basic: f64,
    pub full: f64,
    pub terms: Vec<Term>,
}

impl Functional {
    fn from_terms(terms: Vec<Term>) -> Self {
        let basic = terms.iter().filter(|t| t.basic).map(|t| t.value).sum();
        let full = terms.iter().map(|t| t.value).sum();
        Functional { basic, full, terms }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// `sum_{a1 + a2 <= m} |symbol_1^{a1} symbol_2^{a2}|^2` per mode.
fn horizontal_weight(grid: &Grid, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((grid.n2, grid.n1), |(i2, i1)| {
        let mut w = 0.0;
        for a1 in 0..=m {
            let s1 = grid.symbol(1, i1, a1).norm_sqr();
            for a2 in 0..=(m - a1) {
                w += s1 * grid.symbol(2, i2, a2).norm_sqr();
            }
        }
        w
    })
}

fn gradient_weight(grid: &Grid) -> Array2<f64> {
    Array2::from_shape_fn((grid.n2, grid.n1), |(i2, i1)| {
        grid.symbol(1, i1, 1).norm_sqr() + grid.symbol(2, i2, 1).norm_sqr()
    })
}

fn surface_sum(grid: &Grid, f: &SurfaceField, w: &Array2<f64>) -> f64 {
    let s = f.spectrum(grid);
    s.c.iter().zip(w.iter()).map(|(c, w)| c.norm_sqr() * w).sum::<f64>() * grid.area()
}

fn volume_sum(grid: &Grid, f: &VolumeField, w: &Array2<f64>) -> f64 {
    let s = f.spectrum(grid);
    let total: f64 = s
        .c
        .axis_iter(Axis(0))
        .zip(grid.wz.iter())
        .map(|(level, wz)| level.iter().zip(w.iter()).map(|(c, w)| c.norm_sqr() * w).sum::<f64>() * wz)
        .sum();
    total * grid.area()
}

fn strain(grid: &Grid, u: &VectorField) -> TensorField {
    sym_grad_from(&TensorField::identity(grid), &velocity_gradient(grid, u))
}

fn need(d: &TemporalDerivatives, j: usize) -> Result<()> {
    if d.j_max() < j {
        return Err(Error::InsufficientHistory {
            needed: j + 1,
            have: d.j_max() + 1,
        });
    }
    Ok(())
}

fn check_tier(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("functional tier must be >= 2, got {n}")));
    }
    Ok(())
}

fn vector_norm_sq(grid: &Grid, u: &VectorField, k: usize) -> Result<f64> {
    let mut acc = 0.0;
    for c in &u.c {
        acc += sobolev_norm_volume_sq(grid, c, k)?;
    }
    Ok(acc)
}

/// Basic and full energy at tier `n` from precomputed time derivatives
/// (at least `n` of them).
pub fn energy_from(grid: &Grid, d: &TemporalDerivatives, n: usize, sigma: f64) -> Result<Functional> {
    check_tier(n)?;
    need(d, n)?;
    let gw = gradient_weight(grid);
    let mut terms = Vec::new();
    let mut push = |name: String, value: f64, basic: bool| terms.push(Term { name, value, basic });
    for j in 0..=n {
        let m = 2 * n - 2 * j;
        let w = horizontal_weight(grid, m);
        let u: f64 = d.u[j].c.iter().map(|c| volume_sum(grid, c, &w)).sum();
        push(format!("u.dt{j}.h{m}"), u, true);
        push(format!("eta.dt{j}.h{m}"), surface_sum(grid, &d.eta[j], &w), true);
        let wg = &w * &gw;
        push(format!("sigma.grad_eta.dt{j}.h{m}"), sigma * surface_sum(grid, &d.eta[j], &wg), true);
    }
    let nf = n as f64;
    for j in 0..=n {
        let k = 2 * n - 2 * j;
        push(format!("u.dt{j}.H{k}"), vector_norm_sq(grid, &d.u[j], k)?, false);
    }
    for j in 0..n {
        let k = 2 * n - 2 * j - 1;
        push(format!("p.dt{j}.H{k}"), sobolev_norm_volume_sq(grid, &d.p[j], k)?, false);
    }
    push(format!("eta.H{}", 2 * n), sobolev_norm_surface_sq(grid, &d.eta[0], 2.0 * nf)?, false);
    push(
        format!("sigma.eta.H{}", 2 * n + 1),
        sigma * sobolev_norm_surface_sq(grid, &d.eta[0], 2.0 * nf + 1.0)?,
        false,
    );
    push(format!("eta.dt1.H{}", 2 * n - 1), sobolev_norm_surface_sq(grid, &d.eta[1], 2.0 * nf - 1.0)?, false);
    push(
        format!("sigma.eta.dt1.H{}", fmt_index(2.0 * nf - 0.5)),
        sigma * sobolev_norm_surface_sq(grid, &d.eta[1], 2.0 * nf - 0.5)?,
        false,
    );
    for j in 2..=n {
        let s = 2.0 * nf - 2.0 * j as f64 + 1.5;
        push(format!("eta.dt{j}.H{}", fmt_index(s)), sobolev_norm_surface_sq(grid, &d.eta[j], s)?, false);
    }
    Ok(Functional::from_terms(terms))
}

/// Basic and full dissipation at tier `n` (needs `n + 1` time derivatives).
pub fn dissipation_from(grid: &Grid, d: &TemporalDerivatives, n: usize, sigma: f64, gamma: f64) -> Result<Functional> {
    check_tier(n)?;
    need(d, n + 1)?;
    let mut terms = Vec::new();
    let mut push = |name: String, value: f64, basic: bool| terms.push(Term { name, value, basic });
    for j in 0..=n {
        let m = 2 * n - 2 * j;
        let w = horizontal_weight(grid, m);
        let s = strain(grid, &d.u[j]);
        let v: f64 = s.c.iter().flatten().map(|c| volume_sum(grid, c, &w)).sum();
        push(format!("strain.dt{j}.h{m}"), v, true);
    }
    let nf = n as f64;
    for j in 0..=n {
        let k = 2 * n - 2 * j + 1;
        push(format!("u.dt{j}.H{k}"), vector_norm_sq(grid, &d.u[j], k)?, false);
    }
    for j in 0..n {
        let k = 2 * n - 2 * j;
        push(format!("p.dt{j}.H{k}"), sobolev_norm_volume_sq(grid, &d.p[j], k)?, false);
    }
    for j in 0..n {
        let jf = j as f64;
        let s1 = 2.0 * nf - 2.0 * jf - 0.5;
        let s2 = 2.0 * nf - 2.0 * jf + 1.5;
        push(
            format!("gamma.eta.dt{j}.H{}", fmt_index(s1)),
            (1.0 + gamma * gamma) * sobolev_norm_surface_sq(grid, &d.eta[j], s1)?,
            false,
        );
        push(
            format!("sigma2.eta.dt{j}.H{}", fmt_index(s2)),
            sigma * sigma * sobolev_norm_surface_sq(grid, &d.eta[j], s2)?,
            false,
        );
    }
    push(format!("eta.dt1.H{}", 2 * n - 1), sobolev_norm_surface_sq(grid, &d.eta[1], 2.0 * nf - 1.0)?, false);
    push(
        format!("sigma2.eta.dt1.H{}", fmt_index(2.0 * nf + 0.5)),
        sigma * sigma * sobolev_norm_surface_sq(grid, &d.eta[1], 2.0 * nf + 0.5)?,
        false,
    );
    push(format!("eta.dt2.H{}", 2 * n - 2), sobolev_norm_surface_sq(grid, &d.eta[2], 2.0 * nf - 2.0)?, false);
    push(
        format!("sigma2.eta.dt2.H{}", fmt_index(2.0 * nf - 1.5)),
        sigma * sigma * sobolev_norm_surface_sq(grid, &d.eta[2], 2.0 * nf - 1.5)?,
        false,
    );
    for j in 3..=n + 1 {
        let s = 2.0 * nf - 2.0 * j as f64 + 2.5;
        push(format!("eta.dt{j}.H{}", fmt_index(s)), sobolev_norm_surface_sq(grid, &d.eta[j], s)?, false);
    }
    Ok(Functional::from_terms(terms))
}

fn fmt_index(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

/// Energy pair from the newest `n + 1` snapshots.
pub fn energy<'a, I>(grid: &Grid, history: I, n: usize, sigma: f64) -> Result<Functional>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    check_tier(n)?;
    energy_from(grid, &temporal_derivatives(history, n)?, n, sigma)
}

/// Dissipation pair from the newest `n + 2` snapshots.
pub fn dissipation<'a, I>(grid: &Grid, history: I, n: usize, sigma: f64, gamma: f64) -> Result<Functional>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    check_tier(n)?;
    dissipation_from(grid, &temporal_derivatives(history, n + 1)?, n, sigma, gamma)
}

/// `||eta||^2_{2n + 1/2}`.
pub fn functional_f(grid: &Grid, eta: &SurfaceField, n: usize) -> Result<f64> {
    sobolev_norm_surface_sq(grid, eta, 2.0 * n as f64 + 0.5)
}

/// `||u||^2_{C^2} + ||u||^2_{H^3(top)} + ||eta||^2_{5/2}`. The `C^2` part is
/// the sum over `|alpha| <= 2` of the largest nodal value of `|d^alpha u|`,
/// which bounds the true supremum from below.
pub fn functional_k(grid: &Grid, u: &VectorField, eta: &SurfaceField) -> Result<f64> {
    let mut c2 = 0.0;
    for a1 in 0..=2usize {
        for a2 in 0..=(2 - a1) {
            for a3 in 0..=(2 - a1 - a2) {
                let mut comps = Vec::with_capacity(3);
                for c in &u.c {
                    let mut f = c.clone();
                    for (axis, order) in [(1, a1), (2, a2), (3, a3)] {
                        if order > 0 {
                            f = f.diff(grid, axis, order)?;
                        }
                    }
                    comps.push(f);
                }
                let mut sup = 0.0f64;
                for idx in 0..comps[0].v.len() {
                    let s: f64 = comps.iter().map(|f| f.v.as_slice().expect("contiguous")[idx].powi(2)).sum();
                    sup = sup.max(s.sqrt());
                }
                c2 += sup;
            }
        }
    }
    let mut trace = 0.0;
    for c in &u.c {
        trace += sobolev_norm_surface_sq(grid, &trace_surface(c), 3.0)?;
    }
    Ok(c2 * c2 + trace + sobolev_norm_surface_sq(grid, eta, 2.5)?)
}

/// `int -d_t^{n-1} p F^{2,n} J + |d_t^n u|^2 (J - 1) / 2` at the newest snapshot.
pub fn functional_h<'a, I>(grid: &Grid, params: &Params, history: I, n: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    if n < 1 {
        return Err(Error::InvalidParams("H needs n >= 1".into()));
    }
    let snaps: Vec<&Snapshot> = history.into_iter().collect();
    let d = temporal_derivatives(snaps.iter().copied(), n)?;
    let f = compute_f(grid, params, snaps.iter().copied(), n)?;
    let now = snaps.last().expect("nonempty");
    let cache = state_geometry(grid, params, &now.u, &now.eta)?;
    let first = -inner_volume(grid, &(&d.p[n - 1] * &f.f2), &cache.j);
    let jm1 = &cache.j - &VolumeField::constant(grid, 1.0);
    let mut sq = VolumeField::zeros(grid);
    for c in &d.u[n].c {
        sq += &(c * c);
    }
    Ok(first + 0.5 * inner_volume(grid, &sq, &jm1))
}

/// Which linearized identity a budget is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetForm {
    Flattened,
    Geometric,
}

/// How the time derivative of the energy is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    /// Newest snapshot, two-point backward difference.
    Backward,
    /// Second newest snapshot, centered over its neighbours.
    Centered,
}

/// Both sides of an energy identity, term by term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Budget {
    pub t: f64,
    pub energy_rate: f64,
    pub dissipation: f64,
    pub shear_volume: f64,
    pub shear_surface: f64,
    pub forcing: f64,
}

impl Budget {
    /// Left minus right side.
    pub fn residual(&self) -> f64 {
        self.energy_rate + self.dissipation - self.shear_volume - self.shear_surface - self.forcing
    }
}

fn bracket(grid: &Grid, params: &Params, s: &Snapshot, form: BudgetForm) -> Result<f64> {
    let mut sq = VolumeField::zeros(grid);
    for c in &s.u.c {
        sq += &(c * c);
    }
    let kinetic = match form {
        BudgetForm::Flattened => integrate_volume(grid, &sq),
        BudgetForm::Geometric => inner_volume(grid, &sq, &state_geometry(grid, params, &s.u, &s.eta)?.j),
    };
    let [g1, g2] = surface_gradient(grid, &s.eta);
    let surf = inner_surface(grid, &s.eta, &s.eta);
    let grad = inner_surface(grid, &g1, &g1) + inner_surface(grid, &g2, &g2);
    Ok(0.5 * (kinetic + surf + params.sigma * grad))
}

/// Terms of the chosen energy identity evaluated on a stored trajectory,
/// with `v = u`, `q = p`, `zeta = eta`. The flattened identity uses the
/// flattened forcing as data; the geometric one uses the order-zero
/// commutator forcing.
pub fn budget<'a, I>(grid: &Grid, params: &Params, history: I, form: BudgetForm, diff: Difference) -> Result<Budget>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    let snaps: Vec<&Snapshot> = history.into_iter().collect();
    let needed = match diff {
        Difference::Backward => 2,
        Difference::Centered => 3,
    };
    if snaps.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: snaps.len(),
        });
    }
    let last = snaps.len() - 1;
    let (at, before, after) = match diff {
        Difference::Backward => (last, last - 1, last),
        Difference::Centered => (last - 1, last - 2, last),
    };
    let energy_rate = (bracket(grid, params, snaps[after], form)? - bracket(grid, params, snaps[before], form)?)
        / (snaps[after].t - snaps[before].t);
    let s = snaps[at];
    let (u, p, eta) = (&s.u, &s.p, &s.eta);
    let cache = state_geometry(grid, params, u, eta)?;
    let top = u.trace_top();
    let lap = surface_laplacian(grid, eta);
    let load = eta - &(&lap * params.sigma);
    let mut out = Budget {
        t: s.t,
        energy_rate,
        ..Default::default()
    };
    match form {
        BudgetForm::Flattened => {
            let st = strain(grid, u);
            out.dissipation = 0.5 * st.c.iter().flatten().map(|c| inner_volume(grid, c, c)).sum::<f64>();
            let x3 = VolumeField::from_profile(grid, |z| z);
            out.shear_volume = params.gamma * inner_volume(grid, &(&x3 * &u.c[2]), &u.c[0]);
            out.shear_surface = params.gamma * inner_surface(grid, eta, &top.c[0]);
            let state = FlowState::new(u.clone(), p.clone(), eta.clone(), s.t);
            let g = compute_g(grid, params, &state, &cache)?;
            let g1 = g.g1();
            let g3 = g.g3();
            let mut forcing = inner_volume(grid, p, &g.g2);
            for c in 0..3 {
                forcing += inner_volume(grid, &u.c[c], &g1.c[c]);
                forcing -= inner_surface(grid, &g3.c[c], &top.c[c]);
            }
            forcing += inner_surface(grid, &load, &g.g4());
            out.forcing = forcing;
        }
        BudgetForm::Geometric => {
            let st = sym_grad_from(&cache.matrix, &velocity_gradient(grid, u));
            let mut sq = VolumeField::zeros(grid);
            for c in st.c.iter().flatten() {
                sq += &(c * c);
            }
            out.dissipation = 0.5 * inner_volume(grid, &sq, &cache.j);
            let w = &(&cache.phi3 * &u.c[2]) * &cache.j;
            out.shear_volume = params.gamma * inner_volume(grid, &w, &u.c[0]);
            // M N = (N3, 0, N1)
            let n = &cache.normal;
            let mn_v = &(&n.c[2] * &top.c[0]) + &(&n.c[0] * &top.c[2]);
            out.shear_surface = params.gamma * inner_surface(grid, eta, &mn_v);
            let f = compute_f(grid, params, [s], 0)?;
            let mut forcing = 0.0;
            for c in 0..3 {
                forcing += inner_volume(grid, &(&u.c[c] * &f.f1.c[c]), &cache.j);
                forcing -= inner_surface(grid, &f.f3.c[c], &top.c[c]);
            }
            forcing += inner_volume(grid, &(p * &f.f2), &cache.j);
            let [d1, _] = surface_gradient(grid, eta);
            let kin = &(&(&(eta * eta) * &d1) * (0.5 * params.gamma)) + &f.f4;
            forcing += inner_surface(grid, &load, &kin);
            out.forcing = forcing;
        }
    }
    Ok(out)
}

/// Signed residual of the chosen identity at the newest snapshot.
pub fn budget_residual<'a, I>(grid: &Grid, params: &Params, history: I, form: BudgetForm) -> Result<f64>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    Ok(budget(grid, params, history, form, Difference::Backward)?.residual())
}

/// Model for [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    /// `E ~ A exp(-rate t)`.
    Exponential,
    /// `E ~ A (1 + t)^(-rate)`.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Fitted `lambda` or exponent `r`.
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares line through `log E` against `t` or `log(1 + t)`, using
/// only samples with `t >= t_min`.
pub fn fit_decay(series: &[(f64, f64)], model: DecayModel, t_min: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_min).collect();
    if pts.len() < 10 {
        return Err(Error::DegenerateSeries(format!(
            "{} samples after t = {t_min}, need at least 10",
            pts.len()
        )));
    }
    if let Some((t, e)) = pts.iter().find(|(t, e)| !(e.is_finite() && *e > 0.0 && t.is_finite())) {
        return Err(Error::DegenerateSeries(format!("value {e} at t = {t}")));
    }
    let xs: Vec<f64> = pts
        .iter()
        .map(|(t, _)| match model {
            DecayModel::Exponential => *t,
            DecayModel::Algebraic => (1.0 + t).ln(),
        })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|(_, e)| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateSeries("all samples at one abscissa".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit {
        model,
        rate: -slope,
        prefactor: icpt.exp(),
        r_squared,
        samples: pts.len(),
    })
}

/// Running pieces of the vanishing-surface-tension functional:
/// `sup E_{2N} + int D_{2N} + sup (1+t)^{4N-8} E_{N+2} + sup F_{2N} / (1+t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GAccumulator {
    pub big_n: usize,
    pub sup_energy: f64,
    pub dissipation_integral: f64,
    pub sup_weighted_energy: f64,
    pub sup_transport: f64,
    last: Option<(f64, f64)>,
}

impl GAccumulator {
    pub fn new(big_n: usize) -> Result<Self> {
        if big_n < 3 {
            return Err(Error::InvalidParams(format!("G needs N >= 3, got {big_n}")));
        }
        Ok(GAccumulator {
            big_n,
            sup_energy: 0.0,
            dissipation_integral: 0.0,
            sup_weighted_energy: 0.0,
            sup_transport: 0.0,
            last: None,
        })
    }

    /// Add one sample: `E_{2N}`, `D_{2N}`, `E_{N+2}`, `F_{2N}` at time `t`.
    /// The dissipation integral is trapezoidal between samples.
    pub fn push(&mut self, t: f64, e_high: f64, d_high: f64, e_low: f64, f_high: f64) -> f64 {
        self.sup_energy = self.sup_energy.max(e_high);
        if let Some((t0, d0)) = self.last {
            self.dissipation_integral += 0.5 * (t - t0) * (d0 + d_high);
        }
        self.last = Some((t, d_high));
        let w = (1.0 + t).powi(4 * self.big_n as i32 - 8);
        self.sup_weighted_energy = self.sup_weighted_energy.max(w * e_low);
        self.sup_transport = self.sup_transport.max(f_high / (1.0 + t));
        self.value()
    }

    pub fn value(&self) -> f64 {
        self.sup_energy + self.dissipation_integral + self.sup_weighted_energy + self.sup_transport
    }
}

/// Everything evaluated at one report time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub t: f64,
    pub tier: usize,
    pub energy: Functional,
    pub dissipation: Functional,
    pub transport: f64,
    pub k: f64,
    pub h: f64,
    pub g: Option<f64>,
    pub budget_flattened: f64,
    pub budget_geometric: f64,
    pub mean_eta: f64,
    /// Accuracy order of the backward difference behind each time derivative.
    pub derivative_orders: Vec<usize>,
}

/// Evaluate every functional at tier `n` from the newest snapshots of
/// `history` (at least `n + 2` of them).
pub fn report<'a, I>(grid: &Grid, params: &Params, history: I, n: usize) -> Result<FunctionalReport>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    check_tier(n)?;
    let snaps: Vec<&Snapshot> = history.into_iter().collect();
    let d = temporal_derivatives(snaps.iter().copied(), n + 1)?;
    let now = *snaps.last().expect("nonempty");
    let energy = energy_from(grid, &d, n, params.sigma)?;
    let dissipation = dissipation_from(grid, &d, n, params.sigma, params.gamma)?;
    Ok(FunctionalReport {
        t: now.t,
        tier: n,
        transport: functional_f(grid, &now.eta, n)?,
        k: functional_k(grid, &now.u, &now.eta)?,
        h: functional_h(grid, params, snaps.iter().copied(), n)?,
        g: None,
        budget_flattened: budget_residual(grid, params, snaps.iter().copied(), BudgetForm::Flattened)?,
        budget_geometric: budget_residual(grid, params, snaps.iter().copied(), BudgetForm::Geometric)?,
        mean_eta: now.eta.mean(),
        derivative_orders: d.orders.clone(),
        energy,
        dissipation,
    })
}

/// Observer that records a [`FunctionalReport`] at its cadence once the
/// history is deep enough.
#[derive(Debug)]
pub struct Recorder {
    grid: Grid,
    params: Params,
    pub tier: usize,
    pub every: usize,
    pub reports: Vec<FunctionalReport>,
    /// Cadence hits skipped for lack of history.
    pub skipped: usize,
    g_acc: Option<GAccumulator>,
    g_failed: bool,
}

impl Recorder {
    pub fn new(grid: &Grid, params: &Params, tier: usize, every: usize) -> Result<Self> {
        check_tier(tier)?;
        Ok(Recorder {
            grid: grid.clone(),
            params: *params,
            tier,
            every: every.max(1),
            reports: Vec::new(),
            skipped: 0,
            g_acc: None,
            g_failed: false,
        })
    }

    /// Also accumulate the vanishing-surface-tension functional for `N`.
    /// Its tiers need deep histories and high derivative orders; when they
    /// are unavailable the column stays empty.
    pub fn with_g(mut self, big_n: usize) -> Result<Self> {
        self.g_acc = Some(GAccumulator::new(big_n)?);
        Ok(self)
    }

    fn g_sample(&mut self, state: &FlowState) -> Option<f64> {
        let acc = self.g_acc.as_mut()?;
        if self.g_failed {
            return None;
        }
        let nn = acc.big_n;
        let p = self.params;
        let grid = &self.grid;
        let sample = || -> Result<(f64, f64, f64, f64)> {
            let d = temporal_derivatives(state.history(), 2 * nn + 1)?;
            let e_high = energy_from(grid, &d, 2 * nn, p.sigma)?.full;
            let d_high = dissipation_from(grid, &d, 2 * nn, p.sigma, p.gamma)?.full;
            let e_low = energy_from(grid, &d, nn + 2, p.sigma)?.full;
            Ok((e_high, d_high, e_low, functional_f(grid, &state.eta, 2 * nn)?))
        };
        match sample() {
            Ok((a, b, c, f)) => Some(acc.push(state.t, a, b, c, f)),
            Err(e) => {
                warn!("G functional unavailable: {e}");
                self.g_failed = true;
                None
            }
        }
    }

    /// `(t, E_n^sigma)` pairs.
    pub fn energy_series(&self) -> Vec<(f64, f64)> {
        self.reports.iter().map(|r| (r.t, r.energy.full)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(&self.reports, path)
    }
}

impl Observer for Recorder {
    fn observe(&mut self, state: &FlowState, _step: usize) -> Result<()> {
        if state.history().len() < self.tier + 2 {
            self.skipped += 1;
            return Ok(());
        }
        let mut r = report(&self.grid, &self.params, state.history(), self.tier)?;
        r.g = self.g_sample(state);
        self.reports.push(r);
        Ok(())
    }

    fn cadence(&self) -> usize {
        self.every
    }
}

/// Fixed leading columns of the diagnostics table; the per-term columns
/// follow as `E:<term>` and `D:<term>`.
pub const CSV_COLUMNS: [&str; 14] = [
    "t",
    "tier",
    "E_basic",
    "E_full",
    "D_basic",
    "D_full",
    "F",
    "K",
    "H",
    "G",
    "budget_flattened",
    "budget_geometric",
    "mean_eta",
    "derivative_orders",
];

pub fn write_csv(reports: &[FunctionalReport], path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(r) = reports.first() {
        header.extend(r.energy.terms.iter().map(|t| format!("E:{}", t.name)));
        header.extend(r.dissipation.terms.iter().map(|t| format!("D:{}", t.name)));
    }
    out.write_record(&header).map_err(csv_error)?;
    for r in reports {
        let orders: Vec<String> = r.derivative_orders.iter().map(|o| o.to_string()).collect();
        let mut row = vec![
            format!("{:e}", r.t),
            r.tier.to_string(),
            format!("{:e}", r.energy.basic),
            format!("{:e}", r.energy.full),
            format!("{:e}", r.dissipation.basic),
            format!("{:e}", r.dissipation.full),
            format!("{:e}", r.transport),
            format!("{:e}", r.k),
            format!("{:e}", r.h),
            r.g.map(|g| format!("{g:e}")).unwrap_or_default(),
            format!("{:e}", r.budget_flattened),
            format!("{:e}", r.budget_geometric),
            format!("{:e}", r.mean_eta),
            orders.join(" "),
        ];
        row.extend(r.energy.terms.iter().map(|t| format!("{:e}", t.value)));
        row.extend(r.dissipation.terms.iter().map(|t| format!("{:e}", t.value)));
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Read `(t, column)` pairs back from a diagnostics table.
pub fn read_series(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing column {name}")))
    };
    let (it, ic) = (find("t")?, find(column)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("row {}: bad value in column {k}", i + 2)))
        };
        out.push((parse(it)?, parse(ic)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        make_grid(2.0 * PI, 2.0 * PI, 1.0, 8, 8, 9).unwrap()
    }

    fn frozen(g: &Grid, u: VectorField, eta: SurfaceField, count: usize) -> Vec<Snapshot> {
        (0..count)
            .map(|k| Snapshot {
                t: 0.1 * k as f64,
                u: u.clone(),
                p: VolumeField::zeros(g),
                eta: eta.clone(),
            })
            .collect()
    }

    #[test]
    fn zero_history_gives_zero_functionals() {
        let g = grid();
        let p = Params::for_grid(&g, 1.0, 0.5);
        let h = frozen(&g, VectorField::zeros(&g), SurfaceField::zeros(&g), 4);
        let r = report(&g, &p, &h, 2).unwrap();
        assert_eq!(r.energy.full + r.dissipation.full + r.transport + r.k + r.h.abs(), 0.0);
        assert_eq!(r.budget_flattened, 0.0);
        assert_eq!(r.budget_geometric, 0.0);
    }

    #[test]
    fn tier_below_two_rejected() {
        let g = grid();
        let h = frozen(&g, VectorField::zeros(&g), SurfaceField::zeros(&g), 4);
        assert!(energy(&g, &h, 1, 1.0).is_err());
    }

    #[test]
    fn static_single_mode_matches_parseval() {
        let g = grid();
        let eps = 1e-2;
        // eta = eps cos(x1 + 2 x2): xi = (1, 2)
        let eta = SurfaceField::from_fn(&g, |x, y| eps * (x + 2.0 * y).cos());
        let h = frozen(&g, VectorField::zeros(&g), eta, 3);
        let sigma = 0.7;
        let e = energy(&g, &h, 2, sigma).unwrap();
        // sum over 2a0 + a1 + a2 <= 4 with a0 = 0 only (static)
        let mut w = 0.0;
        for a in 0..=4i32 {
            for b in 0..=(4 - a) {
                w += 1f64.powi(2 * a) * 2f64.powi(2 * b);
            }
        }
        let xi2 = 5.0;
        let want = 0.5 * eps * eps * g.area() * (1.0 + sigma * xi2) * w;
        assert!((e.basic - want).abs() < 1e-12 * want, "{} vs {want}", e.basic);
        assert!(e.basic <= e.full);
    }

    #[test]
    fn transport_of_single_mode() {
        let g = grid();
        let eps = 1e-3;
        let eta = SurfaceField::from_fn(&g, |x, _| eps * x.cos());
        let f = functional_f(&g, &eta, 2).unwrap();
        let want = 0.5 * eps * eps * g.area() * 2f64.powf(4.5);
        assert!((f - want).abs() < 1e-12 * want);
    }

    #[test]
    fn k_of_constant_velocity() {
        let g = grid();
        let c = [0.3, -0.4, 1.2];
        let u = VectorField::new(
            VolumeField::constant(&g, c[0]),
            VolumeField::constant(&g, c[1]),
            VolumeField::constant(&g, c[2]),
        );
        let k = functional_k(&g, &u, &SurfaceField::zeros(&g)).unwrap();
        let c2: f64 = c.iter().map(|v| v * v).sum();
        let want = c2 * (1.0 + g.area());
        assert!((k - want).abs() < 1e-10 * want, "{k} vs {want}");
    }

    #[test]
    fn sigma_terms_vanish_at_zero_sigma() {
        let g = grid();
        let eta = SurfaceField::from_fn(&g, |x, y| 0.01 * (x - y).sin());
        let h = frozen(&g, VectorField::zeros(&g), eta, 4);
        let e0 = energy(&g, &h, 2, 0.0).unwrap();
        for t in e0.terms.iter().filter(|t| t.name.starts_with("sigma")) {
            assert_eq!(t.value, 0.0);
        }
        let e1 = energy(&g, &h, 2, 1.0).unwrap();
        assert!(e1.full >= e0.full);
    }

    #[test]
    fn h_vanishes_on_flat_frozen_surface() {
        let g = grid();
        let p = Params::for_grid(&g, 1.0, 0.5);
        let u = VectorField::new(
            VolumeField::from_fn(&g, |x, _, z| 0.01 * x.sin() * (z + 1.0)),
            VolumeField::zeros(&g),
            VolumeField::zeros(&g),
        );
        let h = frozen(&g, u, SurfaceField::zeros(&g), 3);
        assert_eq!(functional_h(&g, &p, &h, 2).unwrap(), 0.0);
    }

    #[test]
    fn exact_models_are_recovered() {
        let exp: Vec<(f64, f64)> = (0..50).map(|k| (0.2 * k as f64, (-2.0 * 0.2 * k as f64).exp())).collect();
        let f = fit_decay(&exp, DecayModel::Exponential, 0.0).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-6 && (f.r_squared - 1.0).abs() < 1e-12);
        let alg: Vec<(f64, f64)> = (0..50).map(|k| (0.5 * k as f64, (1.0 + 0.5 * k as f64).powi(-4))).collect();
        let f = fit_decay(&alg, DecayModel::Algebraic, 0.0).unwrap();
        assert!((f.rate - 4.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_series_rejected() {
        let s: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, if k == 7 { 0.0 } else { 1.0 })).collect();
        assert!(matches!(fit_decay(&s, DecayModel::Exponential, 0.0), Err(Error::DegenerateSeries(_))));
        assert!(fit_decay(&s[..5], DecayModel::Exponential, 0.0).is_err());
    }

    #[test]
    fn g_accumulator_combines_pieces() {
        let mut acc = GAccumulator::new(3).unwrap();
        acc.push(0.0, 2.0, 1.0, 1.0, 4.0);
        let v = acc.push(1.0, 1.0, 3.0, 0.5, 1.0);
        // sup E = 2, int D = 2, sup (1+t)^4 E_low = 8, sup F/(1+t) = 4
        assert!((v - 16.0).abs() < 1e-14);
        assert!(GAccumulator::new(2).is_err());
    }

    #[test]
    fn csv_roundtrip_of_energy_column() {
        let g = grid();
        let p = Params::for_grid(&g, 1.0, 0.0);
        let eta = SurfaceField::from_fn(&g, |x, _| 0.01 * x.cos());
        let h = frozen(&g, VectorField::zeros(&g), eta, 4);
        let r = report(&g, &p, &h, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&[r.clone()], &path).unwrap();
        let s = read_series(&path, "E_full").unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].1 - r.energy.full).abs() <= 1e-15 * r.energy.full);
    }
}
