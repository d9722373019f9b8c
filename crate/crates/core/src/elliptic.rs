//! Capillary inversion on the torus and the perturbed Stokes problems on the
//! slab, solved one horizontal Fourier mode at a time.
//!
//! Each mode is a Chebyshev collocation system in the vertical with velocity
//! at all `N3` nodes and pressure at the `N3 - 2` interior nodes (the
//! pressure polynomial is two degrees lower than the velocity). Momentum and
//! divergence rows live at interior nodes; the end rows carry the boundary
//! conditions.
use crate::error::{Error, Result};
use crate::geometry::{div_tensor_with, stress_with, Params};
use crate::spectral::cheb;
use crate::spectral::ops::{integrate_surface, integrate_volume};
use crate::spectral::{
    Grid, SurfaceField, SurfaceSpectrum, SurfaceVector, TensorField, VectorField, VolumeField, VolumeSpectrum,
};
use nalgebra::{DMatrix, DVector, LU};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Solve `-sigma Lap psi + g psi = f` mode by mode.
pub fn solve_capillary(grid: &Grid, f: &SurfaceField, sigma: f64, g: f64) -> Result<SurfaceField> {
    if !(g > 0.0) {
        return Err(Error::InvalidParams(format!("g must be > 0, got {g}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParams(format!("sigma must be >= 0, got {sigma}")));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("capillary data".into()));
    }
    let mut spec = f.spectrum(grid);
    for ((i2, i1), c) in spec.c.indexed_iter_mut() {
        *c /= g + sigma * grid.xi_sq(i1, i2);
    }
    Ok(spec.to_physical(grid))
}

/// Which condition closes the system at the top boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopCondition {
    /// Prescribed velocity.
    Dirichlet,
    /// Prescribed normal stress `S(p, u) e3`.
    Stress,
}

/// Extra coupling of the top stress rows to the top vertical velocity,
/// used when the free surface is eliminated implicitly: row 1 gains
/// `c1 * u3(top)` and row 3 gains `c3 * u3(top)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCoupling {
    pub c1: C,
    pub c3: C,
}

/// Shared per-grid data for the mode systems.
#[derive(Debug, Clone)]
pub(crate) struct Collocation {
    pub n: usize,
    pub d1: Array2<f64>,
    pub d2: Array2<f64>,
    /// Interior pressure values to all nodes.
    pub interp: Array2<f64>,
    /// Vertical derivative of the interpolated pressure.
    pub dinterp: Array2<f64>,
    pub shear: Array1<f64>,
    pub shear_slope: Array1<f64>,
}

impl Collocation {
    pub fn new(grid: &Grid, params: &Params, with_shear: bool) -> Self {
        let n = grid.n3;
        let x = grid.x3.as_slice().expect("contiguous nodes");
        let interp = cheb::interpolation_matrix(&x[1..n - 1], x);
        let d1 = grid.dz(1).clone();
        let dinterp = d1.dot(&interp);
        let (shear, shear_slope) = if with_shear {
            (grid.x3.mapv(|z| params.shear(z)), grid.x3.mapv(|z| params.shear_slope(z)))
        } else {
            (Array1::zeros(n), Array1::zeros(n))
        };
        Collocation {
            n,
            d2: grid.dz(2).clone(),
            d1,
            interp,
            dinterp,
            shear,
            shear_slope,
        }
    }

    pub fn size(&self) -> usize {
        4 * self.n - 2
    }

    fn u(&self, c: usize, k: usize) -> usize {
        c * self.n + k
    }

    fn p(&self, m: usize) -> usize {
        3 * self.n + m
    }

    /// Assemble the square system for one mode with horizontal symbols `(a, b)`
    /// (the first-derivative multipliers) and mass coefficient `alpha`.
    pub fn assemble(
        &self,
        alpha: f64,
        a: C,
        b: C,
        top_cond: TopCondition,
        coupling: Option<SurfaceCoupling>,
    ) -> DMatrix<C> {
        let n = self.n;
        let m = n - 2;
        let size = self.size();
        let mut mat = DMatrix::<C>::zeros(size, size);
        let h = [a, b];
        let lap_h = -(a * a + b * b);
        for k in 1..n - 1 {
            for c in 0..3 {
                let row = self.u(c, k);
                mat[(row, self.u(c, k))] += C::new(alpha, 0.0) + self.shear[k] * a + lap_h;
                for j in 0..n {
                    mat[(row, self.u(c, j))] -= C::new(self.d2[[k, j]], 0.0);
                }
                // grad of div, horizontal parts
                if c < 2 {
                    for q in 0..2 {
                        mat[(row, self.u(q, k))] -= h[c] * h[q];
                    }
                    for j in 0..n {
                        mat[(row, self.u(2, j))] -= h[c] * self.d1[[k, j]];
                    }
                    for mm in 0..m {
                        mat[(row, self.p(mm))] += h[c] * self.interp[[k, mm]];
                    }
                } else {
                    for q in 0..2 {
                        for j in 0..n {
                            mat[(row, self.u(q, j))] -= h[q] * self.d1[[k, j]];
                        }
                    }
                    for j in 0..n {
                        mat[(row, self.u(2, j))] -= C::new(self.d2[[k, j]], 0.0);
                    }
                    for mm in 0..m {
                        mat[(row, self.p(mm))] += C::new(self.dinterp[[k, mm]], 0.0);
                    }
                }
                if c == 0 {
                    mat[(row, self.u(2, k))] += C::new(self.shear_slope[k], 0.0);
                }
            }
            let row = 3 * n + k - 1;
            mat[(row, self.u(0, k))] += a;
            mat[(row, self.u(1, k))] += b;
            for j in 0..n {
                mat[(row, self.u(2, j))] += C::new(self.d1[[k, j]], 0.0);
            }
        }
        let top = n - 1;
        for c in 0..3 {
            mat[(self.u(c, 0), self.u(c, 0))] = C::new(1.0, 0.0);
        }
        match top_cond {
            TopCondition::Dirichlet => {
                for c in 0..3 {
                    mat[(self.u(c, top), self.u(c, top))] = C::new(1.0, 0.0);
                }
            }
            TopCondition::Stress => {
                // -(d_c u3 + d3 u_c) for c = 1, 2 and p - 2 d3 u3
                for c in 0..2 {
                    let row = self.u(c, top);
                    mat[(row, self.u(2, top))] -= h[c];
                    for j in 0..n {
                        mat[(row, self.u(c, j))] -= C::new(self.d1[[top, j]], 0.0);
                    }
                }
                let row = self.u(2, top);
                for mm in 0..m {
                    mat[(row, self.p(mm))] += C::new(self.interp[[top, mm]], 0.0);
                }
                for j in 0..n {
                    mat[(row, self.u(2, j))] -= C::new(2.0 * self.d1[[top, j]], 0.0);
                }
                if let Some(cp) = coupling {
                    mat[(self.u(0, top), self.u(2, top))] += cp.c1;
                    mat[(row, self.u(2, top))] += cp.c3;
                }
            }
        }
        mat
    }

    /// Right-hand side for one mode: interior momentum and divergence data,
    /// zero bottom data, and the three top values.
    pub fn rhs(&self, f1: [&[C]; 3], f2: &[C], top: [C; 3]) -> DVector<C> {
        let n = self.n;
        let mut v = DVector::<C>::zeros(self.size());
        for c in 0..3 {
            for k in 1..n - 1 {
                v[self.u(c, k)] = f1[c][k];
            }
            v[self.u(c, n - 1)] = top[c];
        }
        for k in 1..n - 1 {
            v[3 * n + k - 1] = f2[k];
        }
        v
    }

    /// Split a solution vector into velocity columns and the full-node pressure.
    pub fn unpack(&self, x: &DVector<C>) -> ([Vec<C>; 3], Vec<C>) {
        let n = self.n;
        let u = std::array::from_fn(|c| (0..n).map(|k| x[self.u(c, k)]).collect());
        let p = (0..n)
            .map(|k| (0..n - 2).fold(ZERO, |acc, mm| acc + x[self.p(mm)] * self.interp[[k, mm]]))
            .collect();
        (u, p)
    }
}

/// Per-mode factorized operator for repeated solves with the same matrix.
pub(crate) struct ModeOperator {
    pub colloc: Collocation,
    /// Indexed by `i2 * n1 + i1`; `None` marks modes that are skipped.
    lus: Vec<Option<LU<C, nalgebra::Dyn, nalgebra::Dyn>>>,
    /// Dense systems kept for least-squares solves of rank-deficient modes.
    lsq: Vec<Option<DMatrix<C>>>,
}

impl ModeOperator {
    /// Factor every mode accepted by `keep`. `coupling(i1, i2)` supplies the
    /// free-surface coupling for stress problems.
    pub fn new(
        grid: &Grid,
        colloc: Collocation,
        alpha: f64,
        top: TopCondition,
        keep: impl Fn(usize, usize) -> bool + Sync,
        coupling: impl Fn(usize, usize) -> Option<SurfaceCoupling> + Sync,
        pin_mean_pressure: bool,
    ) -> Self {
        let modes: Vec<(usize, usize)> = (0..grid.n2).flat_map(|i2| (0..grid.n1).map(move |i1| (i1, i2))).collect();
        let built: Vec<(Option<LU<C, nalgebra::Dyn, nalgebra::Dyn>>, Option<DMatrix<C>>)> = modes
            .par_iter()
            .map(|&(i1, i2)| {
                if !keep(i1, i2) {
                    return (None, None);
                }
                let a = grid.symbol(1, i1, 1);
                let b = grid.symbol(2, i2, 1);
                let mat = colloc.assemble(alpha, a, b, top, coupling(i1, i2));
                if pin_mean_pressure && a == ZERO && b == ZERO {
                    // no horizontal coupling (mean or Nyquist-only modes): the
                    // pressure constant is free, so fix its mean by least squares
                    let size = colloc.size();
                    let mut aug = DMatrix::<C>::zeros(size + 1, size);
                    aug.view_mut((0, 0), (size, size)).copy_from(&mat);
                    let w = colloc.interp.t().dot(&grid.wz);
                    for mm in 0..colloc.n - 2 {
                        aug[(size, 3 * colloc.n + mm)] = C::new(w[mm], 0.0);
                    }
                    (None, Some(aug))
                } else {
                    (Some(mat.lu()), None)
                }
            })
            .collect();
        let (lus, lsq) = built.into_iter().unzip();
        ModeOperator { colloc, lus, lsq }
    }

    /// Solve one mode. Returns `None` for skipped modes.
    pub fn solve(&self, grid: &Grid, i1: usize, i2: usize, rhs: DVector<C>) -> Result<Option<DVector<C>>> {
        let idx = i2 * grid.n1 + i1;
        let singular = || Error::SingularMode {
            m1: grid.m1[i1],
            m2: grid.m2[i2],
        };
        if let Some(lu) = &self.lus[idx] {
            let x = lu.solve(&rhs).ok_or_else(singular)?;
            if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(singular());
            }
            return Ok(Some(x));
        }
        if let Some(aug) = &self.lsq[idx] {
            let size = aug.ncols();
            let mut b = DVector::<C>::zeros(size + 1);
            b.rows_mut(0, size).copy_from(&rhs);
            let svd = aug.clone().svd(true, true);
            let x = svd.solve(&b, 1e-12 * svd.singular_values.max()).map_err(|_| singular())?;
            return Ok(Some(x));
        }
        Ok(None)
    }
}

/// Residual sup-norms of a computed Stokes solution, at the nodes where
/// each equation is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StokesResiduals {
    pub momentum: f64,
    pub divergence: f64,
    pub top: f64,
    pub bottom: f64,
}

impl StokesResiduals {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.divergence).max(self.top).max(self.bottom)
    }
}

#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub u: VectorField,
    pub p: VolumeField,
    pub grad_p: VectorField,
    pub residuals: StokesResiduals,
}

/// Perturbed Stokes with velocity data on top and no slip on the bottom:
/// `s d1 u + s' u3 e1 + div S(p, u) = f1`, `div u = f2`. The pressure has
/// zero mean.
pub fn solve_stokes_dirichlet(
    f1: &VectorField,
    f2: &VolumeField,
    f3: &SurfaceVector,
    params: &Params,
    grid: &Grid,
) -> Result<StokesSolution> {
    params.check_grid(grid)?;
    let flux_in = integrate_volume(grid, f2);
    let flux_out = integrate_surface(grid, &f3.c[2]);
    let scale = 1.0 + flux_in.abs().max(flux_out.abs());
    if (flux_in - flux_out).abs() > 1e-8 * scale {
        return Err(Error::Incompatible(format!(
            "int f2 = {flux_in:.6e} but top flux = {flux_out:.6e}"
        )));
    }
    solve_stokes(f1, f2, f3, params, grid, TopCondition::Dirichlet)
}

/// Perturbed Stokes with prescribed normal stress `S(p, u) e3 = f3` on top.
pub fn solve_stokes_stress(
    f1: &VectorField,
    f2: &VolumeField,
    f3: &SurfaceVector,
    params: &Params,
    grid: &Grid,
) -> Result<StokesSolution> {
    params.check_grid(grid)?;
    solve_stokes(f1, f2, f3, params, grid, TopCondition::Stress)
}

fn solve_stokes(
    f1: &VectorField,
    f2: &VolumeField,
    f3: &SurfaceVector,
    params: &Params,
    grid: &Grid,
    top: TopCondition,
) -> Result<StokesSolution> {
    if !(f1.is_finite() && f2.is_finite() && f3.c.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite("Stokes data".into()));
    }
    let colloc = Collocation::new(grid, params, true);
    let op = ModeOperator::new(
        grid,
        colloc,
        0.0,
        top,
        |_, _| true,
        |_, _| None,
        top == TopCondition::Dirichlet,
    );
    let f1s = f1.c.clone().map(|c| c.spectrum(grid));
    let f2s = f2.spectrum(grid);
    let f3s: [SurfaceSpectrum; 3] = std::array::from_fn(|c| f3.c[c].spectrum(grid));
    let (us, ps) = solve_all(grid, &op, &f1s, &f2s, |i1, i2| {
        std::array::from_fn(|c| f3s[c].c[[i2, i1]])
    })?;
    let u = VectorField::new(us[0].to_physical(grid), us[1].to_physical(grid), us[2].to_physical(grid));
    let p = ps.to_physical(grid);
    let grad_p = VectorField::new(
        crate::spectral::ops::diff(&p, grid, 1, 1)?,
        crate::spectral::ops::diff(&p, grid, 2, 1)?,
        crate::spectral::ops::diff(&p, grid, 3, 1)?,
    );
    let residuals = stokes_residuals(grid, params, &u, &p, f1, f2, f3, top);
    Ok(StokesSolution {
        u,
        p,
        grad_p,
        residuals,
    })
}

/// Run the mode solves in parallel and scatter into spectra.
pub(crate) fn solve_all(
    grid: &Grid,
    op: &ModeOperator,
    f1: &[VolumeSpectrum; 3],
    f2: &VolumeSpectrum,
    top: impl Fn(usize, usize) -> [C; 3] + Sync,
) -> Result<([VolumeSpectrum; 3], VolumeSpectrum)> {
    let n = grid.n3;
    let modes: Vec<(usize, usize)> = (0..grid.n2).flat_map(|i2| (0..grid.n1).map(move |i1| (i1, i2))).collect();
    let column = |s: &VolumeSpectrum, i1: usize, i2: usize| -> Vec<C> { (0..n).map(|k| s.c[[k, i2, i1]]).collect() };
    let results: Vec<Result<Option<([Vec<C>; 3], Vec<C>)>>> = modes
        .par_iter()
        .map(|&(i1, i2)| {
            let cols: [Vec<C>; 3] = std::array::from_fn(|c| column(&f1[c], i1, i2));
            let div = column(f2, i1, i2);
            let rhs = op
                .colloc
                .rhs([&cols[0], &cols[1], &cols[2]], &div, top(i1, i2));
            Ok(op.solve(grid, i1, i2, rhs)?.map(|x| op.colloc.unpack(&x)))
        })
        .collect();
    let mut us: [VolumeSpectrum; 3] = std::array::from_fn(|_| VolumeSpectrum::zeros(grid));
    let mut ps = VolumeSpectrum::zeros(grid);
    for (&(i1, i2), r) in modes.iter().zip(results) {
        if let Some((u, p)) = r? {
            for k in 0..n {
                for c in 0..3 {
                    us[c].c[[k, i2, i1]] = u[c][k];
                }
                ps.c[[k, i2, i1]] = p[k];
            }
        }
    }
    Ok((us, ps))
}

/// `s d1 u + s' u3 e1 + div S(p, u)`: the perturbed Stokes operator.
pub fn stokes_operator(grid: &Grid, params: &Params, u: &VectorField, p: &VolumeField) -> Result<VectorField> {
    let ident = TensorField::identity(grid);
    let div_s = div_tensor_with(grid, &ident, &stress_with(grid, &ident, p, u));
    let s = VolumeField::from_profile(grid, |z| params.shear(z));
    let s1 = VolumeField::from_profile(grid, |z| params.shear_slope(z));
    let mut out = div_s;
    for c in 0..3 {
        let adv = &s * &crate::spectral::ops::diff(&u.c[c], grid, 1, 1)?;
        out.c[c] += &adv;
    }
    out.c[0] += &(&s1 * &u.c[2]);
    Ok(out)
}

/// Flat normal stress `S(p, u) e3` on the top boundary.
pub fn top_stress(grid: &Grid, p: &VolumeField, u: &VectorField) -> SurfaceVector {
    let ident = TensorField::identity(grid);
    let s = stress_with(grid, &ident, p, u);
    SurfaceVector::new(
        crate::spectral::trace_surface(&s.c[0][2]),
        crate::spectral::trace_surface(&s.c[1][2]),
        crate::spectral::trace_surface(&s.c[2][2]),
    )
}

fn interior_max(f: &VolumeField) -> f64 {
    let n = f.v.dim().0;
    f.v.outer_iter()
        .enumerate()
        .filter(|(k, _)| *k > 0 && *k < n - 1)
        .flat_map(|(_, l)| l.iter().copied().collect::<Vec<_>>())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

#[allow(clippy::too_many_arguments)]
pub fn stokes_residuals(
    grid: &Grid,
    params: &Params,
    u: &VectorField,
    p: &VolumeField,
    f1: &VectorField,
    f2: &VolumeField,
    f3: &SurfaceVector,
    top: TopCondition,
) -> StokesResiduals {
    let lhs = match stokes_operator(grid, params, u, p) {
        Ok(v) => v,
        Err(_) => return StokesResiduals {
            momentum: f64::INFINITY,
            ..Default::default()
        },
    };
    let momentum = (0..3).map(|c| interior_max(&(&lhs.c[c] - &f1.c[c]))).fold(0.0, f64::max);
    let div = crate::geometry::div_with(grid, &TensorField::identity(grid), u);
    let divergence = interior_max(&(&div - f2));
    let top_vals = match top {
        TopCondition::Dirichlet => u.trace_top(),
        TopCondition::Stress => top_stress(grid, p, u),
    };
    let top_res = (&top_vals - f3).max_abs();
    let bottom = u.c.iter().map(|c| c.level(0).max_abs()).fold(0.0, f64::max);
    StokesResiduals {
        momentum,
        divergence,
        top: top_res,
        bottom,
    }
}
