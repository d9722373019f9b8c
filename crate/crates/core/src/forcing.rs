//! Nonlinear forcing of the two linearized forms: the constant-coefficient
//! (flattened) forcing `G` and the commutator forcing `F^{i,r}` obtained by
//! differentiating the geometric system in time.
use crate::equilibrium::{FlowState, Snapshot};
use crate::error::{Error, Result};
use crate::geometry::{
    build_geometry, div_tensor_with, div_with, mean_curvature, stress_with, sym_grad_from, velocity_gradient,
    GeometryCache, Params,
};
use crate::spectral::ops::{dealias_surface, dealias_volume, gradient, surface_gradient, surface_laplacian};
use crate::spectral::{trace_surface, Grid, SurfaceField, SurfaceVector, TensorField, VectorField, VolumeField};
use crate::temporal::TimeStencil;

/// Default highest time-derivative order for the commutator forcing.
pub const DEFAULT_J_MAX: usize = 2;

/// `G^1..G^4` with every part kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingBundle {
    pub g1_hat: VectorField,
    pub g1_tilde: VectorField,
    pub g2: VolumeField,
    pub g3_hat: SurfaceVector,
    pub g3_check: SurfaceVector,
    pub g3_tilde: SurfaceVector,
    pub g4_hat: SurfaceField,
    pub g4_tilde: SurfaceField,
}

impl ForcingBundle {
    pub fn zeros(grid: &Grid) -> Self {
        ForcingBundle {
            g1_hat: VectorField::zeros(grid),
            g1_tilde: VectorField::zeros(grid),
            g2: VolumeField::zeros(grid),
            g3_hat: SurfaceVector::zeros(grid),
            g3_check: SurfaceVector::zeros(grid),
            g3_tilde: SurfaceVector::zeros(grid),
            g4_hat: SurfaceField::zeros(grid),
            g4_tilde: SurfaceField::zeros(grid),
        }
    }

    pub fn g1(&self) -> VectorField {
        &self.g1_hat + &self.g1_tilde
    }

    pub fn g3(&self) -> SurfaceVector {
        &(&self.g3_hat + &self.g3_check) + &self.g3_tilde
    }

    pub fn g4(&self) -> SurfaceField {
        &self.g4_hat + &self.g4_tilde
    }

    /// Largest nodal magnitude over all parts.
    pub fn max_abs(&self) -> f64 {
        [
            self.g1_hat.max_abs(),
            self.g1_tilde.max_abs(),
            self.g2.max_abs(),
            self.g3_hat.max_abs(),
            self.g3_check.max_abs(),
            self.g3_tilde.max_abs(),
            self.g4_hat.max_abs(),
            self.g4_tilde.max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// `L^2` size of the whole bundle (volume parts over the slab, surface
    /// parts over the top).
    pub fn norm(&self, grid: &Grid) -> f64 {
        use crate::spectral::ops::{l2_surface, l2_volume};
        let g1 = self.g1();
        let g3 = self.g3();
        let mut sq = l2_volume(grid, &self.g2).powi(2) + l2_surface(grid, &self.g4()).powi(2);
        for c in 0..3 {
            sq += l2_volume(grid, &g1.c[c]).powi(2) + l2_surface(grid, &g3.c[c]).powi(2);
        }
        sq.sqrt()
    }

    fn map(&self, fv: impl Fn(&VolumeField) -> VolumeField, fs: impl Fn(&SurfaceField) -> SurfaceField) -> Self {
        let vec = |v: &VectorField| v.map_components(&fv);
        let surf = |v: &SurfaceVector| SurfaceVector {
            c: std::array::from_fn(|c| fs(&v.c[c])),
        };
        ForcingBundle {
            g1_hat: vec(&self.g1_hat),
            g1_tilde: vec(&self.g1_tilde),
            g2: fv(&self.g2),
            g3_hat: surf(&self.g3_hat),
            g3_check: surf(&self.g3_check),
            g3_tilde: surf(&self.g3_tilde),
            g4_hat: fs(&self.g4_hat),
            g4_tilde: fs(&self.g4_tilde),
        }
    }
}

/// Surface velocity from the kinematic condition, `u . N - s(eta) d1 eta`.
pub fn kinematic_rate(grid: &Grid, params: &Params, u: &VectorField, eta: &SurfaceField) -> SurfaceField {
    let [e1, e2] = surface_gradient(grid, eta);
    let top = u.trace_top();
    let s_eta = eta.map(|h| params.shear(h));
    let mut out = top.c[2].clone();
    out -= &(&top.c[0] * &e1);
    out -= &(&top.c[1] * &e2);
    out -= &(&s_eta * &e1);
    out
}

/// Geometry of the state's surface with the surface velocity taken from the
/// kinematic condition.
pub fn state_geometry(grid: &Grid, params: &Params, u: &VectorField, eta: &SurfaceField) -> Result<GeometryCache> {
    let dt_eta = kinematic_rate(grid, params, u, eta);
    build_geometry(eta, Some(&dt_eta), grid, params)
}

/// `T_k = u_j M_{jk}`, the transport coefficients of `u . grad_M`.
fn transport(u: &VectorField, m: &TensorField) -> [VolumeField; 3] {
    std::array::from_fn(|k| {
        let mut acc = &u.c[0] * &m.c[0][k];
        acc += &(&u.c[1] * &m.c[1][k]);
        acc += &(&u.c[2] * &m.c[2][k]);
        acc
    })
}

/// `sum_k T_k d_k f` given the plain gradient of `f`.
fn along(t: &[VolumeField; 3], d: &[VolumeField; 3]) -> VolumeField {
    let mut acc = &t[0] * &d[0];
    acc += &(&t[1] * &d[1]);
    acc += &(&t[2] * &d[2]);
    acc
}

/// `T N` on the top surface for a volume tensor `T`.
fn traction(t: &TensorField, n: &SurfaceVector) -> SurfaceVector {
    SurfaceVector {
        c: std::array::from_fn(|i| {
            let mut acc = &trace_surface(&t.c[i][0]) * &n.c[0];
            acc += &(&trace_surface(&t.c[i][1]) * &n.c[1]);
            acc += &(&trace_surface(&t.c[i][2]) * &n.c[2]);
            acc
        }),
    }
}

fn check_cache(cache: &GeometryCache, eta: &SurfaceField) -> Result<()> {
    if cache.eta.v.dim() != eta.v.dim() || cache.eta.v != eta.v {
        return Err(Error::ShapeMismatch("geometry cache was built for a different surface".into()));
    }
    Ok(())
}

/// Forcing of the flattened form for `state`, with 2/3-rule truncation of
/// every part.
pub fn compute_g(grid: &Grid, params: &Params, state: &FlowState, cache: &GeometryCache) -> Result<ForcingBundle> {
    let raw = compute_g_raw(grid, params, &state.u, &state.p, &state.eta, cache)?;
    Ok(raw.map(|v| dealias_volume(grid, v), |s| dealias_surface(grid, s)))
}

/// Forcing of the flattened form without any truncation. The parts are the
/// differences between the constant-coefficient operators and their
/// surface-dependent counterparts, so
/// `flattened operator - G == geometric operator` holds node by node.
pub fn compute_g_raw(
    grid: &Grid,
    params: &Params,
    u: &VectorField,
    p: &VolumeField,
    eta: &SurfaceField,
    cache: &GeometryCache,
) -> Result<ForcingBundle> {
    params.check_grid(grid)?;
    check_cache(cache, eta)?;
    let ident = TensorField::identity(grid);
    let a = &cache.matrix;
    let grads = velocity_gradient(grid, u);

    // momentum, parts without the shear profile
    let div_flat = div_tensor_with(grid, &ident, &stress_with(grid, &ident, p, u));
    let div_geo = div_tensor_with(grid, a, &stress_with(grid, a, p, u));
    let tr = transport(u, a);
    let move_coef = &(&cache.dt_eta_bar * &cache.btilde) * &cache.k;
    let g1_hat = VectorField {
        c: std::array::from_fn(|i| {
            let mut acc = &div_flat.c[i] - &div_geo.c[i];
            acc -= &along(&tr, &grads[i]);
            acc += &(&move_coef * &grads[i][2]);
            acc
        }),
    };

    // momentum, parts carried by the shear profile
    let s_flat = VolumeField::from_profile(grid, |z| params.shear(z));
    let s_mapped = cache.phi3.map(|z| params.shear(z));
    let slope_gap = &VolumeField::from_profile(grid, |z| params.shear_slope(z)) - &cache.phi3.map(|z| params.shear_slope(z));
    let row1: [VolumeField; 3] = std::array::from_fn(|k| &s_mapped * &a.c[0][k]);
    let g1_tilde = VectorField {
        c: std::array::from_fn(|i| {
            let mut acc = &s_flat * &grads[i][0];
            acc -= &along(&row1, &grads[i]);
            if i == 0 {
                acc += &(&slope_gap * &u.c[2]);
            }
            acc
        }),
    };

    let g2 = &div_with(grid, &ident, u) - &div_with(grid, a, u);

    // dynamic condition
    let n = &cache.normal;
    let e3 = SurfaceVector::new(SurfaceField::zeros(grid), SurfaceField::zeros(grid), SurfaceField::constant(grid, 1.0));
    let n_minus_e3 = n - &e3;
    let flat_top = traction(&stress_with(grid, &ident, p, u), &e3);
    let geo_top = traction(&stress_with(grid, a, p, u), n);
    let g3_hat = SurfaceVector {
        c: std::array::from_fn(|i| &(&flat_top.c[i] - &geo_top.c[i]) + &(eta * &n_minus_e3.c[i])),
    };
    let lap = surface_laplacian(grid, eta);
    let curv = mean_curvature(grid, eta);
    let g3_check = SurfaceVector {
        c: std::array::from_fn(|i| {
            let mut acc = &(&curv * &n.c[i]) * (-params.sigma);
            if i == 2 {
                acc += &(&lap * params.sigma);
            }
            acc
        }),
    };
    // gamma eta M (e3 - N) = (0, 0, gamma eta d1 eta)
    let [d1_eta, _] = surface_gradient(grid, eta);
    let g3_tilde = SurfaceVector::new(
        SurfaceField::zeros(grid),
        SurfaceField::zeros(grid),
        &(eta * &d1_eta) * params.gamma,
    );

    // kinematic condition
    let top_u = u.trace_top();
    let g4_hat = top_u.dot(&n_minus_e3);
    let c = params.kinematic_speed();
    let g4_tilde = &eta.map(|h| c - params.shear(h)) * &d1_eta;

    Ok(ForcingBundle {
        g1_hat,
        g1_tilde,
        g2,
        g3_hat,
        g3_check,
        g3_tilde,
        g4_hat,
        g4_tilde,
    })
}

/// Pointwise residual of one of the two forms.
#[derive(Debug, Clone)]
pub struct PdeResidual {
    pub momentum: VectorField,
    pub divergence: VolumeField,
    pub stress: SurfaceVector,
    pub kinematic: SurfaceField,
}

impl PdeResidual {
    /// Largest nodal difference between two residuals.
    pub fn max_gap(&self, other: &PdeResidual) -> f64 {
        [
            (&self.momentum - &other.momentum).max_abs(),
            (&self.divergence - &other.divergence).max_abs(),
            (&self.stress - &other.stress).max_abs(),
            (&self.kinematic - &other.kinematic).max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        [
            self.momentum.max_abs(),
            self.divergence.max_abs(),
            self.stress.max_abs(),
            self.kinematic.max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Time derivatives supplied to the residual evaluations.
#[derive(Debug, Clone)]
pub struct Rates<'a> {
    pub u: &'a VectorField,
    pub eta: &'a SurfaceField,
}

/// Left minus right side of the full surface-dependent system. `cache` must
/// carry the surface velocity `rates.eta`.
pub fn geometric_residual(
    grid: &Grid,
    params: &Params,
    rates: &Rates,
    u: &VectorField,
    p: &VolumeField,
    eta: &SurfaceField,
    cache: &GeometryCache,
) -> Result<PdeResidual> {
    check_cache(cache, eta)?;
    let a = &cache.matrix;
    let grads = velocity_gradient(grid, u);
    let div_geo = div_tensor_with(grid, a, &stress_with(grid, a, p, u));
    let tr = transport(u, a);
    let s_mapped = cache.phi3.map(|z| params.shear(z));
    let slope_mapped = cache.phi3.map(|z| params.shear_slope(z));
    let row1: [VolumeField; 3] = std::array::from_fn(|k| &s_mapped * &a.c[0][k]);
    let move_coef = &(&cache.dt_eta_bar * &cache.btilde) * &cache.k;
    let momentum = VectorField {
        c: std::array::from_fn(|i| {
            let mut acc = rates.u.c[i].clone();
            acc -= &(&move_coef * &grads[i][2]);
            acc += &along(&tr, &grads[i]);
            acc += &along(&row1, &grads[i]);
            if i == 0 {
                acc += &(&slope_mapped * &u.c[2]);
            }
            acc += &div_geo.c[i];
            acc
        }),
    };
    let divergence = div_with(grid, a, u);
    let n = &cache.normal;
    let curv = mean_curvature(grid, eta);
    let load = eta - &(&curv * params.sigma);
    let geo_top = traction(&stress_with(grid, a, p, u), n);
    // M N = (N3, 0, N1)
    let mn = [n.c[2].clone(), SurfaceField::zeros(grid), n.c[0].clone()];
    let stress = SurfaceVector {
        c: std::array::from_fn(|i| {
            let mut acc = &geo_top.c[i] - &(&load * &n.c[i]);
            acc += &(&(eta * &mn[i]) * params.gamma);
            acc
        }),
    };
    let kinematic = rates.eta - &kinematic_rate(grid, params, u, eta);
    Ok(PdeResidual {
        momentum,
        divergence,
        stress,
        kinematic,
    })
}

/// Left minus right side of the constant-coefficient form with the forcing
/// `g` on the right.
pub fn flattened_residual(
    grid: &Grid,
    params: &Params,
    rates: &Rates,
    u: &VectorField,
    p: &VolumeField,
    eta: &SurfaceField,
    g: &ForcingBundle,
) -> Result<PdeResidual> {
    let ident = TensorField::identity(grid);
    let grads = velocity_gradient(grid, u);
    let div_flat = div_tensor_with(grid, &ident, &stress_with(grid, &ident, p, u));
    let s = VolumeField::from_profile(grid, |z| params.shear(z));
    let slope = VolumeField::from_profile(grid, |z| params.shear_slope(z));
    let g1 = g.g1();
    let momentum = VectorField {
        c: std::array::from_fn(|i| {
            let mut acc = &rates.u.c[i] + &(&s * &grads[i][0]);
            if i == 0 {
                acc += &(&slope * &u.c[2]);
            }
            acc += &div_flat.c[i];
            acc -= &g1.c[i];
            acc
        }),
    };
    let divergence = &div_with(grid, &ident, u) - &g.g2;
    let s_top = stress_with(grid, &ident, p, u);
    let lap = surface_laplacian(grid, eta);
    let g3 = g.g3();
    let stress = SurfaceVector {
        c: std::array::from_fn(|i| {
            let mut acc = &trace_surface(&s_top.c[i][2]) - &g3.c[i];
            match i {
                0 => acc += &(eta * params.gamma),
                2 => acc -= &(eta - &(&lap * params.sigma)),
                _ => {}
            }
            acc
        }),
    };
    let [d1_eta, _] = surface_gradient(grid, eta);
    let mut kinematic = rates.eta - &trace_surface(&u.c[2]);
    kinematic += &(&d1_eta * params.kinematic_speed());
    kinematic -= &g.g4();
    Ok(PdeResidual {
        momentum,
        divergence,
        stress,
        kinematic,
    })
}

/// The commutator forcing `F^{1..4, r}` at the newest snapshot.
#[derive(Debug, Clone)]
pub struct CommutatorForcing {
    pub order: usize,
    pub f1: VectorField,
    pub f2: VolumeField,
    pub f3: SurfaceVector,
    pub f4: SurfaceField,
}

impl CommutatorForcing {
    pub fn max_abs(&self) -> f64 {
        [self.f1.max_abs(), self.f2.max_abs(), self.f3.max_abs(), self.f4.max_abs()]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Per-snapshot products whose time derivatives enter the commutators.
struct Sample {
    u: VectorField,
    grad_u: [[VolumeField; 3]; 3],
    grad_p: [VolumeField; 3],
    matrix: TensorField,
    transport: [VolumeField; 3],
    shear_row: [VolumeField; 3],
    shear_slope: VolumeField,
    move_coef: VolumeField,
    strain: TensorField,
    eta_minus_p: SurfaceField,
    normal: SurfaceVector,
    eta: SurfaceField,
    eta_sq: SurfaceField,
    curvature: SurfaceField,
    curvature_gap: SurfaceField,
}

fn sample(grid: &Grid, params: &Params, s: &Snapshot) -> Result<Sample> {
    let cache = state_geometry(grid, params, &s.u, &s.eta)?;
    let grad_u = velocity_gradient(grid, &s.u);
    let a = cache.matrix.clone();
    let s_mapped = cache.phi3.map(|z| params.shear(z));
    let lap = surface_laplacian(grid, &s.eta);
    let curvature = mean_curvature(grid, &s.eta);
    Ok(Sample {
        grad_p: gradient(grid, &s.p),
        transport: transport(&s.u, &a),
        shear_row: std::array::from_fn(|k| &s_mapped * &a.c[0][k]),
        shear_slope: cache.phi3.map(|z| params.shear_slope(z)),
        move_coef: &(&cache.dt_eta_bar * &cache.btilde) * &cache.k,
        strain: sym_grad_from(&a, &grad_u),
        eta_minus_p: &s.eta - &trace_surface(&s.p),
        normal: cache.normal.clone(),
        eta: s.eta.clone(),
        eta_sq: &s.eta * &s.eta,
        curvature_gap: &lap - &curvature,
        curvature,
        grad_u,
        matrix: a,
        u: s.u.clone(),
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `F^{i,r}` from the newest `r + 1` snapshots of `history` (oldest first).
/// Time derivatives of the products are backward differences over the
/// per-snapshot values. At `r = 0` the sums are empty; only the capillary
/// remainder `sigma (lap eta - H(eta)) N` of the third term survives.
pub fn compute_f<'a, I>(grid: &Grid, params: &Params, history: I, r: usize) -> Result<CommutatorForcing>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    params.check_grid(grid)?;
    let snaps: Vec<&Snapshot> = history.into_iter().collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let st = TimeStencil::new(&times, r)?;
    let used = &snaps[snaps.len() - (r + 1)..];
    let samples: Vec<Sample> = used.iter().map(|s| sample(grid, params, s)).collect::<Result<_>>()?;
    let now = samples.last().expect("nonempty");

    let dv = |f: &dyn Fn(&Sample) -> &VolumeField, l: usize| -> VolumeField {
        let vals: Vec<VolumeField> = samples.iter().map(|s| f(s).clone()).collect();
        st.apply(l, &vals)
    };
    let ds = |f: &dyn Fn(&Sample) -> &SurfaceField, l: usize| -> SurfaceField {
        let vals: Vec<SurfaceField> = samples.iter().map(|s| f(s).clone()).collect();
        st.apply(l, &vals)
    };

    let mut f1 = VectorField::zeros(grid);
    let mut f2 = VolumeField::zeros(grid);
    let mut f3 = SurfaceVector::zeros(grid);
    let mut f4 = SurfaceField::zeros(grid);
    // inner commutator of the strain, X_ij
    let mut inner = TensorField::zeros(grid);

    for l in 1..=r {
        let c = binomial(r, l);
        let m = r - l;
        let da: Vec<Vec<VolumeField>> = (0..3)
            .map(|i| (0..3).map(|k| dv(&|s: &Sample| &s.matrix.c[i][k], l)).collect())
            .collect();
        let gu: Vec<Vec<VolumeField>> = (0..3)
            .map(|i| (0..3).map(|k| dv(&|s: &Sample| &s.grad_u[i][k], m)).collect())
            .collect();
        let gp: Vec<VolumeField> = (0..3).map(|k| dv(&|s: &Sample| &s.grad_p[k], m)).collect();
        let d_move = dv(&|s: &Sample| &s.move_coef, l);
        let d_tr: [VolumeField; 3] = std::array::from_fn(|k| dv(&|s: &Sample| &s.transport[k], l));
        let d_row: [VolumeField; 3] = std::array::from_fn(|k| dv(&|s: &Sample| &s.shear_row[k], l));
        let d_slope = dv(&|s: &Sample| &s.shear_slope, l);
        let u3 = dv(&|s: &Sample| &s.u.c[2], m);
        let w: Vec<Vec<VolumeField>> = (0..3)
            .map(|i| (0..3).map(|j| dv(&|s: &Sample| &s.strain.c[i][j], m)).collect())
            .collect();

        for i in 0..3 {
            let gui: [VolumeField; 3] = std::array::from_fn(|k| gu[i][k].clone());
            let mut acc = &d_move * &gui[2];
            acc -= &along(&d_tr, &gui);
            let dai: [VolumeField; 3] = std::array::from_fn(|k| da[i][k].clone());
            let gp_arr: [VolumeField; 3] = std::array::from_fn(|k| gp[k].clone());
            acc -= &along(&dai, &gp_arr);
            for j in 0..3 {
                let dw = gradient(grid, &w[i][j]);
                let daj: [VolumeField; 3] = std::array::from_fn(|k| da[j][k].clone());
                acc += &along(&daj, &dw);
            }
            acc -= &along(&d_row, &gui);
            if i == 0 {
                acc -= &(&d_slope * &u3);
            }
            f1.c[i] += &(&acc * c);

            for j in 0..3 {
                let guj: [VolumeField; 3] = std::array::from_fn(|k| gu[j][k].clone());
                let daj: [VolumeField; 3] = std::array::from_fn(|k| da[j][k].clone());
                let x = &along(&dai, &guj) + &along(&daj, &gui);
                inner.c[i][j] += &(&x * c);
            }
            f2 -= &(&along(&dai, &gui) * c);
        }

        // dynamic condition
        let dn: [SurfaceField; 3] = std::array::from_fn(|k| ds(&|s: &Sample| &s.normal.c[k], l));
        let emp = ds(&|s: &Sample| &s.eta_minus_p, m);
        let curv = ds(&|s: &Sample| &s.curvature, m);
        let eta_m = ds(&|s: &Sample| &s.eta, m);
        for i in 0..3 {
            let mut acc = &emp * &dn[i];
            for j in 0..3 {
                acc += &(&trace_surface(&w[i][j]) * &dn[j]);
                let x = &along(&std::array::from_fn(|k| da[i][k].clone()), &std::array::from_fn(|k| gu[j][k].clone()))
                    + &along(&std::array::from_fn(|k| da[j][k].clone()), &std::array::from_fn(|k| gu[i][k].clone()));
                acc += &(&trace_surface(&x) * &now.normal.c[j]);
            }
            acc -= &(&(&curv * &dn[i]) * params.sigma);
            // gamma eta M_ik dN_k, with M e1 = e3 and M e3 = e1
            let mk = match i {
                0 => Some(2),
                2 => Some(0),
                _ => None,
            };
            if let Some(k) = mk {
                acc -= &(&(&eta_m * &dn[k]) * params.gamma);
            }
            f3.c[i] += &(&acc * c);
        }

        // kinematic condition
        let mut acc = SurfaceField::zeros(grid);
        for i in 0..3 {
            acc += &(&trace_surface(&dv(&|s: &Sample| &s.u.c[i], m)) * &dn[i]);
        }
        let d_sq = ds(&|s: &Sample| &s.eta_sq, l);
        let d1_eta = surface_gradient(grid, &eta_m)[0].clone();
        acc += &(&(&d_sq * &d1_eta) * (0.5 * params.gamma));
        f4 += &(&acc * c);
    }

    if r > 0 {
        let ident_free = div_tensor_with(grid, &now.matrix, &inner);
        f1 = &f1 + &ident_free;
    }
    let gap = ds(&|s: &Sample| &s.curvature_gap, r);
    for i in 0..3 {
        f3.c[i] += &(&(&gap * &now.normal.c[i]) * params.sigma);
    }
    Ok(CommutatorForcing {
        order: r,
        f1,
        f2,
        f3,
        f4,
    })
}
