//! Harmonic extension of the surface, the flattening map and the
//! surface-dependent differential operators built from it.
use crate::error::{Error, Result};
use crate::spectral::ops::{self, apply_vertical, gradient, multiply_volume};
use crate::spectral::{Grid, SurfaceField, SurfaceVector, TensorField, VectorField, VolumeField, VolumeSpectrum};
use ndarray::Axis;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default lower bound on the Jacobian of the flattening map.
pub const DEFAULT_J_MIN: f64 = 0.1;

/// Physical parameters. Lengths must agree with the [`Grid`] they are used with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub sigma: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub g: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub p_ext: f64,
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    /// Constant transport speed in the linear kinematic equation; `None`
    /// means the surface shear speed `s(0)`.
    #[serde(default)]
    pub kinematic_speed: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Params {
    pub fn new(sigma: f64, gamma: f64, b: f64, l1: f64, l2: f64) -> Self {
        Params {
            sigma,
            gamma,
            g: 1.0,
            mu: 1.0,
            p_ext: 0.0,
            b,
            l1,
            l2,
            kinematic_speed: None,
        }
    }

    /// Parameters sharing the grid's lengths.
    pub fn for_grid(grid: &Grid, sigma: f64, gamma: f64) -> Self {
        Self::new(sigma, gamma, grid.b, grid.l1, grid.l2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        for (name, v) in [("g", self.g), ("mu", self.mu), ("b", self.b), ("L1", self.l1), ("L2", self.l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !self.p_ext.is_finite() {
            return bad("P_ext must be finite".into());
        }
        if let Some(c) = self.kinematic_speed {
            if !c.is_finite() {
                return bad("kinematic speed must be finite".into());
            }
        }
        Ok(())
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !(close(self.b, grid.b) && close(self.l1, grid.l1) && close(self.l2, grid.l2)) {
            return Err(Error::InvalidParams(format!(
                "params lengths (L1={}, L2={}, b={}) disagree with grid (L1={}, L2={}, b={})",
                self.l1, self.l2, self.b, grid.l1, grid.l2, grid.b
            )));
        }
        Ok(())
    }

    /// Equilibrium shear profile `s(x3) = (gamma/2)(b^2 - x3^2)`.
    pub fn shear(&self, x3: f64) -> f64 {
        shear_profile(self.gamma, self.b, x3)
    }

    /// `s'(x3) = -gamma x3`.
    pub fn shear_slope(&self, x3: f64) -> f64 {
        -self.gamma * x3
    }

    pub fn kinematic_speed(&self) -> f64 {
        self.kinematic_speed.unwrap_or_else(|| self.shear(0.0))
    }
}

/// `s(x3) = (gamma/2)(b^2 - x3^2)`, valid for any real `x3`.
pub fn shear_profile(gamma: f64, b: f64, x3: f64) -> f64 {
    0.5 * gamma * (b * b - x3 * x3)
}

/// Spectrum of the decaying harmonic extension at every vertical node.
pub fn poisson_extend_spectrum(grid: &Grid, eta: &SurfaceField) -> VolumeSpectrum {
    let spec = eta.spectrum(grid);
    let mut out = VolumeSpectrum::zeros(grid);
    for (k, mut level) in out.c.axis_iter_mut(Axis(0)).enumerate() {
        let z = grid.x3[k];
        for ((i2, i1), c) in level.indexed_iter_mut() {
            let xi = grid.xi_sq(i1, i2).sqrt();
            *c = spec.c[[i2, i1]] * (xi * z).exp();
        }
    }
    out
}

/// Harmonic extension `sum_n e^{i xi x'} e^{|xi| x3} eta^(n)` sampled on the grid.
pub fn poisson_extend(grid: &Grid, eta: &SurfaceField) -> VolumeField {
    let mut out = poisson_extend_spectrum(grid, eta).to_physical(grid);
    // the top level is the input itself, not a transform round trip
    out.v.index_axis_mut(Axis(0), grid.top()).assign(&eta.v);
    out
}

/// Everything the flattening map needs, evaluated on the grid for one surface.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub eta: SurfaceField,
    pub eta_bar: VolumeField,
    /// First derivatives of the extension; the vertical one is exact per mode.
    pub d_eta_bar: [VolumeField; 3],
    pub dt_eta_bar: VolumeField,
    pub a: VolumeField,
    pub b: VolumeField,
    pub j: VolumeField,
    pub k: VolumeField,
    pub btilde: VolumeField,
    /// Vertical coordinate of the mapped point, `x3 + eta_bar b~`.
    pub phi3: VolumeField,
    pub normal: SurfaceVector,
    pub matrix: TensorField,
}

/// Build the cache with the default Jacobian floor.
pub fn build_geometry(
    eta: &SurfaceField,
    dt_eta: Option<&SurfaceField>,
    grid: &Grid,
    params: &Params,
) -> Result<GeometryCache> {
    build_geometry_with_floor(eta, dt_eta, grid, params, DEFAULT_J_MIN)
}

pub fn build_geometry_with_floor(
    eta: &SurfaceField,
    dt_eta: Option<&SurfaceField>,
    grid: &Grid,
    params: &Params,
    j_min: f64,
) -> Result<GeometryCache> {
    params.check_grid(grid)?;
    if !eta.shape_matches(grid) {
        return Err(Error::ShapeMismatch("surface elevation does not match grid".into()));
    }
    if !eta.is_finite() {
        return Err(Error::NonFinite("surface elevation".into()));
    }
    let spec = poisson_extend_spectrum(grid, eta);
    let mut eta_bar = spec.to_physical(grid);
    eta_bar.v.index_axis_mut(Axis(0), grid.top()).assign(&eta.v);
    let d1 = multiply_volume(grid, &spec, |i1, _| grid.symbol(1, i1, 1)).to_physical(grid);
    let d2 = multiply_volume(grid, &spec, |_, i2| grid.symbol(2, i2, 1)).to_physical(grid);
    let d3 = multiply_volume(grid, &spec, |i1, i2| Complex64::new(grid.xi_sq(i1, i2).sqrt(), 0.0))
        .to_physical(grid);
    let btilde = VolumeField::from_profile(grid, |z| 1.0 + z / grid.b);
    let a = &d1 * &btilde;
    let b = &d2 * &btilde;
    let j = &(&VolumeField::constant(grid, 1.0) + &(&eta_bar * (1.0 / grid.b))) + &(&d3 * &btilde);

    let mut worst = (f64::INFINITY, (0, 0, 0));
    for ((k3, i2, i1), &v) in j.v.indexed_iter() {
        if !(v >= worst.0) {
            worst = (v, (i1, i2, k3));
        }
    }
    if !(worst.0 >= j_min) {
        return Err(Error::DomainCollapse {
            min_jacobian: worst.0,
            floor: j_min,
            node: worst.1,
        });
    }
    let k = j.map(|v| 1.0 / v);
    let phi3 = &VolumeField::from_profile(grid, |z| z) + &(&eta_bar * &btilde);

    let [e1, e2] = ops::surface_gradient(grid, eta);
    let normal = SurfaceVector::new(-&e1, -&e2, SurfaceField::constant(grid, 1.0));

    let mut matrix = TensorField::identity(grid);
    matrix.c[0][2] = -(&a * &k);
    matrix.c[1][2] = -(&b * &k);
    matrix.c[2][2] = k.clone();

    let dt_eta_bar = match dt_eta {
        Some(dt) => {
            if !dt.shape_matches(grid) {
                return Err(Error::ShapeMismatch("surface velocity does not match grid".into()));
            }
            poisson_extend(grid, dt)
        }
        None => VolumeField::zeros(grid),
    };
    Ok(GeometryCache {
        eta: eta.clone(),
        eta_bar,
        d_eta_bar: [d1, d2, d3],
        dt_eta_bar,
        a,
        b,
        j,
        k,
        btilde,
        phi3,
        normal,
        matrix,
    })
}

impl GeometryCache {
    /// Geometry of the flat surface.
    pub fn flat(grid: &Grid) -> Self {
        let z = SurfaceField::zeros(grid);
        let p = Params::new(0.0, 0.0, grid.b, grid.l1, grid.l2);
        build_geometry(&z, None, grid, &p).expect("flat geometry is valid")
    }

    /// `J A` as a tensor: rows `(J, 0, -A)`, `(0, J, -B)`, `(0, 0, 1)`.
    pub fn j_matrix(&self) -> TensorField {
        let mut t = TensorField {
            c: self.matrix.c.clone(),
        };
        for row in t.c.iter_mut() {
            for e in row.iter_mut() {
                *e = &*e * &self.j;
            }
        }
        t
    }
}

/// `grads[i][k] = d_k u_i`.
pub fn velocity_gradient(grid: &Grid, u: &VectorField) -> [[VolumeField; 3]; 3] {
    [gradient(grid, &u.c[0]), gradient(grid, &u.c[1]), gradient(grid, &u.c[2])]
}

/// `sum_k M_{jk} d_k f` given the plain gradient of `f`.
pub fn contract_row(m: &TensorField, j: usize, d: &[VolumeField; 3]) -> VolumeField {
    let mut acc = &m.c[j][0] * &d[0];
    acc += &(&m.c[j][1] * &d[1]);
    acc += &(&m.c[j][2] * &d[2]);
    acc
}

/// `(grad_M f)_i = M_{ij} d_j f` for an arbitrary coefficient matrix.
pub fn grad_with(grid: &Grid, m: &TensorField, f: &VolumeField) -> VectorField {
    let d = gradient(grid, f);
    VectorField::new(contract_row(m, 0, &d), contract_row(m, 1, &d), contract_row(m, 2, &d))
}

/// `div_M X = M_{ij} d_j X_i`.
pub fn div_with(grid: &Grid, m: &TensorField, x: &VectorField) -> VolumeField {
    let mut acc = VolumeField::zeros(grid);
    for i in 0..3 {
        let d = gradient(grid, &x.c[i]);
        acc += &contract_row(m, i, &d);
    }
    acc
}

/// `(D_M u)_{ij} = M_{ik} d_k u_j + M_{jk} d_k u_i`.
pub fn sym_grad_with(grid: &Grid, m: &TensorField, u: &VectorField) -> TensorField {
    let g = velocity_gradient(grid, u);
    sym_grad_from(m, &g)
}

/// Symmetric gradient from precomputed plain gradients.
pub fn sym_grad_from(m: &TensorField, g: &[[VolumeField; 3]; 3]) -> TensorField {
    // t[i][j] = M_{ik} d_k u_j
    let t: Vec<Vec<VolumeField>> = (0..3)
        .map(|i| (0..3).map(|j| contract_row(m, i, &g[j])).collect())
        .collect();
    let mut out = TensorField {
        c: std::array::from_fn(|i| std::array::from_fn(|j| &t[i][j] + &t[j][i])),
    };
    for i in 0..3 {
        for j in 0..i {
            out.c[i][j] = out.c[j][i].clone();
        }
    }
    out
}

/// `(div_M T)_i = M_{jk} d_k T_{ij}`.
pub fn div_tensor_with(grid: &Grid, m: &TensorField, t: &TensorField) -> VectorField {
    let comp = |i: usize| {
        let mut acc = VolumeField::zeros(grid);
        for j in 0..3 {
            let d = gradient(grid, &t.c[i][j]);
            acc += &contract_row(m, j, &d);
        }
        acc
    };
    VectorField::new(comp(0), comp(1), comp(2))
}

/// `p I - D_M u`.
pub fn stress_with(grid: &Grid, m: &TensorField, p: &VolumeField, u: &VectorField) -> TensorField {
    let mut s = sym_grad_with(grid, m, u);
    for row in s.c.iter_mut() {
        for e in row.iter_mut() {
            *e = -&*e;
        }
    }
    for i in 0..3 {
        s.c[i][i] += p;
    }
    s
}

pub fn grad_a(grid: &Grid, f: &VolumeField, cache: &GeometryCache) -> VectorField {
    grad_with(grid, &cache.matrix, f)
}

pub fn div_a(grid: &Grid, x: &VectorField, cache: &GeometryCache) -> VolumeField {
    div_with(grid, &cache.matrix, x)
}

pub fn sym_grad_a(grid: &Grid, u: &VectorField, cache: &GeometryCache) -> TensorField {
    sym_grad_with(grid, &cache.matrix, u)
}

pub fn stress_a(grid: &Grid, p: &VolumeField, u: &VectorField, cache: &GeometryCache) -> TensorField {
    stress_with(grid, &cache.matrix, p, u)
}

/// Divergence of a tensor with respect to the flattened coordinates.
pub fn div_tensor_a(grid: &Grid, t: &TensorField, cache: &GeometryCache) -> VectorField {
    div_tensor_with(grid, &cache.matrix, t)
}

/// `div(grad eta / sqrt(1 + |grad eta|^2))` with dealiased products.
pub fn mean_curvature(grid: &Grid, eta: &SurfaceField) -> SurfaceField {
    let [g1, g2] = ops::surface_gradient(grid, eta);
    let w = SurfaceField {
        v: ndarray::Zip::from(&g1.v)
            .and(&g2.v)
            .map_collect(|a, b| 1.0 / (1.0 + a * a + b * b).sqrt()),
    };
    let q1 = ops::dealias_surface(grid, &(&g1 * &w));
    let q2 = ops::dealias_surface(grid, &(&g2 * &w));
    let s1 = q1.spectrum(grid);
    let s2 = q2.spectrum(grid);
    let mut div = s1.clone();
    for ((i2, i1), c) in div.c.indexed_iter_mut() {
        *c = if grid.is_resolved(i1, i2) {
            s1.c[[i2, i1]] * grid.symbol(1, i1, 1) + s2.c[[i2, i1]] * grid.symbol(2, i2, 1)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    div.to_physical(grid)
}

/// `d_k (J A_{ik})` for each row `i`, the quantity that vanishes identically.
pub fn piola_defect(grid: &Grid, cache: &GeometryCache) -> [VolumeField; 3] {
    let ja = cache.j_matrix();
    std::array::from_fn(|i| {
        let mut acc = VolumeField::zeros(grid);
        for k in 0..3 {
            let d = if k == 2 {
                apply_vertical(grid, &ja.c[i][k], grid.dz(1))
            } else {
                ops::diff(&ja.c[i][k], grid, k + 1, 1).expect("first derivative")
            };
            acc += &d;
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{make_grid, Diff};
    use std::f64::consts::PI;

    fn setup(n3: usize) -> (Grid, Params) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 1.0, 16, 8, n3).unwrap();
        let p = Params::for_grid(&g, 1.0, 0.5);
        (g, p)
    }

    #[test]
    fn shear_examples() {
        assert_eq!(shear_profile(1.0, 1.0, 0.0), 0.5);
        assert_eq!(shear_profile(3.0, 0.7, -0.7), 0.0);
        assert!((shear_profile(2.0, 0.5, -0.25) - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn extension_of_constant_and_zero() {
        let (g, _) = setup(9);
        let c = SurfaceField::constant(&g, 0.3);
        let e = poisson_extend(&g, &c);
        assert!(e.v.iter().all(|v| (v - 0.3).abs() < 1e-15));
        assert_eq!(poisson_extend(&g, &SurfaceField::zeros(&g)).max_abs(), 0.0);
    }

    #[test]
    fn extension_of_cosine_is_harmonic() {
        let (g, _) = setup(33);
        let eta = SurfaceField::from_fn(&g, |x, _| x.cos());
        let e = poisson_extend(&g, &eta);
        let expect = VolumeField::from_fn(&g, |x, _, z| x.cos() * z.exp());
        assert!((&e - &expect).max_abs() < 1e-13);
        let lap = &(&e.diff(&g, 1, 2).unwrap() + &e.diff(&g, 2, 2).unwrap()) + &e.diff(&g, 3, 2).unwrap();
        assert!(lap.max_abs() < 1e-8);
    }

    #[test]
    fn flat_geometry_is_identity() {
        let (g, p) = setup(9);
        let c = build_geometry(&SurfaceField::zeros(&g), None, &g, &p).unwrap();
        assert_eq!(c.a.max_abs(), 0.0);
        assert_eq!(c.b.max_abs(), 0.0);
        assert!(c.j.v.iter().all(|&v| v == 1.0));
        assert!(c.k.v.iter().all(|&v| v == 1.0));
        assert!(c.normal.c[2].v.iter().all(|&v| v == 1.0));
        assert_eq!(c.normal.c[0].max_abs() + c.normal.c[1].max_abs(), 0.0);
    }

    #[test]
    fn jacobian_matches_closed_form() {
        let (g, p) = setup(17);
        let eps = 0.01;
        let eta = SurfaceField::from_fn(&g, |x, _| eps * x.cos());
        let c = build_geometry(&eta, None, &g, &p).unwrap();
        // at x' = 0, x3 = 0: eta_bar = eps, d3 eta_bar = eps, b~ = 1
        let expect = 1.0 + eps / 1.0 + eps;
        assert!((c.j.v[[g.top(), 0, 0]] - expect).abs() < 1e-14);
        let jk = &c.j * &c.k;
        assert!(jk.v.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn collapse_is_reported() {
        let (g, p) = setup(9);
        let eta = SurfaceField::constant(&g, -1.0 + 1e-3);
        match build_geometry(&eta, None, &g, &p) {
            Err(Error::DomainCollapse { min_jacobian, .. }) => assert!(min_jacobian < 0.1),
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn flat_operators_reduce() {
        let (g, p) = setup(9);
        let c = build_geometry(&SurfaceField::zeros(&g), None, &g, &p).unwrap();
        let f = VolumeField::from_fn(&g, |x, y, z| x.sin() * (2.0 * y).cos() * z * z);
        let ga = grad_a(&g, &f, &c);
        let d = gradient(&g, &f);
        for i in 0..3 {
            assert!((&ga.c[i] - &d[i]).max_abs() < 1e-14);
        }
        // div-free field (psi_2, -psi_1, 0) for a stream function
        let u = VectorField::new(
            VolumeField::from_fn(&g, |x, y, z| -2.0 * x.sin() * (2.0 * y).sin() * z),
            VolumeField::from_fn(&g, |x, y, z| -x.cos() * (2.0 * y).cos() * z),
            VolumeField::zeros(&g),
        );
        assert!(div_a(&g, &u, &c).max_abs() < 1e-12);
    }

    #[test]
    fn curvature_examples() {
        let (g, _) = setup(9);
        assert_eq!(mean_curvature(&g, &SurfaceField::zeros(&g)).max_abs(), 0.0);
        assert!(mean_curvature(&g, &SurfaceField::constant(&g, 2.0)).max_abs() < 1e-14);
        let eps = 1e-4;
        let eta = SurfaceField::from_fn(&g, |x, _| eps * x.cos());
        let lap = ops::surface_laplacian(&g, &eta);
        assert!((&mean_curvature(&g, &eta) - &lap).max_abs() < 1e-9);
    }
}
