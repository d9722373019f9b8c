//! Differentiation, quadrature, Sobolev norms and dealiasing on a [`Grid`].
use super::field::{SurfaceField, SurfaceSpectrum, VolumeField, VolumeSpectrum};
use super::grid::Grid;
use crate::error::{Error, Result};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

/// Spectral differentiation along one axis.
pub trait Diff: Sized {
    fn diff(&self, grid: &Grid, axis: usize, order: usize) -> Result<Self>;
}

/// `d^order f / dx_axis^order`, horizontally by Fourier multiplier and
/// vertically by the Chebyshev matrix power.
pub fn diff<F: Diff>(field: &F, grid: &Grid, axis: usize, order: usize) -> Result<F> {
    field.diff(grid, axis, order)
}

fn check_order(grid: &Grid, order: usize) -> Result<()> {
    if order > grid.max_order() {
        return Err(Error::OrderTooLarge {
            order,
            max: grid.max_order(),
        });
    }
    Ok(())
}

impl Diff for SurfaceField {
    fn diff(&self, grid: &Grid, axis: usize, order: usize) -> Result<Self> {
        check_order(grid, order)?;
        if axis != 1 && axis != 2 {
            return Err(Error::InvalidAxis(axis));
        }
        if order == 0 {
            return Ok(self.clone());
        }
        let spec = self.spectrum(grid);
        Ok(multiply_surface(grid, &spec, |i1, i2| symbol_for(grid, axis, i1, i2, order)).to_physical(grid))
    }
}

impl Diff for VolumeField {
    fn diff(&self, grid: &Grid, axis: usize, order: usize) -> Result<Self> {
        check_order(grid, order)?;
        if order == 0 {
            return Ok(self.clone());
        }
        match axis {
            1 | 2 => {
                let spec = self.spectrum(grid);
                Ok(multiply_volume(grid, &spec, |i1, i2| symbol_for(grid, axis, i1, i2, order))
                    .to_physical(grid))
            }
            3 => Ok(apply_vertical(grid, self, grid.dz(order))),
            _ => Err(Error::InvalidAxis(axis)),
        }
    }
}

fn symbol_for(grid: &Grid, axis: usize, i1: usize, i2: usize, order: usize) -> Complex64 {
    if axis == 1 {
        grid.symbol(1, i1, order)
    } else {
        grid.symbol(2, i2, order)
    }
}

/// Pointwise multiplier on a surface spectrum.
pub fn multiply_surface(
    _grid: &Grid,
    spec: &SurfaceSpectrum,
    m: impl Fn(usize, usize) -> Complex64,
) -> SurfaceSpectrum {
    let mut out = spec.clone();
    for ((i2, i1), c) in out.c.indexed_iter_mut() {
        *c *= m(i1, i2);
    }
    out
}

/// Same multiplier applied at every vertical level.
pub fn multiply_volume(
    grid: &Grid,
    spec: &VolumeSpectrum,
    m: impl Fn(usize, usize) -> Complex64,
) -> VolumeSpectrum {
    let mult = Array2::from_shape_fn((grid.n2, grid.n1), |(i2, i1)| m(i1, i2));
    let mut out = spec.clone();
    for mut level in out.c.axis_iter_mut(Axis(0)) {
        level *= &mult;
    }
    out
}

/// Apply an `n3 x n3` matrix along the vertical axis.
pub fn apply_vertical(grid: &Grid, f: &VolumeField, mat: &Array2<f64>) -> VolumeField {
    let plane = grid.n1 * grid.n2;
    let flat = f
        .v
        .view()
        .into_shape_with_order((grid.n3, plane))
        .expect("contiguous volume");
    let out = mat.dot(&flat);
    VolumeField {
        v: out
            .into_shape_with_order((grid.n3, grid.n2, grid.n1))
            .expect("volume shape"),
    }
}

/// Complex counterpart of [`apply_vertical`].
pub fn apply_vertical_spectrum(grid: &Grid, f: &VolumeSpectrum, mat: &Array2<f64>) -> VolumeSpectrum {
    let plane = grid.n1 * grid.n2;
    let mut out = Array3::<Complex64>::zeros((grid.n3, grid.n2, grid.n1));
    {
        let src = f.c.as_slice().expect("contiguous");
        let dst = out.as_slice_mut().expect("contiguous");
        for i in 0..grid.n3 {
            for k in 0..grid.n3 {
                let w = mat[[i, k]];
                if w == 0.0 {
                    continue;
                }
                let s = &src[k * plane..(k + 1) * plane];
                let d = &mut dst[i * plane..(i + 1) * plane];
                for (d, s) in d.iter_mut().zip(s) {
                    *d += s * w;
                }
            }
        }
    }
    VolumeSpectrum { c: out }
}

/// All three first derivatives, sharing one forward transform.
pub fn gradient(grid: &Grid, f: &VolumeField) -> [VolumeField; 3] {
    let spec = f.spectrum(grid);
    let d1 = multiply_volume(grid, &spec, |i1, _| grid.symbol(1, i1, 1)).to_physical(grid);
    let d2 = multiply_volume(grid, &spec, |_, i2| grid.symbol(2, i2, 1)).to_physical(grid);
    let d3 = apply_vertical(grid, f, grid.dz(1));
    [d1, d2, d3]
}

/// Horizontal gradient of a surface field.
pub fn surface_gradient(grid: &Grid, f: &SurfaceField) -> [SurfaceField; 2] {
    let spec = f.spectrum(grid);
    [
        multiply_surface(grid, &spec, |i1, _| grid.symbol(1, i1, 1)).to_physical(grid),
        multiply_surface(grid, &spec, |_, i2| grid.symbol(2, i2, 1)).to_physical(grid),
    ]
}

/// Horizontal Laplacian of a surface field.
pub fn surface_laplacian(grid: &Grid, f: &SurfaceField) -> SurfaceField {
    let spec = f.spectrum(grid);
    multiply_surface(grid, &spec, |i1, i2| {
        grid.symbol(1, i1, 2) + grid.symbol(2, i2, 2)
    })
    .to_physical(grid)
}

/// Restriction of a volume field to the top boundary `x3 = 0`.
pub fn trace_surface(f: &VolumeField) -> SurfaceField {
    let top = f.v.len_of(Axis(0)) - 1;
    f.level(top)
}

/// Restriction to the bottom `x3 = -b`.
pub fn trace_bottom(f: &VolumeField) -> SurfaceField {
    f.level(0)
}

pub fn integrate_surface(grid: &Grid, f: &SurfaceField) -> f64 {
    f.v.sum() * grid.cell_area()
}

pub fn integrate_volume(grid: &Grid, f: &VolumeField) -> f64 {
    let ca = grid.cell_area();
    f.v.axis_iter(Axis(0))
        .zip(grid.wz.iter())
        .map(|(level, w)| level.sum() * w)
        .sum::<f64>()
        * ca
}

/// `int_Omega f g`.
pub fn inner_volume(grid: &Grid, f: &VolumeField, g: &VolumeField) -> f64 {
    let ca = grid.cell_area();
    let mut acc = 0.0;
    for (k, w) in grid.wz.iter().enumerate() {
        let a = f.v.index_axis(Axis(0), k);
        let b = g.v.index_axis(Axis(0), k);
        let s: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        acc += s * w;
    }
    acc * ca
}

pub fn inner_surface(grid: &Grid, f: &SurfaceField, g: &SurfaceField) -> f64 {
    f.v.iter().zip(g.v.iter()).map(|(x, y)| x * y).sum::<f64>() * grid.cell_area()
}

pub fn l2_volume(grid: &Grid, f: &VolumeField) -> f64 {
    inner_volume(grid, f, f).max(0.0).sqrt()
}

pub fn l2_surface(grid: &Grid, f: &SurfaceField) -> f64 {
    inner_surface(grid, f, f).max(0.0).sqrt()
}

impl SurfaceSpectrum {
    /// `(sum_n (1 + |xi|^2)^s |c_n|^2 L1 L2)^(1/2)`.
    pub fn sobolev_norm(&self, grid: &Grid, s: f64) -> f64 {
        self.sobolev_norm_sq(grid, s).sqrt()
    }

    pub fn sobolev_norm_sq(&self, grid: &Grid, s: f64) -> f64 {
        let mut acc = 0.0;
        for ((i2, i1), c) in self.c.indexed_iter() {
            acc += (1.0 + grid.xi_sq(i1, i2)).powf(s) * c.norm_sqr();
        }
        acc * grid.area()
    }
}

/// Fourier multiplier norm `||f||_{H^s(Sigma)}`.
pub fn sobolev_norm_surface(grid: &Grid, f: &SurfaceField, s: f64) -> Result<f64> {
    Ok(sobolev_norm_surface_sq(grid, f, s)?.sqrt())
}

/// Squared surface norm; the functionals are sums of these.
pub fn sobolev_norm_surface_sq(grid: &Grid, f: &SurfaceField, s: f64) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite("surface field".into()));
    }
    if !f.shape_matches(grid) {
        return Err(Error::ShapeMismatch("surface field does not match grid".into()));
    }
    Ok(f.spectrum(grid).sobolev_norm_sq(grid, s))
}

/// Integer-order norm on the slab: all `d^alpha f` with `|alpha| <= k`,
/// `alpha` over the three spatial directions.
pub fn sobolev_norm_volume(grid: &Grid, f: &VolumeField, k: usize) -> Result<f64> {
    Ok(sobolev_norm_volume_sq(grid, f, k)?.sqrt())
}

pub fn sobolev_norm_volume_sq(grid: &Grid, f: &VolumeField, k: usize) -> Result<f64> {
    check_order(grid, k)?;
    if !f.is_finite() {
        return Err(Error::NonFinite("volume field".into()));
    }
    if !f.shape_matches(grid) {
        return Err(Error::ShapeMismatch("volume field does not match grid".into()));
    }
    let spec = f.spectrum(grid);
    let mut total = 0.0;
    for a3 in 0..=k {
        let g = apply_vertical_spectrum(grid, &spec, grid.dz(a3));
        let rest = k - a3;
        // horizontal multiplier sum over a1 + a2 <= rest
        let weight = Array2::from_shape_fn((grid.n2, grid.n1), |(i2, i1)| {
            let mut w = 0.0;
            for a1 in 0..=rest {
                let s1 = grid.symbol(1, i1, a1).norm_sqr();
                for a2 in 0..=(rest - a1) {
                    w += s1 * grid.symbol(2, i2, a2).norm_sqr();
                }
            }
            w
        });
        for (level, wz) in g.c.axis_iter(Axis(0)).zip(grid.wz.iter()) {
            let s: f64 = level
                .iter()
                .zip(weight.iter())
                .map(|(c, w)| c.norm_sqr() * w)
                .sum();
            total += s * wz;
        }
    }
    Ok(total * grid.area())
}

/// Zero every Fourier mode beyond the 2/3 cutoff.
pub fn dealias_surface(grid: &Grid, f: &SurfaceField) -> SurfaceField {
    truncate_surface(grid, &f.spectrum(grid)).to_physical(grid)
}

pub fn truncate_surface(grid: &Grid, spec: &SurfaceSpectrum) -> SurfaceSpectrum {
    let mut out = spec.clone();
    for ((i2, i1), c) in out.c.indexed_iter_mut() {
        if !grid.is_resolved(i1, i2) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    out
}

pub fn dealias_volume(grid: &Grid, f: &VolumeField) -> VolumeField {
    truncate_volume(grid, &f.spectrum(grid)).to_physical(grid)
}

pub fn truncate_volume(grid: &Grid, spec: &VolumeSpectrum) -> VolumeSpectrum {
    let mut out = spec.clone();
    for ((_, i2, i1), c) in out.c.indexed_iter_mut() {
        if !grid.is_resolved(i1, i2) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Pointwise product with the 2/3-rule truncation applied to the result.
pub fn product_dealiased(grid: &Grid, a: &VolumeField, b: &VolumeField) -> VolumeField {
    dealias_volume(grid, &(a * b))
}

pub fn product_dealiased_surface(grid: &Grid, a: &SurfaceField, b: &SurfaceField) -> SurfaceField {
    dealias_surface(grid, &(a * b))
}
