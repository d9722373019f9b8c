use super::grid::Grid;
use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Real scalar on the periodic cross-section, stored physically as `(n2, n1)`
/// so that `x1` runs fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub v: Array2<f64>,
}

/// Fourier coefficients of a surface function, same slot layout as the FFT.
/// `c[[i2, i1]]` is the averaged coefficient `f^(n)` of mode `(m1[i1], m2[i2])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpectrum {
    pub c: Array2<Complex64>,
}

/// Real scalar on the slab, stored as `(n3, n2, n1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeField {
    pub v: Array3<f64>,
}

/// Horizontal Fourier coefficients of a volume field at every vertical node.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSpectrum {
    pub c: Array3<Complex64>,
}

/// 3-vector on the slab.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub c: [VolumeField; 3],
}

/// 3-vector on the cross-section (traces, normals, boundary data).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVector {
    pub c: [SurfaceField; 3],
}

/// 3x3 tensor on the slab, `c[i][j]` is entry `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub c: [[VolumeField; 3]; 3],
}

impl SurfaceField {
    pub fn zeros(grid: &Grid) -> Self {
        SurfaceField {
            v: Array2::zeros((grid.n2, grid.n1)),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        SurfaceField {
            v: Array2::from_elem((grid.n2, grid.n1), value),
        }
    }

    /// Sample `f(x1, x2)` on the grid.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        SurfaceField {
            v: Array2::from_shape_fn((grid.n2, grid.n1), |(i2, i1)| f(grid.x1[i1], grid.x2[i2])),
        }
    }

    pub fn spectrum(&self, grid: &Grid) -> SurfaceSpectrum {
        let mut buf: Vec<Complex64> = self.v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.fft_plane(&mut buf, false);
        SurfaceSpectrum {
            c: Array2::from_shape_vec((grid.n2, grid.n1), buf).expect("plane shape"),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SurfaceField { v: self.v.mapv(f) }
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.v.mean().unwrap_or(0.0)
    }

    /// Constant vertical extension into the slab.
    pub fn extend_constant(&self, grid: &Grid) -> VolumeField {
        let mut out = VolumeField::zeros(grid);
        for mut level in out.v.axis_iter_mut(Axis(0)) {
            level.assign(&self.v);
        }
        out
    }

    pub fn shape_matches(&self, grid: &Grid) -> bool {
        self.v.dim() == (grid.n2, grid.n1)
    }
}

impl SurfaceSpectrum {
    pub fn zeros(grid: &Grid) -> Self {
        SurfaceSpectrum {
            c: Array2::zeros((grid.n2, grid.n1)),
        }
    }

    /// Back to physical space; the imaginary residue of Hermitian input is dropped.
    pub fn to_physical(&self, grid: &Grid) -> SurfaceField {
        let mut buf: Vec<Complex64> = self.c.iter().copied().collect();
        grid.fft_plane(&mut buf, true);
        SurfaceField {
            v: Array2::from_shape_vec((grid.n2, grid.n1), buf.into_iter().map(|c| c.re).collect())
                .expect("plane shape"),
        }
    }

    /// Largest deviation from Hermitian symmetry `c(-n) = conj c(n)`.
    pub fn hermitian_defect(&self, grid: &Grid) -> f64 {
        let (n1, n2) = (grid.n1, grid.n2);
        let mut worst = 0.0f64;
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let j1 = (n1 - i1) % n1;
                let j2 = (n2 - i2) % n2;
                worst = worst.max((self.c[[i2, i1]] - self.c[[j2, j1]].conj()).norm());
            }
        }
        worst
    }
}

impl VolumeField {
    pub fn zeros(grid: &Grid) -> Self {
        VolumeField {
            v: Array3::zeros((grid.n3, grid.n2, grid.n1)),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        VolumeField {
            v: Array3::from_elem((grid.n3, grid.n2, grid.n1), value),
        }
    }

    /// Sample `f(x1, x2, x3)` on the grid.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        VolumeField {
            v: Array3::from_shape_fn((grid.n3, grid.n2, grid.n1), |(k, i2, i1)| {
                f(grid.x1[i1], grid.x2[i2], grid.x3[k])
            }),
        }
    }

    /// Field depending on `x3` only.
    pub fn from_profile(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |_, _, z| f(z))
    }

    pub fn spectrum(&self, grid: &Grid) -> VolumeSpectrum {
        let plane = grid.n1 * grid.n2;
        let mut buf: Vec<Complex64> = self.v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for chunk in buf.chunks_mut(plane) {
            grid.fft_plane(chunk, false);
        }
        VolumeSpectrum {
            c: Array3::from_shape_vec((grid.n3, grid.n2, grid.n1), buf).expect("volume shape"),
        }
    }

    /// Horizontal plane at vertical node `k`.
    pub fn level(&self, k: usize) -> SurfaceField {
        SurfaceField {
            v: self.v.index_axis(Axis(0), k).to_owned(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        VolumeField { v: self.v.mapv(f) }
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    pub fn shape_matches(&self, grid: &Grid) -> bool {
        self.v.dim() == (grid.n3, grid.n2, grid.n1)
    }

    /// Multiply each level `k` by `profile[k]`.
    pub fn scale_levels(&self, profile: &ndarray::Array1<f64>) -> Self {
        let mut out = self.clone();
        for (mut level, &p) in out.v.axis_iter_mut(Axis(0)).zip(profile.iter()) {
            level *= p;
        }
        out
    }

    /// Pointwise `a * b + c`.
    pub fn fma(a: &VolumeField, b: &VolumeField, c: &VolumeField) -> VolumeField {
        let mut out = c.clone();
        Zip::from(&mut out.v)
            .and(&a.v)
            .and(&b.v)
            .for_each(|o, &x, &y| *o += x * y);
        out
    }
}

impl VolumeSpectrum {
    pub fn zeros(grid: &Grid) -> Self {
        VolumeSpectrum {
            c: Array3::zeros((grid.n3, grid.n2, grid.n1)),
        }
    }

    pub fn to_physical(&self, grid: &Grid) -> VolumeField {
        let plane = grid.n1 * grid.n2;
        let mut buf: Vec<Complex64> = self.c.iter().copied().collect();
        for chunk in buf.chunks_mut(plane) {
            grid.fft_plane(chunk, true);
        }
        VolumeField {
            v: Array3::from_shape_vec(
                (grid.n3, grid.n2, grid.n1),
                buf.into_iter().map(|c| c.re).collect(),
            )
            .expect("volume shape"),
        }
    }
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            c: [VolumeField::zeros(grid), VolumeField::zeros(grid), VolumeField::zeros(grid)],
        }
    }

    pub fn new(c1: VolumeField, c2: VolumeField, c3: VolumeField) -> Self {
        VectorField { c: [c1, c2, c3] }
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        VectorField {
            c: [&self.c[0] * s, &self.c[1] * s, &self.c[2] * s],
        }
    }

    pub fn map_components(&self, f: impl Fn(&VolumeField) -> VolumeField) -> Self {
        VectorField {
            c: [f(&self.c[0]), f(&self.c[1]), f(&self.c[2])],
        }
    }

    pub fn trace_top(&self) -> SurfaceVector {
        let top = self.c[0].v.dim().0 - 1;
        SurfaceVector {
            c: [self.c[0].level(top), self.c[1].level(top), self.c[2].level(top)],
        }
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            c: [&self.c[0] + &rhs.c[0], &self.c[1] + &rhs.c[1], &self.c[2] + &rhs.c[2]],
        }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            c: [&self.c[0] - &rhs.c[0], &self.c[1] - &rhs.c[1], &self.c[2] - &rhs.c[2]],
        }
    }
}

impl SurfaceVector {
    pub fn zeros(grid: &Grid) -> Self {
        SurfaceVector {
            c: [SurfaceField::zeros(grid), SurfaceField::zeros(grid), SurfaceField::zeros(grid)],
        }
    }

    pub fn new(c1: SurfaceField, c2: SurfaceField, c3: SurfaceField) -> Self {
        SurfaceVector { c: [c1, c2, c3] }
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn dot(&self, other: &SurfaceVector) -> SurfaceField {
        &(&(&self.c[0] * &other.c[0]) + &(&self.c[1] * &other.c[1])) + &(&self.c[2] * &other.c[2])
    }
}

impl Add for &SurfaceVector {
    type Output = SurfaceVector;
    fn add(self, rhs: &SurfaceVector) -> SurfaceVector {
        SurfaceVector {
            c: [&self.c[0] + &rhs.c[0], &self.c[1] + &rhs.c[1], &self.c[2] + &rhs.c[2]],
        }
    }
}

impl Sub for &SurfaceVector {
    type Output = SurfaceVector;
    fn sub(self, rhs: &SurfaceVector) -> SurfaceVector {
        SurfaceVector {
            c: [&self.c[0] - &rhs.c[0], &self.c[1] - &rhs.c[1], &self.c[2] - &rhs.c[2]],
        }
    }
}

impl TensorField {
    pub fn zeros(grid: &Grid) -> Self {
        let z = || VolumeField::zeros(grid);
        TensorField {
            c: [[z(), z(), z()], [z(), z(), z()], [z(), z(), z()]],
        }
    }

    pub fn identity(grid: &Grid) -> Self {
        let mut t = Self::zeros(grid);
        for i in 0..3 {
            t.c[i][i] = VolumeField::constant(grid, 1.0);
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.c
            .iter()
            .flat_map(|r| r.iter())
            .map(|c| c.max_abs())
            .fold(0.0, f64::max)
    }
}

macro_rules! field_ops {
    ($t:ident) => {
        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                $t { v: &self.v + &rhs.v }
            }
        }
        impl Add for $t {
            type Output = $t;
            fn add(mut self, rhs: $t) -> $t {
                self.v += &rhs.v;
                self
            }
        }
        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                $t { v: &self.v - &rhs.v }
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(mut self, rhs: $t) -> $t {
                self.v -= &rhs.v;
                self
            }
        }
        impl Mul for &$t {
            type Output = $t;
            fn mul(self, rhs: &$t) -> $t {
                $t { v: &self.v * &rhs.v }
            }
        }
        impl Mul for $t {
            type Output = $t;
            fn mul(mut self, rhs: $t) -> $t {
                self.v *= &rhs.v;
                self
            }
        }
        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                $t { v: &self.v * rhs }
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(mut self, rhs: f64) -> $t {
                self.v *= rhs;
                self
            }
        }
        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                $t { v: -&self.v }
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t { v: -self.v }
            }
        }
        impl AddAssign<&$t> for $t {
            fn add_assign(&mut self, rhs: &$t) {
                self.v += &rhs.v;
            }
        }
        impl SubAssign<&$t> for $t {
            fn sub_assign(&mut self, rhs: &$t) {
                self.v -= &rhs.v;
            }
        }
    };
}

field_ops!(SurfaceField);
field_ops!(VolumeField);
