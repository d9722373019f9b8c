use super::cheb;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Default ceiling on derivative order for `diff` and volume Sobolev norms.
pub const DEFAULT_MAX_ORDER: usize = 8;

/// Tensor grid on the slab `Sigma x (-b, 0)`: Fourier in `x1, x2`,
/// Chebyshev–Gauss–Lobatto in `x3`.
#[derive(Clone)]
pub struct Grid {
    pub l1: f64,
    pub l2: f64,
    pub b: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub x1: Array1<f64>,
    pub x2: Array1<f64>,
    /// Ascending vertical nodes; `x3[0] = -b`, `x3[n3 - 1] = 0`.
    pub x3: Array1<f64>,
    /// Signed integer mode index per FFT slot.
    pub m1: Vec<i64>,
    pub m2: Vec<i64>,
    /// Wavenumbers `2 pi m / L` per FFT slot.
    pub xi1: Array1<f64>,
    pub xi2: Array1<f64>,
    /// Clenshaw–Curtis weights on `[-b, 0]`.
    pub wz: Array1<f64>,
    max_order: usize,
    dz: Vec<Array2<f64>>,
    fft1: Arc<dyn Fft<f64>>,
    ifft1: Arc<dyn Fft<f64>>,
    fft2: Arc<dyn Fft<f64>>,
    ifft2: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("b", &self.b)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("n3", &self.n3)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.l1 == other.l1
            && self.l2 == other.l2
            && self.b == other.b
            && self.n1 == other.n1
            && self.n2 == other.n2
            && self.n3 == other.n3
    }
}

fn mode_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Build a grid; mode counts must be even and at least 4, `n3 >= 5`.
pub fn make_grid(l1: f64, l2: f64, b: f64, n1: usize, n2: usize, n3: usize) -> Result<Grid> {
    Grid::with_max_order(l1, l2, b, n1, n2, n3, DEFAULT_MAX_ORDER)
}

impl Grid {
    pub fn with_max_order(
        l1: f64,
        l2: f64,
        b: f64,
        n1: usize,
        n2: usize,
        n3: usize,
        max_order: usize,
    ) -> Result<Grid> {
        for (name, v) in [("L1", l1), ("L2", l2), ("b", b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, n) in [("N1", n1), ("N2", n2)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} must be even and >= 4, got {n}")));
            }
        }
        if n3 < 5 {
            return Err(Error::InvalidGrid(format!("N3 must be >= 5, got {n3}")));
        }
        if max_order == 0 {
            return Err(Error::InvalidGrid("max derivative order must be >= 1".into()));
        }
        let x1 = Array1::from_iter((0..n1).map(|i| l1 * i as f64 / n1 as f64));
        let x2 = Array1::from_iter((0..n2).map(|i| l2 * i as f64 / n2 as f64));
        let t = cheb::lobatto_nodes(n3);
        let mut x3 = t.mapv(|t| 0.5 * b * (t - 1.0));
        x3[0] = -b;
        x3[n3 - 1] = 0.0;
        let m1: Vec<i64> = (0..n1).map(|i| mode_index(i, n1)).collect();
        let m2: Vec<i64> = (0..n2).map(|i| mode_index(i, n2)).collect();
        let xi1 = Array1::from_iter(m1.iter().map(|&m| 2.0 * PI * m as f64 / l1));
        let xi2 = Array1::from_iter(m2.iter().map(|&m| 2.0 * PI * m as f64 / l2));
        let wz = cheb::clenshaw_curtis(n3).mapv(|w| 0.5 * b * w);
        let d1 = cheb::diff_matrix(n3).mapv(|v| 2.0 * v / b);
        let mut dz = vec![Array2::eye(n3), d1.clone()];
        for k in 2..=max_order {
            let next = dz[k - 1].dot(&d1);
            dz.push(next);
        }
        let mut planner = FftPlanner::<f64>::new();
        Ok(Grid {
            l1,
            l2,
            b,
            n1,
            n2,
            n3,
            x1,
            x2,
            x3,
            m1,
            m2,
            xi1,
            xi2,
            wz,
            max_order,
            dz,
            fft1: planner.plan_fft_forward(n1),
            ifft1: planner.plan_fft_inverse(n1),
            fft2: planner.plan_fft_forward(n2),
            ifft2: planner.plan_fft_inverse(n2),
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Vertical differentiation matrix of the given power (0 = identity).
    pub fn dz(&self, order: usize) -> &Array2<f64> {
        &self.dz[order]
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn volume(&self) -> f64 {
        self.l1 * self.l2 * self.b
    }

    /// Trapezoid weight of one horizontal node.
    pub fn cell_area(&self) -> f64 {
        self.area() / (self.n1 * self.n2) as f64
    }

    pub fn top(&self) -> usize {
        self.n3 - 1
    }

    /// `b~ = 1 + x3 / b` at each vertical node.
    pub fn btilde(&self) -> Array1<f64> {
        self.x3.mapv(|z| 1.0 + z / self.b)
    }

    /// Largest retained mode index under the 2/3 rule.
    pub fn dealias_cut(&self) -> (i64, i64) {
        (((self.n1 - 1) / 3) as i64, ((self.n2 - 1) / 3) as i64)
    }

    pub fn is_resolved(&self, i1: usize, i2: usize) -> bool {
        let (c1, c2) = self.dealias_cut();
        self.m1[i1].abs() <= c1 && self.m2[i2].abs() <= c2
    }

    pub fn is_nyquist(&self, i1: usize, i2: usize) -> bool {
        i1 == self.n1 / 2 || i2 == self.n2 / 2
    }

    /// Symbol of `d^order / dx_axis^order` for the slot index; odd orders
    /// vanish at the Nyquist slot so derivatives of real fields stay real.
    pub fn symbol(&self, axis: usize, idx: usize, order: usize) -> Complex64 {
        let (xi, nyq) = match axis {
            1 => (self.xi1[idx], idx == self.n1 / 2),
            2 => (self.xi2[idx], idx == self.n2 / 2),
            _ => unreachable!("horizontal axis only"),
        };
        if order == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if nyq && order % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, xi).powu(order as u32)
    }

    /// `|xi|^2` for the slot pair.
    pub fn xi_sq(&self, i1: usize, i2: usize) -> f64 {
        self.xi1[i1].powi(2) + self.xi2[i2].powi(2)
    }

    /// In-place 2D FFT of a row-major `(n2, n1)` plane. The forward transform
    /// is normalised so the result holds the averaged coefficients `f^(n)`.
    pub(crate) fn fft_plane(&self, plane: &mut [Complex64], inverse: bool) {
        let (n1, n2) = (self.n1, self.n2);
        debug_assert_eq!(plane.len(), n1 * n2);
        let (f1, f2) = if inverse {
            (&self.ifft1, &self.ifft2)
        } else {
            (&self.fft1, &self.fft2)
        };
        for row in plane.chunks_mut(n1) {
            f1.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                col[i2] = plane[i2 * n1 + i1];
            }
            f2.process(&mut col);
            for i2 in 0..n2 {
                plane[i2 * n1 + i1] = col[i2];
            }
        }
        if !inverse {
            let s = 1.0 / (n1 * n2) as f64;
            plane.iter_mut().for_each(|c| *c *= s);
        }
    }
}
