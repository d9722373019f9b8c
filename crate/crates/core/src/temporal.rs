//! Backward finite differences in time over the snapshot history.
use crate::equilibrium::Snapshot;
use crate::error::{Error, Result};
use crate::spectral::{SurfaceField, VectorField, VolumeField};

/// Relative spacing deviation tolerated before a history is called non-uniform.
/// Times are generated as `t0 + n dt`, so honest histories deviate only by
/// rounding of `t`.
pub const SPACING_TOL: f64 = 1e-9;

/// Fornberg's recursion: weights `w[d][i]` such that
/// `f^(d)(z) ~ sum_i w[d][i] f(x_i)` for `d = 0..=m`.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil over the newest `j_max + 1` snapshots evaluated at the newest time.
#[derive(Debug, Clone)]
pub struct TimeStencil {
    pub times: Vec<f64>,
    /// `weights[j][i]` for derivative order `j` and snapshot `i` (oldest first).
    pub weights: Vec<Vec<f64>>,
}

impl TimeStencil {
    pub fn new(times: &[f64], j_max: usize) -> Result<Self> {
        if times.len() < j_max + 1 {
            return Err(Error::InsufficientHistory {
                needed: j_max + 1,
                have: times.len(),
            });
        }
        let times = times[times.len() - (j_max + 1)..].to_vec();
        check_spacing(&times)?;
        let z = *times.last().expect("nonempty");
        Ok(TimeStencil {
            weights: fornberg_weights(z, &times, j_max),
            times,
        })
    }

    pub fn j_max(&self) -> usize {
        self.weights.len() - 1
    }

    /// Accuracy order of the `j`-th derivative.
    pub fn order(&self, j: usize) -> usize {
        self.times.len() - j
    }

    /// Apply the `j`-th derivative weights to per-snapshot values (oldest first).
    pub fn apply<T: Combine>(&self, j: usize, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.times.len());
        T::combine(&self.weights[j], values)
    }
}

fn check_spacing(times: &[f64]) -> Result<()> {
    if times.len() < 3 {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonUniformSpacing(f64::INFINITY));
        }
        return Ok(());
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    let dev = h.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean.abs();
    if !(mean > 0.0) || dev > SPACING_TOL {
        return Err(Error::NonUniformSpacing(dev));
    }
    Ok(())
}

/// Linear combination with real weights.
pub trait Combine: Sized + Clone {
    fn combine(w: &[f64], v: &[Self]) -> Self;
}

impl Combine for VolumeField {
    fn combine(w: &[f64], v: &[Self]) -> Self {
        let mut out = &v[0] * w[0];
        for (wi, vi) in w.iter().zip(v).skip(1) {
            out.v.scaled_add(*wi, &vi.v);
        }
        out
    }
}

impl Combine for SurfaceField {
    fn combine(w: &[f64], v: &[Self]) -> Self {
        let mut out = &v[0] * w[0];
        for (wi, vi) in w.iter().zip(v).skip(1) {
            out.v.scaled_add(*wi, &vi.v);
        }
        out
    }
}

impl Combine for VectorField {
    fn combine(w: &[f64], v: &[Self]) -> Self {
        VectorField {
            c: std::array::from_fn(|c| {
                let comps: Vec<VolumeField> = v.iter().map(|x| x.c[c].clone()).collect();
                VolumeField::combine(w, &comps)
            }),
        }
    }
}

impl Combine for f64 {
    fn combine(w: &[f64], v: &[Self]) -> Self {
        w.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// `d_t^j` of `u`, `p`, `eta` at the newest snapshot for `j = 0..=j_max`.
#[derive(Debug, Clone)]
pub struct TemporalDerivatives {
    pub t: f64,
    pub u: Vec<VectorField>,
    pub p: Vec<VolumeField>,
    pub eta: Vec<SurfaceField>,
    /// Accuracy order of each stage.
    pub orders: Vec<usize>,
}

impl TemporalDerivatives {
    pub fn j_max(&self) -> usize {
        self.u.len() - 1
    }
}

/// Backward differences of order `j_max + 1 - j` from the newest `j_max + 1`
/// snapshots of `history` (oldest first).
pub fn temporal_derivatives<'a, I>(history: I, j_max: usize) -> Result<TemporalDerivatives>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    let snaps: Vec<&Snapshot> = history.into_iter().collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let st = TimeStencil::new(&times, j_max)?;
    let used = &snaps[snaps.len() - (j_max + 1)..];
    let us: Vec<VectorField> = used.iter().map(|s| s.u.clone()).collect();
    let ps: Vec<VolumeField> = used.iter().map(|s| s.p.clone()).collect();
    let es: Vec<SurfaceField> = used.iter().map(|s| s.eta.clone()).collect();
    Ok(TemporalDerivatives {
        t: *times.last().expect("nonempty"),
        u: (0..=j_max).map(|j| st.apply(j, &us)).collect(),
        p: (0..=j_max).map(|j| st.apply(j, &ps)).collect(),
        eta: (0..=j_max).map(|j| st.apply(j, &es)).collect(),
        orders: (0..=j_max).map(|j| st.order(j)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_match_textbook_backward_differences() {
        let w = fornberg_weights(2.0, &[0.0, 1.0, 2.0], 2);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(&w[0], &[0.0, 0.0, 1.0]));
        assert!(close(&w[1], &[0.5, -2.0, 1.5]));
        assert!(close(&w[2], &[1.0, -2.0, 1.0]));
    }

    #[test]
    fn stencil_is_exact_on_polynomials() {
        let times: Vec<f64> = (0..5).map(|k| 0.3 + 0.1 * k as f64).collect();
        let st = TimeStencil::new(&times, 4).unwrap();
        let f: Vec<f64> = times.iter().map(|t| t.powi(4) - t).collect();
        let t = 0.7f64;
        let exact = [t.powi(4) - t, 4.0 * t.powi(3) - 1.0, 12.0 * t * t, 24.0 * t, 24.0];
        for (j, e) in exact.iter().enumerate() {
            assert!((st.apply(j, &f) - e).abs() < 1e-8 * (1.0 + e.abs()), "j={j}");
        }
    }

    #[test]
    fn rejects_short_or_uneven_history() {
        assert!(matches!(
            TimeStencil::new(&[0.0, 1.0], 2),
            Err(Error::InsufficientHistory { needed: 3, have: 2 })
        ));
        assert!(matches!(
            TimeStencil::new(&[0.0, 1.0, 2.5], 2),
            Err(Error::NonUniformSpacing(_))
        ));
    }
}
