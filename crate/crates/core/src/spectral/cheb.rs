//! Chebyshev–Gauss–Lobatto machinery on the reference interval [-1, 1].
//!
//! Nodes are ordered ascending, `t_k = -cos(pi k / M)` with `M = n - 1`, so
//! index 0 is the bottom of the slab and index `n - 1` the top.
use ndarray::{Array1, Array2};
use std::f64::consts::PI;

/// Ascending Chebyshev–Gauss–Lobatto nodes on [-1, 1].
pub fn lobatto_nodes(n: usize) -> Array1<f64> {
    let m = (n - 1) as f64;
    Array1::from_iter((0..n).map(|k| {
        // symmetric sine form keeps the nodes exactly antisymmetric
        let arg = PI * (2.0 * k as f64 - m) / (2.0 * m);
        arg.sin()
    }))
}

/// Barycentric weights of the Lobatto nodes, `(-1)^k` halved at the ends.
fn lobatto_bary(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == n - 1 {
                0.5 * s
            } else {
                s
            }
        })
        .collect()
}

/// Collocation differentiation matrix on arbitrary distinct nodes given
/// their barycentric weights. Diagonal uses the negative-sum trick.
pub fn diff_matrix_from(nodes: &[f64], bary: &[f64]) -> Array2<f64> {
    let n = nodes.len();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[[i, j]] = v;
                row_sum += v;
            }
        }
        d[[i, i]] = -row_sum;
    }
    d
}

/// First-derivative matrix on the Lobatto nodes of [-1, 1].
pub fn diff_matrix(n: usize) -> Array2<f64> {
    let x = lobatto_nodes(n);
    diff_matrix_from(x.as_slice().unwrap(), &lobatto_bary(n))
}

/// Clenshaw–Curtis weights for the Lobatto nodes of [-1, 1].
pub fn clenshaw_curtis(n: usize) -> Array1<f64> {
    let m = n - 1;
    let mut w = Array1::<f64>::zeros(n);
    let mf = m as f64;
    if m == 0 {
        w[0] = 2.0;
        return w;
    }
    let interior = |k: usize| -> f64 {
        let theta = PI * k as f64 / mf;
        let mut v = 1.0;
        if m % 2 == 0 {
            for j in 1..m / 2 {
                v -= 2.0 * (2.0 * j as f64 * theta).cos() / (4.0 * (j * j) as f64 - 1.0);
            }
            v -= (mf * theta).cos() / (mf * mf - 1.0);
        } else {
            for j in 1..=(m - 1) / 2 {
                v -= 2.0 * (2.0 * j as f64 * theta).cos() / (4.0 * (j * j) as f64 - 1.0);
            }
        }
        2.0 * v / mf
    };
    let end = if m % 2 == 0 {
        1.0 / (mf * mf - 1.0)
    } else {
        1.0 / (mf * mf)
    };
    w[0] = end;
    w[m] = end;
    for k in 1..m {
        // node k in descending-cos order equals node m-k ascending; weights are symmetric
        w[k] = interior(k);
    }
    w
}

/// Chebyshev coefficients `c_j` such that `f(t) = sum_j c_j T_j(t)` interpolates
/// the values given at the ascending Lobatto nodes.
pub fn coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let m = n - 1;
    let mf = m as f64;
    // node k ascending is cos(pi (m-k)/m)
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for (k, &v) in values.iter().enumerate() {
                let theta = PI * (m - k) as f64 / mf;
                let half = if k == 0 || k == m { 0.5 } else { 1.0 };
                acc += half * v * (j as f64 * theta).cos();
            }
            let scale = if j == 0 || j == m { 1.0 } else { 2.0 };
            scale * acc / mf
        })
        .collect()
}

/// Evaluate a Chebyshev series at `t` with Clenshaw's recurrence.
pub fn evaluate(coeffs: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + coeffs.first().copied().unwrap_or(0.0)
}

/// Barycentric weights for arbitrary nodes, computed from the product formula.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut p = 1.0;
            for k in 0..n {
                if k != j {
                    // factor 2 keeps products O(1) on [-1, 1]
                    p *= 2.0 * (nodes[j] - nodes[k]);
                }
            }
            1.0 / p
        })
        .collect()
}

/// Matrix mapping values at `from` nodes to the interpolating polynomial's
/// values at `to` nodes.
pub fn interpolation_matrix(from: &[f64], to: &[f64]) -> Array2<f64> {
    let w = barycentric_weights(from);
    let mut m = Array2::<f64>::zeros((to.len(), from.len()));
    for (i, &x) in to.iter().enumerate() {
        if let Some(j) = from.iter().position(|&f| (f - x).abs() < 1e-15) {
            m[[i, j]] = 1.0;
            continue;
        }
        let terms: Vec<f64> = from
            .iter()
            .zip(&w)
            .map(|(&f, &wj)| wj / (x - f))
            .collect();
        let denom: f64 = terms.iter().sum();
        for (j, t) in terms.iter().enumerate() {
            m[[i, j]] = t / denom;
        }
    }
    m
}
