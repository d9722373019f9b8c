use proptest::prelude::*;
use shearflow::geometry::{build_geometry, piola_defect, poisson_extend, Params};
use shearflow::spectral::ops::trace_surface;
use shearflow::spectral::{diff, make_grid, Grid, SurfaceField, VolumeField};
use std::f64::consts::PI;

fn grid() -> Grid {
    make_grid(2.0 * PI, 2.0 * PI, 1.0, 12, 12, 33).unwrap()
}

/// Band-limited surface with nodal maximum `amp`.
fn surface(g: &Grid, c: &[f64], amp: f64) -> SurfaceField {
    let f = SurfaceField::from_fn(g, |x, y| {
        c[0] * x.cos() + c[1] * y.sin() + c[2] * (x + y).cos() + c[3] * (2.0 * x - y).sin() + c[4] * (3.0 * y).cos()
    });
    let m = f.max_abs();
    if m == 0.0 {
        f
    } else {
        f.map(|v| v * amp / m)
    }
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn piola_identity_holds(c in coefs(), amp in 0.0f64..0.1) {
        let g = grid();
        let p = Params::for_grid(&g, 1.0, 0.5);
        let cache = build_geometry(&surface(&g, &c, amp), None, &g, &p).unwrap();
        for row in piola_defect(&g, &cache) {
            prop_assert!(row.max_abs() <= 1e-8, "{}", row.max_abs());
        }
    }

    #[test]
    fn cofactor_column_is_the_normal_on_top(c in coefs(), amp in 0.0f64..0.1) {
        let g = grid();
        let p = Params::for_grid(&g, 0.0, 0.0);
        let cache = build_geometry(&surface(&g, &c, amp), None, &g, &p).unwrap();
        let ja = cache.j_matrix();
        for j in 0..3 {
            let top = trace_surface(&ja.c[j][2]);
            prop_assert!((&top - &cache.normal.c[j]).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn jacobian_rate_is_linear_in_surface_rate(c in coefs(), d in coefs()) {
        let g = grid();
        let p = Params::for_grid(&g, 1.0, 0.5);
        let eta = surface(&g, &c, 0.05);
        let rate = surface(&g, &d, 0.02);
        let h = 1e-3;
        let now = build_geometry(&eta, Some(&rate), &g, &p).unwrap();
        let later = build_geometry(&(&eta + &(&rate * h)), None, &g, &p).unwrap();
        let fd = &(&later.j - &now.j) * (1.0 / h);
        let bt = VolumeField::from_profile(&g, |z| 1.0 + z / g.b);
        let d3 = diff(&now.dt_eta_bar, &g, 3, 1).unwrap();
        let formula = &(&now.dt_eta_bar * (1.0 / g.b)) + &(&bt * &d3);
        prop_assert!((&fd - &formula).max_abs() <= 1e-8 * (1.0 + formula.max_abs()));
    }

    #[test]
    fn extension_is_linear(c in coefs(), d in coefs(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = grid();
        let f = surface(&g, &c, 1.0);
        let h = surface(&g, &d, 1.0);
        let lhs = poisson_extend(&g, &(&(&f * a) + &(&h * b)));
        let rhs = &(&poisson_extend(&g, &f) * a) + &(&poisson_extend(&g, &h) * b);
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-13);
    }
}
