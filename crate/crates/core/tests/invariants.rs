//! Property tests of structural invariants, driven through the public API.

use convexinterp::busemann::busemann_h;
use convexinterp::grid::{finite_diff, sample};
use convexinterp::interp::{interp_linear, interp_one};
use convexinterp::legendre::{legendre_1d_with, legendre_nd_with, DualLattice, Mode};
use convexinterp::measures::{alpha_profile, variance, weights_from_potential};
use convexinterp::pde::{solve_p_interpolation, SolverParams};
use convexinterp::reinhardt::{containment_margin, reinhardt_interpolate, ShadowGauge};
use convexinterp::{FamilySpec, GridFunction, Lattice, SpaceTimeField};
use proptest::prelude::*;

fn spd() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (0.3f64..3.0, 0.3f64..3.0, -0.9f64..0.9).prop_map(|(a, c, r)| {
        let b = r * (a * c).sqrt();
        [[a, b], [b, c]]
    })
}

fn quad_form(a: &[[f64; 2]; 2], x: [f64; 2]) -> f64 {
    0.5 * (a[0][0] * x[0] * x[0] + 2.0 * a[0][1] * x[0] * x[1] + a[1][1] * x[1] * x[1])
}

/// `max_i (x_i · y − f_i)` by exhaustion.
fn brute_conjugate(f: &GridFunction, y: [f64; 2]) -> f64 {
    let lat = f.lattice();
    (0..lat.len())
        .map(|i| {
            let x = lat.point(i);
            x[0] * y[0] + x[1] * y[1] - f.value(i)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn even_polynomials_sample_evenly(c1 in 0.0f64..2.0, c2 in 0.0f64..1.0, r in 0.5f64..5.0, n in 2usize..20, dim in 1usize..=2) {
        let lat = if dim == 1 { Lattice::line(-r, r, 2 * n + 1) } else { Lattice::square(-r, r, 2 * n + 1) }.unwrap();
        let f = sample(&FamilySpec::EvenPoly { coeffs: vec![1.0, c1, c2] }, &lat).unwrap();
        let (_, gap) = f.evenness_defect().unwrap();
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn matrix_quadratic_hessian_is_reproduced(a in spd(), n in 5usize..25) {
        let lat = Lattice::square(-2.0, 2.0, n).unwrap();
        let f = sample(&FamilySpec::QuadraticMatrix { a }, &lat).unwrap();
        for d in finite_diff(&f).points.iter().flatten() {
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((d.hess[i][j] - a[i][j]).abs() <= 1e-10 * (1.0 + a[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn transform_is_the_lattice_supremum_in_the_plane(a in spd(), shift in -0.5f64..0.5, n in 5usize..12) {
        let lat = Lattice::square(-2.0, 2.0, n).unwrap();
        let f = GridFunction::from_fn(&lat, |x| quad_form(&a, x) + shift * x[0].abs()).unwrap();
        let dual = DualLattice::explicit(Lattice::square(-4.0, 4.0, 11).unwrap());
        let lf = legendre_nd_with(&f, &dual, Mode::LatticeSup).unwrap();
        for j in 0..dual.lattice.len() {
            let want = brute_conjugate(&f, dual.lattice.point(j));
            prop_assert!((lf.value(j) - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", lf.value(j), want);
        }
    }

    #[test]
    fn young_fenchel_holds_on_every_pair(a in 0.2f64..3.0, b in 0.0f64..0.5, c in -1.0f64..1.0) {
        let lat = Lattice::line(-3.0, 3.0, 41).unwrap();
        let f = GridFunction::from_fn(&lat, |x| a * x[0] * x[0] / 2.0 + b * x[0].powi(4) + c * x[0]).unwrap();
        let dual = DualLattice::auto(&f).unwrap();
        let lf = legendre_1d_with(&f, &dual, Mode::LatticeSup).unwrap();
        for i in 0..lat.len() {
            for j in 0..dual.lattice.len() {
                let (x, y) = (lat.point(i)[0], dual.lattice.point(j)[0]);
                prop_assert!(lf.value(j) >= x * y - f.value(i));
            }
        }
    }

    #[test]
    fn pointwise_larger_function_has_smaller_transform(a in 0.2f64..3.0, bumps in proptest::collection::vec(0.0f64..1.0, 41)) {
        let lat = Lattice::line(-3.0, 3.0, 41).unwrap();
        let f = GridFunction::from_fn(&lat, |x| a * x[0] * x[0] / 2.0).unwrap();
        let g = GridFunction::new(lat.clone(), f.values().iter().zip(&bumps).map(|(v, d)| v + d).collect()).unwrap();
        let dual = DualLattice::auto(&f).unwrap();
        let lf = legendre_1d_with(&f, &dual, Mode::LatticeSup).unwrap();
        let lg = legendre_1d_with(&g, &dual, Mode::LatticeSup).unwrap();
        for (u, v) in lf.values().iter().zip(lg.values()) {
            prop_assert!(u >= v);
        }
    }

    #[test]
    fn inf_convolution_minorizes_the_affine_family(l0 in 0.3f64..3.0, l1 in 0.3f64..3.0, dx in -0.5f64..0.5, t in 0.05f64..0.95) {
        let lat = Lattice::line(-3.0, 3.0, 61).unwrap();
        let f0 = sample(&FamilySpec::quadratic(l0), &lat).unwrap();
        let f1 = sample(&FamilySpec::Translated { base: Box::new(FamilySpec::quadratic(l1)), offset: [dx, 0.0] }, &lat).unwrap();
        let one = interp_one(&f0, &f1, t).unwrap();
        let lin = interp_linear(&f0, &f1, t).unwrap();
        for (a, b) in one.values().iter().zip(lin.values()) {
            prop_assert!(*a <= *b + 1e-13 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn variance_ignores_constant_shifts(a in spd(), coeffs in proptest::collection::vec(-1.0f64..1.0, 3), c in -50.0f64..50.0) {
        let lat = Lattice::square(-3.0, 3.0, 21).unwrap();
        let f = sample(&FamilySpec::QuadraticMatrix { a }, &lat).unwrap();
        let mu = weights_from_potential(&f, None).unwrap();
        let u: Vec<f64> = (0..lat.len()).map(|i| {
            let x = lat.point(i);
            coeffs[0] * x[0] + coeffs[1] * x[1] + coeffs[2] * x[0] * x[1]
        }).collect();
        let shifted: Vec<f64> = u.iter().map(|v| v + c).collect();
        let (v0, v1) = (variance(&mu, &u).unwrap(), variance(&mu, &shifted).unwrap());
        prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0 + c * c));
    }

    #[test]
    fn alpha_shifts_by_the_added_constant(l0 in 0.5f64..2.0, l1 in 0.5f64..2.0, c in -5.0f64..5.0) {
        let lat = Lattice::line(-6.0, 6.0, 121).unwrap();
        let field = SpaceTimeField::from_fn(&lat, 0.0, 1.0, 9, |t, x| ((1.0 - t) * l0 + t * l1) * x[0] * x[0] / 2.0).unwrap();
        let p = alpha_profile(&field, None).unwrap();
        let q = alpha_profile(&field.shifted(c).unwrap(), None).unwrap();
        for (a, b) in p.alpha.iter().zip(&q.alpha) {
            prop_assert!((b - a - c).abs() <= 1e-12 * (1.0 + a.abs() + c.abs()));
        }
        for (a, b) in p.alpha_dd_fd.iter().zip(&q.alpha_dd_fd) {
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + c.abs()));
            }
        }
        for (a, b) in p.alpha_dd_int.iter().zip(&q.alpha_dd_int) {
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn ray_functional_is_positively_homogeneous(a in spd(), p in 0.5f64..4.0, lambda in 0.1f64..10.0, angle in 0.0f64..std::f64::consts::TAU) {
        let w = move |x: [f64; 2]| quad_form(&a, x) + 0.1 * (x[0] * x[0] + x[1] * x[1]).sqrt();
        let x = [angle.cos(), angle.sin()];
        let h1 = busemann_h(&w, x, p).unwrap();
        let h2 = busemann_h(&w, [lambda * x[0], lambda * x[1]], p).unwrap();
        prop_assert!((h2 - lambda * h1).abs() <= 1e-8 * lambda * h1);
    }

    #[test]
    fn reinhardt_interpolation_is_swap_symmetric(r1 in 0.3f64..3.0, r2 in 0.3f64..3.0, s in 0.3f64..3.0, k in 1u32..16) {
        let t = k as f64 / 16.0;
        let s0 = ShadowGauge::polydisc(r1, r2, 64).unwrap();
        let s1 = ShadowGauge::ball(s, 64).unwrap();
        let a = reinhardt_interpolate(&s0, &s1, t).unwrap();
        let b = reinhardt_interpolate(&s1, &s0, 1.0 - t).unwrap();
        prop_assert_eq!(a.extent().to_bits(), b.extent().to_bits());
        prop_assert!(a.heights().iter().zip(b.heights()).all(|(u, v)| u.to_bits() == v.to_bits()));
        prop_assert!(containment_margin(&s0, &s1, t).unwrap() >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solver_keeps_boundary_layers_bitwise(l0 in 0.5f64..3.0, l1 in 0.5f64..3.0, p in 1.0f64..6.0, sweeps in 1usize..200) {
        let lat = Lattice::line(-3.0, 3.0, 25).unwrap();
        let f0 = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, l0, 0.05] }, &lat).unwrap();
        let f1 = sample(&FamilySpec::quadratic(l1), &lat).unwrap();
        let params = SolverParams { layers: 9, max_sweeps: sweeps, ..SolverParams::default() };
        let (field, _) = solve_p_interpolation(&f0, &f1, p, &params).unwrap();
        let last = field.layer_count() - 1;
        prop_assert!(field.layer(0).values().iter().zip(f0.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(field.layer(last).values().iter().zip(f1.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
