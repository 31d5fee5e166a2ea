use proptest::prelude::*;
use slipflow::diagnostics::{h1_seminorm_sq, kinetic_energy};
use slipflow::grid::{integrate, FaceField, GridSpec, ScalarField, VelocityField};
use slipflow::momentum::{pressure_project, SimConfig};
use slipflow::operators::{divergence, gradient};

fn grid(nx: usize, ny: usize, periodic: bool) -> GridSpec<f64> {
    if periodic {
        GridSpec::channel(nx, ny, 1.0, 1.5).unwrap()
    } else {
        GridSpec::new(nx, ny, 1.0, 1.5).unwrap()
    }
}

fn faces(g: GridSpec<f64>, values: &[f64]) -> FaceField<f64> {
    let mut f = FaceField::zeros(g);
    f.unpack(&values[..g.num_face_unknowns()]);
    f
}

fn cells(g: GridSpec<f64>, values: &[f64]) -> ScalarField<f64> {
    ScalarField::from_interior(g, &values[..g.num_cells()]).unwrap()
}

fn case() -> impl Strategy<Value = (usize, usize, bool, Vec<f64>, Vec<f64>)> {
    (3usize..9, 3usize..9, any::<bool>(), prop::collection::vec(-1.0f64..1.0, 256), prop::collection::vec(-1.0f64..1.0, 256))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_minus_adjoint_of_divergence((nx, ny, periodic, a, b) in case()) {
        let g = grid(nx, ny, periodic);
        let u = faces(g, &a);
        let p = cells(g, &b);
        let lhs = integrate(&divergence(&u).zip_map(&p, |d, q| d * q).unwrap());
        let rhs = -gradient(&p).inner(&u);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn divergence_is_conservative((nx, ny, periodic, a, _b) in case()) {
        let g = grid(nx, ny, periodic);
        let total = integrate(&divergence(&faces(g, &a)));
        prop_assert!(total.abs() < 1e-12);
    }

    #[test]
    fn projection_is_impermeable_and_solenoidal((nx, ny, periodic, a, b) in case()) {
        let g = grid(nx, ny, periodic);
        let u_star = VelocityField::from_faces(faces(g, &a), 0.5).unwrap();
        let rho = cells(g, &b).map(|v| 1.5 + v);
        let config = SimConfig::new(0.0, 0.5, 0.1, 1.0);
        let (u, _) = pressure_project(&u_star, &rho, 0.1, &config).unwrap();
        u.check_impermeable().unwrap();
        let div = divergence(u.faces());
        let div_l2 = integrate(&div.map(|d| d * d)).sqrt();
        prop_assert!(div_l2 <= 1e-9 * (1.0 + u_star.norm_l2()), "div {div_l2}");
    }

    #[test]
    fn energies_are_quadratic((nx, ny, periodic, a, b) in case(), s in -3.0f64..3.0) {
        let g = grid(nx, ny, periodic);
        let u = VelocityField::from_faces(faces(g, &a), 1.0).unwrap();
        let rho = cells(g, &b).map(|v| 1.5 + v);
        let su = u.scaled(s);
        let ke = kinetic_energy(&rho, &u).unwrap();
        prop_assert!((kinetic_energy(&rho, &su).unwrap() - s * s * ke).abs() <= 1e-12 * (1.0 + ke));
        let h1 = h1_seminorm_sq(u.faces());
        prop_assert!((h1_seminorm_sq(su.faces()) - s * s * h1).abs() <= 1e-10 * (1.0 + h1));
    }
}
