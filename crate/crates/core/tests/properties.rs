use std::sync::Arc;

use contact_hj::biiso::ParamSlice;
use contact_hj::cli::{export_trajectory, import_trajectory, Format};
use contact_hj::expr::{ConstantField, Expr};
use contact_hj::geometry::{self, shared, ContactSystem, DarbouxChart};
use contact_hj::hje::BoxDomain;
use contact_hj::refint::{Trajectory, TrajectoryMeta};
use proptest::prelude::*;

/// Polynomial in `x1, y1, z` with the given coefficients on a fixed monomial list.
fn polynomial(coeffs: &[f64]) -> String {
    const MONOMIALS: [&str; 8] = ["1", "x1", "y1", "z", "x1*y1", "y1*z", "x1^2*z", "y1^3"];
    coeffs
        .iter()
        .zip(MONOMIALS)
        .map(|(coeff, monomial)| format!("({coeff:?})*{monomial}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn system(coeffs: &[f64]) -> ContactSystem {
    let chart = DarbouxChart::new(1).unwrap();
    let ham = Expr::parse(&polynomial(coeffs), chart.names()).unwrap();
    ContactSystem::new(chart, shared(ham)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contact_field_identities_hold(
        coeffs in prop::collection::vec(-2.0f64..2.0, 8),
        point in prop::collection::vec(-1.5f64..1.5, 3),
    ) {
        let r = geometry::identity_residuals(&system(&coeffs), &point).unwrap();
        prop_assert!(r.max() < 1e-9, "{r:?}");
    }

    #[test]
    fn constant_rescaling_leaves_the_field_unchanged(
        coeffs in prop::collection::vec(-2.0f64..2.0, 8),
        point in prop::collection::vec(-1.5f64..1.5, 3),
        scale in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
    ) {
        let sys = system(&coeffs);
        let field = Arc::new(ConstantField { dim: 3, value: scale });
        let r = geometry::conformal_covariance_residual(&sys, field, &point).unwrap();
        prop_assert!(r < 1e-9 * (1.0 + scale.abs()), "{r}");
    }

    #[test]
    fn csv_export_round_trips_bit_exactly(
        rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 5), 1..20),
    ) {
        let times: Vec<f64> = (0..rows.len()).map(|i| i as f64 * 0.1).collect();
        let tr = Trajectory::new(times, rows, TrajectoryMeta::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tr.csv");
        export_trajectory(&tr, &path, Format::Csv).unwrap();
        let back = import_trajectory(&path).unwrap();
        prop_assert_eq!(
            back.points.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
            tr.points.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn parameter_slices_project_back(
        fixed in -2.0f64..2.0,
        mu in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let free = BoxDomain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let slice = ParamSlice::fixing(3, &[(1, fixed)], free).unwrap();
        let lambda = slice.embed(&mu);
        prop_assert_eq!(lambda[1], fixed);
        let (back, miss) = slice.project(&lambda).unwrap();
        prop_assert!(miss < 1e-12);
        prop_assert!(back.iter().zip(&mu).all(|(lhs, rhs)| (lhs - rhs).abs() < 1e-12));
    }
}
