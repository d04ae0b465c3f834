use proptest::prelude::*;

use khl_core::constants::{diag_cap, ConstantBundle};
use khl_core::dist::{build_distribution, diagonal_moment, moment, CoefficientVector};
use khl_core::schur::{cap_largest, diagonalize, final_vector, majorizes, SquaresVector};
use khl_core::verify::{
    verify_diag_stability, verify_gauss_stability, verify_procedure_composition, verify_t_step, DeficitReport,
};

fn raw_coefficients(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 1..=max_n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn both_stability_bounds_hold(raw in raw_coefficients(9), p in prop::sample::select(vec![3.0, 3.5, 4.0, 5.0, 6.5])) {
        let a = CoefficientVector::new(raw).unwrap();
        prop_assert!(verify_gauss_stability(&a, p).unwrap().passed);
        if p > 3.0 {
            prop_assert!(verify_diag_stability(&a, p).unwrap().passed);
        }
    }

    #[test]
    fn diagonal_vector_maximizes_moment(raw in raw_coefficients(8), p in 3.0f64..7.0) {
        let a = CoefficientVector::new(raw).unwrap();
        let d = build_distribution(&a).unwrap();
        prop_assert!(moment(&d, p) <= diagonal_moment(a.len(), p) * (1.0 + 1e-12));
    }

    #[test]
    fn diagonalization_ends_at_diagonal_and_is_majorized(raw in raw_coefficients(8)) {
        let x = SquaresVector::from_coefficients(&CoefficientVector::new(raw).unwrap());
        let steps = diagonalize(&x);
        let end = final_vector(&x, &steps);
        prop_assert!(end.is_diagonal());
        prop_assert!(majorizes(&end, &x));
    }

    #[test]
    fn steps_compose_for_large_p(raw in raw_coefficients(8), p in 4.5f64..8.0) {
        let a = CoefficientVector::new(raw).unwrap();
        prop_assert!(verify_procedure_composition(&a, p).unwrap().passed);
        if a.len() >= 3 {
            let x = SquaresVector::from_coefficients(&a);
            let capped = final_vector(&x, &cap_largest(&x, diag_cap(a.len()).min(x.largest())).unwrap());
            prop_assert!(verify_t_step(&capped.to_coefficients().unwrap(), p).unwrap().passed);
        }
    }

    #[test]
    fn reports_round_trip_through_json(raw in raw_coefficients(6), p in 3.0f64..6.0) {
        let report = verify_gauss_stability(&CoefficientVector::new(raw).unwrap(), p).unwrap();
        let back: DeficitReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        prop_assert_eq!(back, report);
    }

    #[test]
    fn constants_round_trip_through_json(p in 3.0f64..10.0) {
        let bundle = ConstantBundle::compute(p).unwrap();
        let back: ConstantBundle = serde_json::from_str(&serde_json::to_string(&bundle).unwrap()).unwrap();
        prop_assert_eq!(back, bundle);
    }
}
