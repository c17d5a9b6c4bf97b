//! Property-based invariants of the operator kernels and cone predicates.

use proptest::prelude::*;

use hesslab::hermgeo::{ScalarField, SpectralGrid};
use hesslab::symfun::{
    cone_contains, eval_jet, rho_k, sigma_all, ConeSpec, LambdaVec, Membership, OperatorFamily,
    OperatorSpec,
};

fn lambda_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, n)
}

fn positive_lambda(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..4.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lambda_vec_sorts_descending(v in lambda_strategy(4)) {
        let lam = LambdaVec::new(v).unwrap();
        let e = lam.entries();
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn value_is_permutation_invariant(v in positive_lambda(3), shift in 0usize..3) {
        // positive tuples are inside every domain cone
        let ops = [
            OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 2 }, 3).unwrap(),
            OperatorSpec::new(OperatorFamily::SigmaQuotient { k: 3, l: 1 }, 3).unwrap(),
            OperatorSpec::new(OperatorFamily::LogRhoK { k: 2 }, 3).unwrap(),
            OperatorSpec::new(OperatorFamily::SumArctan, 3).unwrap(),
        ];
        let mut w = v.clone();
        w.rotate_left(shift);
        for op in &ops {
            let a = eval_jet(op, &LambdaVec::new(v.clone()).unwrap()).unwrap().value;
            let b = eval_jet(op, &LambdaVec::new(w.clone()).unwrap()).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn homogeneity_of_degree_one_families(v in positive_lambda(3), t in prop::sample::select(vec![0.5f64, 2.0, 10.0])) {
        let ops = [
            OperatorSpec::new(OperatorFamily::SigmaKRoot { k: 2 }, 3).unwrap(),
            OperatorSpec::new(OperatorFamily::SigmaQuotient { k: 3, l: 1 }, 3).unwrap(),
        ];
        for op in &ops {
            let f1 = eval_jet(op, &LambdaVec::new(v.clone()).unwrap()).unwrap().value;
            let scaled: Vec<f64> = v.iter().map(|x| t * x).collect();
            let ft = eval_jet(op, &LambdaVec::new(scaled).unwrap()).unwrap().value;
            prop_assert!((ft - t * f1).abs() <= 1e-12 * (1.0 + ft.abs()));
        }
    }

    #[test]
    fn rho_sigma_identities(v in lambda_strategy(5)) {
        let lam = LambdaVec::new(v).unwrap();
        let sig = sigma_all(&lam);
        let r1 = rho_k(&lam, 1).unwrap();
        let rn = rho_k(&lam, 5).unwrap();
        prop_assert!((r1 - sig[5]).abs() <= 1e-12 * (1.0 + sig[5].abs()));
        prop_assert!((rn - sig[1]).abs() <= 1e-12 * (1.0 + sig[1].abs()));
    }

    #[test]
    fn cone_nesting(v in lambda_strategy(4)) {
        // inside(Gamma_n) => inside(Gamma_k) => inside(Gamma_1), and
        // inside(Gamma_n) = inside(P_1) subset of inside(P_k)
        let lam = LambdaVec::new(v).unwrap();
        let inside = |c: ConeSpec| cone_contains(c, &lam) == Membership::Inside;
        if inside(ConeSpec::GammaN) {
            for k in 1..=4usize {
                prop_assert!(inside(ConeSpec::GammaK(k)), "Gamma_{k} fails");
                prop_assert!(inside(ConeSpec::PK(k)), "P_{k} fails");
            }
        }
        for k in 2..=4usize {
            if inside(ConeSpec::GammaK(k)) {
                prop_assert!(inside(ConeSpec::GammaK(k - 1)));
            }
            if inside(ConeSpec::PK(k - 1)) {
                prop_assert!(inside(ConeSpec::PK(k)));
            }
        }
    }

    #[test]
    fn gradient_positive_inside_cone(v in positive_lambda(3)) {
        let ops = [
            OperatorSpec::new(OperatorFamily::SigmaKOverKm1 { k: 2 }, 3).unwrap(),
            OperatorSpec::new(OperatorFamily::LogRhoK { k: 1 }, 3).unwrap(),
        ];
        for op in &ops {
            let jet = eval_jet(op, &LambdaVec::new(v.clone()).unwrap()).unwrap();
            prop_assert!(jet.grad.iter().all(|&g| g > 0.0));
        }
    }

    #[test]
    fn scalar_field_binary_roundtrip(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = SpectralGrid::new(2, 4).unwrap();
        let f = ScalarField::from_fn(&grid, |x| {
            a * (2.0 * std::f64::consts::PI * x[0]).cos() + b * x[2]
        });
        let mut buf = Vec::new();
        f.save(&mut buf).unwrap();
        let g = ScalarField::load(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(f, g);
    }
}
