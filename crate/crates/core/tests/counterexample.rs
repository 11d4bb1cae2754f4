use haarlab::counterexample::*;
use haarlab::{HaarError, Rational, Scalar};
use proptest::prelude::*;

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

// Independent closed forms: ||h1||_u^2 = 1 - e + e^2, ||h2||_w^2 = 1/e + e/(1-e).
fn weighted_norm_oracle(e: f64) -> f64 {
    ((1.0 - e + e * e) * (1.0 / e + e / (1.0 - e))).sqrt()
}

#[test]
fn exact_claims_hold_for_rational_epsilons() {
    for (n, d) in [(1, 4), (1, 10), (1, 100), (1, 1000), (49, 100), (1, 3)] {
        let inst = build_instance(q(n, d)).unwrap();
        let r = verify_instance(&inst).unwrap();
        assert!(r.all_hold, "{r:#?}");
        assert_eq!(r.h1_norm, 1.0);
        assert!(r.certificate.residual_hs_sq > 0.0);
        assert!(r.certificate.image_of_h1_outside_span);
        let e = n as f64 / d as f64;
        assert!((r.norm_weighted - weighted_norm_oracle(e)).abs() <= 1e-12 * r.norm_weighted);
        assert!((r.a2_tree - (2.0 - e) * (1.0 - e + e * e)).abs() <= 1e-12);
    }
}

#[test]
fn float_backend_agrees_with_rationals() {
    for e in [0.25, 0.1, 0.01, 0.001] {
        let rf = verify_instance(&build_instance(e).unwrap()).unwrap();
        let rq = verify_instance(&build_instance(Rational::parse(&e.to_string()).unwrap()).unwrap()).unwrap();
        assert!(rf.all_hold, "{rf:#?}");
        assert!((rf.norm_weighted - rq.norm_weighted).abs() <= 1e-9 * rq.norm_weighted);
        assert!((rf.norm_weighted_spectral - rq.norm_weighted).abs() <= 1e-9 * rq.norm_weighted);
    }
}

#[test]
fn lower_bounds_at_decades() {
    // (4e)^{-1/2}: sqrt(10)/2, 5, sqrt(1000)/2, 50.
    let expected = [10f64.sqrt() / 2.0, 5.0, 1000f64.sqrt() / 2.0, 50.0];
    for (k, b) in expected.iter().enumerate() {
        let e = q(1, 10i64.pow(k as u32 + 1));
        let r = verify_instance(&build_instance(e).unwrap()).unwrap();
        assert!((r.paper_lower_bound - b).abs() <= 1e-12 * b);
        assert!(r.norm_weighted >= *b);
    }
}

#[test]
fn weighted_norm_at_one_percent() {
    let r = verify_instance(&build_instance(q(1, 100)).unwrap()).unwrap();
    assert!((r.norm_weighted - 9.950_879_3).abs() < 1e-6, "{}", r.norm_weighted);
    assert!((r.a2_tree - 1.970_299).abs() < 1e-9);
    assert_eq!(r.a2_tree_witness, "I");
    assert_eq!(r.a2_unions_witness, vec!["I1", "I2", "I4"]);
    assert!(r.a2_unions <= 3.0);
}

#[test]
fn sweep_is_monotone_and_blows_up_like_inverse_root() {
    let eps: Vec<Rational> = (1..=6).map(|k| q(1, 2 * 4i64.pow(k))).collect();
    let rows = sweep(&eps).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].norm_weighted > w[0].norm_weighted);
    }
    for r in &rows {
        let s = r.norm_weighted * r.epsilon.sqrt();
        assert!((0.5..=2.0).contains(&s), "{r:?}");
        assert!(r.a2_tree <= 2.0 && r.a2_unions <= 3.0 && r.norm_unweighted <= 2f64.sqrt());
    }
}

#[test]
fn direct_sum_norm_is_the_largest_block() {
    let eps = [0.25, 0.05, 0.01];
    let ds = direct_sum(&eps).unwrap();
    assert_eq!(ds.filtration.roots().len(), 3);
    let n = ds.weighted_norm().unwrap();
    assert!((n - weighted_norm_oracle(0.01)).abs() <= 1e-9 * n);
    assert!(ds.a2() <= 2.0);
}

#[test]
fn rejects_epsilon_outside_the_open_interval() {
    for e in [q(1, 2), q(0, 1), q(3, 4), q(-1, 8)] {
        assert!(matches!(build_instance(e), Err(HaarError::EpsilonOutOfRange(_))));
    }
    assert!(direct_sum(&[0.1, 0.5]).is_err());
}

proptest! {
    #[test]
    fn claims_hold_across_the_interval(e in 1e-6f64..0.499) {
        let r = verify_instance(&build_instance(e).unwrap()).unwrap();
        prop_assert!(r.all_hold, "{:#?}", r);
        prop_assert!((r.norm_weighted - weighted_norm_oracle(e)).abs() <= 1e-9 * r.norm_weighted);
    }
}
