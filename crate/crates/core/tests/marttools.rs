use haarlab::counterexample::build_instance;
use haarlab::filtration::{random_signed_function, random_tree, MeasureLaw, RandomTreeConfig};
use haarlab::marttools::*;
use haarlab::operator::expectation_matrix;
use haarlab::suite::{random_active_tree, random_symbol, random_weight, rng_for};
use haarlab::{LeafFunction, Measure, Rational, Scalar};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn law() -> MeasureLaw {
    MeasureLaw::log_uniform(1e-2, 1e2)
}

#[test]
fn averages_on_the_seven_atom_tree() {
    let inst = build_instance(Rational::from_ratio(1, 100)).unwrap();
    let f = &inst.filtration;
    let nu = Measure::reference(f);
    let root = f.find("I").unwrap();
    let avg = average(f, inst.weight.w(), root, &nu).unwrap();
    assert_eq!(avg, Rational::from_ratio(199, 100));
    let a2 = a2_characteristic(f, &inst.weight);
    let e = Rational::from_ratio(1, 100);
    let one = Rational::from_ratio(1, 1);
    let expected = (Rational::from_ratio(2, 1) - &e) * (&one - &e + &e * &e);
    assert_eq!(a2.value, expected);
    // Differences of u at the root vanish by symmetry of the two halves.
    let d = martingale_difference(f, inst.weight.u(), root, &nu).unwrap();
    assert!(d.is_zero());
}

#[test]
fn two_leaf_characteristic_and_indicator_norm() {
    let f = haarlab::Filtration::<f64>::from_json(
        r#"{"atoms":[{"id":"r","parent":null,"measure":null},{"id":"a","parent":"r","measure":1},{"id":"b","parent":"r","measure":1}]}"#,
    )
    .unwrap();
    let w = Weight::new(&f, LeafFunction(vec![2.0, 0.5])).unwrap();
    assert!((a2_characteristic(&f, &w).value - 1.5625).abs() < 1e-15);
    let root = f.roots()[0];
    let one = LeafFunction::indicator(&f, root);
    let mean_w = average(&f, w.w(), root, &Measure::reference(&f)).unwrap();
    assert!((weighted_norm(&f, &one, w.w()) - (mean_w * 2.0).sqrt()).abs() < 1e-15);
}

#[test]
fn expectation_norm_is_the_local_characteristic() {
    for seed in 0..10 {
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let w = random_weight(&f, &law(), &mut rng_for(seed, 0));
        let a2 = a2_characteristic(&f, &w);
        let nu = Measure::reference(&f);
        for id in f.ids() {
            let e = expectation_matrix(&f, &nu, id);
            let n = haarlab::operator::WeightedOperator::on_space(e, leaf_masses(&f, w.w())).unwrap().norm().unwrap();
            assert!((n * n - a2.per_atom[id.0]).abs() <= 1e-9 * a2.per_atom[id.0]);
        }
    }
}

#[test]
fn spectral_norm_bounds_sampled_ratios() {
    for seed in 0..5 {
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let mut rng = rng_for(seed, 1);
        let w = random_weight(&f, &law(), &mut rng);
        let sigma = random_symbol(&f, &mut rng);
        let t = multiplier_operator(&f, &w, &sigma);
        let norm = t.norm().unwrap();
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let g = random_signed_function(&f, &mut rng);
            let tg = apply_multiplier(&f, &sigma, &g, None);
            let d = weighted_norm(&f, &g, w.w());
            if d > 0.0 {
                best = best.max(weighted_norm(&f, &tg, w.w()) / d);
            }
        }
        assert!(best <= norm * (1.0 + 1e-6), "{best} > {norm}");
    }
}

#[test]
fn unweighted_multipliers_are_contractions() {
    for seed in 0..10 {
        let f = random_active_tree(seed, &RandomTreeConfig::new(5, 3)).unwrap();
        let w = Weight::constant(&f, 1.0).unwrap();
        let r = multiplier_norm_scan(&f, &w, ScanMode::RandomContinuous, 64, seed).unwrap();
        assert!(r.max_norm <= 1.0 + 1e-9);
        let p = partial_sum_sup(&f, &w, 1e-9).unwrap();
        assert!(p.max_norm <= 1.0 + 1e-9 && p.holds);
    }
}

#[test]
fn scan_report_has_the_documented_fields() {
    let f = random_active_tree(4, &RandomTreeConfig::new(3, 3)).unwrap();
    let w = random_weight(&f, &law(), &mut rng_for(4, 2));
    let r = multiplier_norm_scan(&f, &w, ScanMode::Generation, 1 << 10, 9).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in ["max_norm", "argmax_sigma", "a2", "ratio", "mode", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["mode"], "generation");
    assert!(matches!(
        multiplier_norm_scan(&f, &w, ScanMode::RandomContinuous, 0, 1),
        Err(haarlab::HaarError::InvalidParameter(_))
    ));
}

#[test]
fn reduction_chain_on_the_seven_atom_tree() {
    let inst = build_instance(Rational::from_ratio(1, 10)).unwrap();
    let f = &inst.filtration;
    let r = reduction_chain(f, &inst.weight, f.roots()[0], None).unwrap();
    assert!(r.max_orthogonality_residual.is_zero() && r.max_pythagoras_residual.is_zero());
    assert!(r.weighted_haar_dominated);
    let j1 = f.find("J1").unwrap();
    assert!(r.entries.iter().any(|e| e.atom == j1 && !e.gamma_w.is_zero()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_without_weight(seed in 0u64..10_000) {
        let f = random_tree(seed, &RandomTreeConfig::new(5, 3)).unwrap();
        let g = random_signed_function(&f, &mut rng_for(seed, 3));
        let nu = Measure::reference(&f);
        let one = LeafFunction::constant(&f, 1.0);
        let mut total = 0.0;
        for &r in f.roots() {
            let e = average(&f, &g, r, &nu).unwrap();
            total += e * e * f.measure(r);
        }
        for id in f.ids() {
            total += weighted_norm_sq(&f, &martingale_difference(&f, &g, id, &nu).unwrap(), &one);
        }
        let norm = weighted_norm_sq(&f, &g, &one);
        prop_assert!((total - norm).abs() <= 1e-9 * norm.max(1e-300));
    }

    #[test]
    fn characteristic_is_scale_and_swap_invariant(seed in 0u64..10_000, c in 1e-3f64..1e3) {
        let f = random_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let w = random_weight(&f, &law(), &mut rng_for(seed, 4));
        let a = a2_characteristic(&f, &w).value;
        prop_assert!((a2_characteristic(&f, &w.scaled(&c)).value - a).abs() <= 1e-12 * a);
        prop_assert!((a2_characteristic(&f, &w.dual()).value - a).abs() <= 1e-12 * a);
        prop_assert!(a >= 1.0 - 1e-12);
    }

    #[test]
    fn restriction_matches_a_zeroed_symbol(seed in 0u64..10_000) {
        let f = random_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let mut rng = rng_for(seed, 5);
        let sigma = random_symbol(&f, &mut rng);
        let g = random_signed_function(&f, &mut rng);
        let root = haarlab::AtomId(rng.gen_range(0..f.atom_count()));
        let a = apply_multiplier(&f, &sigma, &g, Some(root));
        let b = apply_multiplier(&f, &sigma.restricted(&f, root), &g, None);
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn weighted_haar_function_is_dominated(seed in 0u64..10_000) {
        let f = random_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let w = random_weight(&f, &law(), &mut rng_for(seed, 6));
        let r = reduction_chain(&f, &w, f.roots()[0], None).unwrap();
        prop_assert!(r.weighted_haar_dominated);
        for e in &r.entries {
            prop_assert!(e.pythagoras_residual.abs() <= 1e-9 * e.h_norm_sq.max(1e-300));
        }
        let d = dual_form_check(&f, &w, &random_signed_function(&f, &mut rng_for(seed, 7)));
        prop_assert!(d.relative_residual < 1e-9);
    }
}
