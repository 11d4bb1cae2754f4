use haarlab::carleson::*;
use haarlab::counterexample::build_instance;
use haarlab::filtration::{random_tree, MeasureLaw, RandomTreeConfig};
use haarlab::marttools::Weight;
use haarlab::outerspace::outer_linf_s1;
use haarlab::suite::{coarse_density, coarse_tree, random_weight, rng_for};
use haarlab::{LeafFunction, Measure, Rational, Scalar, TreeFunction};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn rational_instance(seed: u64) -> (haarlab::Filtration<Rational>, Weight<Rational>) {
    let f = random_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
    let w = random_weight(&f, &MeasureLaw::log_uniform(0.1, 10.0), &mut rng_for(seed, 0));
    let fr = coarse_tree(&f, 8);
    let wr = Weight::new(&fr, coarse_density(w.w(), 8)).unwrap();
    (fr, wr)
}

#[test]
fn tau_vanishes_at_the_symmetric_root() {
    let inst = build_instance(Rational::from_ratio(1, 100)).unwrap();
    let f = &inst.filtration;
    let tau = tau_sequence(f, &inst.weight);
    assert!(tau.0[f.find("I").unwrap().0].is_zero());
    assert!(!tau.0[f.find("J1").unwrap().0].is_zero());
}

#[test]
fn packing_of_zero_is_zero() {
    let (f, _) = rational_instance(1);
    let zero = TreeFunction(vec![Rational::from_ratio(0, 1); f.atom_count()]);
    assert!(packing_constant(&f, &zero, None).unwrap().constant.is_zero());
    let g = LeafFunction::constant(&f, Rational::from_ratio(1, 1));
    assert!(carleson_embedding_check(&f, &Measure::reference(&f), &zero, &g).unwrap().holds);
}

#[test]
fn report_serializes_with_the_documented_fields() {
    let (f, w) = rational_instance(2);
    let r = packing_constant(&f, &rho_sequence(&f, &w), None).unwrap();
    let v = r.to_json(&f);
    for key in ["constant", "witness", "per_atom_ratios"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tau_is_mean_weight_times_gamma(seed in 0u64..10_000) {
        let (f, w) = rational_instance(seed);
        let nu = Measure::reference(&f);
        let aw = f.averages(w.w(), &nu);
        let (tau, gamma) = (tau_sequence(&f, &w), gamma_sequence(&f, &w));
        for i in f.ids() {
            prop_assert_eq!(&tau.0[i.0], &(&aw.0[i.0] * &gamma.0[i.0]));
        }
    }

    #[test]
    fn rho_is_below_the_geometric_mean(seed in 0u64..10_000) {
        // Cauchy-Schwarz over children against the two one-sided square sums.
        let (f, w) = rational_instance(seed);
        let nu = Measure::reference(&f);
        let (au, aw) = (f.averages(w.u(), &nu), f.averages(w.w(), &nu));
        let rho = rho_sequence(&f, &w);
        for i in f.ids() {
            let a = f.atom(i);
            let (mut su, mut sw) = (Rational::from_ratio(0, 1), Rational::from_ratio(0, 1));
            for c in &a.children {
                let th = f.measure(*c) / f.measure(i);
                let du = &au.0[c.0] - &au.0[i.0];
                let dw = &aw.0[c.0] - &aw.0[i.0];
                su += &du * &du * &th;
                sw += &dw * &dw * &th;
            }
            prop_assert!(&rho.0[i.0] * &rho.0[i.0] <= su * sw);
            prop_assert!(rho.0[i.0] >= Rational::from_ratio(0, 1));
        }
    }

    #[test]
    fn packing_is_monotone_homogeneous_and_matches_the_double_sum(seed in 0u64..10_000, c in 1i64..9) {
        let (f, w) = rational_instance(seed);
        let rho = rho_sequence(&f, &w);
        let tau = tau_sequence(&f, &w);
        let sum = TreeFunction(rho.0.iter().zip(&tau.0).map(|(a, b)| a + b).collect());
        let k = |a: &TreeFunction<Rational>| packing_constant(&f, a, None).unwrap().constant;
        prop_assert!(k(&rho) <= k(&sum));
        let cr = Rational::from_ratio(c, 3);
        let scaled = TreeFunction(rho.0.iter().map(|x| x * &cr).collect());
        prop_assert_eq!(k(&scaled), k(&rho) * &cr);
        let naive = f.ids().map(|i0| {
            f.atoms_below(i0).unwrap().iter().fold(Rational::from_ratio(0, 1), |acc, j| acc + &rho.0[j.0] * f.measure(*j))
                / f.measure(i0)
        }).fold(Rational::from_ratio(0, 1), |a, b| if b > a { b } else { a });
        prop_assert_eq!(&k(&rho), &naive);
        let (linf, _) = outer_linf_s1(&f, &rho, &Measure::reference(&f));
        prop_assert_eq!(linf, naive);
    }

    #[test]
    fn embedding_holds_with_factor_four(seed in 0u64..10_000) {
        let (f, w) = rational_instance(seed);
        let mut rng = rng_for(seed, 1);
        let g = LeafFunction((0..f.leaf_count()).map(|_| Rational::from_ratio(rng.gen_range(-8..=8), 8)).collect());
        let um = w.u_measure(&f);
        prop_assert!(carleson_embedding_check(&f, &um, &gamma_sequence(&f, &w), &g).unwrap().holds);
        prop_assert!(carleson_embedding_check(&f, &Measure::reference(&f), &rho_sequence(&f, &w), &g).unwrap().holds);
        let root = f.roots()[0];
        let ind = LeafFunction::indicator(&f, root);
        let r = carleson_embedding_check(&f, &um, &tau_sequence(&f, &w), &ind).unwrap();
        prop_assert!(r.lhs <= r.rhs / 4.0 * (1.0 + 1e-12));
    }
}
