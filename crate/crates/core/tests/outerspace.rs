use haarlab::filtration::{random_tree, RandomTreeConfig};
use haarlab::outerspace::*;
use haarlab::suite::{coarse_signed, coarse_tree, random_active_tree, rng_for};
use haarlab::{AtomId, Filtration, LeafFunction, Measure, Rational, Scalar, TreeFunction};
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::Rng;

fn small(seed: u64) -> Filtration<Rational> {
    let mut s = seed;
    loop {
        let f = random_tree(s, &RandomTreeConfig::new(4, 3)).unwrap();
        if f.atom_count() <= 10 {
            return coarse_tree(&f, 16);
        }
        s += 1 << 32;
    }
}

fn signed_tree(n: usize, seed: u64) -> TreeFunction<Rational> {
    let mut rng = rng_for(seed, 11);
    let v = LeafFunction((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    TreeFunction(coarse_signed(&v, 8).0)
}

#[test]
fn subtree_and_empty_sets() {
    let f = small(3);
    let nu = Measure::reference(&f);
    for id in f.ids() {
        assert_eq!(&outer_measure(&f, &OuterSet::subtree(&f, id), &nu), f.measure(id));
    }
    assert!(outer_measure(&f, &OuterSet::empty(&f), &nu).is_zero());
}

#[test]
fn indicator_sizes_and_norms() {
    let f = small(5);
    let nu = Measure::reference(&f);
    let j = AtomId(f.atom_count() - 1);
    let mut v = vec![Rational::from_ratio(0, 1); f.atom_count()];
    v[j.0] = Rational::from_ratio(1, 1);
    let ind = TreeFunction(v);
    let s = sizes(&f, &ind, Size::Sup, &nu).unwrap();
    for i in f.ids() {
        assert_eq!(s[i.0], if f.contains(i, j) { 1.0 } else { 0.0 });
    }
    let half = Rational::from_ratio(1, 2);
    assert_eq!(&superlevel_outer_measure(&f, &ind, &half, Size::Sup, &nu).unwrap(), f.measure(j));
    assert_eq!(outer_linf_norm(&f, &ind, Size::Sup, &nu).unwrap().0, 1.0);
    // c times the indicator of a whole subtree: c mu(I)^{1/p}.
    let root = f.roots()[0];
    let c = 3.0;
    let block = TreeFunction(
        f.ids().map(|i| if f.contains(root, i) { Rational::from_ratio(3, 1) } else { Rational::from_ratio(0, 1) }).collect(),
    );
    for p in [1.0, 2.0, 3.5] {
        let n = outer_lp_norm(&f, &block, p, Size::Sup, &nu).unwrap();
        let expected = c * f.measure(root).to_f64().powf(1.0 / p);
        assert!((n - expected).abs() <= 1e-12 * expected);
    }
    assert!(matches!(
        outer_lp_norm(&f, &block, 2.0, Size::Power(2.0), &nu),
        Err(haarlab::HaarError::UnsupportedSize(_))
    ));
}

#[test]
fn power_size_matches_direct_summation() {
    let f = small(8);
    let nu = Measure::reference(&f);
    let v = signed_tree(f.atom_count(), 8);
    let s = sizes(&f, &v, Size::Power(2.0), &nu).unwrap();
    for i in f.ids() {
        let sum: f64 = f
            .atoms_below(i)
            .unwrap()
            .iter()
            .map(|j| v.0[j.0].to_f64().powi(2) * f.measure(*j).to_f64())
            .sum();
        assert!((s[i.0] - (sum / f.measure(i).to_f64()).sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn duality_with_constant_second_function() {
    let f = small(9);
    let nu = Measure::reference(&f);
    let i = f.roots()[0];
    let ind = TreeFunction(f.ids().map(|j| Rational::from_ratio(f.contains(i, j) as i64, 1)).collect());
    let one = TreeFunction(vec![Rational::from_ratio(1, 1); f.atom_count()]);
    let r = duality_check(&f, &ind, &one, &nu);
    let packing: Rational = f.atoms_below(i).unwrap().iter().fold(Rational::from_ratio(0, 1), |a, j| a + f.measure(*j));
    assert_eq!(r.lhs, packing.to_f64());
    assert!(r.holds);
    let zero = TreeFunction(vec![Rational::from_ratio(0, 1); f.atom_count()]);
    assert_eq!(duality_check(&f, &ind, &zero, &nu).lhs, 0.0);
}

#[test]
fn embedding_checks_on_trivial_inputs() {
    let f = random_active_tree(2, &RandomTreeConfig::new(4, 3)).unwrap();
    let nu = Measure::reference(&f);
    let one = LeafFunction::constant(&f, 1.0);
    let total = f.total_mass();
    let r = averaging_embedding_check(&f, &nu, &one);
    assert!((r.lhs - total.sqrt()).abs() <= 1e-12 * total.sqrt() && r.holds);
    let w = haarlab::marttools::Weight::constant(&f, 1.0).unwrap();
    let r = bilinear_embedding_check(&f, &w, &one, &one);
    assert!((r.lhs - total).abs() <= 1e-12 * total && (r.rhs - 4.0 * total).abs() <= 1e-12 * total);
    let m = maximal_function(&f, &nu, &LeafFunction::constant(&f, 2.5));
    assert!(m.0.iter().all(|v| (v - 2.5).abs() < 1e-15));
    let h = reciprocal_average_bound(&f, &LeafFunction::constant(&f, 2.0), f.roots()[0]).unwrap();
    assert!((h.lhs - 2.0 * total).abs() <= 1e-12 * total && h.holds);
}

#[test]
fn maximal_function_of_a_leaf_indicator() {
    let f = random_active_tree(12, &RandomTreeConfig::new(4, 3)).unwrap();
    let nu = Measure::reference(&f);
    let k = f.leaf_count() / 2;
    let mut v = vec![0.0; f.leaf_count()];
    v[k] = 1.0;
    let m = maximal_function(&f, &nu, &LeafFunction(v));
    let leaf = f.leaves()[k];
    for (s, &other) in f.leaves().iter().enumerate() {
        let expected = f
            .ancestors(other)
            .filter(|a| f.contains(*a, leaf))
            .map(|a| f.measure(leaf) / f.measure(a))
            .fold(0.0, f64::max);
        assert!((m.0[s] - expected).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outer_measure_is_monotone_and_subadditive(seed in 0u64..10_000, a in any::<u64>(), b in any::<u64>()) {
        let f = small(seed);
        let n = f.atom_count();
        let nu = Measure::reference(&f);
        let full = (1u64 << n) - 1;
        let (sa, sb) = (OuterSet::from_mask(n, a & full), OuterSet::from_mask(n, b & full));
        let union = OuterSet::from_mask(n, (a | b) & full);
        let inter = OuterSet::from_mask(n, a & b & full);
        let m = |s: &OuterSet| outer_measure(&f, s, &nu);
        prop_assert!(m(&inter) <= m(&sa) && m(&sa) <= m(&union));
        prop_assert!(m(&union) <= m(&sa) + m(&sb));
    }

    #[test]
    fn superlevel_is_non_increasing_and_vanishes_at_the_top(seed in 0u64..10_000) {
        let f = small(seed);
        let nu = Measure::reference(&f);
        let v = signed_tree(f.atom_count(), seed);
        let (levels, masses) = superlevel_profile(&f, &v, &nu);
        for w in masses.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let top = levels.last().unwrap();
        prop_assert!(superlevel_outer_measure(&f, &v, top, Size::Sup, &nu).unwrap().is_zero());
        for (j, b) in levels[..levels.len() - 1].iter().enumerate() {
            prop_assert_eq!(&superlevel_outer_measure(&f, &v, b, Size::Sup, &nu).unwrap(), &masses[j]);
        }
    }

    #[test]
    fn outer_norms_are_homogeneous_and_monotone(seed in 0u64..10_000, c in 1i64..20) {
        let f = small(seed);
        let nu = Measure::reference(&f);
        let v = signed_tree(f.atom_count(), seed);
        let cr = Rational::from_ratio(c, 4);
        let scaled = TreeFunction(v.0.iter().map(|x| x * &cr).collect());
        prop_assert_eq!(outer_l1_norm(&f, &scaled, &nu), outer_l1_norm(&f, &v, &nu) * &cr);
        prop_assert_eq!(outer_l2_norm_sq(&f, &scaled, &nu), outer_l2_norm_sq(&f, &v, &nu) * &cr * &cr);
        let bigger = TreeFunction(v.0.iter().map(|x| x.abs() + Rational::from_ratio(1, 8)).collect());
        prop_assert!(outer_l1_norm(&f, &v, &nu) <= outer_l1_norm(&f, &bigger, &nu));
    }
}

#[test]
fn superlevel_brute_force_with_null_atoms() {
    let f = small(21);
    let mut d = vec![Rational::from_ratio(1, 2); f.leaf_count()];
    d[0] = Rational::from_ratio(0, 1);
    let mu = Measure::with_density(&f, &LeafFunction(d)).unwrap();
    let v = signed_tree(f.atom_count(), 21);
    for lambda in [0.0, 0.1, 0.3, 0.55, 0.9] {
        let dp = superlevel_outer_measure(&f, &v, &Rational::from_f64(lambda), Size::Sup, &mu).unwrap();
        assert_eq!(dp, brute_force_superlevel(&f, &v, lambda, Size::Sup, &mu).unwrap());
    }
}
