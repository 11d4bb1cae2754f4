use haarlab::counterexample::build_instance;
use haarlab::filtration::{random_tree, MeasureLaw, MeasureValue, RandomTreeConfig, TreeSpec};
use haarlab::suite::coarse_tree;
use haarlab::{AtomId, Filtration, HaarError, Rational, Scalar};
use proptest::prelude::*;

#[test]
fn leaf_only_measures_are_summed_upwards() {
    let spec = TreeSpec::new()
        .leaf_measures_only()
        .atom("r", None, None)
        .atom("a", Some("r"), Some(MeasureValue::Pair([1, 3])))
        .atom("b", Some("r"), Some(MeasureValue::Text("2/3".into())));
    let f: Filtration<Rational> = Filtration::from_spec(&spec).unwrap();
    assert_eq!(f.measure(f.find("r").unwrap()), &Rational::from_ratio(1, 1));
    assert_eq!(f.depth(), 2);
}

#[test]
fn seven_atom_instance_descends_from_its_root() {
    let inst = build_instance(0.01).unwrap();
    let f = &inst.filtration;
    let root = f.find("I").unwrap();
    assert_eq!(f.atoms_below(root).unwrap().len(), 7);
    assert_eq!(f.atoms_below(f.find("I3").unwrap()).unwrap(), vec![f.find("I3").unwrap()]);
    assert!(matches!(f.atoms_below(AtomId(99)), Err(HaarError::UnknownAtom(_))));
}

#[test]
fn negative_and_zero_measures_are_rejected() {
    for m in ["0", "-1/2"] {
        let spec = TreeSpec::new()
            .atom("r", None, None)
            .atom("a", Some("r"), Some(MeasureValue::Text(m.into())))
            .atom("b", Some("r"), Some(MeasureValue::Pair([1, 1])));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::NonPositiveMeasure(_))
        ));
    }
}

#[test]
fn forests_are_allowed() {
    let spec = TreeSpec::new()
        .atom("r1", None, Some(MeasureValue::Pair([1, 1])))
        .atom("r2", None, None)
        .atom("x", Some("r2"), Some(MeasureValue::Pair([1, 2])))
        .atom("y", Some("r2"), Some(MeasureValue::Pair([1, 2])));
    let f: Filtration<Rational> = Filtration::from_spec(&spec).unwrap();
    assert_eq!(f.roots().len(), 2);
    assert_eq!(f.total_mass(), Rational::from_ratio(2, 1));
}

fn config() -> impl Strategy<Value = (u64, usize, usize)> {
    (0u64..10_000, 1usize..6, 1usize..5)
}

proptest! {
    #[test]
    fn masses_telescope((seed, depth, branching) in config()) {
        let f = random_tree(seed, &RandomTreeConfig::new(depth, branching)).unwrap();
        for id in f.ids() {
            let a = f.atom(id);
            if a.children.is_empty() { continue; }
            let s: f64 = a.children.iter().map(|c| *f.measure(*c)).sum();
            prop_assert!((s - f.measure(id)).abs() <= 1e-12 * f.measure(id));
            for c in &a.children {
                prop_assert_eq!(f.atom(*c).generation, a.generation + 1);
            }
        }
        let fr = coarse_tree(&f, 64);
        for id in fr.ids() {
            let a = fr.atom(id);
            if a.children.is_empty() { continue; }
            let s = a.children.iter().fold(Rational::from_ratio(0, 1), |acc, c| acc + fr.measure(*c));
            prop_assert_eq!(&s, fr.measure(id));
        }
    }

    #[test]
    fn subtrees_nest_or_are_disjoint((seed, depth, branching) in config()) {
        let f = random_tree(seed, &RandomTreeConfig::new(depth, branching)).unwrap();
        let sets: Vec<Vec<AtomId>> = f.ids().map(|i| f.atoms_below(i).unwrap()).collect();
        for i in f.ids() {
            for j in f.ids() {
                let (a, b) = (&sets[i.0], &sets[j.0]);
                let shared = a.iter().filter(|x| b.contains(x)).count();
                if f.contains(i, j) {
                    prop_assert!(b.iter().all(|x| a.contains(x)));
                } else if !f.contains(j, i) {
                    prop_assert_eq!(shared, 0);
                }
            }
        }
    }

    #[test]
    fn depth_first_order_survives_serialization((seed, depth, branching) in config()) {
        let f = random_tree(seed, &RandomTreeConfig::new(depth, branching)).unwrap().to_rational();
        let text = f.to_spec().to_json();
        let g: Filtration<Rational> = Filtration::from_json(&text).unwrap();
        let names = |h: &Filtration<Rational>| h.ids().map(|i| h.name(i).to_string()).collect::<Vec<_>>();
        prop_assert_eq!(names(&f), names(&g));
        for i in f.ids() {
            prop_assert_eq!(f.measure(i), g.measure(i));
        }
    }

    #[test]
    fn random_trees_respect_their_bounds((seed, depth, branching) in config()) {
        let cfg = RandomTreeConfig::new(depth, branching).with_law(MeasureLaw::log_uniform(1e-3, 1e3));
        let f = random_tree(seed, &cfg).unwrap();
        prop_assert!(f.depth() <= depth);
        prop_assert!(f.leaf_count() <= branching.pow(depth as u32 - 1));
        prop_assert_eq!(f.to_spec().to_json(), random_tree(seed, &cfg).unwrap().to_spec().to_json());
        prop_assert!(f.total_mass().to_f64() > 0.0);
    }
}
