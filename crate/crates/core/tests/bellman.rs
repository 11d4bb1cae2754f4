use haarlab::bellman::*;
use haarlab::filtration::{random_leaf_function, random_tree, LeafFunction, MeasureLaw, RandomTreeConfig};
use haarlab::marttools::Weight;
use haarlab::AtomId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KINDS: [BellmanKind; 2] = [BellmanKind::B1, BellmanKind::B2];

fn quick() -> SamplerConfig {
    SamplerConfig {
        samples_per_region: 20_000,
        seed: 17,
        boundary_grid: true,
    }
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-6;
    for i in 1..=1000u64 {
        let u = halton(i);
        let q = 1.0 + 99.0 * u[4];
        let p = q * 10f64.powf(-3.0 * u[0]);
        let r = 10f64.powf(2.0 * u[1] - 1.0);
        let x = BellmanPoint::new((p * r).sqrt(), (p / r).sqrt());
        for kind in KINDS {
            let (gx, gy) = bellman_gradient(kind, q, x).unwrap();
            let b = |a: f64, c: f64| bellman_eval(kind, q, BellmanPoint::new(a, c)).unwrap();
            let hx = h * x.x;
            let hy = h * x.y;
            let fx = (b(x.x + hx, x.y) - b(x.x - hx, x.y)) / (2.0 * hx);
            let fy = (b(x.x, x.y + hy) - b(x.x, x.y - hy)) / (2.0 * hy);
            let scale = |g: f64, f: f64| (g - f).abs() / g.abs().max(f.abs()).max(1e-3);
            assert!(scale(gx, fx) < 1e-5, "{kind:?} d/dx at {x:?}: {gx} vs {fx}");
            assert!(scale(gy, fy) < 1e-5, "{kind:?} d/dy at {x:?}: {gy} vs {fy}");
        }
    }
}

#[test]
fn same_sign_remainder_of_b1_dominates_the_product() {
    for i in 1..5000u64 {
        if let Some((a, b)) = sample_pair(Region::SameSign, 4.0, halton(i)) {
            let r = tangent_remainder(BellmanKind::B1, 4.0, a, b).unwrap();
            assert!(r >= (b.x - a.x) * (b.y - a.y));
        }
    }
}

#[test]
fn degenerate_displacement_gives_nonnegative_remainder() {
    let a = BellmanPoint::new(0.5, 1.5);
    let b = BellmanPoint::new(0.5, 0.2);
    for kind in KINDS {
        assert!(tangent_remainder(kind, 1.0, a, b).unwrap() >= 0.0);
    }
    assert_eq!(remainder_scale(BellmanKind::B1, a, b), 0.0);
}

#[test]
fn quick_certificates_pass_for_each_q() {
    for q in [1.0, 4.0, 100.0] {
        for c in certify_lemma_bell1(q, &quick()).unwrap() {
            assert!(c.pass, "{c:?}");
            assert!(c.min_ratio >= 1.0 - 1e-9);
        }
        for c in certify_lemma_bell2(q, &quick()).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }
}

#[test]
fn certificate_json_has_the_documented_fields() {
    let c = certify_region(BellmanKind::B2, 4.0, Region::Hard, &quick()).unwrap();
    let v = serde_json::to_value(&c).unwrap();
    for key in ["kind", "Q", "region", "n_samples", "min_ratio", "witness_pair", "c_floor", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["region"], "hard");
}

#[test]
fn hard_case_corner_is_sampled_below_the_product_cap() {
    // X0 on xy = Q/4 and X = (4 x0, y0 / 2): the corner of the hard case.
    let q = 1.0;
    let x0 = BellmanPoint::new(0.5, 0.5);
    let x = BellmanPoint::new(4.0 * x0.x, x0.y / 2.0);
    assert!(x.x * x.y <= q);
    assert_eq!(classify(BellmanKind::B2, x0, x), Region::Hard);
    assert!(tangent_remainder(BellmanKind::B2, q, x0, x).unwrap() > 0.0);
}

#[test]
fn telescoping_for_constant_weight_is_trivial() {
    let f = random_tree(5, &RandomTreeConfig::new(4, 3)).unwrap().to_rational();
    let w = Weight::constant(&f, haarlab::Rational::from_integer(3.into())).unwrap();
    for kind in KINDS {
        let r = telescoping_check(&f, &w, kind, f.roots()[0]).unwrap();
        assert_eq!(r.identity_residual, 0.0);
        assert_eq!(r.carleson_sum, 0.0);
        assert!(r.sum_of_gains.abs() < 1e-12 * r.top_value);
        assert!(r.holds);
    }
}

#[test]
fn telescoping_identity_is_exact_in_rationals() {
    for seed in 0..10 {
        let f = random_tree(seed, &RandomTreeConfig::new(4, 3)).unwrap();
        let law = MeasureLaw::log_uniform(1e-2, 1e2);
        let w = random_leaf_function(&f, &law, &mut ChaCha8Rng::seed_from_u64(seed + 100));
        let w = Weight::new(&f, w).unwrap();
        let (fr, wr) = (f.to_rational(), w.to_rational());
        for kind in KINDS {
            let exact = telescoping_check(&fr, &wr, kind, AtomId(0)).unwrap();
            assert_eq!(exact.identity_residual, 0.0);
            assert!(exact.holds, "{exact:?}");
            let float = telescoping_check(&f, &w, kind, AtomId(0)).unwrap();
            assert!(
                (float.sum_of_gains - float.boundary_difference).abs() <= 1e-9 * float.top_value.max(1.0),
                "{float:?}"
            );
            assert!(float.boundary_difference <= float.top_value && float.top_value <= float.cap * (1.0 + 1e-12));
            assert!(float.min_atom_ratio >= certified_constant(kind) * (1.0 - 1e-9));
        }
    }
}

proptest! {
    #[test]
    fn range_on_the_domain(lp in -20.0f64..0.0, lr in -10.0f64..10.0, q in 1.0f64..100.0) {
        let p = q * lp.exp();
        let x = BellmanPoint::new((p * lr.exp()).sqrt(), (p / lr.exp()).sqrt());
        for kind in KINDS {
            let v = bellman_eval(kind, q, x).unwrap();
            prop_assert!(v >= 0.0 && v <= kind.range_cap(q) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn square_root_part_is_concave(a in 1e-6f64..1e6, b in 1e-6f64..1e6, c in 1e-6f64..1e6, d in 1e-6f64..1e6) {
        let r = sqrt_remainder(BellmanPoint::new(a, b), BellmanPoint::new(c, d));
        let naive = (a * b).sqrt() - (c * d).sqrt() + 0.5 * (b / a).sqrt() * (c - a) + 0.5 * (a / b).sqrt() * (d - b);
        prop_assert!(r >= 0.0);
        prop_assert!((r - naive).abs() <= 1e-9 * (a * b).sqrt().max((c * d).sqrt()).max(c.max(d)) * 10.0);
    }

    #[test]
    fn scaling_covariance(i in 1u64..100_000, l in -5.0f64..5.0) {
        let l = l.exp();
        let q = 4.0;
        for (kind, region) in [(BellmanKind::B1, Region::Opposite), (BellmanKind::B2, Region::Hard), (BellmanKind::B2, Region::SameSign)] {
            if let Some((a, b)) = sample_pair(region, q, halton(i)) {
                let s = |p: BellmanPoint| BellmanPoint::new(l * p.x, p.y / l);
                prop_assert!((bellman_eval(kind, q, s(a)).unwrap() - bellman_eval(kind, q, a).unwrap()).abs()
                    <= 1e-12 * kind.range_cap(q));
                let r0 = tangent_remainder(kind, q, a, b).unwrap() / remainder_scale(kind, a, b);
                let r1 = tangent_remainder(kind, q, s(a), s(b)).unwrap() / remainder_scale(kind, s(a), s(b));
                prop_assert!((r0 - r1).abs() <= 1e-9 * r0.abs().max(1.0));
            }
        }
    }

    #[test]
    fn q_consistent_rescaling(i in 1u64..100_000, ls in -3.0f64..3.0, lt in -3.0f64..3.0) {
        let (s, t) = (ls.exp(), lt.exp());
        let q = 2.0;
        let q2 = s * t * q;
        prop_assume!(q2 >= 1.0);
        for kind in KINDS {
            if let Some((a, b)) = sample_pair(Region::SameSign, q, halton(i)) {
                let m = |p: BellmanPoint| BellmanPoint::new(s * p.x, t * p.y);
                let r0 = tangent_remainder(kind, q, a, b).unwrap() / remainder_scale(kind, a, b);
                let r1 = tangent_remainder(kind, q2, m(a), m(b)).unwrap() / remainder_scale(kind, m(a), m(b));
                prop_assert!((r0 - r1).abs() <= 1e-9 * r0.abs().max(1.0), "{r0} {r1}");
            }
        }
    }

    #[test]
    fn stable_and_naive_remainders_agree_at_moderate_scales(i in 1u64..100_000) {
        for kind in KINDS {
            for region in Region::for_kind(kind) {
                if let Some((a, b)) = sample_pair(*region, 1.0, halton(i)) {
                    if a.x * a.y < 1e-3 { continue; }
                    let s = tangent_remainder(kind, 1.0, a, b).unwrap();
                    let n = tangent_remainder_naive(kind, 1.0, a, b).unwrap();
                    prop_assert!((s - n).abs() <= 1e-9 * kind.range_cap(1.0) * 10.0, "{kind:?} {s} {n}");
                }
            }
        }
    }
}

#[test]
fn weight_validation_rejects_nonpositive_values() {
    let f = random_tree(1, &RandomTreeConfig::new(3, 2)).unwrap();
    assert!(Weight::new(&f, LeafFunction::constant(&f, 0.0)).is_err());
}
