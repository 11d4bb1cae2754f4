//! Seeded instance generators shared by the tests, the acceptance battery and
//! the command line.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::filtration::{random_tree, Filtration, LeafFunction, MeasureLaw, RandomTreeConfig};
use crate::marttools::{a2_characteristic, MultiplierSymbol, Weight};
use crate::scalar::{Rational, Scalar};
use crate::twoweight::MeasurePair;

/// Independent streams derived from one seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A random tree with at least one atom having two or more children.
pub fn random_active_tree(seed: u64, cfg: &RandomTreeConfig) -> Result<Filtration<f64>> {
    let mut attempt = 0u64;
    loop {
        let f = random_tree(seed.wrapping_mul(1_000_003).wrapping_add(attempt), cfg)?;
        if !f.active_atoms().is_empty() || cfg.max_branching < 2 || attempt > 1000 {
            return Ok(f);
        }
        attempt += 1;
    }
}

/// Uniform symbol in `[-1, 1]` on active atoms, zero elsewhere.
pub fn random_symbol<R: Rng>(f: &Filtration<f64>, rng: &mut R) -> MultiplierSymbol<f64> {
    let v = f
        .ids()
        .map(|id| if f.atom(id).is_active() { rng.gen_range(-1.0..=1.0) } else { 0.0 })
        .collect();
    MultiplierSymbol(v)
}

pub fn random_weight<R: Rng>(f: &Filtration<f64>, law: &MeasureLaw, rng: &mut R) -> Weight<f64> {
    let w = LeafFunction((0..f.leaf_count()).map(|_| law.sample(rng)).collect());
    Weight::new(f, w).expect("positive weight")
}

/// A weight `exp(t g)` with `[w]_{A2}` equal to `target` (to bisection accuracy),
/// for a fixed random profile `g`. Returns `None` if the profile cannot reach it.
pub fn weight_with_a2<R: Rng>(f: &Filtration<f64>, target: f64, rng: &mut R) -> Option<Weight<f64>> {
    let g: Vec<f64> = (0..f.leaf_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let make = |t: f64| Weight::new(f, LeafFunction(g.iter().map(|v| (t * v).exp()).collect())).ok();
    let a2 = |t: f64| make(t).map(|w| a2_characteristic(f, &w).value).unwrap_or(f64::INFINITY);
    if target <= 1.0 {
        return make(0.0);
    }
    let mut hi = 1.0;
    while a2(hi) < target {
        hi *= 2.0;
        if hi > 1e4 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a2(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    make(hi)
}

/// Densities drawn from `law`, each leaf set to zero with probability `zero`;
/// neither measure vanishes identically.
pub fn random_pair<R: Rng>(f: &Filtration<f64>, law: &MeasureLaw, zero: f64, rng: &mut R) -> MeasurePair<f64> {
    let draw = |rng: &mut R| {
        let mut v: Vec<f64> = (0..f.leaf_count())
            .map(|_| if rng.gen::<f64>() < zero { 0.0 } else { law.sample(rng) })
            .collect();
        if v.iter().all(|x| *x == 0.0) {
            let k = rng.gen_range(0..v.len());
            v[k] = law.sample(rng);
        }
        LeafFunction(v)
    };
    let mu1 = draw(rng);
    let mu2 = draw(rng);
    MeasurePair::new(f, mu1, mu2).expect("valid pair")
}

/// Rounds to a multiple of `1/denominator` (at least one step), giving small
/// exact rationals for rational-backend runs.
pub fn coarse_rational(x: f64, denominator: i64) -> Rational {
    let k = (x * denominator as f64).round().max(1.0) as i64;
    Rational::from_ratio(k, denominator)
}

pub fn coarse_tree(f: &Filtration<f64>, denominator: i64) -> Filtration<Rational> {
    f.convert(|m| coarse_rational(*m, denominator))
}

/// Nonnegative densities: zeros stay zero, positive values become at least `1/denominator`.
pub fn coarse_density(g: &LeafFunction<f64>, denominator: i64) -> LeafFunction<Rational> {
    LeafFunction(
        g.0.iter()
            .map(|&x| if x == 0.0 { Rational::from_ratio(0, 1) } else { coarse_rational(x, denominator) })
            .collect(),
    )
}

pub fn coarse_signed(g: &LeafFunction<f64>, denominator: i64) -> LeafFunction<Rational> {
    LeafFunction(
        g.0.iter()
            .map(|&x| Rational::from_ratio((x * denominator as f64).round() as i64, denominator))
            .collect(),
    )
}

pub fn coarse_symbol(s: &MultiplierSymbol<f64>, denominator: i64) -> MultiplierSymbol<Rational> {
    MultiplierSymbol(
        s.0.iter()
            .map(|&x| Rational::from_ratio((x * denominator as f64).round() as i64, denominator))
            .collect(),
    )
}
