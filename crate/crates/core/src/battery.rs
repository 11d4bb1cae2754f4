//! The acceptance battery: ten seeded criteria over random suites. Per-instance
//! work runs in parallel; outcomes are merged in instance order so reports are
//! byte-identical for identical configurations.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bellman::{
    certified_constant, certify_lemma_bell1, certify_lemma_bell2, telescoping_check, BellmanKind, SamplerConfig,
};
use crate::carleson::{carleson_embedding_check, gamma_sequence, packing_constant, rho_sequence, tau_sequence};
use crate::counterexample::{build_instance, verify_instance};
use crate::error::{HaarError, Result};
use crate::filtration::{
    random_leaf_function, Filtration, LeafFunction, Measure, MeasureLaw, RandomTreeConfig, TreeFunction,
};
use crate::marttools::{
    multiplier_norm_scan, partial_sum_sup, unconditional_constants, ScanMode, Weight,
};
use crate::outerspace::{
    averaging_embedding_check, bilinear_embedding_check, brute_force_outer_measures, brute_force_superlevel,
    duality_check, maximal_check, outer_l2_norm_sq, outer_measure, reciprocal_average_bound,
    superlevel_outer_measure, OuterSet, Size,
};
use crate::scalar::{Rational, Scalar};
use crate::suite::{
    coarse_density, coarse_signed, coarse_symbol, coarse_tree, random_active_tree, random_pair, random_symbol,
    random_weight, rng_for, weight_with_a2,
};
use crate::twoweight::{bilinear_sigma_decomposition, paraproduct_decompose, paraproduct_norms, t1_bound_check, MeasurePair};
use crate::AtomId;

#[derive(Clone, Debug, Serialize)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Trees in the partial-sum and packing suites.
    pub trees: usize,
    /// Maximal depth of those trees.
    pub depth: usize,
    pub linearity_instances: usize,
    pub scan_trees: usize,
    pub continuous_draws: u64,
    pub outer_trees: usize,
    pub quadrature_points: usize,
    /// Draws for the embedding lemmas, the two-weight suite and the four-term splitting.
    pub draws: usize,
    pub bellman_samples: u64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            seed: 42,
            trees: 50,
            depth: 6,
            linearity_instances: 200,
            scan_trees: 20,
            continuous_draws: 10_000,
            outer_trees: 30,
            quadrature_points: 1_000_000,
            draws: 1000,
            bellman_samples: 1_000_000,
        }
    }
}

impl BatteryConfig {
    /// A small configuration for smoke runs.
    pub fn quick(seed: u64) -> Self {
        BatteryConfig {
            seed,
            trees: 8,
            depth: 4,
            linearity_instances: 12,
            scan_trees: 4,
            continuous_draws: 500,
            outer_trees: 4,
            quadrature_points: 20_000,
            draws: 40,
            bellman_samples: 5_000,
        }
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "counterexample"),
    (2, "partial-sum-two-sided"),
    (3, "unconditional-constants"),
    (4, "linear-a2-probe"),
    (5, "outer-measure-oracles"),
    (6, "embedding-constants"),
    (7, "bellman-certificates"),
    (8, "carleson-packing"),
    (9, "two-weight-t1"),
    (10, "bilinear-splitting"),
];

/// Sentinel for the linear dependence on `[w]_{A2}`.
pub const LINEARITY_SENTINEL: f64 = 100.0;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub checked: usize,
    pub violations: usize,
    pub constants: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Default, Debug)]
struct Tally {
    checked: usize,
    violations: usize,
    witness: Option<Value>,
    maxima: BTreeMap<String, f64>,
    minima: BTreeMap<String, f64>,
}

impl Tally {
    fn check(&mut self, ok: bool, witness: impl FnOnce() -> Value) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            if self.witness.is_none() {
                self.witness = Some(witness());
            }
        }
    }

    fn fail(&mut self, e: HaarError) {
        self.check(false, || json!({ "error": e.to_string() }));
    }

    fn max(&mut self, key: &str, v: f64) {
        let e = self.maxima.entry(key.to_string()).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
    }

    fn min(&mut self, key: &str, v: f64) {
        let e = self.minima.entry(key.to_string()).or_insert(f64::INFINITY);
        *e = e.min(v);
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.checked += other.checked;
        self.violations += other.violations;
        if self.witness.is_none() {
            self.witness = other.witness;
        }
        for (k, v) in other.maxima {
            self.max(&k, v);
        }
        for (k, v) in other.minima {
            self.min(&k, v);
        }
        self
    }

    fn absorb(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.fail(e);
        }
    }
}

/// Runs `body` for every instance in parallel and merges in index order.
fn per_instance(n: usize, body: impl Fn(usize, &mut Tally) -> Result<()> + Sync) -> Tally {
    let parts: Vec<Tally> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut t = Tally::default();
            let r = body(k, &mut t);
            t.absorb(r);
            t
        })
        .collect();
    parts.into_iter().fold(Tally::default(), Tally::merge)
}

fn instance_seed(seed: u64, criterion: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(criterion << 40)
        .wrapping_add(k as u64)
}

fn law() -> MeasureLaw {
    MeasureLaw::log_uniform(1e-2, 1e2)
}

/// A random tree with at most `max_atoms` atoms and an active atom.
pub fn small_tree(seed: u64, max_atoms: usize) -> Result<Filtration<f64>> {
    for attempt in 0..10_000u64 {
        let f = random_active_tree(seed.wrapping_add(attempt << 32), &RandomTreeConfig::new(4, 3))?;
        if f.atom_count() <= max_atoms && !f.active_atoms().is_empty() {
            return Ok(f);
        }
    }
    Err(HaarError::InvalidParameter(format!("no tree with at most {max_atoms} atoms")))
}

fn signed<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn counterexample(_cfg: &BatteryConfig) -> Tally {
    let mut t = Tally::default();
    for den in [10, 100, 10_000] {
        let eps = Rational::from_ratio(1, den);
        let r = build_instance(eps).and_then(|i| verify_instance(&i));
        match r {
            Ok(r) => {
                t.check(r.all_hold, || json!(r));
                t.max("norm_times_sqrt_eps", r.norm_weighted * r.epsilon.sqrt());
                t.max("a2_tree", r.a2_tree);
                t.max("a2_unions", r.a2_unions);
            }
            Err(e) => t.fail(e),
        }
    }
    t
}

fn partial_sums(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.trees, |k, t| {
        let seed = instance_seed(cfg.seed, 2, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(cfg.depth, 4))?;
        let w = random_weight(&f, &law(), &mut rng_for(seed, 2));
        let r = partial_sum_sup(&f, &w, 1e-8)?;
        t.check(r.holds, || json!({ "seed": seed, "report": r }));
        t.max("max_norm_over_sqrt_a2", r.max_norm / r.a2.sqrt());
        t.min("min_norm_over_sqrt_a2", r.max_norm / r.a2.sqrt());
        Ok(())
    })
}

fn unconditional(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.scan_trees, |k, t| {
        let seed = instance_seed(cfg.seed, 3, k);
        let f = small_tree(seed, 12)?;
        let w = random_weight(&f, &law(), &mut rng_for(seed, 3));
        let c = unconditional_constants(&f, &w, cfg.continuous_draws, seed)?;
        let tol = 1e-9;
        let ok = c.c3 <= c.c4_exact * (1.0 + tol)
            && c.c4_exact <= 2.0 * c.c3 * (1.0 + tol)
            && c.c4_sampled >= c.c3 * (1.0 - 1e-6)
            && c.c4_sampled <= 2.0 * c.c3 * (1.0 + tol);
        t.check(ok, || json!({ "seed": seed, "constants": c }));
        t.max("max_c4_over_c3", c.c4_exact / c.c3);
        t.min("min_c4_sampled_over_c3", c.c4_sampled / c.c3);
        Ok(())
    })
}

fn linearity(cfg: &BatteryConfig) -> Tally {
    let n = cfg.linearity_instances;
    per_instance(n, |k, t| {
        let target = if n > 1 { 10f64.powf(3.0 * k as f64 / (n - 1) as f64) } else { 1.0 };
        let seed = instance_seed(cfg.seed, 4, k);
        let mut found = None;
        for attempt in 0..50u64 {
            let f = random_active_tree(seed.wrapping_add(attempt << 32), &RandomTreeConfig::new(4, 3))?;
            if let Some(w) = weight_with_a2(&f, target, &mut rng_for(seed, 4 + attempt)) {
                found = Some((f, w));
                break;
            }
        }
        let (f, w) = found.ok_or_else(|| HaarError::InvalidParameter(format!("no weight reaches {target}")))?;
        let mut best: f64 = 0.0;
        let mut a2 = 0.0;
        for mode in [ScanMode::Exhaustive01, ScanMode::ExhaustivePm, ScanMode::Generation, ScanMode::RandomContinuous] {
            let budget = if mode == ScanMode::RandomContinuous { 256 } else { 1 << 13 };
            match multiplier_norm_scan(&f, &w, mode, budget, seed) {
                Ok(r) => {
                    best = best.max(r.ratio);
                    a2 = r.a2;
                    t.max(&format!("max_ratio_{}", mode.name()), r.ratio);
                }
                Err(HaarError::BudgetExceeded(_)) => {}
                Err(e) => return Err(e),
            }
        }
        t.check(best <= LINEARITY_SENTINEL, || json!({ "seed": seed, "a2": a2, "ratio": best }));
        t.max("max_norm_over_a2", best);
        t.max("a2_max", a2);
        t.min("a2_min", a2);
        Ok(())
    })
}

fn outer_oracles(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.outer_trees, |k, t| {
        let seed = instance_seed(cfg.seed, 5, k);
        let f = coarse_tree(&small_tree(seed, 12)?, 16);
        let n = f.atom_count();
        let mut rng = rng_for(seed, 5);
        let density = coarse_density(
            &LeafFunction(
                (0..f.leaf_count())
                    .map(|_| if rng.gen::<f64>() < 0.25 { 0.0 } else { rng.gen_range(0.1..4.0) })
                    .collect(),
            ),
            8,
        );
        let measures = [Measure::reference(&f), Measure::with_density(&f, &density)?];
        for mu in &measures {
            let brute = brute_force_outer_measures(&f, mu)?;
            for mask in 0..(1u64 << n) {
                let dp = outer_measure(&f, &OuterSet::from_mask(n, mask), mu);
                t.check(dp == brute[mask as usize], || {
                    json!({ "seed": seed, "mask": mask, "dp": dp.to_f64(), "brute": brute[mask as usize].to_f64() })
                });
            }
            let values = TreeFunction(coarse_signed(&LeafFunction(signed(n, &mut rng)), 8).0);
            let mut levels: Vec<f64> = values.0.iter().map(|v| v.to_f64().abs()).collect();
            levels.push(0.0);
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let mut lambdas = levels.clone();
            lambdas.extend(levels.windows(2).map(|p| 0.5 * (p[0] + p[1])));
            lambdas.push(levels.last().copied().unwrap_or(0.0) + 1.0);
            for lambda in lambdas {
                let dp = superlevel_outer_measure(&f, &values, &Rational::from_f64(lambda), Size::Sup, mu)?;
                let bf = brute_force_superlevel(&f, &values, lambda, Size::Sup, mu)?;
                t.check(dp == bf, || {
                    json!({ "seed": seed, "lambda": lambda, "dp": dp.to_f64(), "brute": bf.to_f64() })
                });
            }
            // Midpoint rule for int 2 lambda mu*(|F| > lambda) dlambda, using the
            // brute-force table for the superlevel collection.
            let exact = outer_l2_norm_sq(&f, &values, mu).to_f64();
            let top = levels.last().copied().unwrap_or(0.0);
            let abs: Vec<f64> = values.0.iter().map(|v| v.to_f64().abs()).collect();
            let table: Vec<f64> = brute.iter().map(|v| v.to_f64()).collect();
            let h = top / cfg.quadrature_points as f64;
            let quad: f64 = (0..cfg.quadrature_points)
                .map(|j| {
                    let lambda = (j as f64 + 0.5) * h;
                    let mask = abs.iter().enumerate().fold(0usize, |m, (i, v)| if *v > lambda { m | 1 << i } else { m });
                    2.0 * lambda * table[mask] * h
                })
                .sum();
            let rel = if exact > 0.0 { (quad - exact).abs() / exact } else { quad.abs() };
            t.check(rel <= 1e-4, || json!({ "seed": seed, "exact": exact, "quadrature": quad }));
            t.max("max_quadrature_relative_error", rel);
        }
        Ok(())
    })
}

fn embeddings(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.draws, |k, t| {
        let seed = instance_seed(cfg.seed, 6, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3))?;
        let mut rng = rng_for(seed, 6);
        let (n, m) = (f.atom_count(), f.leaf_count());
        let nu = Measure::reference(&f);
        let density = LeafFunction(
            (0..m)
                .map(|_| if rng.gen::<f64>() < 0.2 { 0.0 } else { law().sample(&mut rng) })
                .collect::<Vec<_>>(),
        );
        let density = if density.is_zero() { LeafFunction::constant(&f, 1.0) } else { density };
        let mu = Measure::with_density(&f, &density)?;
        let record = |name: &str, r: crate::outerspace::CheckReport, t: &mut Tally| {
            t.max(&format!("max_ratio_{name}"), r.ratio());
            t.check(r.holds, || json!({ "seed": seed, "check": name, "report": r }));
        };

        let (big_f, big_g) = (TreeFunction(signed(n, &mut rng)), TreeFunction(signed(n, &mut rng)));
        record("duality", duality_check(&f, &big_f, &big_g, if k % 2 == 0 { &nu } else { &mu }), t);

        let h = random_leaf_function(&f, &law(), &mut rng);
        let root = AtomId(rng.gen_range(0..n));
        record("reciprocal_average", reciprocal_average_bound(&f, &h, root)?, t);

        let w = random_weight(&f, &law(), &mut rng);
        let (a, b) = (LeafFunction(signed(m, &mut rng)), LeafFunction(signed(m, &mut rng)));
        record("bilinear_embedding", bilinear_embedding_check(&f, &w, &a, &b), t);

        let g = LeafFunction(signed(m, &mut rng));
        record("averaging_embedding", averaging_embedding_check(&f, &mu, &g), t);
        record("maximal", maximal_check(&f, &mu, &g), t);
        Ok(())
    })
}

fn bellman(cfg: &BatteryConfig) -> Tally {
    let mut t = Tally::default();
    let sampler = SamplerConfig {
        samples_per_region: cfg.bellman_samples,
        seed: cfg.seed,
        boundary_grid: true,
    };
    for q in [1.0, 4.0, 100.0] {
        for certs in [certify_lemma_bell1(q, &sampler), certify_lemma_bell2(q, &sampler)] {
            match certs {
                Ok(certs) => {
                    for c in certs {
                        t.min(&format!("min_ratio_{:?}_{}", c.kind, c.region.name()), c.min_ratio);
                        t.check(c.pass, || json!(c));
                    }
                }
                Err(e) => t.fail(e),
            }
        }
    }
    let identity = per_instance(10, |k, t| {
        let seed = instance_seed(cfg.seed, 7, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3))?;
        let w = random_weight(&f, &MeasureLaw::log_uniform(0.1, 10.0), &mut rng_for(seed, 7));
        let fr = coarse_tree(&f, 8);
        let wr = Weight::new(&fr, coarse_density(w.w(), 8))?;
        for kind in [BellmanKind::B1, BellmanKind::B2] {
            let r = telescoping_check(&fr, &wr, kind, fr.roots()[0])?;
            t.check(r.identity_residual == 0.0, || json!({ "seed": seed, "report": r }));
        }
        Ok(())
    });
    t.merge(identity)
}

fn packing(cfg: &BatteryConfig) -> Tally {
    let (c1, c2) = (certified_constant(BellmanKind::B1), certified_constant(BellmanKind::B2));
    per_instance(cfg.trees, |k, t| {
        let seed = instance_seed(cfg.seed, 8, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(cfg.depth, 4))?;
        let mut rng = rng_for(seed, 8);
        let w = random_weight(&f, &law(), &mut rng);
        let a2 = crate::marttools::a2_characteristic(&f, &w).value;
        let q = a2.max(1.0);
        let rho = packing_constant(&f, &rho_sequence(&f, &w), None)?.constant;
        let tau = packing_constant(&f, &tau_sequence(&f, &w), None)?.constant;
        let tol = 1.0 + 1e-12;
        t.check(rho <= 4.0 * q / c1 * tol, || json!({ "seed": seed, "packing_rho": rho, "a2": a2 }));
        t.check(tau <= 128.0 * q * q / c2 * tol, || json!({ "seed": seed, "packing_tau": tau, "a2": a2 }));
        t.max("max_packing_rho_over_a2", rho / a2);
        t.max("max_packing_tau_over_a2_sq", tau / (a2 * a2));
        for kind in [BellmanKind::B1, BellmanKind::B2] {
            let r = telescoping_check(&f, &w, kind, f.roots()[0])?;
            t.check(r.holds, || json!({ "seed": seed, "telescoping": r }));
        }
        let g = LeafFunction(signed(f.leaf_count(), &mut rng));
        let nu = Measure::reference(&f);
        let um = w.u_measure(&f);
        for (name, mu, a) in [
            ("rho", &nu, rho_sequence(&f, &w)),
            ("tau", &nu, tau_sequence(&f, &w)),
            ("gamma_u", &um, gamma_sequence(&f, &w)),
        ] {
            let r = carleson_embedding_check(&f, mu, &a, &g)?;
            t.max(&format!("max_embedding_ratio_{name}"), r.ratio());
            t.check(r.holds, || json!({ "seed": seed, "embedding": name, "report": r }));
        }
        Ok(())
    })
}

fn two_weight(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.draws, |k, t| {
        let seed = instance_seed(cfg.seed, 9, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3))?;
        let mut rng = rng_for(seed, 9);
        let pair = random_pair(&f, &MeasureLaw::log_uniform(0.1, 10.0), 0.1, &mut rng);
        let sigma = random_symbol(&f, &mut rng);
        let r = t1_bound_check(&f, &sigma, &pair)?;
        t.max("max_norm_over_bound", r.norm / r.bound);
        t.check(r.holds, || json!({ "seed": seed, "t1": r }));
        if pair.mu1.is_zero() || pair.mu2.is_zero() {
            return Ok(());
        }
        let n = paraproduct_norms(&f, &sigma, &pair)?;
        let a = n.testing_constant;
        t.max("max_pi1_over_2a", if a > 0.0 { n.pi1 / (2.0 * a) } else { 0.0 });
        let ok = n.residual < 1e-9 && n.pi1_holds && n.diag_holds && n.root_holds;
        t.check(ok, || json!({ "seed": seed, "paraproducts": n }));
        if k % 10 == 0 {
            let fr = coarse_tree(&f, 8);
            let pr = MeasurePair::new(&fr, coarse_density(&pair.mu1, 8), coarse_density(&pair.mu2, 8))?;
            let p = paraproduct_decompose(&fr, &coarse_symbol(&sigma, 8), &pr)?;
            let exact = p.residual == Rational::from_ratio(0, 1)
                && p.adjoint_residual == Rational::from_ratio(0, 1)
                && p.annihilation_residual == Rational::from_ratio(0, 1);
            t.check(exact, || json!({ "seed": seed, "rational_residual": p.residual.to_f64() }));
        }
        Ok(())
    })
}

fn splitting(cfg: &BatteryConfig) -> Tally {
    per_instance(cfg.draws, |k, t| {
        let seed = instance_seed(cfg.seed, 10, k);
        let f = random_active_tree(seed, &RandomTreeConfig::new(4, 3))?;
        let mut rng = rng_for(seed, 10);
        let w = random_weight(&f, &MeasureLaw::log_uniform(0.1, 10.0), &mut rng);
        let m = f.leaf_count();
        let (fv, gv) = (LeafFunction(signed(m, &mut rng)), LeafFunction(signed(m, &mut rng)));
        let b = bilinear_sigma_decomposition(&f, &w, &fv, &gv)?.bounds();
        t.check(b.holds[0], || json!({ "seed": seed, "float": b }));
        if b.bounds[0] > 0.0 {
            t.max("max_sigma1_over_bound", b.sigma[0].abs() / b.bounds[0]);
        }
        let fr = coarse_tree(&f, 8);
        let wr = Weight::new(&fr, coarse_density(w.w(), 8))?;
        let d = bilinear_sigma_decomposition(&fr, &wr, &coarse_signed(&fv, 8), &coarse_signed(&gv, 8))?;
        let zero = Rational::from_ratio(0, 1);
        let exact = d.bounds();
        t.check(d.vanishing_residual == zero && d.identity_residual == zero && exact.holds[0], || {
            json!({ "seed": seed, "rational": exact })
        });
        Ok(())
    })
}

pub fn run_criterion(id: u8, cfg: &BatteryConfig) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .ok_or_else(|| HaarError::InvalidParameter(format!("no criterion {id}")))?;
    let start = Instant::now();
    let t = match id {
        1 => counterexample(cfg),
        2 => partial_sums(cfg),
        3 => unconditional(cfg),
        4 => linearity(cfg),
        5 => outer_oracles(cfg),
        6 => embeddings(cfg),
        7 => bellman(cfg),
        8 => packing(cfg),
        9 => two_weight(cfg),
        _ => splitting(cfg),
    };
    let mut constants: BTreeMap<String, f64> = t.maxima;
    constants.extend(t.minima);
    Ok(CriterionReport {
        id,
        name,
        pass: t.violations == 0 && t.checked > 0,
        checked: t.checked,
        violations: t.violations,
        constants,
        witness: t.witness,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<CriterionReport>> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, cfg)).collect()
}
