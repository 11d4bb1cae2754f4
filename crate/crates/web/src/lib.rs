//! WebAssembly bindings behind the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated type glue.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use haarlab::bellman::{classify, remainder_scale, tangent_remainder, BellmanKind, BellmanPoint};
use haarlab::carleson::{packing_constant, rho_sequence, tau_sequence};
use haarlab::counterexample::{build_instance, verify_instance, SweepRow};
use haarlab::filtration::{MeasureLaw, RandomTreeConfig};
use haarlab::marttools::{a2_characteristic, multiplier_norm_scan, partial_sum_sup, ScanMode};
use haarlab::suite::{random_active_tree, random_weight, rng_for};
use haarlab::{Rational, Scalar};

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Verified quantities of the counterexample at `eps` (a decimal or `p/q`).
#[wasm_bindgen]
pub fn counterexample_row(eps: &str) -> Result<String, String> {
    let e = Rational::parse(eps).map_err(|e| e.to_string())?;
    let report = verify_instance(&build_instance(e).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let claims: Vec<_> = report.claims.iter().map(|c| json!({ "name": c.name, "holds": c.holds })).collect();
    Ok(to_json(&json!({
        "row": SweepRow::from(&report),
        "all_hold": report.all_hold,
        "claims": claims,
    })))
}

#[derive(Serialize)]
struct Field {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major `remainder / scale`; `null` outside the domain or at `X0`.
    ratio: Vec<Option<f64>>,
    region: Vec<Option<&'static str>>,
    min_ratio: Option<f64>,
}

fn log_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Remainder ratio of `kind` around `(x0, y0)` on an `n x n` log grid over `[lo, hi]^2`.
#[wasm_bindgen]
pub fn bellman_remainder_grid(kind: &str, q: f64, x0: f64, y0: f64, lo: f64, hi: f64, n: usize) -> Result<String, String> {
    let kind = BellmanKind::parse(kind).map_err(|e| e.to_string())?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(format!("Q must be >= 1, got {q}"));
    }
    if !(x0 > 0.0 && y0 > 0.0 && x0 * y0 <= q) {
        return Err("X0 must satisfy 0 < x0 y0 <= Q".into());
    }
    if !(0.0 < lo && lo < hi && hi.is_finite()) || !(2..=400).contains(&n) {
        return Err("need 0 < lo < hi and 2 <= n <= 400".into());
    }
    let p0 = BellmanPoint::new(x0, y0);
    let (xs, ys) = (log_axis(lo, hi, n), log_axis(lo, hi, n));
    let mut ratio = Vec::with_capacity(n * n);
    let mut region = Vec::with_capacity(n * n);
    for &y in &ys {
        for &x in &xs {
            let p = BellmanPoint::new(x, y);
            let scale = remainder_scale(kind, p0, p);
            if x * y > q || scale <= 0.0 {
                ratio.push(None);
                region.push(None);
                continue;
            }
            let r = tangent_remainder(kind, q, p0, p).map_err(|e| e.to_string())?;
            ratio.push(Some(r / scale));
            region.push(Some(classify(kind, p0, p).name()));
        }
    }
    let min_ratio = ratio.iter().flatten().copied().reduce(f64::min);
    Ok(to_json(&Field {
        xs,
        ys,
        ratio,
        region,
        min_ratio,
    }))
}

/// One random weighted tree: A2, partial-sum bracket, a multiplier scan and packing constants.
#[wasm_bindgen]
pub fn random_tree_probe(seed: u32, depth: usize, branching: usize, budget: u32) -> Result<String, String> {
    if !(1..=6).contains(&depth) || !(2..=4).contains(&branching) {
        return Err("depth must be in 1..=6 and branching in 2..=4".into());
    }
    let seed = u64::from(seed);
    let cfg = RandomTreeConfig::new(depth, branching);
    let f = random_active_tree(seed, &cfg).map_err(|e| e.to_string())?;
    let w = random_weight(&f, &MeasureLaw::log_uniform(0.1, 10.0), &mut rng_for(seed, 1));
    let err = |e: haarlab::HaarError| e.to_string();
    let a2 = a2_characteristic(&f, &w);
    let partial = if f.depth() > 1 { Some(partial_sum_sup(&f, &w, 1e-9).map_err(err)?) } else { None };
    let scan = multiplier_norm_scan(&f, &w, ScanMode::RandomContinuous, u64::from(budget.max(1)), seed).map_err(err)?;
    let rho = packing_constant(&f, &rho_sequence(&f, &w), None).map_err(err)?;
    let tau = packing_constant(&f, &tau_sequence(&f, &w), None).map_err(err)?;
    Ok(to_json(&json!({
        "atoms": f.atom_count(),
        "leaves": f.leaf_count(),
        "depth": f.depth(),
        "a2": a2.value,
        "a2_witness": f.name(a2.witness),
        "partial_sums": partial,
        "scan": scan,
        "rho_packing": rho.constant,
        "tau_packing": tau.constant,
        "rho_over_a2": rho.constant / a2.value,
        "tau_over_a2_sq": tau.constant / (a2.value * a2.value),
    })))
}
