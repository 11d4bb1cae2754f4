use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde_json::{json, Value};

use haarlab::battery::{self, BatteryConfig, LINEARITY_SENTINEL};
use haarlab::bellman::{
    certified_constant, certify_lemma_bell1, certify_lemma_bell2, telescoping_check, BellmanKind, SamplerConfig,
};
use haarlab::carleson::{gamma_sequence, packing_constant, rho_sequence, tau_sequence};
use haarlab::counterexample::{build_instance, direct_sum, verify_instance, SweepRow};
use haarlab::marttools::{a2_characteristic, multiplier_norm_scan, multiplier_operator, partial_sum_sup, ScanMode, Weight};
use haarlab::outerspace::{
    averaging_embedding_check, bilinear_embedding_check, duality_check, maximal_check, outer_l1_norm,
    outer_l2_norm_sq, outer_linf_norm, outer_linf_s1, reciprocal_average_bound, CheckReport, Size,
};
use haarlab::suite::rng_for;
use haarlab::twoweight::{bilinear_sigma_decomposition, paraproduct_norms, t1_bound_check, InstanceBundle};
use haarlab::{Filtration, LeafFunction, Measure, Rational, Scalar, TreeFunction};

use crate::input::{self, CliError};
use crate::{Backend, Opts};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

pub struct Outcome {
    pub report: Value,
    pub holds: bool,
    pub witness: Value,
    pub table: Option<Table>,
}

impl Outcome {
    fn new(report: Value, holds: bool, witness: Value) -> Self {
        Outcome {
            report,
            holds,
            witness,
            table: None,
        }
    }
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Rational => "rational",
        Backend::Float => "float",
    }
}

/// Seeded value on the grid `k / 64`, exact in either backend.
fn grid<S: Scalar>(x: f64) -> S {
    S::from_ratio((x * 64.0).round() as i64, 64)
}

fn random_leaf<S: Scalar, R: Rng>(f: &Filtration<S>, rng: &mut R, lo: f64, hi: f64) -> LeafFunction<S> {
    LeafFunction((0..f.leaf_count()).map(|_| grid(rng.gen_range(lo..=hi))).collect())
}

fn random_tree_fn<S: Scalar, R: Rng>(f: &Filtration<S>, rng: &mut R) -> TreeFunction<S> {
    TreeFunction((0..f.atom_count()).map(|_| grid(rng.gen_range(0.0..=1.0))).collect())
}

fn named<S: Scalar>(f: &Filtration<S>, values: &[S]) -> BTreeMap<String, f64> {
    f.ids().map(|i| (f.name(i).to_string(), values[i.0].to_f64())).collect()
}

// ---------------------------------------------------------------------------

pub fn a2(o: &Opts) -> Result<Outcome, CliError> {
    match o.backend.unwrap_or(Backend::Rational) {
        Backend::Rational => a2_with::<Rational>(o, Backend::Rational),
        Backend::Float => a2_with::<f64>(o, Backend::Float),
    }
}

fn a2_with<S: Scalar>(o: &Opts, b: Backend) -> Result<Outcome, CliError> {
    let f = input::tree::<S>(o.tree.as_deref())?;
    let w = input::weight(&f, o.weight.as_deref())?;
    let r = a2_characteristic(&f, &w);
    let report = json!({
        "check": "a2-characteristic",
        "backend": backend_name(b),
        "a2": r.value.to_f64(),
        "exact": r.value.to_string(),
        "witness": f.name(r.witness),
        "per_atom": named(&f, &r.per_atom),
    });
    Ok(Outcome::new(report, true, Value::Null))
}

pub fn norm(o: &Opts) -> Result<Outcome, CliError> {
    let f = input::tree::<f64>(o.tree.as_deref())?;
    let w = input::weight(&f, o.weight.as_deref())?;
    let ps = partial_sum_sup(&f, &w, o.tol.max(1e-12))?;
    let mut holds = ps.holds;
    let mut report = json!({
        "check": "partial-sum-two-sided",
        "backend": "float",
        "partial_sums": ps,
    });
    if let Some(path) = &o.sigma {
        let sigma = input::sigma(&f, path)?;
        let n = multiplier_operator(&f, &w, &sigma).norm()?;
        let ratio = n / ps.a2;
        holds &= ratio <= LINEARITY_SENTINEL;
        report["multiplier"] = json!({ "norm": n, "a2": ps.a2, "ratio": ratio, "sentinel": LINEARITY_SENTINEL });
    }
    let witness = report.clone();
    Ok(Outcome::new(report, holds, witness))
}

pub fn scan(o: &Opts, mode: &str) -> Result<Outcome, CliError> {
    let mode = ScanMode::parse(mode)?;
    let f = input::tree::<f64>(o.tree.as_deref())?;
    let w = input::weight(&f, o.weight.as_deref())?;
    let r = multiplier_norm_scan(&f, &w, mode, o.budget.unwrap_or(10_000), o.seed.unwrap_or(0))?;
    let holds = r.ratio <= LINEARITY_SENTINEL;
    let report = json!({
        "check": "linear-a2-probe",
        "backend": "float",
        "sentinel": LINEARITY_SENTINEL,
        "scan": r,
    });
    let witness = json!({ "argmax_sigma": r.argmax_sigma, "ratio": r.ratio });
    Ok(Outcome::new(report, holds, witness))
}

pub fn carleson(o: &Opts) -> Result<Outcome, CliError> {
    match o.backend.unwrap_or(Backend::Rational) {
        Backend::Rational => carleson_with::<Rational>(o, Backend::Rational),
        Backend::Float => carleson_with::<f64>(o, Backend::Float),
    }
}

fn carleson_with<S: Scalar>(o: &Opts, b: Backend) -> Result<Outcome, CliError> {
    let f = input::tree::<S>(o.tree.as_deref())?;
    let w = input::weight(&f, o.weight.as_deref())?;
    let a2 = a2_characteristic(&f, &w).value.to_f64();
    let q = a2.max(1.0);
    let rho = packing_constant(&f, &rho_sequence(&f, &w), None)?;
    let tau = packing_constant(&f, &tau_sequence(&f, &w), None)?;
    let gamma = packing_constant(&f, &gamma_sequence(&f, &w), Some(w.u()))?;
    let rho_bound = 4.0 * q / certified_constant(BellmanKind::B1);
    let tau_bound = 128.0 * q * q / certified_constant(BellmanKind::B2);
    let rho_ok = rho.constant.to_f64() <= rho_bound;
    let tau_ok = tau.constant.to_f64() <= tau_bound;
    let mut telescoping = Vec::new();
    for &root in f.roots() {
        for kind in [BellmanKind::B1, BellmanKind::B2] {
            telescoping.push(telescoping_check(&f, &w, kind, root)?);
        }
    }
    let tele_ok = telescoping.iter().all(|t| t.holds && t.identity_residual <= o.tol * t.top_value.max(1.0));
    let report = json!({
        "check": "carleson-packing",
        "backend": backend_name(b),
        "a2": a2,
        "Q": q,
        "rho": rho.to_json(&f),
        "rho_bound": rho_bound,
        "tau": tau.to_json(&f),
        "tau_bound": tau_bound,
        "gamma": gamma.to_json(&f),
        "telescoping": telescoping,
    });
    let witness = json!({
        "rho": [rho.constant.to_f64(), rho_bound, f.name(rho.witness)],
        "tau": [tau.constant.to_f64(), tau_bound, f.name(tau.witness)],
        "telescoping_holds": tele_ok,
    });
    Ok(Outcome::new(report, rho_ok && tau_ok && tele_ok, witness))
}

pub fn outer(o: &Opts, values: Option<&Path>) -> Result<Outcome, CliError> {
    match o.backend.unwrap_or(Backend::Rational) {
        Backend::Rational => outer_with::<Rational>(o, values, Backend::Rational),
        Backend::Float => outer_with::<f64>(o, values, Backend::Float),
    }
}

fn outer_with<S: Scalar>(o: &Opts, values: Option<&Path>, b: Backend) -> Result<Outcome, CliError> {
    let f = input::tree::<S>(o.tree.as_deref())?;
    let w = input::weight(&f, o.weight.as_deref())?;
    let mu = match o.weight {
        Some(_) => w.w_measure(&f),
        None => Measure::reference(&f),
    };
    let seed = o.seed.unwrap_or(0);
    let mut rng = rng_for(seed, 0);
    let big_f = match values {
        Some(p) => input::tree_function(&f, p)?.abs(),
        None => random_tree_fn(&f, &mut rng),
    };
    let big_g = random_tree_fn(&f, &mut rng);
    let g = random_leaf(&f, &mut rng, -1.0, 1.0);
    let a = random_leaf(&f, &mut rng, -1.0, 1.0);
    let h = random_leaf(&f, &mut rng, 1.0 / 64.0, 2.0);
    let (linf, linf_at) = outer_linf_norm(&f, &big_f, Size::Sup, &mu)?;
    let (s1, s1_at) = outer_linf_s1(&f, &big_f, &mu);
    let mut checks: BTreeMap<&str, CheckReport> = BTreeMap::new();
    checks.insert("duality", duality_check(&f, &big_f, &big_g, &mu));
    checks.insert("averaging-embedding", averaging_embedding_check(&f, &mu, &g));
    checks.insert("maximal", maximal_check(&f, &mu, &g));
    checks.insert("bilinear-embedding", bilinear_embedding_check(&f, &w, &a, &g));
    for (k, &root) in f.roots().iter().enumerate() {
        let r = reciprocal_average_bound(&f, &h, root)?;
        if k == 0 || !r.holds {
            checks.insert("reciprocal-average", r);
        }
    }
    let holds = checks.values().all(|c| c.holds);
    let failed: BTreeMap<_, _> = checks.iter().filter(|(_, c)| !c.holds).collect();
    let witness = json!({ "seed": seed, "failed": failed });
    let report = json!({
        "check": "outer-measure",
        "backend": backend_name(b),
        "seed": seed,
        "norms": {
            "l1_sup": outer_l1_norm(&f, &big_f, &mu).to_f64(),
            "l2_sup": outer_l2_norm_sq(&f, &big_f, &mu).to_f64().sqrt(),
            "linf_sup": linf,
            "linf_sup_witness": f.name(linf_at),
            "linf_s1": s1.to_f64(),
            "linf_s1_witness": f.name(s1_at),
        },
        "checks": checks,
    });
    Ok(Outcome::new(report, holds, witness))
}

pub fn bellman(o: &Opts, qs: &str, kind: &str) -> Result<Outcome, CliError> {
    let qs: Vec<f64> = input::list(qs)?;
    if qs.is_empty() || qs.iter().any(|&q| !(q >= 1.0)) {
        return Err(CliError::Usage("--q needs values >= 1".into()));
    }
    let kinds = match kind {
        "both" => vec![BellmanKind::B1, BellmanKind::B2],
        k => vec![BellmanKind::parse(k)?],
    };
    let cfg = SamplerConfig {
        samples_per_region: o.budget.unwrap_or(100_000),
        seed: o.seed.unwrap_or(0),
        boundary_grid: true,
    };
    let mut certs = Vec::new();
    for &q in &qs {
        for &k in &kinds {
            certs.extend(match k {
                BellmanKind::B1 => certify_lemma_bell1(q, &cfg)?,
                BellmanKind::B2 => certify_lemma_bell2(q, &cfg)?,
            });
        }
    }
    let holds = certs.iter().all(|c| c.pass);
    let failed: Vec<_> = certs.iter().filter(|c| !c.pass).collect();
    let witness = json!(failed);
    let rows = certs
        .iter()
        .map(|c| {
            vec![
                json!(c.kind).as_str().unwrap_or_default().to_string(),
                c.q.to_string(),
                json!(c.region).as_str().unwrap_or_default().to_string(),
                c.n_samples.to_string(),
                c.min_ratio.to_string(),
                c.c_floor.to_string(),
                c.pass.to_string(),
            ]
        })
        .collect();
    let report = json!({ "check": "bellman-certificates", "sampler": cfg, "certificates": certs });
    let mut out = Outcome::new(report, holds, witness);
    out.table = Some(Table {
        header: vec!["kind", "Q", "region", "n_samples", "min_ratio", "c_floor", "pass"],
        rows,
    });
    Ok(out)
}

pub fn t1(o: &Opts, bundle: Option<&Path>) -> Result<Outcome, CliError> {
    match o.backend.unwrap_or(Backend::Rational) {
        Backend::Rational => t1_with::<Rational>(o, bundle, Backend::Rational),
        Backend::Float => t1_with::<f64>(o, bundle, Backend::Float),
    }
}

fn t1_with<S: Scalar>(o: &Opts, bundle: Option<&Path>, b: Backend) -> Result<Outcome, CliError> {
    let (f, sigma, pair) = match bundle {
        Some(p) => {
            let raw: InstanceBundle =
                serde_json::from_str(&input::read(p)?).map_err(haarlab::HaarError::from)?;
            raw.load::<S>()?
        }
        None => {
            let f = input::tree::<S>(o.tree.as_deref())?;
            let sigma = input::sigma(&f, o.sigma.as_deref().ok_or(CliError::MissingInput("--sigma or --bundle"))?)?;
            let pair = input::pair(&f, o.mu1.as_deref(), o.mu2.as_deref())?;
            (f, sigma, pair)
        }
    };
    let t1 = t1_bound_check(&f, &sigma, &pair)?;
    let p = paraproduct_norms(&f, &sigma, &pair)?;
    let residual_ok = [p.residual, p.adjoint_residual, p.annihilation_residual]
        .iter()
        .all(|r| r.abs() <= o.tol);
    let holds = t1.holds && p.pi1_holds && p.diag_holds && p.root_holds && residual_ok;
    let report = json!({
        "check": "two-weight-t1",
        "backend": backend_name(b),
        "bound": t1,
        "paraproducts": p,
    });
    let witness = report.clone();
    Ok(Outcome::new(report, holds, witness))
}

pub fn sigma4(o: &Opts, draws: usize) -> Result<Outcome, CliError> {
    match o.backend.unwrap_or(Backend::Rational) {
        Backend::Rational => sigma4_with::<Rational>(o, draws, Backend::Rational),
        Backend::Float => sigma4_with::<f64>(o, draws, Backend::Float),
    }
}

fn sigma4_with<S: Scalar>(o: &Opts, draws: usize, b: Backend) -> Result<Outcome, CliError> {
    let f = input::tree::<S>(o.tree.as_deref())?;
    let w: Weight<S> = input::weight(&f, o.weight.as_deref())?;
    let seed = o.seed.unwrap_or(0);
    let mut worst = [0.0f64; 4];
    let mut first_failure = Value::Null;
    let mut holds = true;
    let mut results = Vec::new();
    for k in 0..draws.max(1) {
        let mut rng = rng_for(seed, k as u64);
        let fv = random_leaf(&f, &mut rng, -1.0, 1.0);
        let gv = random_leaf(&f, &mut rng, -1.0, 1.0);
        let r = bilinear_sigma_decomposition(&f, &w, &fv, &gv)?.bounds();
        for j in 0..4 {
            if r.bounds[j] > 0.0 {
                worst[j] = worst[j].max(r.sigma[j].abs() / r.bounds[j]);
            }
        }
        let ok = r.holds[0]
            && r.splitting_holds
            && r.sigma4_rho_holds
            && r.identity_residual.abs() <= o.tol
            && r.vanishing_residual.abs() <= o.tol;
        if !ok && holds {
            first_failure = json!({ "draw": k, "seed": seed, "bounds": r });
        }
        holds &= ok;
        results.push(r);
    }
    let report = json!({
        "check": "bilinear-splitting",
        "backend": backend_name(b),
        "seed": seed,
        "draws": results.len(),
        "max_sigma_over_bound": worst,
        "results": results,
    });
    Ok(Outcome::new(report, holds, first_failure))
}

pub fn counterexample(o: &Opts) -> Result<Outcome, CliError> {
    let eps_text = o.eps.as_deref().unwrap_or("0.01");
    let backend = o.backend.unwrap_or(Backend::Rational);
    let (reports, sum_norm) = match backend {
        Backend::Rational => counterexample_with::<Rational>(eps_text)?,
        Backend::Float => counterexample_with::<f64>(eps_text)?,
    };
    let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from).collect();
    let holds = reports.iter().all(|r| r.all_hold);
    let failed: Vec<_> = reports.iter().filter(|r| !r.all_hold).collect();
    let witness = json!(failed);
    let table = Table {
        header: vec!["epsilon", "a2_tree", "a2_unions", "norm_unweighted", "norm_weighted", "paper_lower_bound"],
        rows: rows
            .iter()
            .map(|r| {
                [r.epsilon, r.a2_tree, r.a2_unions, r.norm_unweighted, r.norm_weighted, r.paper_lower_bound]
                    .iter()
                    .map(f64::to_string)
                    .collect()
            })
            .collect(),
    };
    let report = json!({
        "check": "counterexample",
        "backend": backend_name(backend),
        "instances": reports,
        "direct_sum_weighted_norm": sum_norm,
    });
    let mut out = Outcome::new(report, holds, witness);
    out.table = Some(table);
    Ok(out)
}

type Verified = (Vec<haarlab::counterexample::VerifyReport>, Option<f64>);

fn counterexample_with<S: Scalar>(text: &str) -> Result<Verified, CliError> {
    let eps: Vec<S> = input::list(text)?;
    if eps.is_empty() {
        return Err(CliError::Usage("--eps needs at least one value".into()));
    }
    let reports = eps
        .iter()
        .map(|e| verify_instance(&build_instance(e.clone())?))
        .collect::<Result<Vec<_>, _>>()?;
    let sum = if eps.len() > 1 {
        Some(direct_sum(&eps)?.weighted_norm()?)
    } else {
        None
    };
    Ok((reports, sum))
}

pub fn suite(
    o: &Opts,
    trees: Option<usize>,
    depth: Option<usize>,
    criteria: Option<&str>,
    quick: bool,
) -> Result<Outcome, CliError> {
    let seed = o.seed.unwrap_or(42);
    let mut cfg = if quick { BatteryConfig::quick(seed) } else { BatteryConfig { seed, ..Default::default() } };
    if let Some(t) = trees {
        cfg.trees = t;
    }
    if let Some(d) = depth {
        cfg.depth = d;
    }
    if let Some(b) = o.budget {
        cfg.bellman_samples = b;
    }
    let ids: Vec<u8> = match criteria {
        Some(text) => text
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| CliError::Usage(format!("bad criterion id `{t}`"))))
            .collect::<Result<_, _>>()?,
        None => battery::CRITERIA.iter().map(|(id, _)| *id).collect(),
    };
    let reports = ids
        .iter()
        .map(|&id| battery::run_criterion(id, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        eprintln!(
            "criterion {} {} {} checked={} violations={}",
            r.id,
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.checked,
            r.violations
        );
    }
    let holds = reports.iter().all(|r| r.pass);
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    let witness = json!(failed);
    let rows = reports
        .iter()
        .flat_map(|r| {
            r.constants.iter().map(move |(k, v)| {
                vec![r.id.to_string(), r.name.to_string(), k.clone(), v.to_string()]
            })
        })
        .collect();
    let report = json!({ "check": "suite", "config": cfg, "criteria": reports });
    let mut out = Outcome::new(report, holds, witness);
    out.table = Some(Table {
        header: vec!["criterion", "name", "constant", "value"],
        rows,
    });
    Ok(out)
}
