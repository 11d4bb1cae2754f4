//! Outer measures on the atom collection, sizes, outer L^p norms and the
//! embedding inequalities built on them.
//!
//! Functions on atoms are [`TreeFunction`]s; measures are [`Measure`]s. The
//! outer lifting `mu*` is generated by the subtrees `D(I)` at cost `mu(I)`.

use serde::Serialize;

use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, LeafFunction, Measure, TreeFunction};
use crate::marttools::{norm_sq, Weight};
use crate::scalar::Scalar;

/// Largest atom count accepted by the exhaustive oracles.
pub const BRUTE_FORCE_MAX_ATOMS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Size {
    /// `S^p_mu`, `p >= 1`.
    Power(f64),
    /// `S^inf_mu`: supremum over atoms of positive mass.
    Sup,
}

/// A subset of the atom collection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuterSet(pub Vec<bool>);

impl OuterSet {
    pub fn empty<S: Scalar>(f: &Filtration<S>) -> Self {
        OuterSet(vec![false; f.atom_count()])
    }

    pub fn from_ids<S: Scalar>(f: &Filtration<S>, ids: &[AtomId]) -> Result<Self> {
        let mut set = Self::empty(f);
        for &id in ids {
            f.check(id)?;
            set.0[id.0] = true;
        }
        Ok(set)
    }

    /// `D(I)`.
    pub fn subtree<S: Scalar>(f: &Filtration<S>, id: AtomId) -> Self {
        let mut set = Self::empty(f);
        for i in f.subtree(id) {
            set.0[i] = true;
        }
        set
    }

    pub fn from_mask(n: usize, mask: u64) -> Self {
        OuterSet((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.0[id.0]
    }

    pub fn members(&self) -> Vec<AtomId> {
        (0..self.0.len()).filter(|&i| self.0[i]).map(AtomId).collect()
    }
}

/// `mu*(A)` by dynamic programming: a subtree meeting `A` is either covered by
/// its root or by covers of its children.
pub fn outer_measure<S: Scalar>(f: &Filtration<S>, set: &OuterSet, mu: &Measure<S>) -> S {
    let n = f.atom_count();
    let mut cover: Vec<Option<S>> = vec![None; n];
    for i in (0..n).rev() {
        let own = mu.mass(AtomId(i)).clone();
        cover[i] = if set.0[i] {
            Some(own)
        } else {
            let mut any = false;
            let mut total = S::zero();
            for c in &f.atom(AtomId(i)).children {
                if let Some(v) = &cover[c.0] {
                    any = true;
                    total = total + v.clone();
                }
            }
            any.then(|| own.min_of(total))
        };
    }
    f.roots()
        .iter()
        .filter_map(|r| cover[r.0].clone())
        .fold(S::zero(), |acc, v| acc + v)
}

fn check_brute_force_size<S: Scalar>(f: &Filtration<S>) -> Result<usize> {
    let n = f.atom_count();
    if n > BRUTE_FORCE_MAX_ATOMS {
        return Err(HaarError::BudgetExceeded(format!(
            "{n} atoms exceed the exhaustive limit {BRUTE_FORCE_MAX_ATOMS}"
        )));
    }
    Ok(n)
}

/// `mu*` of every subset of atoms (indexed by bitmask), by minimizing over all
/// `2^n` covering collections.
pub fn brute_force_outer_measures<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>) -> Result<Vec<S>> {
    let n = check_brute_force_size(f)?;
    let full = 1usize << n;
    let subtree_mask: Vec<usize> = (0..n)
        .map(|i| f.subtree(AtomId(i)).fold(0, |m, j| m | 1 << j))
        .collect();
    // best[U] = cheapest collection whose union of subtrees is exactly U.
    let mut best: Vec<Option<S>> = vec![None; full];
    for k in 0..full {
        let mut union = 0usize;
        let mut cost = S::zero();
        for (i, sm) in subtree_mask.iter().enumerate() {
            if k >> i & 1 == 1 {
                union |= sm;
                cost = cost + mu.mass(AtomId(i)).clone();
            }
        }
        if best[union].as_ref().is_none_or(|b| &cost < b) {
            best[union] = Some(cost);
        }
    }
    // Superset minimum: mu*(A) = min over unions containing A.
    for bit in 0..n {
        for mask in 0..full {
            if mask >> bit & 1 == 0 {
                if let Some(v) = best[mask | 1 << bit].clone() {
                    if best[mask].as_ref().is_none_or(|b| &v < b) {
                        best[mask] = Some(v);
                    }
                }
            }
        }
    }
    Ok(best.into_iter().map(|v| v.expect("full set covers")).collect())
}

pub fn brute_force_outer_measure<S: Scalar>(
    f: &Filtration<S>,
    set: &OuterSet,
    mu: &Measure<S>,
) -> Result<S> {
    let all = brute_force_outer_measures(f, mu)?;
    Ok(all[set.mask() as usize].clone())
}

// ---------------------------------------------------------------------------
// Sizes

fn validate_power(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(HaarError::InvalidParameter(format!("size exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// `S F(D(I))` for every atom. Power sizes are 0 on atoms of zero mass.
pub fn sizes<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    size: Size,
    mu: &Measure<S>,
) -> Result<Vec<f64>> {
    let n = f.atom_count();
    match size {
        Size::Power(p) => {
            validate_power(p)?;
            let terms: Vec<f64> = (0..n)
                .map(|i| values.0[i].abs().to_f64().powf(p) * mu.mass(AtomId(i)).to_f64())
                .collect();
            let mut sums = terms;
            for i in (0..n).rev() {
                if let Some(parent) = f.atom(AtomId(i)).parent {
                    sums[parent.0] += sums[i];
                }
            }
            Ok((0..n)
                .map(|i| {
                    let m = mu.mass(AtomId(i)).to_f64();
                    if m > 0.0 {
                        (sums[i] / m).powf(1.0 / p)
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        Size::Sup => Ok(sup_sizes(f, values, mu).into_iter().map(|v| v.to_f64()).collect()),
    }
}

/// `S^inf_mu F(D(I))` for every atom, exactly.
pub fn sup_sizes<S: Scalar>(f: &Filtration<S>, values: &TreeFunction<S>, mu: &Measure<S>) -> Vec<S> {
    let n = f.atom_count();
    let mut out: Vec<S> = (0..n)
        .map(|i| {
            if mu.mass(AtomId(i)).is_zero() {
                S::zero()
            } else {
                values.0[i].abs()
            }
        })
        .collect();
    for i in (0..n).rev() {
        if let Some(parent) = f.atom(AtomId(i)).parent {
            let v = out[i].clone();
            out[parent.0] = out[parent.0].clone().max_of(v);
        }
    }
    out
}

/// `S^1_mu F(D(I))` for every atom, exactly; 0 on atoms of zero mass.
pub fn s1_sizes<S: Scalar>(f: &Filtration<S>, values: &TreeFunction<S>, mu: &Measure<S>) -> Vec<S> {
    let terms: Vec<S> = values
        .0
        .iter()
        .zip(mu.atom_masses())
        .map(|(v, m)| v.abs() * m.clone())
        .collect();
    f.subtree_totals(&terms)
        .into_iter()
        .zip(mu.atom_masses())
        .map(|(s, m)| if m.is_zero() { S::zero() } else { s / m.clone() })
        .collect()
}

pub fn size<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    id: AtomId,
    kind: Size,
    mu: &Measure<S>,
) -> Result<f64> {
    f.check(id)?;
    if matches!(kind, Size::Power(_)) && mu.mass(id).is_zero() {
        return Err(HaarError::ZeroMass(f.name(id).to_string()));
    }
    Ok(sizes(f, values, kind, mu)?[id.0])
}

/// `sup_I S F(D(I))` with the first maximizing atom.
pub fn outer_linf_norm<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    kind: Size,
    mu: &Measure<S>,
) -> Result<(f64, AtomId)> {
    let s = sizes(f, values, kind, mu)?;
    let best = first_max(&s);
    Ok((s[best], AtomId(best)))
}

/// Exact `||F||_{L^inf(S^1_mu)}` with the first maximizing atom.
pub fn outer_linf_s1<S: Scalar>(f: &Filtration<S>, values: &TreeFunction<S>, mu: &Measure<S>) -> (S, AtomId) {
    let s = s1_sizes(f, values, mu);
    let mut best = 0;
    for (i, v) in s.iter().enumerate() {
        if v > &s[best] {
            best = i;
        }
    }
    (s[best].clone(), AtomId(best))
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Superlevel sets and outer L^p norms

/// `{I : |F(I)| > lambda, mu(I) > 0}`, the optimal garbage set for `S^inf`.
pub fn superlevel_set<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    lambda: &S,
    mu: &Measure<S>,
) -> OuterSet {
    OuterSet(
        (0..f.atom_count())
            .map(|i| &values.0[i].abs() > lambda && !mu.mass(AtomId(i)).is_zero())
            .collect(),
    )
}

/// `mu*(S F > lambda)` for the sup size.
pub fn superlevel_outer_measure<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    lambda: &S,
    kind: Size,
    mu: &Measure<S>,
) -> Result<S> {
    if kind != Size::Sup {
        return Err(HaarError::UnsupportedSize(
            "superlevel measures are computed for the sup size only".into(),
        ));
    }
    Ok(outer_measure(f, &superlevel_set(f, values, lambda, mu), mu))
}

/// Exhaustive `inf mu*(G)` over all `G` with `S(F 1_{complement of G}) <= lambda`
/// everywhere, for a sup or power size.
pub fn brute_force_superlevel<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    lambda: f64,
    kind: Size,
    mu: &Measure<S>,
) -> Result<S> {
    let n = check_brute_force_size(f)?;
    let outer = brute_force_outer_measures(f, mu)?;
    let mut best: Option<S> = None;
    for mask in 0..(1usize << n) {
        let kept = TreeFunction(
            (0..n)
                .map(|i| if mask >> i & 1 == 1 { S::zero() } else { values.0[i].clone() })
                .collect(),
        );
        let s = sizes(f, &kept, kind, mu)?;
        if s.iter().all(|v| *v <= lambda) && best.as_ref().is_none_or(|b| &outer[mask] < b) {
            best = Some(outer[mask].clone());
        }
    }
    Ok(best.expect("the full collection is admissible"))
}

/// The step function `lambda -> mu*(S^inf F > lambda)`: breakpoints
/// `0 = b_0 < b_1 < ... < b_k` and the value on each `[b_j, b_{j+1})`.
pub fn superlevel_profile<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    mu: &Measure<S>,
) -> (Vec<S>, Vec<S>) {
    let mut levels: Vec<S> = (0..f.atom_count())
        .filter(|&i| !mu.mass(AtomId(i)).is_zero())
        .map(|i| values.0[i].abs())
        .filter(|v| !v.is_zero())
        .collect();
    levels.push(S::zero());
    levels.sort_by(|a, b| a.partial_cmp(b).expect("ordered"));
    levels.dedup();
    let masses = levels[..levels.len() - 1]
        .iter()
        .map(|b| outer_measure(f, &superlevel_set(f, values, b, mu), mu))
        .collect();
    (levels, masses)
}

/// Exact `||F||_{L^1(mu*, S^inf_mu)}`.
pub fn outer_l1_norm<S: Scalar>(f: &Filtration<S>, values: &TreeFunction<S>, mu: &Measure<S>) -> S {
    let (b, m) = superlevel_profile(f, values, mu);
    m.iter()
        .enumerate()
        .fold(S::zero(), |acc, (j, mj)| acc + mj.clone() * (b[j + 1].clone() - b[j].clone()))
}

/// Exact `||F||^2_{L^2(mu*, S^inf_mu)}`.
pub fn outer_l2_norm_sq<S: Scalar>(f: &Filtration<S>, values: &TreeFunction<S>, mu: &Measure<S>) -> S {
    let (b, m) = superlevel_profile(f, values, mu);
    m.iter().enumerate().fold(S::zero(), |acc, (j, mj)| {
        acc + mj.clone() * (b[j + 1].clone() * b[j + 1].clone() - b[j].clone() * b[j].clone())
    })
}

/// `||F||_{L^p(mu*, S^inf_mu)}`, integrating `p lambda^{p-1}` in closed form
/// between breakpoints.
pub fn outer_lp_norm<S: Scalar>(
    f: &Filtration<S>,
    values: &TreeFunction<S>,
    p: f64,
    kind: Size,
    mu: &Measure<S>,
) -> Result<f64> {
    if kind != Size::Sup {
        return Err(HaarError::UnsupportedSize("outer L^p norms use the sup size".into()));
    }
    validate_power(p)?;
    let (b, m) = superlevel_profile(f, values, mu);
    let total: f64 = m
        .iter()
        .enumerate()
        .map(|(j, mj)| mj.to_f64() * (b[j + 1].to_f64().powf(p) - b[j].to_f64().powf(p)))
        .sum();
    Ok(total.powf(1.0 / p))
}

// ---------------------------------------------------------------------------
// Inequality checks

/// Outcome of an inequality `lhs <= rhs`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl CheckReport {
    /// `holds` is decided by the caller (exactly, when possible).
    pub fn new(lhs: f64, rhs: f64, holds: bool, witness: Option<String>) -> Self {
        CheckReport {
            lhs,
            rhs,
            slack: rhs - lhs,
            holds,
            witness,
        }
    }

    /// Compares floats, allowing a relative tolerance for rounding.
    pub fn float(lhs: f64, rhs: f64, tol: f64, witness: Option<String>) -> Self {
        let holds = lhs <= rhs + tol * rhs.abs().max(lhs.abs());
        Self::new(lhs, rhs, holds, witness)
    }

    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// `sum |F G| mu <= ||F||_{L^1(mu*, S^inf)} ||G||_{L^inf(S^1_mu)}`, exactly.
pub fn duality_check<S: Scalar>(
    f: &Filtration<S>,
    big_f: &TreeFunction<S>,
    big_g: &TreeFunction<S>,
    mu: &Measure<S>,
) -> CheckReport {
    let lhs = big_f
        .0
        .iter()
        .zip(&big_g.0)
        .zip(mu.atom_masses())
        .fold(S::zero(), |acc, ((a, b), m)| acc + (a.clone() * b.clone()).abs() * m.clone());
    let l1 = outer_l1_norm(f, big_f, mu);
    let (linf, witness) = outer_linf_s1(f, big_g, mu);
    let rhs = l1 * linf;
    CheckReport::new(lhs.to_f64(), rhs.to_f64(), lhs <= rhs, Some(f.name(witness).to_string()))
}

/// `||H||_{L^1(S^inf)} <= 2 ||h||_{L^1(I0)}` with `H(I) = 1 / <1/h>_I` on `D(I0)`.
pub fn reciprocal_average_bound<S: Scalar>(
    f: &Filtration<S>,
    h: &LeafFunction<S>,
    root: AtomId,
) -> Result<CheckReport> {
    f.check(root)?;
    let leaves = f.leaf_range(root);
    if leaves.clone().any(|j| h.0[j] <= S::zero()) {
        return Err(HaarError::InvalidParameter("h must be positive on I0".into()));
    }
    let nu = Measure::reference(f);
    let inv = LeafFunction(
        (0..f.leaf_count())
            .map(|j| if leaves.contains(&j) { S::one() / h.0[j].clone() } else { S::zero() })
            .collect(),
    );
    let avg = f.averages(&inv, &nu);
    let scope = f.subtree(root);
    let big_h = TreeFunction(
        (0..f.atom_count())
            .map(|i| if scope.contains(&i) { S::one() / avg.0[i].clone() } else { S::zero() })
            .collect(),
    );
    let norm = outer_l1_norm(f, &big_h, &nu);
    let bound = leaves
        .fold(S::zero(), |acc, j| acc + h.0[j].clone() * nu.leaf_mass(j).clone())
        * S::from_usize(2);
    Ok(CheckReport::new(
        norm.to_f64(),
        bound.to_f64(),
        norm <= bound,
        Some(f.name(root).to_string()),
    ))
}

/// `<f>_{I,mu}` for every atom with 0 on atoms of zero mass.
pub fn averaging<S: Scalar>(f: &Filtration<S>, g: &LeafFunction<S>, mu: &Measure<S>) -> TreeFunction<S> {
    f.averages(g, mu)
}

/// `||A_u f A_w g||_{L^1(S^inf)} <= 4 ||f||_{L^2(u)} ||g||_{L^2(w)}`, decided
/// exactly by squaring.
pub fn bilinear_embedding_check<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    a: &LeafFunction<S>,
    b: &LeafFunction<S>,
) -> CheckReport {
    let nu = Measure::reference(f);
    let um = w.u_measure(f);
    let wm = w.w_measure(f);
    let au = f.averages(a, &um);
    let aw = f.averages(b, &wm);
    let product = TreeFunction(au.0.into_iter().zip(aw.0).map(|(x, y)| x * y).collect());
    let lhs = outer_l1_norm(f, &product, &nu);
    let fa = norm_sq(a, &um);
    let gb = norm_sq(b, &wm);
    let holds = lhs.clone() * lhs.clone() <= S::from_usize(16) * fa.clone() * gb.clone();
    let rhs = 4.0 * (fa.to_f64() * gb.to_f64()).sqrt();
    CheckReport::new(lhs.to_f64(), rhs, holds, None)
}

/// `||A_mu f||_{L^2(mu*, S^inf_mu)} <= 2 ||f||_{L^2(mu)}`, decided exactly on squares.
pub fn averaging_embedding_check<S: Scalar>(
    f: &Filtration<S>,
    mu: &Measure<S>,
    g: &LeafFunction<S>,
) -> CheckReport {
    let avg = f.averages(g, mu);
    let lhs_sq = outer_l2_norm_sq(f, &avg, mu);
    let rhs_sq = norm_sq(g, mu) * S::from_usize(4);
    CheckReport::new(
        lhs_sq.to_f64().sqrt(),
        rhs_sq.to_f64().sqrt(),
        lhs_sq <= rhs_sq,
        None,
    )
}

/// `M_mu f(x) = max over atoms I containing x (with mu(I) > 0) of <|f|>_{I,mu}`.
pub fn maximal_function<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, g: &LeafFunction<S>) -> LeafFunction<S> {
    let avg = f.averages(&g.map(|v| v.abs()), mu);
    LeafFunction(
        f.leaves()
            .iter()
            .map(|&leaf| {
                f.ancestors(leaf)
                    .filter(|a| !mu.mass(*a).is_zero())
                    .fold(S::zero(), |acc, a| acc.max_of(avg.0[a.0].clone()))
            })
            .collect(),
    )
}

/// `||M_mu f||_{L^2(mu)} <= 2 ||f||_{L^2(mu)}`, decided exactly on squares.
pub fn maximal_check<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, g: &LeafFunction<S>) -> CheckReport {
    let m = maximal_function(f, mu, g);
    let lhs_sq = norm_sq(&m, mu);
    let rhs_sq = norm_sq(g, mu) * S::from_usize(4);
    CheckReport::new(
        lhs_sq.to_f64().sqrt(),
        rhs_sq.to_f64().sqrt(),
        lhs_sq <= rhs_sq,
        None,
    )
}
