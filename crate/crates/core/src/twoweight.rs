//! Two-measure estimates for martingale multipliers: joint A2, testing
//! constants, the paraproduct splitting `T^{mu1} = Pi1 + Pi2' + T_diag + root`,
//! and the four-term splitting of the bilinear form `sum |int Delta_I(fu) Delta_I(gw)|`.
//!
//! Operators act on leaf-value vectors; `T^{mu1} f = T_sigma(f mu1)` is the
//! matrix of `T_sigma` with columns scaled by the density of `mu1`. Weighted
//! averages over atoms of zero mass are 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::carleson::{gamma_sequence, packing_constant_for, rho_sequence};
use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, LeafFunction, Measure, MeasureValue, TreeSpec};
use crate::marttools::{a2_characteristic, apply_multiplier, norm_sq, MultiplierSymbol, Weight};
use crate::operator::{multiplier_matrix, Mat, WeightedOperator};
use crate::scalar::Scalar;

/// Densities of `mu1` and `mu2` against the reference measure.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurePair<S> {
    pub mu1: LeafFunction<S>,
    pub mu2: LeafFunction<S>,
}

impl<S: Scalar> MeasurePair<S> {
    pub fn new(f: &Filtration<S>, mu1: LeafFunction<S>, mu2: LeafFunction<S>) -> Result<Self> {
        for d in [&mu1, &mu2] {
            if d.len() != f.leaf_count() {
                return Err(HaarError::LengthMismatch {
                    expected: f.leaf_count(),
                    got: d.len(),
                });
            }
            if d.0.iter().any(|v| v < &S::zero()) {
                return Err(HaarError::InvalidParameter("negative density".into()));
            }
        }
        if mu1.is_zero() && mu2.is_zero() {
            return Err(HaarError::DegenerateMeasure("both measures vanish".into()));
        }
        Ok(MeasurePair { mu1, mu2 })
    }

    /// `mu1 = mu2 = nu`.
    pub fn reference(f: &Filtration<S>) -> Self {
        let one = LeafFunction::constant(f, S::one());
        MeasurePair { mu1: one.clone(), mu2: one }
    }

    /// `mu1 = u nu`, `mu2 = w nu`.
    pub fn from_weight(w: &Weight<S>) -> Self {
        MeasurePair {
            mu1: w.u().clone(),
            mu2: w.w().clone(),
        }
    }

    pub fn swapped(&self) -> Self {
        MeasurePair {
            mu1: self.mu2.clone(),
            mu2: self.mu1.clone(),
        }
    }

    pub fn measures(&self, f: &Filtration<S>) -> (Measure<S>, Measure<S>) {
        (
            Measure::with_density(f, &self.mu1).expect("validated density"),
            Measure::with_density(f, &self.mu2).expect("validated density"),
        )
    }

    /// `{"mu1": {leaf: density}, "mu2": {leaf: density}}`; every leaf must appear.
    pub fn from_json(f: &Filtration<S>, text: &str) -> Result<Self> {
        let file: PairFile = serde_json::from_str(text)?;
        Self::from_maps(f, &file.mu1, &file.mu2)
    }

    fn from_maps(
        f: &Filtration<S>,
        mu1: &HashMap<String, MeasureValue>,
        mu2: &HashMap<String, MeasureValue>,
    ) -> Result<Self> {
        let conv = |m: &HashMap<String, MeasureValue>| -> Result<LeafFunction<S>> {
            let named = m
                .iter()
                .map(|(k, v)| Ok((k.clone(), v.to_scalar::<S>()?)))
                .collect::<Result<HashMap<_, _>>>()?;
            LeafFunction::from_named(f, &named, None)
        };
        Self::new(f, conv(mu1)?, conv(mu2)?)
    }

    pub fn to_f64(&self) -> MeasurePair<f64> {
        MeasurePair {
            mu1: self.mu1.to_f64(),
            mu2: self.mu2.to_f64(),
        }
    }
}

#[derive(Deserialize)]
struct PairFile {
    mu1: HashMap<String, MeasureValue>,
    mu2: HashMap<String, MeasureValue>,
}

/// Instance bundle `{tree, sigma, mu1, mu2}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceBundle {
    pub tree: TreeSpec,
    pub sigma: HashMap<String, MeasureValue>,
    pub mu1: HashMap<String, MeasureValue>,
    pub mu2: HashMap<String, MeasureValue>,
}

impl InstanceBundle {
    pub fn load<S: Scalar>(&self) -> Result<(Filtration<S>, MultiplierSymbol<S>, MeasurePair<S>)> {
        let f = Filtration::from_spec(&self.tree)?;
        let sigma = serde_json::to_string(&self.sigma)?;
        let sigma = MultiplierSymbol::from_json(&f, &sigma)?;
        let pair = MeasurePair::from_maps(&f, &self.mu1, &self.mu2)?;
        Ok((f, sigma, pair))
    }
}

// ---------------------------------------------------------------------------
// Joint A2 and testing constants

#[derive(Clone, Debug, PartialEq)]
pub struct JointA2<S> {
    pub value: S,
    pub witness: AtomId,
}

/// `max_I mu1(I) mu2(I) / |I|^2`.
pub fn joint_a2<S: Scalar>(f: &Filtration<S>, pair: &MeasurePair<S>) -> JointA2<S> {
    let (m1, m2) = pair.measures(f);
    let mut best = JointA2 {
        value: S::zero(),
        witness: f.roots()[0],
    };
    for id in f.ids() {
        let nu = f.measure(id).clone();
        let v = m1.mass(id).clone() * m2.mass(id).clone() / (nu.clone() * nu);
        if v > best.value {
            best = JointA2 { value: v, witness: id };
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestingConstant<S> {
    /// `A^2`, exact in the backend.
    pub a_sq: S,
    pub a: f64,
    pub witness: AtomId,
    /// 1 for `||T_I(1_I mu1)||_{mu2}`, 2 for `||T_I(1_I mu2)||_{mu1}`.
    pub direction: u8,
}

fn restricted_image<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    density: &LeafFunction<S>,
    id: AtomId,
) -> LeafFunction<S> {
    let mut g = LeafFunction(vec![S::zero(); f.leaf_count()]);
    for j in f.leaf_range(id) {
        g.0[j] = density.0[j].clone();
    }
    apply_multiplier(f, sigma, &g, Some(id))
}

/// `A = max_I max_j ||T_I(1_I mu_j)||_{L^2(mu_{3-j})} / mu_j(I)^{1/2}`, skipping
/// atoms with `mu_j(I) = 0`.
pub fn testing_constant<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    pair: &MeasurePair<S>,
) -> TestingConstant<S> {
    let (m1, m2) = pair.measures(f);
    let mut best = TestingConstant {
        a_sq: S::zero(),
        a: 0.0,
        witness: f.roots()[0],
        direction: 1,
    };
    for id in f.ids() {
        let dirs = [(1u8, &pair.mu1, &m1, &m2), (2u8, &pair.mu2, &m2, &m1)];
        for (dir, density, from, to) in dirs {
            let mass = from.mass(id);
            if mass.is_zero() {
                continue;
            }
            let image = restricted_image(f, sigma, density, id);
            let ratio = norm_sq(&image, to) / mass.clone();
            if ratio > best.a_sq {
                best = TestingConstant {
                    a: ratio.to_f64().sqrt(),
                    a_sq: ratio,
                    witness: id,
                    direction: dir,
                };
            }
        }
    }
    best
}

/// `T^{mu1}` as a leaf matrix.
pub fn t_mu1_matrix<S: Scalar>(f: &Filtration<S>, sigma: &MultiplierSymbol<S>, pair: &MeasurePair<S>) -> Mat<S> {
    multiplier_matrix(f, &sigma.0, None).scale_columns(&pair.mu1.0)
}

fn pair_operator<S: Scalar>(m: &Mat<S>, m1: &Measure<S>, m2: &Measure<S>) -> WeightedOperator {
    let d = |mu: &Measure<S>| mu.leaf_masses().iter().map(Scalar::to_f64).collect::<Vec<_>>();
    WeightedOperator::new(m.to_f64(), d(m1), d(m2)).expect("square leaf matrix")
}

#[derive(Clone, Debug, Serialize)]
pub struct T1Report {
    pub norm: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    pub joint_a2: f64,
    pub joint_a2_witness: String,
    pub testing_constant: f64,
    pub testing_witness: String,
    pub testing_direction: u8,
}

/// Relative tolerance for comparing float norms against bounds.
pub const NORM_TOLERANCE: f64 = 1e-9;

fn within(value: f64, bound: f64) -> bool {
    value <= bound + NORM_TOLERANCE * bound.max(1.0)
}

/// `||T^{mu1}||_{L^2(mu1) -> L^2(mu2)} <= 2 [mu1, mu2]^{1/2} + 5A`, with the
/// norm taken on the supports of both measures.
pub fn t1_bound_check<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    pair: &MeasurePair<S>,
) -> Result<T1Report> {
    let (m1, m2) = pair.measures(f);
    let norm = pair_operator(&t_mu1_matrix(f, sigma, pair), &m1, &m2).norm()?;
    let a2 = joint_a2(f, pair);
    let a = testing_constant(f, sigma, pair);
    let bound = 2.0 * a2.value.to_f64().sqrt() + 5.0 * a.a;
    Ok(T1Report {
        norm,
        bound,
        slack: bound - norm,
        holds: within(norm, bound),
        joint_a2: a2.value.to_f64(),
        joint_a2_witness: f.name(a2.witness).to_string(),
        testing_constant: a.a,
        testing_witness: f.name(a.witness).to_string(),
        testing_direction: a.direction,
    })
}

// ---------------------------------------------------------------------------
// Paraproducts

/// `E_I^mu M` (rows outside `I` vanish).
fn left_expectation<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, id: AtomId, m: &Mat<S>, coeff: &S, out: &mut Mat<S>) {
    let mass = mu.mass(id);
    if mass.is_zero() {
        return;
    }
    let range = f.leaf_range(id);
    let mut avg = vec![S::zero(); m.cols()];
    for l in range.clone() {
        let wl = mu.leaf_mass(l);
        if wl.is_zero() {
            continue;
        }
        for (a, v) in avg.iter_mut().zip(m.row(l)) {
            *a = a.clone() + wl.clone() * v.clone();
        }
    }
    let scale = coeff.clone() / mass.clone();
    for a in avg.iter_mut() {
        *a = a.clone() * scale.clone();
    }
    for i in range {
        for (j, a) in avg.iter().enumerate() {
            if !a.is_zero() {
                out.add_at(i, j, a.clone());
            }
        }
    }
}

/// `M E_I^mu` (columns outside `I` vanish).
fn right_expectation<S: Scalar>(m: &Mat<S>, f: &Filtration<S>, mu: &Measure<S>, id: AtomId, coeff: &S, out: &mut Mat<S>) {
    let mass = mu.mass(id);
    if mass.is_zero() {
        return;
    }
    let range = f.leaf_range(id);
    let weights: Vec<S> = range.clone().map(|j| coeff.clone() * mu.leaf_mass(j).clone() / mass.clone()).collect();
    for r in 0..m.rows() {
        let row = m.row(r);
        let s = range.clone().fold(S::zero(), |acc, l| acc + row[l].clone());
        if s.is_zero() {
            continue;
        }
        for (k, j) in range.clone().enumerate() {
            if !weights[k].is_zero() {
                out.add_at(r, j, s.clone() * weights[k].clone());
            }
        }
    }
}

fn left_difference<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, id: AtomId, m: &Mat<S>, out: &mut Mat<S>) {
    if !f.atom(id).is_active() {
        return;
    }
    for &c in &f.atom(id).children {
        left_expectation(f, mu, c, m, &S::one(), out);
    }
    left_expectation(f, mu, id, m, &-S::one(), out);
}

fn right_difference<S: Scalar>(m: &Mat<S>, f: &Filtration<S>, mu: &Measure<S>, id: AtomId, out: &mut Mat<S>) {
    if !f.atom(id).is_active() {
        return;
    }
    for &c in &f.atom(id).children {
        right_expectation(m, f, mu, c, &S::one(), out);
    }
    right_expectation(m, f, mu, id, &-S::one(), out);
}

fn zeros_like<S: Scalar>(m: &Mat<S>) -> Mat<S> {
    Mat::zeros(m.rows(), m.cols())
}

/// `sum_I Delta_I^{mu_out} M E_I^{mu_in}`.
fn paraproduct<S: Scalar>(f: &Filtration<S>, m: &Mat<S>, mu_in: &Measure<S>, mu_out: &Measure<S>) -> Mat<S> {
    let mut out = zeros_like(m);
    for id in f.ids().filter(|&i| f.atom(i).is_active()) {
        let mut me = zeros_like(m);
        right_expectation(m, f, mu_in, id, &S::one(), &mut me);
        left_difference(f, mu_out, id, &me, &mut out);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Paraproducts<S> {
    pub t: Mat<S>,
    pub pi1: Mat<S>,
    /// `sum_I E_I^{mu2} T^{mu1} Delta_I^{mu1}`, the transpose of `Pi2` for the linear pairings.
    pub pi2_adjoint: Mat<S>,
    pub diag: Mat<S>,
    /// `sum_R E_R^{mu2} T^{mu1} E_R^{mu1}` over roots, present because the tree is finite.
    pub root: Mat<S>,
    /// `max |T - Pi1 - Pi2' - T_diag - root|` on the supports.
    pub residual: S,
    /// `max |D2 Pi2' - Pi2^T D1|`.
    pub adjoint_residual: S,
    /// `max |Delta_I^{mu2} Pi1 Delta_J^{mu1}|` over `J in D(I)`.
    pub annihilation_residual: S,
}

fn support_max_abs<S: Scalar>(m: &Mat<S>, rows: &[S], cols: &[S]) -> S {
    let mut best = S::zero();
    for i in 0..m.rows() {
        if rows[i].is_zero() {
            continue;
        }
        for j in 0..m.cols() {
            if cols[j].is_zero() {
                continue;
            }
            let v = m.get(i, j).abs();
            if v > best {
                best = v;
            }
        }
    }
    best
}

/// Builds the four parts of `T^{mu1}` and checks the splitting identity, the
/// adjoint relation and the annihilation pattern.
pub fn paraproduct_decompose<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    pair: &MeasurePair<S>,
) -> Result<Paraproducts<S>> {
    let (m1, m2) = pair.measures(f);
    for (name, m) in [("mu1", &m1), ("mu2", &m2)] {
        if m.total(f).is_zero() {
            return Err(HaarError::DegenerateMeasure(format!("{name} vanishes identically")));
        }
    }
    let t = t_mu1_matrix(f, sigma, pair);
    let pi1 = paraproduct(f, &t, &m1, &m2);

    let mut pi2_adjoint = zeros_like(&t);
    let mut diag = zeros_like(&t);
    for id in f.ids().filter(|&i| f.atom(i).is_active()) {
        let mut td = zeros_like(&t);
        right_difference(&t, f, &m1, id, &mut td);
        left_expectation(f, &m2, id, &td, &S::one(), &mut pi2_adjoint);
        left_difference(f, &m2, id, &td, &mut diag);
    }
    let mut root = zeros_like(&t);
    for &r in f.roots() {
        let mut te = zeros_like(&t);
        right_expectation(&t, f, &m1, r, &S::one(), &mut te);
        left_expectation(f, &m2, r, &te, &S::one(), &mut root);
    }

    let (d1, d2) = (m1.leaf_masses(), m2.leaf_masses());
    let rest = t.sub(&pi1).sub(&pi2_adjoint).sub(&diag).sub(&root);
    let residual = support_max_abs(&rest, d2, d1);

    // Pi2 = sum_I Delta_I^{mu1} T^{mu2} E_I^{mu2}, built independently.
    let t2 = t_mu1_matrix(f, sigma, &pair.swapped());
    let pi2 = paraproduct(f, &t2, &m2, &m1);
    let adjoint = pi2_adjoint.scale_rows(d2).sub(&pi2.transpose().scale_columns(d1));
    let adjoint_residual = adjoint.max_abs();

    let mut annihilation_residual = S::zero();
    for j in f.ids().filter(|&i| f.atom(i).is_active()) {
        let mut right = zeros_like(&t);
        right_difference(&pi1, f, &m1, j, &mut right);
        for i in f.ancestors(j) {
            if !f.atom(i).is_active() {
                continue;
            }
            let mut both = zeros_like(&t);
            left_difference(f, &m2, i, &right, &mut both);
            let v = support_max_abs(&both, d2, d1);
            if v > annihilation_residual {
                annihilation_residual = v;
            }
        }
    }

    Ok(Paraproducts {
        t,
        pi1,
        pi2_adjoint,
        diag,
        root,
        residual,
        adjoint_residual,
        annihilation_residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ParaproductNorms {
    pub t: f64,
    pub pi1: f64,
    pub pi2_adjoint: f64,
    pub diag: f64,
    pub root: f64,
    pub testing_constant: f64,
    pub joint_a2: f64,
    /// `||Pi1|| <= 2A`.
    pub pi1_holds: bool,
    /// `||T_diag|| <= A + 2 [mu1, mu2]^{1/2}`.
    pub diag_holds: bool,
    /// `||root|| <= A`.
    pub root_holds: bool,
    pub residual: f64,
    pub adjoint_residual: f64,
    pub annihilation_residual: f64,
}

/// Weighted norms of the parts together with the bounds they must satisfy.
pub fn paraproduct_norms<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    pair: &MeasurePair<S>,
) -> Result<ParaproductNorms> {
    let parts = paraproduct_decompose(f, sigma, pair)?;
    let (m1, m2) = pair.measures(f);
    let norm = |m: &Mat<S>| pair_operator(m, &m1, &m2).norm();
    let a = testing_constant(f, sigma, pair).a;
    let a2 = joint_a2(f, pair).value.to_f64();
    let (pi1, diag, root) = (norm(&parts.pi1)?, norm(&parts.diag)?, norm(&parts.root)?);
    Ok(ParaproductNorms {
        t: norm(&parts.t)?,
        pi1,
        pi2_adjoint: norm(&parts.pi2_adjoint)?,
        diag,
        root,
        testing_constant: a,
        joint_a2: a2,
        pi1_holds: within(pi1, 2.0 * a),
        diag_holds: within(diag, a + 2.0 * a2.sqrt()),
        root_holds: within(root, a),
        residual: parts.residual.to_f64(),
        adjoint_residual: parts.adjoint_residual.to_f64(),
        annihilation_residual: parts.annihilation_residual.to_f64(),
    })
}

// ---------------------------------------------------------------------------
// Direct bilinear splitting

#[derive(Clone, Debug)]
pub struct SigmaDecomposition<S> {
    /// `sum_I |int Delta_I(fu) Delta_I(gw) dnu|`.
    pub bilinear: S,
    pub sigma: [S; 4],
    /// Largest deviation in `Delta_I(fu) = <f>_{I,u} Delta_I u + Delta_I[(Delta_I^u f) u]`
    /// and its counterpart for `g`.
    pub identity_residual: S,
    /// Largest value of `Delta_I[(f - E_I^u f - Delta_I^u f) u]` and its counterpart.
    pub vanishing_residual: S,
    pub f_norm_sq: S,
    pub g_norm_sq: S,
    pub a2: S,
    /// Packing constants of `gamma` (normalized by `u`), of its dual (by `w`) and of `rho`.
    pub k_gamma: S,
    pub k_gamma_dual: S,
    pub k_rho: S,
    /// `sum_I Phi_I rho_I |I|`, which dominates `Sigma_4`.
    pub sigma4_rho_sum: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaBounds {
    pub bilinear: f64,
    pub sigma: [f64; 4],
    /// `[w]^{1/2}`, `2 K_gamma^{1/2}`, `2 K_gamma'^{1/2}` and `4 K_rho`, each times `||f||_u ||g||_w`.
    pub bounds: [f64; 4],
    pub holds: [bool; 4],
    pub splitting_holds: bool,
    pub sigma4_rho_holds: bool,
    pub identity_residual: f64,
    pub vanishing_residual: f64,
}

impl<S: Scalar> SigmaDecomposition<S> {
    /// Each bound is decided on squares, in the backend.
    pub fn bounds(&self) -> SigmaBounds {
        let nn = self.f_norm_sq.clone() * self.g_norm_sq.clone();
        let four = S::from_usize(4);
        let sq = |s: &S| s.clone() * s.clone();
        let rhs_sq = [
            self.a2.clone() * nn.clone(),
            four.clone() * self.k_gamma.clone() * nn.clone(),
            four.clone() * self.k_gamma_dual.clone() * nn.clone(),
            S::from_usize(16) * sq(&self.k_rho) * nn.clone(),
        ];
        let mut holds = [false; 4];
        let mut bounds = [0.0; 4];
        for k in 0..4 {
            holds[k] = sq(&self.sigma[k]) <= rhs_sq[k];
            bounds[k] = rhs_sq[k].to_f64().sqrt();
        }
        let total = self.sigma.iter().fold(S::zero(), |a, b| a + b.clone());
        SigmaBounds {
            bilinear: self.bilinear.to_f64(),
            sigma: [0, 1, 2, 3].map(|k| self.sigma[k].to_f64()),
            bounds,
            holds,
            splitting_holds: self.bilinear <= total,
            sigma4_rho_holds: self.sigma[3] <= self.sigma4_rho_sum,
            identity_residual: self.identity_residual.to_f64(),
            vanishing_residual: self.vanishing_residual.to_f64(),
        }
    }
}

/// The four sums for `f in L^2(u)`, `g in L^2(w)`, `u = 1/w`.
pub fn bilinear_sigma_decomposition<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    fv: &LeafFunction<S>,
    gv: &LeafFunction<S>,
) -> Result<SigmaDecomposition<S>> {
    for v in [fv, gv] {
        if v.len() != f.leaf_count() {
            return Err(HaarError::LengthMismatch {
                expected: f.leaf_count(),
                got: v.len(),
            });
        }
    }
    let nu = Measure::reference(f);
    let (mu_u, mu_w) = (w.u_measure(f), w.w_measure(f));
    let fu = fv.mul(w.u());
    let gw = gv.mul(w.w());
    let avg_fu = f.averages(&fu, &nu);
    let avg_gw = f.averages(&gw, &nu);
    let avg_u = f.averages(w.u(), &nu);
    let avg_w = f.averages(w.w(), &nu);
    let f_u = f.averages(fv, &mu_u);
    let g_w = f.averages(gv, &mu_w);
    let leaf_nu = |j: usize| nu.leaf_mass(j).clone();

    let mut bilinear = S::zero();
    let mut sigma = [S::zero(), S::zero(), S::zero(), S::zero()];
    let mut identity_residual = S::zero();
    let mut vanishing_residual = S::zero();
    let bump = |r: &mut S, v: S| {
        let v = v.abs();
        if v > *r {
            *r = v;
        }
    };
    for id in f.ids().filter(|&i| f.atom(i).is_active()) {
        let i = id.0;
        let atom = f.atom(id);
        let size = f.measure(id).clone();
        // h = (Delta_I^u f) u and k = (Delta_I^w g) w, piecewise on children.
        let mut h_avg_i = S::zero();
        let mut k_avg_i = S::zero();
        let mut rem_f_i = S::zero();
        let mut rem_g_i = S::zero();
        let mut per_child = Vec::with_capacity(atom.children.len());
        for &c in &atom.children {
            let df = f_u.0[c.0].clone() - f_u.0[i].clone();
            let dg = g_w.0[c.0].clone() - g_w.0[i].clone();
            let (mut h, mut k, mut rf, mut rg) = (S::zero(), S::zero(), S::zero(), S::zero());
            for j in f.leaf_range(c) {
                let (uj, wj) = (w.u().0[j].clone(), w.w().0[j].clone());
                h = h + df.clone() * uj.clone() * leaf_nu(j);
                k = k + dg.clone() * wj.clone() * leaf_nu(j);
                // f - E_I^u f - Delta_I^u f = f - <f>_{I',u} on I'.
                rf = rf + (fv.0[j].clone() - f_u.0[c.0].clone()) * uj * leaf_nu(j);
                rg = rg + (gv.0[j].clone() - g_w.0[c.0].clone()) * wj * leaf_nu(j);
            }
            h_avg_i = h_avg_i + h.clone();
            k_avg_i = k_avg_i + k.clone();
            rem_f_i = rem_f_i + rf.clone();
            rem_g_i = rem_g_i + rg.clone();
            let cm = f.measure(c).clone();
            per_child.push((c, h / cm.clone(), k / cm.clone(), rf / cm.clone(), rg / cm));
        }
        let (h_avg_i, k_avg_i) = (h_avg_i / size.clone(), k_avg_i / size.clone());
        let (rem_f_i, rem_g_i) = (rem_f_i / size.clone(), rem_g_i / size);

        let mut terms = [S::zero(), S::zero(), S::zero(), S::zero(), S::zero()];
        for (c, h, k, rf, rg) in per_child {
            let cm = f.measure(c).clone();
            let a_f = h - h_avg_i.clone();
            let a_g = k - k_avg_i.clone();
            let du = avg_u.0[c.0].clone() - avg_u.0[i].clone();
            let dw = avg_w.0[c.0].clone() - avg_w.0[i].clone();
            let dfu = avg_fu.0[c.0].clone() - avg_fu.0[i].clone();
            let dgw = avg_gw.0[c.0].clone() - avg_gw.0[i].clone();
            bump(&mut identity_residual, dfu.clone() - f_u.0[i].clone() * du.clone() - a_f.clone());
            bump(&mut identity_residual, dgw.clone() - g_w.0[i].clone() * dw.clone() - a_g.clone());
            bump(&mut vanishing_residual, rf - rem_f_i.clone());
            bump(&mut vanishing_residual, rg - rem_g_i.clone());
            terms[0] = terms[0].clone() + cm.clone() * dfu * dgw;
            terms[1] = terms[1].clone() + cm.clone() * a_f.clone() * a_g.clone();
            terms[2] = terms[2].clone() + cm.clone() * a_g * f_u.0[i].clone() * du.clone();
            terms[3] = terms[3].clone() + cm.clone() * a_f * g_w.0[i].clone() * dw.clone();
            terms[4] = terms[4].clone() + cm * f_u.0[i].clone() * g_w.0[i].clone() * du * dw;
        }
        bilinear = bilinear + terms[0].abs();
        for k in 0..4 {
            sigma[k] = sigma[k].clone() + terms[k + 1].abs();
        }
    }

    let rho = rho_sequence(f, w);
    let sigma4_rho_sum = f.ids().fold(S::zero(), |acc, id| {
        let phi = (f_u.0[id.0].clone() * g_w.0[id.0].clone()).abs();
        acc + phi * rho.0[id.0].clone() * f.measure(id).clone()
    });
    let k_gamma = packing_constant_for(f, &gamma_sequence(f, w), &mu_u)?.constant;
    let k_gamma_dual = packing_constant_for(f, &gamma_sequence(f, &w.dual()), &mu_w)?.constant;
    let k_rho = packing_constant_for(f, &rho, &nu)?.constant;
    Ok(SigmaDecomposition {
        bilinear,
        sigma,
        identity_residual,
        vanishing_residual,
        f_norm_sq: norm_sq(fv, &mu_u),
        g_norm_sq: norm_sq(gv, &mu_w),
        a2: a2_characteristic(f, w).value,
        k_gamma,
        k_gamma_dual,
        k_rho,
        sigma4_rho_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{random_tree, RandomTreeConfig};
    use crate::scalar::Rational;
    use num_traits::Zero;

    #[test]
    fn reference_pair_has_unit_joint_a2() {
        let f = random_tree(4, &RandomTreeConfig::new(4, 3)).unwrap().to_rational();
        let pair = MeasurePair::reference(&f);
        assert_eq!(joint_a2(&f, &pair).value, Rational::from_ratio(1, 1));
        let zero = MeasurePair::new(&f, pair.mu1.clone(), LeafFunction::zero(&f)).unwrap();
        assert!(joint_a2(&f, &zero).value.is_zero());
    }

    #[test]
    fn zero_symbol_has_zero_testing_constant_and_parts() {
        let f = random_tree(8, &RandomTreeConfig::new(4, 3)).unwrap().to_rational();
        let pair = MeasurePair::reference(&f);
        let s = MultiplierSymbol::zero(&f);
        assert!(testing_constant(&f, &s, &pair).a_sq.is_zero());
        let p = paraproduct_decompose(&f, &s, &pair).unwrap();
        assert!(p.pi1.is_zero() && p.pi2_adjoint.is_zero() && p.diag.is_zero() && p.root.is_zero());
    }
}
