//! A rank-one martingale transform on a seven-atom tree that is bounded on
//! `L^2` but not uniformly bounded on `L^2(w)` over two-valued `A2` weights.
//!
//! Atoms: root `I` (mass 2), children `J1`, `J2` (mass 1), grandchildren
//! `I1, I2` under `J1` and `I3, I4` under `J2` with masses `1-e, e, 1-e, e`.
//! With `H1 = 1_{J1} - 1_{J2}` and `H2 = 1_{I2} - e/(1-e) 1_{I1}` the operator is
//! `T f = (2e)^{-1/2} (f, H1) H2`, so `h1 = 2^{-1/2} H1` and `h2 = e^{-1/2} H2`.
//! Every claim is decided on squared quantities, which are rational in `e`.

use serde::Serialize;

use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, LeafFunction, Measure, MeasureValue, TreeSpec};
use crate::marttools::{a2_characteristic, weighted_norm_sq, Weight};
use crate::operator::{difference_matrix, Mat, WeightedOperator};
use crate::scalar::Scalar;

pub const LEAVES: [&str; 4] = ["I1", "I2", "I3", "I4"];

#[derive(Clone, Debug)]
pub struct CounterexampleInstance<S> {
    pub epsilon: S,
    pub filtration: Filtration<S>,
    pub weight: Weight<S>,
    /// `H1`, `H2` on leaves `I1..I4`.
    pub h1: LeafFunction<S>,
    pub h2: LeafFunction<S>,
}

fn text<S: Scalar>(v: &S) -> MeasureValue {
    MeasureValue::Text(v.to_string())
}

/// Atom names of a copy, with `prefix` prepended (empty for a single instance).
fn spec_into<S: Scalar>(spec: TreeSpec, eps: &S, prefix: &str) -> TreeSpec {
    let one_minus = S::one() - eps.clone();
    let n = |s: &str| format!("{prefix}{s}");
    spec.atom(&n("I"), None, Some(MeasureValue::Pair([2, 1])))
        .atom(&n("J1"), Some(&n("I")), Some(MeasureValue::Pair([1, 1])))
        .atom(&n("I1"), Some(&n("J1")), Some(text(&one_minus)))
        .atom(&n("I2"), Some(&n("J1")), Some(text(eps)))
        .atom(&n("J2"), Some(&n("I")), Some(MeasureValue::Pair([1, 1])))
        .atom(&n("I3"), Some(&n("J2")), Some(text(&one_minus)))
        .atom(&n("I4"), Some(&n("J2")), Some(text(eps)))
}

fn check_epsilon<S: Scalar>(eps: &S) -> Result<()> {
    let half = S::from_ratio(1, 2);
    if !(eps > &S::zero() && eps < &half) {
        return Err(HaarError::EpsilonOutOfRange(eps.to_string()));
    }
    Ok(())
}

fn leaf_values<S: Scalar>(eps: &S) -> (Vec<S>, Vec<S>, Vec<S>) {
    let one = S::one();
    let inv = one.clone() / eps.clone();
    let w = vec![one.clone(), inv.clone(), one.clone(), inv];
    let h1 = vec![one.clone(), one.clone(), -one.clone(), -one.clone()];
    let h2 = vec![
        -(eps.clone() / (one.clone() - eps.clone())),
        one,
        S::zero(),
        S::zero(),
    ];
    (w, h1, h2)
}

pub fn build_instance<S: Scalar>(eps: S) -> Result<CounterexampleInstance<S>> {
    check_epsilon(&eps)?;
    let filtration = Filtration::from_spec(&spec_into(TreeSpec::new(), &eps, ""))?;
    let (w, h1, h2) = leaf_values(&eps);
    let weight = Weight::new(&filtration, LeafFunction(w))?;
    Ok(CounterexampleInstance {
        epsilon: eps,
        filtration,
        weight,
        h1: LeafFunction(h1),
        h2: LeafFunction(h2),
    })
}

impl<S: Scalar> CounterexampleInstance<S> {
    /// Leaf matrix of `T` up to the factor `(2e)^{-1/2}`: `M_{ij} = H2_i H1_j nu_j`.
    pub fn scaled_matrix(&self) -> Mat<S> {
        let f = &self.filtration;
        Mat::from_fn(4, 4, |i, j| {
            self.h2.0[i].clone() * self.h1.0[j].clone() * f.measure(f.leaves()[j]).clone()
        })
    }

    /// `1 / (2e)`, the square of the scalar factor of `T`.
    pub fn factor_sq(&self) -> S {
        S::one() / (S::from_usize(2) * self.epsilon.clone())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub name: &'static str,
    pub holds: bool,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonMultiplierCertificate {
    /// Hilbert-Schmidt projection of `T` onto `span{Delta_I, Delta_J1, Delta_J2}` in `L^2(nu)`.
    pub best_sigma: Vec<(String, f64)>,
    /// `||T - T_sigma||_HS^2` at the best `sigma`; positive means no multiplier equals `T`.
    pub residual_hs_sq: f64,
    /// `T h1 = h2` is not a multiple of `h1`, while every multiplier sends `h1` to `sigma_I h1`.
    pub image_of_h1_outside_span: bool,
    pub infeasible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub epsilon: f64,
    pub h1_norm: f64,
    pub h2_norm: f64,
    pub norm_unweighted: f64,
    pub a2_tree: f64,
    pub a2_tree_witness: String,
    pub a2_unions: f64,
    pub a2_unions_witness: Vec<&'static str>,
    pub norm_weighted: f64,
    /// The same norm from the eigensolver on the float matrix.
    pub norm_weighted_spectral: f64,
    pub paper_lower_bound: f64,
    pub claims: Vec<Claim>,
    pub structural: Vec<Claim>,
    pub certificate: NonMultiplierCertificate,
    pub all_hold: bool,
}

/// `max` over the 15 nonempty unions of `I1..I4` of `<w>_U <u>_U`.
pub fn a2_over_unions<S: Scalar>(inst: &CounterexampleInstance<S>) -> (S, u32) {
    let f = &inst.filtration;
    let mut best = (S::zero(), 0u32);
    for mask in 1u32..16 {
        let (mut nu, mut w, mut u) = (S::zero(), S::zero(), S::zero());
        for k in 0..4 {
            if mask & (1 << k) != 0 {
                let m = f.measure(f.leaves()[k]).clone();
                nu = nu + m.clone();
                w = w + inst.weight.w().0[k].clone() * m.clone();
                u = u + inst.weight.u().0[k].clone() * m;
            }
        }
        let v = w * u / (nu.clone() * nu);
        if v > best.0 {
            best = (v, mask);
        }
    }
    best
}

fn hs_inner<S: Scalar>(a: &Mat<S>, b: &Mat<S>, nu: &[S]) -> S {
    // tr(A^* B) in L^2(nu), A^* = D^{-1} A^T D.
    let mut acc = S::zero();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            acc = acc + a.get(j, i).clone() * b.get(j, i).clone() * nu[j].clone() / nu[i].clone();
        }
    }
    acc
}

/// Solves `G x = b` by Gaussian elimination; `G` is assumed nonsingular.
fn solve<S: Scalar>(mut g: Vec<Vec<S>>, mut b: Vec<S>) -> Vec<S> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).find(|&r| !g[r][c].is_zero()).expect("nonsingular Gram matrix");
        g.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c && !g[r][c].is_zero() {
                let k = g[r][c].clone() / g[c][c].clone();
                for j in c..n {
                    let v = g[c][j].clone() * k.clone();
                    g[r][j] = g[r][j].clone() - v;
                }
                b[r] = b[r].clone() - b[c].clone() * k;
            }
        }
    }
    (0..n).map(|i| b[i].clone() / g[i][i].clone()).collect()
}

/// Hilbert-Schmidt least squares of `T` against the multiplier family.
pub fn non_multiplier_certificate<S: Scalar>(inst: &CounterexampleInstance<S>) -> NonMultiplierCertificate {
    let f = &inst.filtration;
    let nu = Measure::reference(f);
    let d = nu.leaf_masses();
    let atoms: Vec<AtomId> = f.active_atoms();
    let basis: Vec<Mat<S>> = atoms.iter().map(|&a| difference_matrix(f, &nu, a)).collect();
    // Work with the scaled matrix; the factor multiplies sigma and the residual.
    let t = inst.scaled_matrix();
    let g: Vec<Vec<S>> = basis
        .iter()
        .map(|a| basis.iter().map(|b| hs_inner(a, b, d)).collect())
        .collect();
    let rhs: Vec<S> = basis.iter().map(|a| hs_inner(a, &t, d)).collect();
    let x = solve(g, rhs.clone());
    let fit = x.iter().zip(&rhs).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
    let residual_scaled = hs_inner(&t, &t, d) - fit;
    let factor_sq = inst.factor_sq();
    let residual = residual_scaled * factor_sq.clone();
    let scale = factor_sq.to_f64().sqrt();
    // T H1 is proportional to H2; H1 and H2 are independent iff some 2x2 minor is nonzero.
    let independent = (0..4).any(|i| {
        (0..4).any(|j| {
            inst.h1.0[i].clone() * inst.h2.0[j].clone() != inst.h1.0[j].clone() * inst.h2.0[i].clone()
        })
    });
    NonMultiplierCertificate {
        best_sigma: atoms
            .iter()
            .zip(&x)
            .map(|(a, v)| (f.name(*a).to_string(), v.to_f64() * scale))
            .collect(),
        residual_hs_sq: residual.to_f64(),
        image_of_h1_outside_span: independent,
        infeasible: residual > S::zero() && independent,
    }
}

/// Zero, or below rounding for the float backend (all quantities here are `O(1)`).
fn negligible<S: Scalar>(v: &S) -> bool {
    v.is_zero() || (!S::EXACT && v.to_f64().abs() < 1e-12)
}

fn claim(name: &'static str, holds: bool, value: f64, bound: f64) -> Claim {
    Claim {
        name,
        holds,
        value,
        bound,
    }
}

pub fn verify_instance<S: Scalar>(inst: &CounterexampleInstance<S>) -> Result<VerifyReport> {
    let f = &inst.filtration;
    let eps = inst.epsilon.clone();
    let nu = LeafFunction::constant(f, S::one());
    let (w, u) = (inst.weight.w(), inst.weight.u());
    let two = S::from_usize(2);

    let h1_sq = weighted_norm_sq(f, &inst.h1, &nu) / two.clone();
    let h2_sq = weighted_norm_sq(f, &inst.h2, &nu) / eps.clone();
    let t_sq = h1_sq.clone() * h2_sq.clone();
    let h1u_sq = weighted_norm_sq(f, &inst.h1, u) / two.clone();
    let h2w_sq = weighted_norm_sq(f, &inst.h2, w) / eps.clone();
    let tw_sq = h1u_sq.clone() * h2w_sq.clone();
    // ||T||_w >= e^{-1/2}/2  <=>  ||T||_w^2 >= 1/(4e).
    let lower_sq = S::one() / (S::from_usize(4) * eps.clone());
    let a2 = a2_characteristic(f, &inst.weight);
    let (a2u, mask) = a2_over_unions(inst);

    let spectral = WeightedOperator::on_space(
        inst.scaled_matrix().to_f64().scale(&inst.factor_sq().to_f64().sqrt()),
        f.leaves().iter().map(|&l| (w.0[f.leaf_slot(l).unwrap()].clone() * f.measure(l).clone()).to_f64()).collect(),
    )?
    .norm()?;
    let norm_weighted = tw_sq.to_f64().sqrt();

    let claims = vec![
        claim("h1_l2_norm_is_one", h1_sq == S::one() || (!S::EXACT && h1_sq.close_to(&S::one(), 1e-12)), h1_sq.to_f64().sqrt(), 1.0),
        claim("h2_l2_norm_at_most_sqrt2", h2_sq <= two, h2_sq.to_f64().sqrt(), 2f64.sqrt()),
        claim("unweighted_norm_at_most_sqrt2", t_sq <= two, t_sq.to_f64().sqrt(), 2f64.sqrt()),
        claim("a2_tree_at_most_2", a2.value <= two, a2.value.to_f64(), 2.0),
        claim("a2_unions_at_most_3", a2u <= S::from_usize(3), a2u.to_f64(), 3.0),
        claim("weighted_norm_at_least_lower_bound", tw_sq >= lower_sq, norm_weighted, lower_sq.to_f64().sqrt()),
        claim(
            "spectral_norm_agrees",
            (spectral - norm_weighted).abs() <= 1e-9 * norm_weighted,
            spectral,
            norm_weighted,
        ),
    ];

    // Structure: H1 has mean zero on I and is constant on J1, J2; H2 is constant
    // on the children of J1 with mean zero there.
    let m = |name: &str| f.measure(f.find(name).expect("fixed atom")).clone();
    let leaf = |k: usize| f.measure(f.leaves()[k]).clone();
    let h1_mean = (0..4).fold(S::zero(), |acc, k| acc + inst.h1.0[k].clone() * leaf(k));
    let h2_mean_j1 = inst.h2.0[0].clone() * m("I1") + inst.h2.0[1].clone() * m("I2");
    let structural = vec![
        claim("h1_orthogonal_to_constants", negligible(&h1_mean), h1_mean.to_f64(), 0.0),
        claim(
            "h1_constant_on_j1_j2",
            inst.h1.0[0] == inst.h1.0[1] && inst.h1.0[2] == inst.h1.0[3],
            0.0,
            0.0,
        ),
        claim("h2_mean_zero_on_j1", negligible(&h2_mean_j1), h2_mean_j1.to_f64(), 0.0),
        claim("h2_supported_in_j1", inst.h2.0[2].is_zero() && inst.h2.0[3].is_zero(), 0.0, 0.0),
    ];
    let certificate = non_multiplier_certificate(inst);
    let all_hold = claims.iter().chain(&structural).all(|c| c.holds) && certificate.infeasible;
    Ok(VerifyReport {
        epsilon: eps.to_f64(),
        h1_norm: h1_sq.to_f64().sqrt(),
        h2_norm: h2_sq.to_f64().sqrt(),
        norm_unweighted: t_sq.to_f64().sqrt(),
        a2_tree: a2.value.to_f64(),
        a2_tree_witness: f.name(a2.witness).to_string(),
        a2_unions: a2u.to_f64(),
        a2_unions_witness: (0..4).filter(|k| mask & (1 << k) != 0).map(|k| LEAVES[k]).collect(),
        norm_weighted,
        norm_weighted_spectral: spectral,
        paper_lower_bound: lower_sq.to_f64().sqrt(),
        claims,
        structural,
        certificate,
        all_hold,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub a2_tree: f64,
    pub a2_unions: f64,
    pub norm_unweighted: f64,
    pub norm_weighted: f64,
    pub paper_lower_bound: f64,
}

impl From<&VerifyReport> for SweepRow {
    fn from(r: &VerifyReport) -> Self {
        SweepRow {
            epsilon: r.epsilon,
            a2_tree: r.a2_tree,
            a2_unions: r.a2_unions,
            norm_unweighted: r.norm_unweighted,
            norm_weighted: r.norm_weighted,
            paper_lower_bound: r.paper_lower_bound,
        }
    }
}

pub fn sweep<S: Scalar>(eps: &[S]) -> Result<Vec<SweepRow>> {
    eps.iter()
        .map(|e| Ok(SweepRow::from(&verify_instance(&build_instance(e.clone())?)?)))
        .collect()
}

/// Copies of the instance side by side, one root per `e_n`.
#[derive(Clone, Debug)]
pub struct DirectSum<S> {
    pub filtration: Filtration<S>,
    pub weight: Weight<S>,
    /// Scaled leaf matrix of the block-diagonal transform (full scale factors applied in floats).
    pub matrix: Mat<f64>,
    pub epsilons: Vec<S>,
}

pub fn direct_sum<S: Scalar>(eps: &[S]) -> Result<DirectSum<S>> {
    let mut spec = TreeSpec::new();
    let mut weights = Vec::new();
    for (k, e) in eps.iter().enumerate() {
        check_epsilon(e)?;
        spec = spec_into(spec, e, &format!("e{k}."));
        weights.extend(leaf_values(e).0);
    }
    let filtration = Filtration::from_spec(&spec)?;
    let weight = Weight::new(&filtration, LeafFunction(weights))?;
    let n = 4 * eps.len();
    let mut matrix = Mat::zeros(n, n);
    for (k, e) in eps.iter().enumerate() {
        let block = build_instance(e.clone())?;
        let m = block.scaled_matrix().to_f64();
        let c = block.factor_sq().to_f64().sqrt();
        for i in 0..4 {
            for j in 0..4 {
                matrix.set(4 * k + i, 4 * k + j, m.get(i, j) * c);
            }
        }
    }
    Ok(DirectSum {
        filtration,
        weight,
        matrix,
        epsilons: eps.to_vec(),
    })
}

impl<S: Scalar> DirectSum<S> {
    pub fn weighted_norm(&self) -> Result<f64> {
        let f = &self.filtration;
        let masses = f
            .leaves()
            .iter()
            .enumerate()
            .map(|(k, &l)| (self.weight.w().0[k].clone() * f.measure(l).clone()).to_f64())
            .collect();
        WeightedOperator::on_space(self.matrix.clone(), masses)?.norm()
    }

    pub fn a2(&self) -> f64 {
        a2_characteristic(&self.filtration, &self.weight).value.to_f64()
    }
}
