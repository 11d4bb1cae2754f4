//! Weights, martingale differences, multipliers and their weighted norms.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, LeafFunction, Measure, MeasureValue, TreeFunction};
use crate::operator::{add_difference, top_singular_value, Mat, WeightedOperator};
use crate::scalar::{Rational, Scalar};

// ---------------------------------------------------------------------------
// Weights and symbols

/// A strictly positive weight `w` with its reciprocal `u = 1/w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight<S> {
    w: LeafFunction<S>,
    u: LeafFunction<S>,
}

impl<S: Scalar> Weight<S> {
    pub fn new(f: &Filtration<S>, w: LeafFunction<S>) -> Result<Self> {
        let w = LeafFunction::new(f, w.0)?;
        if let Some(i) = w.0.iter().position(|v| v <= &S::zero()) {
            return Err(HaarError::InvalidParameter(format!(
                "weight must be positive, leaf `{}` has {}",
                f.name(f.leaves()[i]),
                w.0[i]
            )));
        }
        let u = w.map(|v| S::one() / v.clone());
        Ok(Weight { w, u })
    }

    pub fn constant(f: &Filtration<S>, c: S) -> Result<Self> {
        Self::new(f, LeafFunction::constant(f, c))
    }

    /// Weight file: `{"leaf_weights": {leaf_id: number}}`.
    pub fn from_json(f: &Filtration<S>, text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            leaf_weights: HashMap<String, MeasureValue>,
        }
        let file: File = serde_json::from_str(text)?;
        let named = file
            .leaf_weights
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.to_scalar::<S>()?)))
            .collect::<Result<HashMap<_, _>>>()?;
        Self::new(f, LeafFunction::from_named(f, &named, None)?)
    }

    pub fn to_json(&self, f: &Filtration<S>) -> String {
        let map: BTreeMap<&str, f64> = f
            .leaves()
            .iter()
            .zip(&self.w.0)
            .map(|(&l, v)| (f.name(l), v.to_f64()))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "leaf_weights": map }))
            .expect("weights serialize")
    }

    pub fn w(&self) -> &LeafFunction<S> {
        &self.w
    }

    pub fn u(&self) -> &LeafFunction<S> {
        &self.u
    }

    /// The weight `u = 1/w`.
    pub fn dual(&self) -> Self {
        Weight {
            w: self.u.clone(),
            u: self.w.clone(),
        }
    }

    pub fn scaled(&self, c: &S) -> Self {
        Weight {
            w: self.w.scale(c),
            u: self.u.map(|v| v.clone() / c.clone()),
        }
    }

    /// `w dnu`.
    pub fn w_measure(&self, f: &Filtration<S>) -> Measure<S> {
        Measure::with_density(f, &self.w).expect("positive weight")
    }

    /// `u dnu`.
    pub fn u_measure(&self, f: &Filtration<S>) -> Measure<S> {
        Measure::with_density(f, &self.u).expect("positive weight")
    }

    pub fn to_f64(&self) -> Weight<f64> {
        Weight {
            w: self.w.to_f64(),
            u: self.u.to_f64(),
        }
    }

    /// Exact copy of `w`, with `u = 1/w` recomputed in rationals.
    pub fn to_rational(&self) -> Weight<Rational> {
        let w = self.w.to_rational();
        let u = w.map(|v| v.recip());
        Weight { w, u }
    }
}

/// Coefficients `sigma_I` with `|sigma_I| <= 1`, one per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSymbol<S>(pub Vec<S>);

impl<S: Scalar> MultiplierSymbol<S> {
    pub fn new(f: &Filtration<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != f.atom_count() {
            return Err(HaarError::LengthMismatch {
                expected: f.atom_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| v.abs() > S::one()) {
            return Err(HaarError::InvalidParameter(format!(
                "|sigma| > 1 at `{}`",
                f.name(AtomId(i))
            )));
        }
        Ok(MultiplierSymbol(values))
    }

    pub fn zero(f: &Filtration<S>) -> Self {
        MultiplierSymbol(vec![S::zero(); f.atom_count()])
    }

    pub fn constant(f: &Filtration<S>, c: S) -> Result<Self> {
        Self::new(f, vec![c; f.atom_count()])
    }

    /// `sigma_I = alpha_k` where `k - 1` is the generation of `I`; `alpha[0]`
    /// is `alpha_1`.
    pub fn from_generations(f: &Filtration<S>, alpha: &[S]) -> Result<Self> {
        let values = f
            .atoms()
            .iter()
            .map(|a| alpha.get(a.generation).cloned().unwrap_or_else(S::zero))
            .collect();
        Self::new(f, values)
    }

    /// Symbol file: `{atom_id: number}`; unlisted atoms get 0.
    pub fn from_json(f: &Filtration<S>, text: &str) -> Result<Self> {
        let raw: HashMap<String, MeasureValue> = serde_json::from_str(text)?;
        let named = raw
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.to_scalar::<S>()?)))
            .collect::<Result<HashMap<_, _>>>()?;
        Self::new(f, TreeFunction::from_named(f, &named)?.0)
    }

    /// The symbol zeroed outside `D(I0)`.
    pub fn restricted(&self, f: &Filtration<S>, root: AtomId) -> Self {
        let keep = f.subtree(root);
        MultiplierSymbol(
            self.0
                .iter()
                .enumerate()
                .map(|(i, v)| if keep.contains(&i) { v.clone() } else { S::zero() })
                .collect(),
        )
    }

    pub fn get(&self, id: AtomId) -> &S {
        &self.0[id.0]
    }

    pub fn to_f64(&self) -> MultiplierSymbol<f64> {
        MultiplierSymbol(self.0.iter().map(Scalar::to_f64).collect())
    }

    /// Nonzero coefficients keyed by atom name.
    pub fn to_named(&self, f: &Filtration<S>) -> BTreeMap<String, f64> {
        f.ids()
            .filter(|&i| !self.0[i.0].is_zero())
            .map(|i| (f.name(i).to_string(), self.0[i.0].to_f64()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Averages, differences, multipliers

/// `<f>_{I,mu}`.
pub fn average<S: Scalar>(
    f: &Filtration<S>,
    g: &LeafFunction<S>,
    id: AtomId,
    mu: &Measure<S>,
) -> Result<S> {
    f.check(id)?;
    let mass = mu.mass(id);
    if mass.is_zero() {
        return Err(HaarError::ZeroMass(f.name(id).to_string()));
    }
    let total = f
        .leaf_range(id)
        .fold(S::zero(), |acc, j| acc + g.0[j].clone() * mu.leaf_mass(j).clone());
    Ok(total / mass.clone())
}

/// `Delta_I^mu g = sum_{children} E_{I'}^mu g - E_I^mu g`.
pub fn martingale_difference<S: Scalar>(
    f: &Filtration<S>,
    g: &LeafFunction<S>,
    id: AtomId,
    mu: &Measure<S>,
) -> Result<LeafFunction<S>> {
    let parent = average(f, g, id, mu)?;
    let mut out = vec![S::zero(); f.leaf_count()];
    if !f.atom(id).is_active() {
        return Ok(LeafFunction(out));
    }
    for &c in &f.atom(id).children {
        let child = if mu.mass(c).is_zero() {
            // E_{I'}^mu = 0 on a mu-null child, as in the matrix form.
            S::zero()
        } else {
            average(f, g, c, mu)?
        };
        for j in f.leaf_range(c) {
            out[j] = child.clone() - parent.clone();
        }
    }
    Ok(LeafFunction(out))
}

/// `T_sigma g = sum sigma_I Delta_I g`, over `D(I0)` when `restrict_to` is set.
pub fn apply_multiplier<S: Scalar>(
    f: &Filtration<S>,
    sigma: &MultiplierSymbol<S>,
    g: &LeafFunction<S>,
    restrict_to: Option<AtomId>,
) -> LeafFunction<S> {
    let nu = Measure::reference(f);
    let avg = f.averages(g, &nu);
    let scope = restrict_to.map(|r| f.subtree(r));
    let out = f
        .leaves()
        .iter()
        .map(|&leaf| {
            let mut acc = S::zero();
            let mut child = leaf;
            for anc in f.ancestors(leaf).skip(1) {
                let s = &sigma.0[anc.0];
                let in_scope = scope.as_ref().is_none_or(|r| r.contains(&anc.0));
                if in_scope && !s.is_zero() && f.atom(anc).is_active() {
                    acc = acc + s.clone() * (avg.0[child.0].clone() - avg.0[anc.0].clone());
                }
                child = anc;
            }
            acc
        })
        .collect();
    LeafFunction(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct A2Report<S> {
    pub value: S,
    pub witness: AtomId,
    /// `<w>_I <u>_I` for every atom.
    pub per_atom: Vec<S>,
}

/// `[w]_{A2} = max_I <w>_I <u>_I`; ties go to the first atom in depth-first order.
pub fn a2_characteristic<S: Scalar>(f: &Filtration<S>, w: &Weight<S>) -> A2Report<S> {
    let nu = Measure::reference(f);
    let aw = f.averages(w.w(), &nu);
    let au = f.averages(w.u(), &nu);
    let per_atom: Vec<S> = aw.0.into_iter().zip(au.0).map(|(a, b)| a * b).collect();
    let mut witness = 0;
    for (i, v) in per_atom.iter().enumerate() {
        if v > &per_atom[witness] {
            witness = i;
        }
    }
    A2Report {
        value: per_atom[witness].clone(),
        witness: AtomId(witness),
        per_atom,
    }
}

/// `sum_L g(L)^2 mu(L)`.
pub fn norm_sq<S: Scalar>(g: &LeafFunction<S>, mu: &Measure<S>) -> S {
    g.0.iter()
        .zip(mu.leaf_masses())
        .fold(S::zero(), |acc, (v, m)| acc + v.clone() * v.clone() * m.clone())
}

pub fn weighted_norm_sq<S: Scalar>(f: &Filtration<S>, g: &LeafFunction<S>, w: &LeafFunction<S>) -> S {
    f.leaves()
        .iter()
        .zip(&g.0)
        .zip(&w.0)
        .fold(S::zero(), |acc, ((&l, v), wv)| {
            acc + v.clone() * v.clone() * wv.clone() * f.measure(l).clone()
        })
}

/// `||g||_{L^2(w dnu)}`.
pub fn weighted_norm<S: Scalar>(f: &Filtration<S>, g: &LeafFunction<S>, w: &LeafFunction<S>) -> f64 {
    weighted_norm_sq(f, g, w).to_f64().sqrt()
}

/// Leaf masses of `w dnu` as floats.
pub fn leaf_masses<S: Scalar>(f: &Filtration<S>, w: &LeafFunction<S>) -> Vec<f64> {
    f.leaves()
        .iter()
        .zip(&w.0)
        .map(|(&l, v)| (v.clone() * f.measure(l).clone()).to_f64())
        .collect()
}

pub fn operator_norm(t: &WeightedOperator) -> Result<f64> {
    t.norm()
}

/// `T_sigma` as an operator on `L^2(w)`.
pub fn multiplier_operator<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    sigma: &MultiplierSymbol<S>,
) -> WeightedOperator {
    let m = crate::operator::multiplier_matrix(f, &sigma.0, None).to_f64();
    WeightedOperator::on_space(m, leaf_masses(f, w.w())).expect("shapes agree")
}

// ---------------------------------------------------------------------------
// Partial sums

fn check_generations(f_depth: usize, m: usize, n: usize) -> Result<()> {
    let max = f_depth.saturating_sub(1);
    if m < 1 || m > n || n > max {
        return Err(HaarError::GenerationOutOfRange { m, n, max });
    }
    Ok(())
}

/// `P_{m,n} = sum_{k=m}^n Delta_k`, with `Delta_k` summing atoms of generation `k - 1`.
pub fn partial_sum_matrix<S: Scalar>(f: &Filtration<S>, m: usize, n: usize) -> Result<Mat<S>> {
    check_generations(f.depth(), m, n)?;
    let nu = Measure::reference(f);
    let size = f.leaf_count();
    let mut out = Mat::zeros(size, size);
    for id in f.ids() {
        let g = f.atom(id).generation;
        if g + 1 >= m && g < n {
            add_difference(&mut out, f, &nu, id, &S::one());
        }
    }
    Ok(out)
}

/// `||P_{m,n}||_{L^2(w)}`.
pub fn partial_sum_norms<S: Scalar>(f: &Filtration<S>, w: &Weight<S>, m: usize, n: usize) -> Result<f64> {
    let p = partial_sum_matrix(f, m, n)?.to_f64();
    WeightedOperator::on_space(p, leaf_masses(f, w.w()))?.norm()
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialSumReport {
    pub max_norm: f64,
    pub m: usize,
    pub n: usize,
    pub a2: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `sup_{m,n} ||P_{m,n}||` against `[1/2 [w]^{1/2}, 2 [w]^{1/2}]`.
pub fn partial_sum_sup<S: Scalar>(f: &Filtration<S>, w: &Weight<S>, tol: f64) -> Result<PartialSumReport> {
    let max_gen = f.depth().saturating_sub(1);
    if max_gen == 0 {
        return Err(HaarError::GenerationOutOfRange { m: 1, n: 1, max: 0 });
    }
    let masses = leaf_masses(f, w.w());
    let pairs: Vec<(usize, usize)> = (1..=max_gen)
        .flat_map(|m| (m..=max_gen).map(move |n| (m, n)))
        .collect();
    let norms = pairs
        .par_iter()
        .map(|&(m, n)| {
            let p = partial_sum_matrix(f, m, n)?.to_f64();
            WeightedOperator::on_space(p, masses.clone())?.norm()
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = argmax(&norms);
    let a2 = a2_characteristic(f, w).value.to_f64();
    let (lower, upper) = (0.5 * a2.sqrt(), 2.0 * a2.sqrt());
    let max_norm = norms[best];
    Ok(PartialSumReport {
        max_norm,
        m: pairs[best].0,
        n: pairs[best].1,
        a2,
        lower,
        upper,
        holds: max_norm >= lower * (1.0 - tol) && max_norm <= upper * (1.0 + tol),
    })
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Reduction to testing conditions

#[derive(Clone, Debug)]
pub struct ReductionEntry<S> {
    pub atom: AtomId,
    /// `||h_I||^2_{L^2(w)}` with `h_I = Delta_I u`.
    pub h_norm_sq: S,
    pub gamma_w: S,
    pub hw_norm_sq: S,
    pub rho: S,
    /// `||h_I||^2 - ||h_I^w||^2 - gamma^2 ||1_I||^2`.
    pub pythagoras_residual: S,
    /// `<h_I^w w>_I |I|`.
    pub orthogonality_residual: S,
}

#[derive(Clone, Debug)]
pub struct ReductionReport<S> {
    pub entries: Vec<ReductionEntry<S>>,
    pub a2: S,
    /// `sum_{D(I0)} sum_{ch} |<u>_{I'} - <u>_I|^2 <w>_{I'} |I'|`.
    pub square_sum: S,
    /// `[w]^2 <u>_{I0} |I0|`.
    pub square_scale: S,
    pub square_ratio: f64,
    /// `sum_{D(I0)} |<gw>_I| / <w>_I * rho_I |I|`.
    pub gamma_sum: f64,
    /// `[w] <u>_{I0}^{1/2} <g^2 w>_{I0}^{1/2} |I0|`.
    pub gamma_scale: f64,
    pub gamma_ratio: f64,
    /// `||T_{I0}(1_{I0} u)||_{L^2(w)} / ([w] ||1_{I0}||_{L^2(u)})` for `sigma = 1`.
    pub testing_ratio: f64,
    pub max_pythagoras_residual: S,
    pub max_orthogonality_residual: S,
    /// `||h_I^w|| <= ||h_I||` for every atom.
    pub weighted_haar_dominated: bool,
}

/// Quantities of the reduction of the multiplier bound to two packing estimates,
/// evaluated over `D(I0)`. `g` defaults to `1`.
pub fn reduction_chain<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    root: AtomId,
    g: Option<&LeafFunction<S>>,
) -> Result<ReductionReport<S>> {
    f.check(root)?;
    let nu = Measure::reference(f);
    let wm = w.w_measure(f);
    let au = f.averages(w.u(), &nu);
    let aw = f.averages(w.w(), &nu);
    let one = LeafFunction::constant(f, S::one());
    let g = g.unwrap_or(&one);
    let gw = f.averages(&g.mul(w.w()), &nu);
    let a2 = a2_characteristic(f, w).value;

    let mut entries = Vec::new();
    let mut square_sum = S::zero();
    let mut gamma_sum = 0.0;
    for i in f.subtree(root) {
        let id = AtomId(i);
        let atom = f.atom(id);
        let mut h_sq = S::zero();
        let mut cross = S::zero();
        let mut rho = S::zero();
        for &c in &atom.children {
            let du = au.0[c.0].clone() - au.0[i].clone();
            let dw = aw.0[c.0].clone() - aw.0[i].clone();
            h_sq = h_sq + du.clone() * du.clone() * wm.mass(c).clone();
            cross = cross + du.clone() * wm.mass(c).clone();
            rho = rho + (du * dw).abs() * f.measure(c).clone() / f.measure(id).clone();
        }
        let gamma = cross / wm.mass(id).clone();
        let mut hw_sq = S::zero();
        let mut orth = S::zero();
        for &c in &atom.children {
            let v = au.0[c.0].clone() - au.0[i].clone() - gamma.clone();
            hw_sq = hw_sq + v.clone() * v.clone() * wm.mass(c).clone();
            orth = orth + v * wm.mass(c).clone();
        }
        let pyth = h_sq.clone() - hw_sq.clone() - gamma.clone() * gamma.clone() * wm.mass(id).clone();
        square_sum = square_sum + h_sq.clone();
        gamma_sum += (gw.0[i].abs() / aw.0[i].clone() * rho.clone() * f.measure(id).clone()).to_f64();
        entries.push(ReductionEntry {
            atom: id,
            h_norm_sq: h_sq,
            gamma_w: gamma,
            hw_norm_sq: hw_sq,
            rho,
            pythagoras_residual: pyth,
            orthogonality_residual: orth,
        });
    }

    let mass0 = f.measure(root).clone();
    let square_scale = a2.clone() * a2.clone() * au.0[root.0].clone() * mass0.clone();
    let g2w = f.averages(&g.mul(g).mul(w.w()), &nu).0[root.0].to_f64();
    let gamma_scale =
        a2.to_f64() * au.0[root.0].to_f64().sqrt() * g2w.sqrt() * mass0.to_f64();

    let ones = MultiplierSymbol::constant(f, S::one())?;
    let indicator_u = LeafFunction::indicator(f, root).mul(w.u());
    let t = apply_multiplier(f, &ones, &indicator_u, Some(root));
    let testing_ratio = weighted_norm(f, &t, w.w())
        / (a2.to_f64() * (au.0[root.0].to_f64() * mass0.to_f64()).sqrt());

    let max_abs = |get: &dyn Fn(&ReductionEntry<S>) -> S| {
        entries.iter().fold(S::zero(), |acc, e| acc.max_of(get(e).abs()))
    };
    let max_pythagoras_residual = max_abs(&|e| e.pythagoras_residual.clone());
    let max_orthogonality_residual = max_abs(&|e| e.orthogonality_residual.clone());
    let weighted_haar_dominated = entries.iter().all(|e| {
        let slack = if S::EXACT { 0.0 } else { 1e-12 * e.h_norm_sq.to_f64().abs() };
        e.hw_norm_sq.to_f64() <= e.h_norm_sq.to_f64() + slack
    });
    Ok(ReductionReport {
        square_ratio: (square_sum.clone() / square_scale.clone()).to_f64(),
        entries,
        a2,
        square_sum,
        square_scale,
        gamma_sum,
        gamma_scale,
        gamma_ratio: if gamma_scale > 0.0 { gamma_sum / gamma_scale } else { 0.0 },
        testing_ratio,
        max_pythagoras_residual,
        max_orthogonality_residual,
        weighted_haar_dominated,
    })
}

// ---------------------------------------------------------------------------
// Multiplier norm scans

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// All `sigma_I in {0, 1}` on active atoms.
    Exhaustive01,
    /// All `sigma_I in {-1, 1}` on active atoms.
    ExhaustivePm,
    /// `budget` uniform draws from `[-1, 1]`, the best ones refined coordinatewise.
    RandomContinuous,
    /// Generation symbols `alpha_k in {0, 1}` and `{-1, 1}`.
    Generation,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::Exhaustive01 => "exhaustive-01",
            ScanMode::ExhaustivePm => "exhaustive-pm",
            ScanMode::RandomContinuous => "random-continuous",
            ScanMode::Generation => "generation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exhaustive-01" => Ok(ScanMode::Exhaustive01),
            "exhaustive-pm" => Ok(ScanMode::ExhaustivePm),
            "random-continuous" => Ok(ScanMode::RandomContinuous),
            "generation" => Ok(ScanMode::Generation),
            _ => Err(HaarError::InvalidParameter(format!("unknown scan mode `{s}`"))),
        }
    }
}

/// Largest number of free coordinates an exhaustive scan accepts.
pub const EXHAUSTIVE_MAX_COORDINATES: usize = 20;

/// Number of best random draws refined by coordinate ascent.
pub const REFINED_STARTS: usize = 64;

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub max_norm: f64,
    pub argmax_sigma: BTreeMap<String, f64>,
    pub a2: f64,
    pub ratio: f64,
    pub mode: ScanMode,
    pub seed: u64,
    pub evaluations: usize,
    /// Best unrefined draw (random mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_max: Option<f64>,
}

/// Precomputed `D^{1/2} Delta_I D^{-1/2}` blocks of the active atoms, so a
/// symbol's norm costs one assembly and one spectral solve.
pub struct MultiplierFamily {
    atoms: Vec<AtomId>,
    generations: Vec<usize>,
    ranges: Vec<std::ops::Range<usize>>,
    blocks: Vec<DMatrix<f64>>,
    size: usize,
}

impl MultiplierFamily {
    pub fn new(f: &Filtration<f64>, w: &Weight<f64>) -> Self {
        let nu = Measure::reference(f);
        let masses = leaf_masses(f, w.w());
        let sqrt: Vec<f64> = masses.iter().map(|m| m.sqrt()).collect();
        let atoms = f.active_atoms();
        let mut ranges = Vec::new();
        let mut blocks = Vec::new();
        for &id in &atoms {
            let range = f.leaf_range(id);
            let d = crate::operator::difference_matrix(f, &nu, id);
            let start = range.start;
            let block = DMatrix::from_fn(range.len(), range.len(), |a, b| {
                let (i, j) = (start + a, start + b);
                sqrt[i] * d.get(i, j) / sqrt[j]
            });
            ranges.push(range);
            blocks.push(block);
        }
        MultiplierFamily {
            generations: atoms.iter().map(|&a| f.atom(a).generation).collect(),
            atoms,
            ranges,
            blocks,
            size: f.leaf_count(),
        }
    }

    pub fn atoms(&self) -> &[AtomId] {
        &self.atoms
    }

    /// Norm of `sum_k coeffs[k] Delta_{atoms[k]}` on `L^2(w)`.
    pub fn norm(&self, coeffs: &[f64]) -> Result<f64> {
        let mut m = DMatrix::<f64>::zeros(self.size, self.size);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let r = &self.ranges[k];
            let mut view = m.view_mut((r.start, r.start), (r.len(), r.len()));
            view += &self.blocks[k] * c;
        }
        top_singular_value(&m)
    }

    /// Coefficients of a generation symbol.
    pub fn generation_coeffs(&self, alpha: &[f64]) -> Vec<f64> {
        self.generations.iter().map(|&g| alpha[g]).collect()
    }

    pub fn generation_count(&self) -> usize {
        self.generations.iter().map(|g| g + 1).max().unwrap_or(0)
    }
}

fn vertex(index: u64, len: usize, low: f64) -> Vec<f64> {
    (0..len).map(|k| if index >> k & 1 == 1 { 1.0 } else { low }).collect()
}

fn exhaustive_count(len: usize, budget: u64) -> Result<u64> {
    if len > EXHAUSTIVE_MAX_COORDINATES {
        return Err(HaarError::BudgetExceeded(format!(
            "{len} free coordinates exceed the exhaustive limit {EXHAUSTIVE_MAX_COORDINATES}"
        )));
    }
    let count = 1u64 << len;
    if count > budget {
        return Err(HaarError::BudgetExceeded(format!(
            "{count} patterns exceed budget {budget}"
        )));
    }
    Ok(count)
}

/// Maximizes the norm over a list of candidate coefficient vectors; ties go to
/// the earliest candidate.
fn best_of(family: &MultiplierFamily, candidates: &[Vec<f64>]) -> Result<(f64, usize)> {
    let norms = candidates
        .par_iter()
        .map(|c| family.norm(c))
        .collect::<Result<Vec<f64>>>()?;
    if norms.is_empty() {
        return Ok((0.0, 0));
    }
    let i = argmax(&norms);
    Ok((norms[i], i))
}

/// Coordinate ascent over the cube: each coordinate moves to whichever endpoint
/// gives the larger norm (the norm is convex in each coordinate).
fn refine(family: &MultiplierFamily, start: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut x = start.to_vec();
    let mut best = family.norm(&x)?;
    loop {
        let mut improved = false;
        for k in 0..x.len() {
            for v in [-1.0, 1.0] {
                if x[k] == v {
                    continue;
                }
                let old = x[k];
                x[k] = v;
                let n = family.norm(&x)?;
                if n > best * (1.0 + 1e-15) {
                    best = n;
                    improved = true;
                } else {
                    x[k] = old;
                }
            }
        }
        if !improved {
            return Ok((best, x));
        }
    }
}

pub fn multiplier_norm_scan(
    f: &Filtration<f64>,
    w: &Weight<f64>,
    mode: ScanMode,
    budget: u64,
    seed: u64,
) -> Result<ScanReport> {
    let family = MultiplierFamily::new(f, w);
    scan_family(f, w, &family, mode, budget, seed)
}

pub fn scan_family(
    f: &Filtration<f64>,
    w: &Weight<f64>,
    family: &MultiplierFamily,
    mode: ScanMode,
    budget: u64,
    seed: u64,
) -> Result<ScanReport> {
    if budget == 0 {
        return Err(HaarError::InvalidParameter("budget must be at least 1".into()));
    }
    let k = family.atoms.len();
    let mut raw_max = None;
    let (max_norm, coeffs, evaluations) = match mode {
        ScanMode::Exhaustive01 | ScanMode::ExhaustivePm => {
            let count = exhaustive_count(k, budget)?;
            let low = if mode == ScanMode::Exhaustive01 { 0.0 } else { -1.0 };
            let candidates: Vec<Vec<f64>> = (0..count).map(|i| vertex(i, k, low)).collect();
            let (norm, i) = best_of(family, &candidates)?;
            (norm, candidates[i].clone(), candidates.len())
        }
        ScanMode::Generation => {
            let g = family.generation_count();
            let count = exhaustive_count(g, budget / 2)?;
            let candidates: Vec<Vec<f64>> = [0.0, -1.0]
                .iter()
                .flat_map(|&low| (0..count).map(move |i| vertex(i, g, low)))
                .collect();
            let expanded: Vec<Vec<f64>> =
                candidates.iter().map(|a| family.generation_coeffs(a)).collect();
            let (norm, i) = best_of(family, &expanded)?;
            (norm, expanded[i].clone(), expanded.len())
        }
        ScanMode::RandomContinuous => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws: Vec<Vec<f64>> = (0..budget)
                .map(|_| (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            let norms = draws
                .par_iter()
                .map(|c| family.norm(c))
                .collect::<Result<Vec<f64>>>()?;
            let mut order: Vec<usize> = (0..norms.len()).collect();
            order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            let top = &order[..order.len().min(REFINED_STARTS)];
            let refined = top
                .par_iter()
                .map(|&i| refine(family, &draws[i]))
                .collect::<Result<Vec<_>>>()?;
            let best_raw = order.first().copied().unwrap_or(0);
            raw_max = Some(norms.get(best_raw).copied().unwrap_or(0.0));
            let mut best = (raw_max.unwrap(), draws.get(best_raw).cloned().unwrap_or_default());
            let mut evals = norms.len();
            for (n, x) in refined {
                evals += 1;
                if n > best.0 {
                    best = (n, x);
                }
            }
            (best.0, best.1, evals)
        }
    };
    let a2 = a2_characteristic(f, w).value;
    let argmax_sigma = family
        .atoms
        .iter()
        .zip(&coeffs)
        .filter(|(_, c)| **c != 0.0)
        .map(|(&a, &c)| (f.name(a).to_string(), c))
        .collect();
    Ok(ScanReport {
        max_norm,
        argmax_sigma,
        a2,
        ratio: max_norm / a2,
        mode,
        seed,
        evaluations,
        raw_max,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UnconditionalConstants {
    /// Exact supremum over `{0,1}` symbols.
    pub c3: f64,
    /// Sampled supremum over `|sigma| <= 1`.
    pub c4_sampled: f64,
    /// Exact supremum over `|sigma| <= 1`, attained at a `{-1,1}` vertex.
    pub c4_exact: f64,
    pub a2: f64,
}

/// `C3` and `C4` on a small tree: exhaustive `{0,1}` and `{-1,1}` scans plus
/// `draws` continuous samples.
pub fn unconditional_constants(
    f: &Filtration<f64>,
    w: &Weight<f64>,
    draws: u64,
    seed: u64,
) -> Result<UnconditionalConstants> {
    let family = MultiplierFamily::new(f, w);
    let budget = 1u64 << EXHAUSTIVE_MAX_COORDINATES;
    let c3 = scan_family(f, w, &family, ScanMode::Exhaustive01, budget, seed)?;
    let pm = scan_family(f, w, &family, ScanMode::ExhaustivePm, budget, seed)?;
    let cont = scan_family(f, w, &family, ScanMode::RandomContinuous, draws, seed)?;
    Ok(UnconditionalConstants {
        c3: c3.max_norm,
        c4_sampled: cont.max_norm,
        c4_exact: pm.max_norm,
        a2: c3.a2,
    })
}

// ---------------------------------------------------------------------------
// Duality

#[derive(Clone, Debug)]
pub struct DualFormReport<S> {
    /// `||g w||^2_{L^2(u)}`.
    pub lhs_sq: S,
    /// `||g||^2_{L^2(w)}`.
    pub rhs_sq: S,
    /// Absolute difference (exact for rationals).
    pub residual: S,
    pub relative_residual: f64,
}

/// The isometry `g -> g w` from `L^2(w)` onto `L^2(u)`.
pub fn dual_form_check<S: Scalar>(f: &Filtration<S>, w: &Weight<S>, g: &LeafFunction<S>) -> DualFormReport<S> {
    let lhs_sq = weighted_norm_sq(f, &g.mul(w.w()), w.u());
    let rhs_sq = weighted_norm_sq(f, g, w.w());
    let residual = (lhs_sq.clone() - rhs_sq.clone()).abs();
    let scale = rhs_sq.to_f64().abs();
    DualFormReport {
        relative_residual: if scale > 0.0 { residual.to_f64() / scale } else { residual.to_f64() },
        lhs_sq,
        rhs_sq,
        residual,
    }
}
