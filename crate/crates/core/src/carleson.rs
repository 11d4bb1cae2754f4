//! Carleson sequences of a weight and their packing constants.

use serde::Serialize;

use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, LeafFunction, Measure, TreeFunction};
use crate::marttools::{norm_sq, Weight};
use crate::outerspace::CheckReport;
use crate::scalar::Scalar;

/// Per-child sums `sum_{I'} term(I, I') |I'| / |I|` with the parent and child
/// averages of `u` and `w`.
fn child_sequence<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    term: impl Fn(&S, &S, &S, &S) -> S,
) -> TreeFunction<S> {
    let nu = Measure::reference(f);
    let au = f.averages(w.u(), &nu);
    let aw = f.averages(w.w(), &nu);
    TreeFunction(
        f.ids()
            .map(|id| {
                let atom = f.atom(id);
                if !atom.is_active() {
                    return S::zero();
                }
                atom.children.iter().fold(S::zero(), |acc, &c| {
                    acc + term(&au.0[id.0], &au.0[c.0], &aw.0[id.0], &aw.0[c.0])
                        * f.measure(c).clone()
                        / f.measure(id).clone()
                })
            })
            .collect(),
    )
}

/// `tau_I = sum |<u>_{I'} - <u>_I|^2 <w>_I <w>_{I'} |I'| / |I|`.
pub fn tau_sequence<S: Scalar>(f: &Filtration<S>, w: &Weight<S>) -> TreeFunction<S> {
    child_sequence(f, w, |u, uc, wv, wc| {
        let d = uc.clone() - u.clone();
        d.clone() * d * wv.clone() * wc.clone()
    })
}

/// `rho_I = sum |<u>_{I'} - <u>_I| |<w>_{I'} - <w>_I| |I'| / |I|`.
pub fn rho_sequence<S: Scalar>(f: &Filtration<S>, w: &Weight<S>) -> TreeFunction<S> {
    child_sequence(f, w, |u, uc, wv, wc| ((uc.clone() - u.clone()) * (wc.clone() - wv.clone())).abs())
}

/// `gamma_I = |I|^{-1} int_I |Delta_I u|^2 w = sum |<u>_{I'} - <u>_I|^2 <w>_{I'} |I'| / |I|`.
pub fn gamma_sequence<S: Scalar>(f: &Filtration<S>, w: &Weight<S>) -> TreeFunction<S> {
    child_sequence(f, w, |u, uc, _, wc| {
        let d = uc.clone() - u.clone();
        d.clone() * d * wc.clone()
    })
}

#[derive(Clone, Debug)]
pub struct PackingReport<S> {
    pub constant: S,
    pub witness: AtomId,
    pub per_atom_ratios: Vec<S>,
}

impl<S: Scalar> PackingReport<S> {
    /// JSON `{constant, witness, per_atom_ratios}` keyed by atom name.
    pub fn to_json(&self, f: &Filtration<S>) -> serde_json::Value {
        #[derive(Serialize)]
        struct Out<'a> {
            constant: f64,
            witness: &'a str,
            per_atom_ratios: std::collections::BTreeMap<&'a str, f64>,
        }
        let out = Out {
            constant: self.constant.to_f64(),
            witness: f.name(self.witness),
            per_atom_ratios: f
                .ids()
                .map(|i| (f.name(i), self.per_atom_ratios[i.0].to_f64()))
                .collect(),
        };
        serde_json::to_value(out).expect("report serializes")
    }
}

/// `max_{I0} sum_{D(I0)} a_I |I| / N(I0)` with `N(I0) = mu(I0)`, in one
/// bottom-up pass. Atoms with `N(I0) = 0` are skipped.
pub fn packing_constant_for<S: Scalar>(
    f: &Filtration<S>,
    a: &TreeFunction<S>,
    mu: &Measure<S>,
) -> Result<PackingReport<S>> {
    if a.0.len() != f.atom_count() {
        return Err(HaarError::LengthMismatch {
            expected: f.atom_count(),
            got: a.0.len(),
        });
    }
    if let Some(i) = a.0.iter().position(|v| v < &S::zero()) {
        return Err(HaarError::InvalidParameter(format!(
            "packing sequence is negative at `{}`",
            f.name(AtomId(i))
        )));
    }
    let weighted: Vec<S> = f.ids().map(|i| a.0[i.0].clone() * f.measure(i).clone()).collect();
    let totals = f.subtree_totals(&weighted);
    let ratios: Vec<S> = totals
        .into_iter()
        .zip(mu.atom_masses())
        .map(|(t, n)| if n.is_zero() { S::zero() } else { t / n.clone() })
        .collect();
    let mut witness = 0;
    for (i, r) in ratios.iter().enumerate() {
        if r > &ratios[witness] {
            witness = i;
        }
    }
    Ok(PackingReport {
        constant: ratios[witness].clone(),
        witness: AtomId(witness),
        per_atom_ratios: ratios,
    })
}

/// Packing constant normalized by `|I0|`, or by `<density>_{I0} |I0|` when a
/// normalizing density is given.
pub fn packing_constant<S: Scalar>(
    f: &Filtration<S>,
    a: &TreeFunction<S>,
    normalizer: Option<&LeafFunction<S>>,
) -> Result<PackingReport<S>> {
    let mu = match normalizer {
        Some(d) => Measure::with_density(f, d)?,
        None => Measure::reference(f),
    };
    packing_constant_for(f, a, &mu)
}

/// `sum <g>_{I,mu}^2 a_I |I| <= 4 K ||g||^2_{L^2(mu)}`, with `K` the packing
/// constant of `a` normalized by `mu`. Decided exactly.
pub fn carleson_embedding_check<S: Scalar>(
    f: &Filtration<S>,
    mu: &Measure<S>,
    a: &TreeFunction<S>,
    g: &LeafFunction<S>,
) -> Result<CheckReport> {
    let k = packing_constant_for(f, a, mu)?;
    let avg = f.averages(g, mu);
    let lhs = f.ids().fold(S::zero(), |acc, i| {
        acc + avg.0[i.0].clone() * avg.0[i.0].clone() * a.0[i.0].clone() * f.measure(i).clone()
    });
    let rhs = S::from_usize(4) * k.constant * norm_sq(g, mu);
    Ok(CheckReport::new(
        lhs.to_f64(),
        rhs.to_f64(),
        lhs <= rhs,
        Some(f.name(k.witness).to_string()),
    ))
}
