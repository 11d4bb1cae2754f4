//! Finite atomic filtrations.
//!
//! A filtration is stored as a forest of atoms laid out in depth-first order, so
//! that the subtree `D(I)` of every atom is a contiguous index range and the
//! leaves below it are a contiguous range of leaf indices. Atoms that persist
//! across several generations are represented as chains of single-child nodes.

use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HaarError, Result};
use crate::scalar::{rational_to_json, Rational, Scalar};

/// Relative tolerance for mass telescoping in the float backend.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomId(pub usize);

impl AtomId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Atom<S> {
    pub name: String,
    pub generation: usize,
    pub measure: S,
    pub parent: Option<AtomId>,
    pub children: Vec<AtomId>,
    subtree_end: usize,
    leaves: Range<usize>,
}

impl<S> Atom<S> {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// An atom with at least two children; only these carry a nonzero
    /// martingale difference.
    pub fn is_active(&self) -> bool {
        self.children.len() >= 2
    }
}

#[derive(Clone, Debug)]
pub struct Filtration<S> {
    atoms: Vec<Atom<S>>,
    roots: Vec<AtomId>,
    leaves: Vec<AtomId>,
    leaf_slot: Vec<Option<usize>>,
    depth: usize,
    names: HashMap<String, AtomId>,
}

// ---------------------------------------------------------------------------
// Tree description files

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureValue {
    Pair([i64; 2]),
    Number(f64),
    Text(String),
}

impl MeasureValue {
    pub fn to_scalar<S: Scalar>(&self) -> Result<S> {
        match self {
            MeasureValue::Pair([n, d]) => {
                if *d == 0 {
                    return Err(HaarError::Parse(format!("{n}/{d}")));
                }
                Ok(S::from_ratio(*n, *d))
            }
            MeasureValue::Number(x) => {
                if !x.is_finite() {
                    return Err(HaarError::Parse(x.to_string()));
                }
                S::parse(&format!("{x:e}"))
            }
            MeasureValue::Text(t) => S::parse(t),
        }
    }
}

impl From<f64> for MeasureValue {
    fn from(x: f64) -> Self {
        MeasureValue::Number(x)
    }
}

impl From<&str> for MeasureValue {
    fn from(t: &str) -> Self {
        MeasureValue::Text(t.to_string())
    }
}

impl From<(i64, i64)> for MeasureValue {
    fn from((n, d): (i64, i64)) -> Self {
        MeasureValue::Pair([n, d])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub id: String,
    pub parent: Option<String>,
    #[serde(default)]
    pub measure: Option<MeasureValue>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub leaf_measures_only: bool,
}

impl TreeSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf_measures_only(mut self) -> Self {
        self.leaf_measures_only = true;
        self
    }

    pub fn atom(mut self, id: &str, parent: Option<&str>, measure: Option<MeasureValue>) -> Self {
        self.atoms.push(AtomSpec {
            id: id.to_string(),
            parent: parent.map(str::to_string),
            measure,
        });
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree spec serializes")
    }
}

// ---------------------------------------------------------------------------
// Construction

impl<S: Scalar> Filtration<S> {
    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        if spec.atoms.is_empty() {
            return Err(HaarError::EmptyTree);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, a) in spec.atoms.iter().enumerate() {
            if index.insert(a.id.as_str(), i).is_some() {
                return Err(HaarError::DuplicateAtom(a.id.clone()));
            }
        }
        let n = spec.atoms.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (i, a) in spec.atoms.iter().enumerate() {
            match &a.parent {
                Some(p) => {
                    let &pi = index
                        .get(p.as_str())
                        .ok_or_else(|| HaarError::UnknownAtom(p.clone()))?;
                    if pi == i {
                        return Err(HaarError::CyclicStructure(a.id.clone()));
                    }
                    parent[i] = Some(pi);
                    children[pi].push(i);
                }
                None => roots.push(i),
            }
        }
        if roots.is_empty() {
            return Err(HaarError::CyclicStructure(spec.atoms[0].id.clone()));
        }

        let mut declared: Vec<Option<S>> = Vec::with_capacity(n);
        for a in &spec.atoms {
            declared.push(match &a.measure {
                Some(m) => Some(m.to_scalar::<S>()?),
                None => None,
            });
        }

        // Depth-first order from the roots; anything not reached sits on a cycle.
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for &r in &roots {
            let mut stack = vec![r];
            while let Some(v) = stack.pop() {
                if seen[v] {
                    return Err(HaarError::CyclicStructure(spec.atoms[v].id.clone()));
                }
                seen[v] = true;
                order.push(v);
                for &c in children[v].iter().rev() {
                    stack.push(c);
                }
            }
        }
        if let Some(v) = (0..n).find(|&v| !seen[v]) {
            return Err(HaarError::CyclicStructure(spec.atoms[v].id.clone()));
        }

        let mut measure: Vec<Option<S>> = vec![None; n];
        for &v in order.iter().rev() {
            let name = &spec.atoms[v].id;
            if children[v].is_empty() {
                let m = declared[v]
                    .clone()
                    .ok_or_else(|| HaarError::MissingMeasure(name.clone()))?;
                measure[v] = Some(m);
                continue;
            }
            let total = children[v]
                .iter()
                .fold(S::zero(), |acc, &c| acc + measure[c].clone().expect("child first"));
            if let Some(d) = &declared[v] {
                if !d.close_to(&total, MASS_TOLERANCE) {
                    return Err(HaarError::MassMismatch {
                        atom: name.clone(),
                        declared: d.to_string(),
                        children: total.to_string(),
                    });
                }
            }
            measure[v] = Some(total);
        }
        for &v in &order {
            let m = measure[v].as_ref().expect("all measured");
            let nonpositive = m <= &S::zero()
                || declared[v].as_ref().is_some_and(|d| d <= &S::zero());
            if nonpositive {
                return Err(HaarError::NonPositiveMeasure(spec.atoms[v].id.clone()));
            }
        }

        let mut position = vec![0usize; n];
        for (pos, &v) in order.iter().enumerate() {
            position[v] = pos;
        }
        let atoms = order
            .iter()
            .map(|&v| Atom {
                name: spec.atoms[v].id.clone(),
                generation: 0,
                measure: measure[v].clone().expect("measured"),
                parent: parent[v].map(|p| AtomId(position[p])),
                children: children[v].iter().map(|&c| AtomId(position[c])).collect(),
                subtree_end: 0,
                leaves: 0..0,
            })
            .collect();
        Ok(Self::finish(
            atoms,
            roots.iter().map(|&r| AtomId(position[r])).collect(),
        ))
    }

    /// Fills generations, subtree ranges and leaf ranges of a depth-first arena.
    fn finish(mut atoms: Vec<Atom<S>>, roots: Vec<AtomId>) -> Self {
        let n = atoms.len();
        for i in 0..n {
            atoms[i].generation = match atoms[i].parent {
                Some(p) => atoms[p.0].generation + 1,
                None => 0,
            };
        }
        let mut leaves = Vec::new();
        let mut leaf_slot = vec![None; n];
        for (i, a) in atoms.iter().enumerate() {
            if a.children.is_empty() {
                leaf_slot[i] = Some(leaves.len());
                leaves.push(AtomId(i));
            }
        }
        for i in (0..n).rev() {
            let (end, range) = if atoms[i].children.is_empty() {
                let s = leaf_slot[i].expect("leaf");
                (i + 1, s..s + 1)
            } else {
                let first = atoms[i].children[0].0;
                let last = *atoms[i].children.last().expect("nonempty").index_ref();
                (
                    atoms[last].subtree_end,
                    atoms[first].leaves.start..atoms[last].leaves.end,
                )
            };
            atoms[i].subtree_end = end;
            atoms[i].leaves = range;
        }
        let depth = atoms.iter().map(|a| a.generation + 1).max().unwrap_or(0);
        let names = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.clone(), AtomId(i)))
            .collect();
        Filtration {
            atoms,
            roots,
            leaves,
            leaf_slot,
            depth,
            names,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&TreeSpec::from_json(text)?)
    }

    /// Converts measures leafwise and recomputes internal masses in the target
    /// backend, so telescoping stays exact (rational) or consistent (float).
    pub fn convert<T: Scalar>(&self, leaf_map: impl Fn(&S) -> T) -> Filtration<T> {
        let mut atoms: Vec<Atom<T>> = self
            .atoms
            .iter()
            .map(|a| Atom {
                name: a.name.clone(),
                generation: a.generation,
                measure: T::zero(),
                parent: a.parent,
                children: a.children.clone(),
                subtree_end: a.subtree_end,
                leaves: a.leaves.clone(),
            })
            .collect();
        for i in (0..atoms.len()).rev() {
            atoms[i].measure = if atoms[i].children.is_empty() {
                leaf_map(&self.atoms[i].measure)
            } else {
                atoms[i]
                    .children
                    .iter()
                    .fold(T::zero(), |acc, c| acc + atoms[c.0].measure.clone())
            };
        }
        Filtration {
            atoms,
            roots: self.roots.clone(),
            leaves: self.leaves.clone(),
            leaf_slot: self.leaf_slot.clone(),
            depth: self.depth,
            names: self.names.clone(),
        }
    }

    pub fn to_f64(&self) -> Filtration<f64> {
        self.convert(|m| m.to_f64())
    }

    /// Exact rational copy (every float leaf mass is converted exactly).
    pub fn to_rational(&self) -> Filtration<Rational> {
        self.convert(|m| <Rational as Scalar>::from_f64(m.to_f64()))
    }

    /// Explicit description with measures on every atom, in depth-first order.
    pub fn to_spec(&self) -> TreeSpec {
        let atoms = self
            .atoms
            .iter()
            .map(|a| AtomSpec {
                id: a.name.clone(),
                parent: a.parent.map(|p| self.atoms[p.0].name.clone()),
                measure: Some(measure_value(&a.measure)),
            })
            .collect();
        TreeSpec {
            atoms,
            leaf_measures_only: false,
        }
    }
}

fn measure_value<S: Scalar>(m: &S) -> MeasureValue {
    if S::EXACT {
        let r = <Rational as Scalar>::parse(&m.to_string()).expect("rational display parses");
        match rational_to_json(&r) {
            serde_json::Value::Array(v) => {
                MeasureValue::Pair([v[0].as_i64().expect("i64"), v[1].as_i64().expect("i64")])
            }
            serde_json::Value::String(s) => MeasureValue::Text(s),
            _ => unreachable!(),
        }
    } else {
        MeasureValue::Number(m.to_f64())
    }
}

trait IndexRef {
    fn index_ref(&self) -> &usize;
}

impl IndexRef for AtomId {
    fn index_ref(&self) -> &usize {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Queries

impl<S: Scalar> Filtration<S> {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Number of generations.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn atoms(&self) -> &[Atom<S>] {
        &self.atoms
    }

    pub fn atom(&self, id: AtomId) -> &Atom<S> {
        &self.atoms[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomId> + '_ {
        (0..self.atoms.len()).map(AtomId)
    }

    pub fn roots(&self) -> &[AtomId] {
        &self.roots
    }

    pub fn leaves(&self) -> &[AtomId] {
        &self.leaves
    }

    pub fn measure(&self, id: AtomId) -> &S {
        &self.atoms[id.0].measure
    }

    pub fn name(&self, id: AtomId) -> &str {
        &self.atoms[id.0].name
    }

    pub fn find(&self, name: &str) -> Result<AtomId> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| HaarError::UnknownAtom(name.to_string()))
    }

    pub fn check(&self, id: AtomId) -> Result<()> {
        if id.0 < self.atoms.len() {
            Ok(())
        } else {
            Err(HaarError::UnknownAtom(format!("#{}", id.0)))
        }
    }

    /// Leaf slot of a childless atom.
    pub fn leaf_slot(&self, id: AtomId) -> Option<usize> {
        self.leaf_slot[id.0]
    }

    /// Leaf slots below `id`.
    pub fn leaf_range(&self, id: AtomId) -> Range<usize> {
        self.atoms[id.0].leaves.clone()
    }

    /// Atom indices of `D(id)`: `id` and all its descendants, depth-first.
    pub fn subtree(&self, id: AtomId) -> Range<usize> {
        id.0..self.atoms[id.0].subtree_end
    }

    /// `D(I0)` as a list, in depth-first order.
    pub fn atoms_below(&self, id: AtomId) -> Result<Vec<AtomId>> {
        self.check(id)?;
        Ok(self.subtree(id).map(AtomId).collect())
    }

    pub fn contains(&self, ancestor: AtomId, id: AtomId) -> bool {
        self.subtree(ancestor).contains(&id.0)
    }

    /// The root whose subtree contains `id`.
    pub fn root_of(&self, id: AtomId) -> AtomId {
        let mut cur = id;
        while let Some(p) = self.atoms[cur.0].parent {
            cur = p;
        }
        cur
    }

    /// Chain from `id` up to its root, starting with `id`.
    pub fn ancestors(&self, id: AtomId) -> impl Iterator<Item = AtomId> + '_ {
        std::iter::successors(Some(id), move |a| self.atoms[a.0].parent)
    }

    /// Atoms that carry a nonzero martingale difference.
    pub fn active_atoms(&self) -> Vec<AtomId> {
        self.ids().filter(|&i| self.atom(i).is_active()).collect()
    }

    /// Atoms of generation `n` (nodes born in that generation).
    pub fn generation(&self, n: usize) -> impl Iterator<Item = AtomId> + '_ {
        self.ids().filter(move |&i| self.atoms[i.0].generation == n)
    }

    /// Sums leaf values over every subtree in one bottom-up pass.
    pub fn subtree_sums(&self, leaf_values: &[S]) -> Vec<S> {
        debug_assert_eq!(leaf_values.len(), self.leaves.len());
        let mut out = vec![S::zero(); self.atoms.len()];
        for i in (0..self.atoms.len()).rev() {
            out[i] = match self.leaf_slot[i] {
                Some(s) => leaf_values[s].clone(),
                None => self.atoms[i]
                    .children
                    .iter()
                    .fold(S::zero(), |acc, c| acc + out[c.0].clone()),
            };
        }
        out
    }

    /// Same as [`Self::subtree_sums`] for an atom-indexed sequence: the sum
    /// over `D(I)` of `values`.
    pub fn subtree_totals(&self, values: &[S]) -> Vec<S> {
        debug_assert_eq!(values.len(), self.atoms.len());
        let mut out = values.to_vec();
        for i in (0..self.atoms.len()).rev() {
            if let Some(p) = self.atoms[i].parent {
                let v = out[i].clone();
                out[p.0] = out[p.0].clone() + v;
            }
        }
        out
    }

    pub fn total_mass(&self) -> S {
        self.roots
            .iter()
            .fold(S::zero(), |acc, r| acc + self.atoms[r.0].measure.clone())
    }
}

// ---------------------------------------------------------------------------
// Functions on leaves and on atoms

/// A function on the space, constant on each leaf atom.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFunction<S>(pub Vec<S>);

/// A function on the atom collection, indexed by [`AtomId`].
#[derive(Clone, Debug, PartialEq)]
pub struct TreeFunction<S>(pub Vec<S>);

impl<S: Scalar> LeafFunction<S> {
    pub fn new(f: &Filtration<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != f.leaf_count() {
            return Err(HaarError::LengthMismatch {
                expected: f.leaf_count(),
                got: values.len(),
            });
        }
        if !S::EXACT && values.iter().any(|v| !v.to_f64().is_finite()) {
            return Err(HaarError::InvalidParameter("non-finite leaf value".into()));
        }
        Ok(LeafFunction(values))
    }

    pub fn constant(f: &Filtration<S>, c: S) -> Self {
        LeafFunction(vec![c; f.leaf_count()])
    }

    pub fn zero(f: &Filtration<S>) -> Self {
        Self::constant(f, S::zero())
    }

    /// `1_I` as a function on leaves.
    pub fn indicator(f: &Filtration<S>, id: AtomId) -> Self {
        let range = f.leaf_range(id);
        LeafFunction(
            (0..f.leaf_count())
                .map(|i| if range.contains(&i) { S::one() } else { S::zero() })
                .collect(),
        )
    }

    /// Values keyed by leaf name; unlisted leaves get `default`.
    pub fn from_named(
        f: &Filtration<S>,
        named: &HashMap<String, S>,
        default: Option<S>,
    ) -> Result<Self> {
        for k in named.keys() {
            let id = f.find(k)?;
            if f.leaf_slot(id).is_none() {
                return Err(HaarError::InvalidParameter(format!("`{k}` is not a leaf")));
            }
        }
        let values = f
            .leaves()
            .iter()
            .map(|&l| match named.get(f.name(l)) {
                Some(v) => Ok(v.clone()),
                None => default
                    .clone()
                    .ok_or_else(|| HaarError::MissingMeasure(f.name(l).to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(f, values)
    }

    pub fn values(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, g: impl Fn(&S) -> S) -> Self {
        LeafFunction(self.0.iter().map(g).collect())
    }

    pub fn zip_with(&self, other: &Self, g: impl Fn(&S, &S) -> S) -> Self {
        LeafFunction(self.0.iter().zip(&other.0).map(|(a, b)| g(a, b)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.clone() * b.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|a| a.clone() * c.clone())
    }

    pub fn to_f64(&self) -> LeafFunction<f64> {
        LeafFunction(self.0.iter().map(Scalar::to_f64).collect())
    }

    pub fn to_rational(&self) -> LeafFunction<Rational> {
        LeafFunction(self.0.iter().map(|v| <Rational as Scalar>::from_f64(v.to_f64())).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| v.is_zero())
    }
}

impl<S: Scalar> TreeFunction<S> {
    pub fn new(f: &Filtration<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != f.atom_count() {
            return Err(HaarError::LengthMismatch {
                expected: f.atom_count(),
                got: values.len(),
            });
        }
        Ok(TreeFunction(values))
    }

    pub fn zero(f: &Filtration<S>) -> Self {
        TreeFunction(vec![S::zero(); f.atom_count()])
    }

    /// Values keyed by atom name; unlisted atoms are zero.
    pub fn from_named(f: &Filtration<S>, named: &HashMap<String, S>) -> Result<Self> {
        let mut v = vec![S::zero(); f.atom_count()];
        for (k, x) in named {
            v[f.find(k)?.0] = x.clone();
        }
        Ok(TreeFunction(v))
    }

    pub fn get(&self, id: AtomId) -> &S {
        &self.0[id.0]
    }

    pub fn values(&self) -> &[S] {
        &self.0
    }

    pub fn abs(&self) -> Self {
        TreeFunction(self.0.iter().map(|v| v.abs()).collect())
    }

    pub fn to_f64(&self) -> TreeFunction<f64> {
        TreeFunction(self.0.iter().map(Scalar::to_f64).collect())
    }

    pub fn to_named(&self, f: &Filtration<S>) -> HashMap<String, f64> {
        f.ids().map(|i| (f.name(i).to_string(), self.0[i.0].to_f64())).collect()
    }
}

/// A measure `mu = density * nu`, stored as its mass on every atom and leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure<S> {
    atom_mass: Vec<S>,
    leaf_mass: Vec<S>,
}

impl<S: Scalar> Measure<S> {
    /// The reference measure `nu` itself.
    pub fn reference(f: &Filtration<S>) -> Self {
        Measure {
            atom_mass: f.atoms().iter().map(|a| a.measure.clone()).collect(),
            leaf_mass: f.leaves().iter().map(|&l| f.measure(l).clone()).collect(),
        }
    }

    /// `density * nu`; the density must be nonnegative.
    pub fn with_density(f: &Filtration<S>, density: &LeafFunction<S>) -> Result<Self> {
        if density.len() != f.leaf_count() {
            return Err(HaarError::LengthMismatch {
                expected: f.leaf_count(),
                got: density.len(),
            });
        }
        if density.0.iter().any(|d| d < &S::zero()) {
            return Err(HaarError::InvalidParameter("negative density".into()));
        }
        let leaf_mass: Vec<S> = f
            .leaves()
            .iter()
            .zip(&density.0)
            .map(|(&l, d)| d.clone() * f.measure(l).clone())
            .collect();
        Ok(Measure {
            atom_mass: f.subtree_sums(&leaf_mass),
            leaf_mass,
        })
    }

    pub fn mass(&self, id: AtomId) -> &S {
        &self.atom_mass[id.0]
    }

    pub fn leaf_mass(&self, slot: usize) -> &S {
        &self.leaf_mass[slot]
    }

    pub fn atom_masses(&self) -> &[S] {
        &self.atom_mass
    }

    pub fn leaf_masses(&self) -> &[S] {
        &self.leaf_mass
    }

    pub fn total(&self, f: &Filtration<S>) -> S {
        f.roots()
            .iter()
            .fold(S::zero(), |acc, r| acc + self.atom_mass[r.0].clone())
    }

    pub fn to_f64(&self) -> Measure<f64> {
        Measure {
            atom_mass: self.atom_mass.iter().map(Scalar::to_f64).collect(),
            leaf_mass: self.leaf_mass.iter().map(Scalar::to_f64).collect(),
        }
    }
}

impl<S: Scalar> Filtration<S> {
    /// `<f>_{I,mu}` for every atom, with the convention 0 on atoms of zero mass.
    pub fn averages(&self, f: &LeafFunction<S>, mu: &Measure<S>) -> TreeFunction<S> {
        let weighted: Vec<S> = f
            .0
            .iter()
            .zip(&mu.leaf_mass)
            .map(|(a, m)| a.clone() * m.clone())
            .collect();
        let integrals = self.subtree_sums(&weighted);
        TreeFunction(
            integrals
                .into_iter()
                .zip(&mu.atom_mass)
                .map(|(s, m)| if m.is_zero() { S::zero() } else { s / m.clone() })
                .collect(),
        )
    }

    /// `int f dmu` over the whole space.
    pub fn integral(&self, f: &LeafFunction<S>, mu: &Measure<S>) -> S {
        f.0.iter()
            .zip(&mu.leaf_mass)
            .fold(S::zero(), |acc, (a, m)| acc + a.clone() * m.clone())
    }
}

// ---------------------------------------------------------------------------
// Random trees

/// Log-uniform law on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureLaw {
    pub lo: f64,
    pub hi: f64,
}

impl MeasureLaw {
    pub fn log_uniform(lo: f64, hi: f64) -> Self {
        MeasureLaw { lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) {
            return Err(HaarError::InvalidParameter(format!(
                "log-uniform law needs 0 < lo <= hi < inf, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (a + (b - a) * rng.gen::<f64>()).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTreeConfig {
    pub max_depth: usize,
    pub max_branching: usize,
    pub law: MeasureLaw,
    /// Probability that a non-root atom above the last generation stops early.
    pub leaf_probability: f64,
}

impl RandomTreeConfig {
    pub fn new(max_depth: usize, max_branching: usize) -> Self {
        RandomTreeConfig {
            max_depth,
            max_branching,
            law: MeasureLaw::log_uniform(1e-2, 1e2),
            leaf_probability: 0.0,
        }
    }

    pub fn with_law(mut self, law: MeasureLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_leaf_probability(mut self, p: f64) -> Self {
        self.leaf_probability = p;
        self
    }
}

/// A reproducible random tree. Children counts are uniform in
/// `1..=max_branching`, so single-child chains occur.
pub fn random_tree(seed: u64, cfg: &RandomTreeConfig) -> Result<Filtration<f64>> {
    if cfg.max_depth == 0 || cfg.max_branching == 0 {
        return Err(HaarError::InvalidParameter(
            "max_depth and max_branching must be at least 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.leaf_probability) {
        return Err(HaarError::InvalidParameter("leaf_probability must lie in [0, 1)".into()));
    }
    cfg.law.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut atoms: Vec<Atom<f64>> = Vec::new();
    // (parent index, generation, name)
    let mut stack: Vec<(Option<usize>, usize, String)> = vec![(None, 0, "r".to_string())];
    while let Some((parent, gen, name)) = stack.pop() {
        let idx = atoms.len();
        atoms.push(Atom {
            name: name.clone(),
            generation: gen,
            measure: 0.0,
            parent: parent.map(AtomId),
            children: Vec::new(),
            subtree_end: 0,
            leaves: 0..0,
        });
        if let Some(p) = parent {
            atoms[p].children.push(AtomId(idx));
        }
        let stop = gen + 1 >= cfg.max_depth || (gen > 0 && rng.gen::<f64>() < cfg.leaf_probability);
        if stop {
            atoms[idx].measure = cfg.law.sample(&mut rng);
        } else {
            let k = rng.gen_range(1..=cfg.max_branching);
            for c in (0..k).rev() {
                stack.push((Some(idx), gen + 1, format!("{name}.{c}")));
            }
        }
    }
    for i in (0..atoms.len()).rev() {
        if !atoms[i].children.is_empty() {
            atoms[i].measure = atoms[i].children.iter().map(|c| atoms[c.0].measure).sum();
        }
    }
    Ok(Filtration::finish(atoms, vec![AtomId(0)]))
}

/// Log-uniform random leaf function.
pub fn random_leaf_function<R: Rng>(
    f: &Filtration<f64>,
    law: &MeasureLaw,
    rng: &mut R,
) -> LeafFunction<f64> {
    LeafFunction((0..f.leaf_count()).map(|_| law.sample(rng)).collect())
}

/// Uniform random leaf function on `[-1, 1]`.
pub fn random_signed_function<R: Rng>(f: &Filtration<f64>, rng: &mut R) -> LeafFunction<f64> {
    LeafFunction((0..f.leaf_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf() -> Filtration<f64> {
        let spec = TreeSpec::new()
            .leaf_measures_only()
            .atom("I", None, None)
            .atom("a", Some("I"), Some(0.5.into()))
            .atom("b", Some("I"), Some(0.5.into()));
        Filtration::from_spec(&spec).unwrap()
    }

    pub(crate) fn seven_atom(eps: &str) -> TreeSpec {
        let one_minus = format!("1-{eps}");
        let _ = one_minus;
        TreeSpec::new()
            .atom("I", None, Some(2.0.into()))
            .atom("J1", Some("I"), Some(1.0.into()))
            .atom("I1", Some("J1"), Some(0.99.into()))
            .atom("I2", Some("J1"), Some(eps.into()))
            .atom("J2", Some("I"), Some(1.0.into()))
            .atom("I3", Some("J2"), Some(0.99.into()))
            .atom("I4", Some("J2"), Some(eps.into()))
    }

    #[test]
    fn two_leaves_give_depth_two() {
        let f = two_leaf();
        assert_eq!(f.depth(), 2);
        assert_eq!(*f.measure(f.roots()[0]), 1.0);
        assert_eq!(f.leaf_count(), 2);
    }

    #[test]
    fn seven_atom_tree_is_valid_and_counts() {
        let f = Filtration::<Rational>::from_spec(&seven_atom("0.01")).unwrap();
        let root = f.find("I").unwrap();
        assert_eq!(f.atoms_below(root).unwrap().len(), 7);
        assert_eq!(*f.measure(root), Rational::from_ratio(2, 1));
        let leaf = f.find("I2").unwrap();
        assert_eq!(f.atoms_below(leaf).unwrap(), vec![leaf]);
    }

    #[test]
    fn zero_leaf_is_rejected() {
        let spec = TreeSpec::new()
            .leaf_measures_only()
            .atom("I", None, None)
            .atom("a", Some("I"), Some(0.0.into()))
            .atom("b", Some("I"), Some(1.0.into()));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::NonPositiveMeasure(_))
        ));
    }

    #[test]
    fn mass_mismatch_and_cycles() {
        let spec = TreeSpec::new()
            .atom("I", None, Some(3.0.into()))
            .atom("a", Some("I"), Some(1.0.into()))
            .atom("b", Some("I"), Some(1.0.into()));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::MassMismatch { .. })
        ));
        let spec = TreeSpec::new()
            .atom("r", None, Some(1.0.into()))
            .atom("a", Some("b"), Some(1.0.into()))
            .atom("b", Some("a"), Some(1.0.into()));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::CyclicStructure(_))
        ));
        let spec = TreeSpec::new().atom("a", Some("a"), Some(1.0.into()));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::CyclicStructure(_))
        ));
        let spec = TreeSpec::new().atom("a", Some("zz"), Some(1.0.into()));
        assert!(matches!(
            Filtration::<f64>::from_spec(&spec),
            Err(HaarError::UnknownAtom(_))
        ));
    }

    #[test]
    fn rational_round_trip_is_exact() {
        let spec = TreeSpec::new()
            .leaf_measures_only()
            .atom("I", None, None)
            .atom("a", Some("I"), Some((1, 3).into()))
            .atom("b", Some("I"), Some("2/7".into()));
        let f = Filtration::<Rational>::from_spec(&spec).unwrap();
        let back = Filtration::<Rational>::from_json(&f.to_spec().to_json()).unwrap();
        assert_eq!(*back.measure(back.roots()[0]), Rational::from_ratio(13, 21));
        let names: Vec<_> = back.ids().map(|i| back.name(i).to_string()).collect();
        assert_eq!(names, vec!["I", "a", "b"]);
    }

    #[test]
    fn single_atom_random_tree() {
        let f = random_tree(1, &RandomTreeConfig::new(1, 1)).unwrap();
        assert_eq!(f.atom_count(), 1);
        assert!(f.active_atoms().is_empty());
    }

    #[test]
    fn random_tree_is_deterministic_and_bounded() {
        let cfg = RandomTreeConfig::new(5, 3);
        let a = random_tree(7, &cfg).unwrap();
        let b = random_tree(7, &cfg).unwrap();
        assert!(a.leaf_count() <= 3usize.pow(4));
        assert_eq!(a.to_spec(), b.to_spec());
        let root = a.roots()[0];
        assert_eq!(a.atoms_below(root).unwrap().len(), a.atom_count());
    }

    #[test]
    fn wide_law_produces_non_doubling_siblings() {
        // Seed 3 is the accepted seed: some sibling mass ratio exceeds 100.
        let cfg = RandomTreeConfig::new(4, 4).with_law(MeasureLaw::log_uniform(1e-3, 1e3));
        let f = random_tree(3, &cfg).unwrap();
        let worst = f
            .atoms()
            .iter()
            .filter(|a| a.children.len() >= 2)
            .map(|a| {
                let ms: Vec<f64> = a.children.iter().map(|&c| *f.measure(c)).collect();
                let hi = ms.iter().cloned().fold(0.0, f64::max);
                let lo = ms.iter().cloned().fold(f64::INFINITY, f64::min);
                hi / lo
            })
            .fold(0.0, f64::max);
        assert!(worst > 100.0, "max sibling ratio {worst}");
    }

    #[test]
    fn subtree_sums_match_measures() {
        let f = random_tree(11, &RandomTreeConfig::new(5, 3)).unwrap();
        let leaf: Vec<f64> = f.leaves().iter().map(|&l| *f.measure(l)).collect();
        let sums = f.subtree_sums(&leaf);
        for id in f.ids() {
            assert!((sums[id.0] - f.measure(id)).abs() <= 1e-12 * f.measure(id));
        }
    }
}
