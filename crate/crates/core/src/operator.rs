//! Dense operators on leaf-value vectors and their weighted norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, Measure};
use crate::scalar::Scalar;

/// Power iteration cap for the eigensolver fallback.
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Row-major dense matrix over a [`Scalar`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: S) {
        let k = i * self.cols + j;
        self.data[k] = self.data[k].clone() + v;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "vector length");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .filter(|(a, _)| !a.is_zero())
                    .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.add_at(i, j, a.clone() * b.clone());
                    }
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: &S, other: &Mat<S>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            if !b.is_zero() {
                *a = a.clone() + c.clone() * b.clone();
            }
        }
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        let mut out = self.clone();
        out.axpy(&S::one(), other);
        out
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        let mut out = self.clone();
        out.axpy(&-S::one(), other);
        out
    }

    pub fn scale(&self, c: &S) -> Mat<S> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.clone() * c.clone()).collect(),
        }
    }

    /// Multiplies column `j` by `d[j]`.
    pub fn scale_columns(&self, d: &[S]) -> Mat<S> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).clone() * d[j].clone())
    }

    /// Multiplies row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[S]) -> Mat<S> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).clone() * d[i].clone())
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, a| acc.max_of(a.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.is_zero())
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(Scalar::to_f64).collect(),
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64())
    }
}

// ---------------------------------------------------------------------------
// Martingale building blocks as matrices

/// `m += coeff * E_I^mu`, where `E_I^mu f = <f>_{I,mu} 1_I` (zero if `mu(I) = 0`).
pub fn add_expectation<S: Scalar>(
    m: &mut Mat<S>,
    f: &Filtration<S>,
    mu: &Measure<S>,
    id: AtomId,
    coeff: &S,
) {
    let mass = mu.mass(id);
    if mass.is_zero() || coeff.is_zero() {
        return;
    }
    let range = f.leaf_range(id);
    let factors: Vec<S> = range
        .clone()
        .map(|j| coeff.clone() * mu.leaf_mass(j).clone() / mass.clone())
        .collect();
    for i in range.clone() {
        for (k, j) in range.clone().enumerate() {
            if !factors[k].is_zero() {
                m.add_at(i, j, factors[k].clone());
            }
        }
    }
}

/// `m += coeff * Delta_I^mu`; nothing for atoms with a single child.
pub fn add_difference<S: Scalar>(
    m: &mut Mat<S>,
    f: &Filtration<S>,
    mu: &Measure<S>,
    id: AtomId,
    coeff: &S,
) {
    if !f.atom(id).is_active() {
        return;
    }
    for &c in &f.atom(id).children {
        add_expectation(m, f, mu, c, coeff);
    }
    add_expectation(m, f, mu, id, &-coeff.clone());
}

pub fn expectation_matrix<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, id: AtomId) -> Mat<S> {
    let n = f.leaf_count();
    let mut m = Mat::zeros(n, n);
    add_expectation(&mut m, f, mu, id, &S::one());
    m
}

pub fn difference_matrix<S: Scalar>(f: &Filtration<S>, mu: &Measure<S>, id: AtomId) -> Mat<S> {
    let n = f.leaf_count();
    let mut m = Mat::zeros(n, n);
    add_difference(&mut m, f, mu, id, &S::one());
    m
}

/// `sum_I sigma_I Delta_I` against the reference measure, optionally only over `D(I0)`.
pub fn multiplier_matrix<S: Scalar>(
    f: &Filtration<S>,
    sigma: &[S],
    restrict_to: Option<AtomId>,
) -> Mat<S> {
    let nu = Measure::reference(f);
    let n = f.leaf_count();
    let mut m = Mat::zeros(n, n);
    let range = match restrict_to {
        Some(r) => f.subtree(r),
        None => 0..f.atom_count(),
    };
    for i in range {
        if !sigma[i].is_zero() {
            add_difference(&mut m, f, &nu, AtomId(i), &sigma[i]);
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Weighted norms

/// A matrix acting from `L^2(domain)` to `L^2(codomain)`, where the measures are
/// given by their masses on leaves.
#[derive(Clone, Debug)]
pub struct WeightedOperator {
    pub matrix: Mat<f64>,
    pub domain: Vec<f64>,
    pub codomain: Vec<f64>,
}

impl WeightedOperator {
    pub fn new(matrix: Mat<f64>, domain: Vec<f64>, codomain: Vec<f64>) -> Result<Self> {
        if matrix.cols() != domain.len() {
            return Err(HaarError::LengthMismatch {
                expected: matrix.cols(),
                got: domain.len(),
            });
        }
        if matrix.rows() != codomain.len() {
            return Err(HaarError::LengthMismatch {
                expected: matrix.rows(),
                got: codomain.len(),
            });
        }
        if domain.iter().chain(&codomain).any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(HaarError::InvalidParameter("leaf masses must be finite and >= 0".into()));
        }
        Ok(WeightedOperator {
            matrix,
            domain,
            codomain,
        })
    }

    /// Operator on a single weighted space.
    pub fn on_space(matrix: Mat<f64>, masses: Vec<f64>) -> Result<Self> {
        Self::new(matrix, masses.clone(), masses)
    }

    /// Largest singular value of `D_out^{1/2} M D_in^{-1/2}` restricted to the
    /// supports of both measures.
    pub fn norm(&self) -> Result<f64> {
        top_singular_value(&self.similarity())
    }

    /// The unweighted matrix whose spectral norm equals the weighted norm.
    pub fn similarity(&self) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.codomain.len()).filter(|&i| self.codomain[i] > 0.0).collect();
        let cols: Vec<usize> = (0..self.domain.len()).filter(|&j| self.domain[j] > 0.0).collect();
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            let (i, j) = (rows[a], cols[b]);
            self.codomain[i].sqrt() * self.matrix.get(i, j) / self.domain[j].sqrt()
        })
    }

    /// `||M x||_out / ||x||_in`, the quantity maximized by [`Self::norm`].
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let y = self.matrix.mul_vec(x);
        let num: f64 = y.iter().zip(&self.codomain).map(|(v, m)| v * v * m).sum();
        let den: f64 = x.iter().zip(&self.domain).map(|(v, m)| v * v * m).sum();
        if den == 0.0 {
            return 0.0;
        }
        (num / den).sqrt()
    }
}

/// Spectral norm of a dense matrix, via the eigenvalues of the smaller Gram
/// matrix with a power-iteration fallback.
pub fn top_singular_value(b: &DMatrix<f64>) -> Result<f64> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Ok(0.0);
    }
    let scale = b.amax();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !scale.is_finite() {
        return Err(HaarError::NumericalFailure("non-finite matrix entry".into()));
    }
    let b = b / scale;
    let gram = if b.nrows() >= b.ncols() {
        b.transpose() * &b
    } else {
        &b * b.transpose()
    };
    let top = match SymmetricEigen::try_new(gram.clone(), f64::EPSILON, 10_000) {
        Some(eig) => eig.eigenvalues.max(),
        None => power_iteration(&gram)?,
    };
    Ok(top.max(0.0).sqrt() * scale)
}

fn power_iteration(gram: &DMatrix<f64>) -> Result<f64> {
    let n = gram.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let next = gram * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let converged = (norm - lambda).abs() <= 1e-14 * norm;
        lambda = norm;
        v = next / norm;
        if converged {
            return Ok(lambda);
        }
    }
    Err(HaarError::NumericalFailure(format!(
        "power iteration did not converge in {POWER_ITERATION_CAP} steps"
    )))
}
