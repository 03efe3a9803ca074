//! Generalized symmetric eigensolver for the pencil `K w = lambda M w`.
//!
//! [`smallest_eigenpairs`] runs shift-invert Lanczos at shift zero: `K` is
//! factored once (banded Cholesky) and the Krylov recursion operates on
//! `K^{-1} M` under the `M` inner product with full reorthogonalization.
//! Converged pairs are locked and the iteration restarts against their
//! complement with a fresh random vector, which recovers multiple
//! eigenvalues whose copies a single Krylov sequence cannot see. A joint
//! Rayleigh-Ritz sweep over the locked basis polishes orthonormality before
//! the pairs are returned.
//!
//! [`dense_eigen_oracle`] reduces the pencil to a dense standard problem
//! through a Cholesky congruence and serves as the verification reference.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::{BandedCholesky, SparseSymMatrix};
use crate::{Error, Result};

/// Ascending eigenvalues with their `M`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub lambdas: Vec<f64>,
    /// Eigenvectors as columns, `M`-orthonormal.
    pub vectors: DMatrix<f64>,
    /// Relative residuals `|K v - lambda M v| / (lambda |M v|)`.
    pub residuals: Vec<f64>,
    /// Index ranges of numerically equal eigenvalues.
    pub multiplicity_groups: Vec<Range<usize>>,
    /// Set by [`apply_sign_convention`] on pairs whose sign was pinned.
    pub sign_fixed: Vec<bool>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Group of eigenvalues numerically equal to pair `i`.
    pub fn group_of(&self, i: usize) -> Range<usize> {
        self.multiplicity_groups
            .iter()
            .find(|g| g.contains(&i))
            .cloned()
            .unwrap_or(i..i + 1)
    }

    /// A pair is treated as simple when its group has one member.
    pub fn is_simple(&self, i: usize) -> bool {
        self.group_of(i).len() == 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Relative residual target per pair.
    pub tol: f64,
    /// Relative gap below which neighboring eigenvalues form one group.
    pub cluster_tol: f64,
    /// Seed for the Lanczos start vectors.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            cluster_tol: 1e-6,
            seed: 7,
        }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

pub(crate) fn group_by_relative_gap(lambdas: &[f64], cluster_tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        let split = i == lambdas.len() || {
            let denom = lambdas[i].abs().max(lambdas[i - 1].abs()).max(1e-300);
            (lambdas[i] - lambdas[i - 1]).abs() / denom >= cluster_tol
        };
        if split {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

struct MInner<'a> {
    m: &'a SparseSymMatrix,
}

impl MInner<'_> {
    fn dot(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.m.mul_vec(y).dot(x)
    }

    fn norm(&self, x: &DVector<f64>) -> f64 {
        self.dot(x, x).max(0.0).sqrt()
    }

    /// Removes the `M`-projections of `basis` from `z`, two passes.
    fn orthogonalize(&self, z: &mut DVector<f64>, basis: &[DVector<f64>]) {
        for _ in 0..2 {
            if basis.is_empty() {
                return;
            }
            let mz = self.m.mul_vec(z);
            let coeffs: Vec<f64> = basis.iter().map(|u| u.dot(&mz)).collect();
            for (u, &c) in basis.iter().zip(&coeffs) {
                z.axpy(-c, u, 1.0);
            }
        }
    }
}

fn pencil_residual(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    lambda: f64,
    x: &DVector<f64>,
) -> f64 {
    let mx = m_mat.mul_vec(x);
    let r = k_mat.mul_vec(x) - lambda * &mx;
    r.norm() / (lambda.abs().max(1e-300) * mx.norm().max(1e-300))
}

/// Smallest `k` eigenpairs of `K w = lambda M w`. `K` must be positive
/// definite on the assembled dofs (a missing Dirichlet boundary surfaces as
/// a factorization failure), `M` positive definite.
pub fn smallest_eigenpairs(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = k_mat.dim();
    if m_mat.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "stiffness is {n} x {n}, mass is {0} x {0}",
            m_mat.dim()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArg(format!(
            "requested {k} pairs from a dimension-{n} pencil"
        )));
    }
    let chol = k_mat.banded_cholesky()?;
    let inner = MInner { m: m_mat };

    let mut locked: Vec<DVector<f64>> = Vec::new();
    let mut fruitless_passes = 0;
    let mut pass = 0u64;
    while locked.len() < k {
        pass += 1;
        if fruitless_passes >= 5 {
            return Err(Error::EigenNonConvergence(format!(
                "locked {} of {k} pairs after {pass} Lanczos passes",
                locked.len()
            )));
        }
        let found = lanczos_pass(
            k_mat,
            m_mat,
            &chol,
            &inner,
            &locked,
            k - locked.len(),
            opts,
            opts.seed ^ pass,
        )?;
        if found.is_empty() {
            fruitless_passes += 1;
            continue;
        }
        fruitless_passes = 0;
        for mut x in found {
            if locked.len() == k {
                break;
            }
            inner.orthogonalize(&mut x, &locked);
            let norm = inner.norm(&x);
            if norm <= 1e-12 {
                continue;
            }
            locked.push(x / norm);
        }
    }

    rayleigh_ritz(k_mat, m_mat, &inner, locked, opts)
}

/// One deflated Lanczos pass; returns converged Ritz vectors for the
/// smallest eigenvalues outside the locked span, ordered ascending.
#[allow(clippy::too_many_arguments)]
fn lanczos_pass(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    chol: &BandedCholesky,
    inner: &MInner,
    locked: &[DVector<f64>],
    needed: usize,
    opts: &EigenOptions,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let n = k_mat.dim();
    let cap = n - locked.len();
    if cap == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    inner.orthogonalize(&mut v, locked);
    let norm = inner.norm(&v);
    if norm <= 1e-14 {
        return Ok(Vec::new());
    }
    v /= norm;

    let mut basis: Vec<DVector<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut exhausted = false;

    loop {
        let j = alphas.len();
        let vj = basis[j].clone();
        let mut z = chol.solve(&m_mat.mul_vec(&vj));
        let alpha = inner.dot(&z, &vj);
        alphas.push(alpha);
        z.axpy(-alpha, &vj, 1.0);
        if j > 0 {
            let beta_prev = betas[j - 1];
            z.axpy(-beta_prev, &basis[j - 1], 1.0);
        }
        inner.orthogonalize(&mut z, locked);
        inner.orthogonalize(&mut z, &basis);
        let beta = inner.norm(&z);

        let at_cap = alphas.len() >= cap;
        let breakdown = beta <= 1e-13 * alphas[0].abs().max(1.0);
        if !at_cap && !breakdown {
            betas.push(beta);
            basis.push(z / beta);
        } else {
            exhausted = true;
        }

        let check_now = exhausted || alphas.len() % 8 == 0 || alphas.len() >= needed + 16;
        if check_now {
            let converged = extract_converged(
                k_mat, m_mat, &alphas, &betas, &basis, needed, opts, exhausted,
            );
            if converged.len() >= needed || exhausted {
                return Ok(converged);
            }
        }
        if exhausted {
            return Ok(Vec::new());
        }
    }
}

/// Ritz extraction from the tridiagonal matrix; keeps the leading run of
/// converged pairs in ascending eigenvalue order.
#[allow(clippy::too_many_arguments)]
fn extract_converged(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    alphas: &[f64],
    betas: &[f64],
    basis: &[DVector<f64>],
    needed: usize,
    opts: &EigenOptions,
    exhausted: bool,
) -> Vec<DVector<f64>> {
    let j = alphas.len();
    let mut t = DMatrix::zeros(j, j);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().enumerate().take(j.saturating_sub(1)) {
        t[(i + 1, i)] = b;
        t[(i, i + 1)] = b;
    }
    let eig = SymmetricEigen::new(t);
    // theta = 1 / lambda: the largest theta give the smallest lambda
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });

    let mut out = Vec::new();
    for &idx in order.iter().take(needed.max(1)) {
        let theta = eig.eigenvalues[idx];
        if theta <= 0.0 {
            break;
        }
        let y = eig.eigenvectors.column(idx);
        let mut x = DVector::zeros(k_mat.dim());
        for (col, &yc) in basis.iter().zip(y.iter()) {
            x.axpy(yc, col, 1.0);
        }
        let lambda = 1.0 / theta;
        let rel = pencil_residual(k_mat, m_mat, lambda, &x);
        // When the subspace is exhausted the Ritz pairs are exact up to
        // roundoff; accept them at a relaxed threshold.
        let limit = if exhausted { opts.tol.max(1e-9) } else { opts.tol };
        if rel <= limit {
            out.push(x);
        } else {
            break;
        }
    }
    out
}

/// Joint Rayleigh-Ritz refinement over the locked basis.
fn rayleigh_ritz(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    inner: &MInner,
    mut basis: Vec<DVector<f64>>,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let k = basis.len();
    // re-orthonormalize (modified Gram-Schmidt in the M inner product)
    for i in 0..k {
        let (head, tail) = basis.split_at_mut(i);
        let z = &mut tail[0];
        inner.orthogonalize(z, head);
        let norm = inner.norm(z);
        if norm <= 1e-12 {
            return Err(Error::EigenNonConvergence(
                "locked basis became degenerate".into(),
            ));
        }
        *z /= norm;
    }
    let n = k_mat.dim();
    let mut kr = DMatrix::zeros(k, k);
    let mut mr = DMatrix::zeros(k, k);
    for i in 0..k {
        let kxi = k_mat.mul_vec(&basis[i]);
        let mxi = m_mat.mul_vec(&basis[i]);
        for j in 0..k {
            kr[(i, j)] = basis[j].dot(&kxi);
            mr[(i, j)] = basis[j].dot(&mxi);
        }
    }
    kr = (kr.clone() + kr.transpose()) * 0.5;
    // mr is within roundoff of the identity; a Cholesky congruence absorbs
    // the residual deviation
    let lm = nalgebra::Cholesky::new(mr)
        .ok_or_else(|| Error::EigenNonConvergence("reduced mass not positive".into()))?;
    let li = lm.l().solve_lower_triangular(&kr).unwrap();
    let c = lm
        .l()
        .solve_lower_triangular(&li.transpose())
        .unwrap()
        .transpose();
    let c = (c.clone() + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut lambdas = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().enumerate() {
        lambdas.push(eig.eigenvalues[idx]);
        // back-transform: s = L^{-T} y, x = basis * s
        let y = eig.eigenvectors.column(idx).into_owned();
        let s = lm
            .l()
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::EigenNonConvergence("singular reduced factor".into()))?;
        let mut x = DVector::zeros(n);
        for (b, &sc) in basis.iter().zip(s.iter()) {
            x.axpy(sc, b, 1.0);
        }
        let norm = inner.norm(&x);
        x /= norm;
        vectors.set_column(col, &x);
    }

    let residuals: Vec<f64> = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| pencil_residual(k_mat, m_mat, l, &vectors.column(i).into_owned()))
        .collect();
    for (i, &r) in residuals.iter().enumerate() {
        if r > opts.tol.max(1e-9) * 10.0 {
            return Err(Error::EigenNonConvergence(format!(
                "pair {i} has relative residual {r:.3e}"
            )));
        }
    }
    let multiplicity_groups = group_by_relative_gap(&lambdas, opts.cluster_tol);
    let sign_fixed = vec![false; k];
    Ok(EigenPairs {
        lambdas,
        vectors,
        residuals,
        multiplicity_groups,
        sign_fixed,
    })
}

/// Full spectrum by dense reduction: Cholesky of `M`, a symmetric standard
/// eigenproblem, and a triangular back-transform. Dimension capped at 3000.
pub fn dense_eigen_oracle(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
) -> Result<EigenPairs> {
    let n = k_mat.dim();
    if m_mat.dim() != n {
        return Err(Error::DimensionMismatch(
            "pencil matrices differ in size".into(),
        ));
    }
    if n > 3000 {
        return Err(Error::InvalidArg(format!(
            "dense oracle capped at dimension 3000, got {n}"
        )));
    }
    let kd = k_mat.to_dense();
    let md = m_mat.to_dense();
    let chol = nalgebra::Cholesky::new(md)
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix".into()))?;
    let y = chol
        .l()
        .solve_lower_triangular(&kd)
        .ok_or_else(|| Error::SingularSystem("mass Cholesky factor".into()))?;
    let c = chol
        .l()
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularSystem("mass Cholesky factor".into()))?;
    let c = (c.clone() + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut lambdas = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        lambdas.push(eig.eigenvalues[idx]);
        let yv = eig.eigenvectors.column(idx).into_owned();
        let x = chol
            .l()
            .transpose()
            .solve_upper_triangular(&yv)
            .ok_or_else(|| Error::SingularSystem("mass Cholesky factor".into()))?;
        vectors.set_column(col, &x);
    }
    let residuals = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| pencil_residual(k_mat, m_mat, l, &vectors.column(i).into_owned()))
        .collect();
    let multiplicity_groups = group_by_relative_gap(&lambdas, EigenOptions::default().cluster_tol);
    let sign_fixed = vec![false; n];
    Ok(EigenPairs {
        lambdas,
        vectors,
        residuals,
        multiplicity_groups,
        sign_fixed,
    })
}

/// `(u^T K u) / (u^T M u)`.
pub fn rayleigh_quotient(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    u: &DVector<f64>,
) -> Result<f64> {
    if u.norm() == 0.0 {
        return Err(Error::InvalidArg(
            "Rayleigh quotient of the zero vector".into(),
        ));
    }
    Ok(k_mat.inner(u, u) / m_mat.inner(u, u))
}

/// Flips the sign of each simple eigenvector so that its `m_ref` inner
/// product with the matching reference vector is positive. Vectors in
/// multiplicity groups are left untouched and keep `sign_fixed = false`.
/// A nearly orthogonal reference signals an eigenvector crossing and is
/// reported as an error.
pub fn apply_sign_convention(
    pairs: &mut EigenPairs,
    reference: &EigenPairs,
    m_ref: &SparseSymMatrix,
) -> Result<()> {
    if pairs.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} pairs against {} reference pairs",
            pairs.len(),
            reference.len()
        )));
    }
    for i in 0..pairs.len() {
        if !pairs.is_simple(i) || !reference.is_simple(i) {
            pairs.sign_fixed[i] = false;
            continue;
        }
        let v = pairs.vectors.column(i).into_owned();
        let r = reference.vectors.column(i).into_owned();
        let mv = m_ref.mul_vec(&v);
        let s = r.dot(&mv);
        let denom = (mv.dot(&v) * m_ref.inner(&r, &r)).sqrt().max(1e-300);
        if (s / denom).abs() < 0.1 {
            return Err(Error::NearOrthogonalReference {
                index: i,
                inner: s / denom,
            });
        }
        if s < 0.0 {
            let flipped = -&pairs.vectors.column(i).into_owned();
            pairs.vectors.set_column(i, &flipped);
        }
        pairs.sign_fixed[i] = true;
    }
    Ok(())
}
