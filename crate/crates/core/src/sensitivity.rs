//! Derivatives of eigenvalues and eigenfunctions with respect to the phase
//! field.
//!
//! For a simple eigenvalue the derivative along a nodal direction `h` is the
//! pair of quadratic forms `w^T K'[h] w - lambda w^T M'[h] w`. The
//! eigenfunction derivative solves a symmetric bordered system that couples
//! the singular operator `K - lambda M` with the normalization constraint,
//! realizing the Fredholm solvability structure directly. A repeated first
//! eigenvalue keeps a one-sided derivative: the smallest eigenvalue of the
//! same quadratic forms reduced to the eigenspace.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::{assemble_mass, assemble_mass_dir, assemble_stiffness_dir};
use crate::eigen::EigenPairs;
use crate::grid::{DofMap, Mesh};
use crate::material::{CutoffParams, MaterialSet};
use crate::phasefield::PhaseField;
use crate::sparse::SparseSymMatrix;
use crate::{Error, Result};

/// Derivative of the simple eigenvalue `pairs.lambdas[index]` in the nodal
/// direction `h`, evaluated through the assembled directional forms.
#[allow(clippy::too_many_arguments)]
pub fn eigenvalue_derivative(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    pairs: &EigenPairs,
    index: usize,
    h: &PhaseField,
) -> Result<f64> {
    if index >= pairs.len() {
        return Err(Error::InvalidArg(format!(
            "pair index {index} out of range ({} computed)",
            pairs.len()
        )));
    }
    if !pairs.is_simple(index) {
        let g = pairs.group_of(index);
        return Err(Error::ClusteredEigenvalue {
            index,
            lo: g.start,
            hi: g.end,
        });
    }
    let w = pairs.vector(index);
    let mass = assemble_mass(mesh, dofmap, phi, mats, p)?;
    let norm2 = mass.inner(&w, &w);
    if (norm2 - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized {
            deviation: norm2 - 1.0,
        });
    }
    let k_dir = assemble_stiffness_dir(mesh, dofmap, phi, h, mats, p)?;
    let m_dir = assemble_mass_dir(mesh, dofmap, phi, h, mats, p)?;
    Ok(k_dir.inner(&w, &w) - pairs.lambdas[index] * m_dir.inner(&w, &w))
}

/// Symmetric bordered system
/// `[K - lambda M, M w; (M w)^T, 0] [u; alpha] = [f; kappa / 2]`.
///
/// Nonsingular exactly when `lambda` is a simple eigenvalue of the pencil
/// with eigenvector `w`; the border row imposes the normalization constraint
/// on `u` by construction.
#[derive(Debug)]
pub struct BorderedSystem {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl BorderedSystem {
    pub fn assemble(
        k_mat: &SparseSymMatrix,
        m_mat: &SparseSymMatrix,
        lambda: f64,
        w: &DVector<f64>,
        f: &DVector<f64>,
        kappa: f64,
    ) -> Result<Self> {
        let n = k_mat.dim();
        if m_mat.dim() != n || w.len() != n || f.len() != n {
            return Err(Error::DimensionMismatch(
                "bordered system blocks disagree in size".into(),
            ));
        }
        let mw = m_mat.mul_vec(w);
        let mw_norm = mw.norm();
        if mw_norm <= 1e-14 {
            return Err(Error::SingularSystem("zero border column".into()));
        }
        // (lambda, w) must be a residual-verified eigenpair
        let r = (k_mat.mul_vec(w) - lambda * &mw).norm() / (lambda.abs().max(1e-300) * mw_norm);
        if r > 1e-6 {
            return Err(Error::InvalidArg(format!(
                "(lambda, w) is not an eigenpair, relative residual {r:.3e}"
            )));
        }
        let mut matrix = DMatrix::zeros(n + 1, n + 1);
        let kd = k_mat.to_dense();
        let md = m_mat.to_dense();
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = kd[(i, j)] - lambda * md[(i, j)];
            }
            matrix[(i, n)] = mw[i];
            matrix[(n, i)] = mw[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(f);
        rhs[n] = 0.5 * kappa;
        Ok(Self { matrix, rhs })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Returns `(u, alpha)`. `alpha` stays at roundoff level when the
    /// right-hand side is Fredholm-compatible.
    pub fn solve(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.matrix.nrows() - 1;
        let lu = self.matrix.clone().lu();
        let sol = lu.solve(&self.rhs).ok_or_else(|| {
            Error::SingularSystem("bordered matrix singular (eigenvalue not simple?)".into())
        })?;
        let residual = (&self.matrix * &sol - &self.rhs).norm();
        let scale = self
            .rhs
            .norm()
            .max(self.matrix.norm() * sol.norm())
            .max(1.0);
        if residual > 1e-10 * scale {
            return Err(Error::SingularSystem(format!(
                "bordered solve residual {residual:.3e} exceeds tolerance"
            )));
        }
        Ok((sol.rows(0, n).into_owned(), sol[n]))
    }
}

/// Derivative of the eigenfunction `w` belonging to the simple eigenvalue
/// `lambda`, given the directional forms and the already computed eigenvalue
/// derivative. The result satisfies the shifted equation and the
/// normalization constraint `(u, w)_M = kappa / 2` with
/// `kappa = -w^T M'[h] w`.
pub fn eigenfunction_derivative(
    k_mat: &SparseSymMatrix,
    m_mat: &SparseSymMatrix,
    k_dir: &SparseSymMatrix,
    m_dir: &SparseSymMatrix,
    lambda: f64,
    w: &DVector<f64>,
    lambda_dir: f64,
) -> Result<DVector<f64>> {
    let f = -k_dir.mul_vec(w) + lambda * m_dir.mul_vec(w) + lambda_dir * m_mat.mul_vec(w);
    let kappa = -m_dir.inner(w, w);
    let system = BorderedSystem::assemble(k_mat, m_mat, lambda, w, &f, kappa)?;
    let (u, _alpha) = system.solve()?;
    Ok(u)
}

#[allow(clippy::too_many_arguments)]
fn reduced_form(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    basis: &DMatrix<f64>,
    lambda: f64,
    h: &PhaseField,
) -> Result<DMatrix<f64>> {
    let mc = basis.ncols();
    if mc == 0 {
        return Err(Error::InvalidArg("empty eigenspace basis".into()));
    }
    let mass = assemble_mass(mesh, dofmap, phi, mats, p)?;
    for i in 0..mc {
        for j in 0..=i {
            let g = mass.inner(&basis.column(i).into_owned(), &basis.column(j).into_owned());
            let expect = if i == j { 1.0 } else { 0.0 };
            if (g - expect).abs() > 1e-8 {
                return Err(Error::NotNormalized {
                    deviation: g - expect,
                });
            }
        }
    }
    let k_dir = assemble_stiffness_dir(mesh, dofmap, phi, h, mats, p)?;
    let m_dir = assemble_mass_dir(mesh, dofmap, phi, h, mats, p)?;
    let mut b = DMatrix::zeros(mc, mc);
    for i in 0..mc {
        let ui = basis.column(i).into_owned();
        let kui = k_dir.mul_vec(&ui);
        let mui = m_dir.mul_vec(&ui);
        for j in 0..mc {
            let uj = basis.column(j).into_owned();
            b[(i, j)] = uj.dot(&kui) - lambda * uj.dot(&mui);
        }
    }
    Ok((b.clone() + b.transpose()) * 0.5)
}

/// One-sided derivative of a (possibly repeated) first eigenvalue in the
/// direction `h`: the smallest eigenvalue of the directional quadratic forms
/// reduced to the `M`-orthonormal eigenspace basis.
#[allow(clippy::too_many_arguments)]
pub fn semi_derivative_first(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    basis: &DMatrix<f64>,
    lambda: f64,
    h: &PhaseField,
) -> Result<f64> {
    Ok(semi_derivative_minimizer(mesh, dofmap, phi, mats, p, basis, lambda, h)?.0)
}

/// Like [`semi_derivative_first`] but also returns the minimizing unit
/// combination of the basis columns, mapped back to dof space.
#[allow(clippy::too_many_arguments)]
pub fn semi_derivative_minimizer(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    basis: &DMatrix<f64>,
    lambda: f64,
    h: &PhaseField,
) -> Result<(f64, DVector<f64>)> {
    let b = reduced_form(mesh, dofmap, phi, mats, p, basis, lambda, h)?;
    let eig = SymmetricEigen::new(b);
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let y = eig.eigenvectors.column(best);
    let mut u = DVector::zeros(basis.nrows());
    for (col, &yc) in y.iter().enumerate() {
        u.axpy(yc, &basis.column(col).into_owned(), 1.0);
    }
    Ok((eig.eigenvalues[best], u))
}
