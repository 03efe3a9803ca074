//! Eigenvalue objectives and the projected gradient method.
//!
//! The objective is `Psi(lambda_{i_1}, ..., lambda_{i_l}) + gamma E(phi)`
//! where `E` is the interface (Ginzburg-Landau) energy: the exact gradient
//! term of the linear interpolant plus the bulk potential under nodal
//! quadrature. Gradients are nodal Riesz representatives: `g . h` equals the
//! directional derivative for every nodal direction `h`, so descent steps
//! and the variational-inequality residual share one pairing.
//!
//! Iterates follow `phi <- P(phi - s g)` with Armijo backtracking on the
//! projection arc, `P` being the admissible-set projection. A target
//! eigenvalue that drifts into a numerical cluster stops the run with a
//! diagnostic, except for a first-eigenvalue objective, which switches to
//! the one-sided derivative of the cluster: the descent direction is rebuilt
//! from the minimizing eigenspace combination.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_mass, assemble_stiffness, eigen_gradient_field};
use crate::eigen::{smallest_eigenpairs, EigenOptions, EigenPairs};
use crate::grid::{DofMap, Mesh};
use crate::material::{bulk_potential, CutoffParams, MaterialSet};
use crate::phasefield::{AdmissibleSet, PhaseField};
use crate::{Error, Result};

/// Shape of `Psi` as a function of the targeted eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    /// `sum_j c_j lambda_{i_j}`
    WeightedSum,
    /// `-lambda_1`; maximizes the smallest eigenvalue.
    NegMinFirst,
    /// `sum_j c_j / lambda_{i_j}`
    InverseSum,
}

/// Objective description: eigenvalue targets, the aggregation `Psi`, and the
/// interface-energy weights.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    /// One-based eigenvalue indices.
    pub targets: Vec<usize>,
    pub kind: PsiKind,
    pub weights: Vec<f64>,
    /// Interface energy weight.
    pub gamma: f64,
    /// Interface thickness.
    pub epsilon: f64,
    /// Asserted lower bound for `Psi` on the reachable range.
    pub lower_bound: f64,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.targets.iter().any(|&t| t == 0) {
            return Err(Error::InvalidArg("eigenvalue targets are one-based".into()));
        }
        match self.kind {
            PsiKind::NegMinFirst => {
                if self.targets != [1] {
                    return Err(Error::InvalidArg(
                        "a first-eigenvalue objective targets exactly eigenvalue 1".into(),
                    ));
                }
            }
            PsiKind::WeightedSum | PsiKind::InverseSum => {
                if self.weights.len() != self.targets.len() {
                    return Err(Error::InvalidArg(format!(
                        "{} weights for {} targets",
                        self.weights.len(),
                        self.targets.len()
                    )));
                }
            }
        }
        if !(self.gamma >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidArg(
                "gamma must be nonnegative and epsilon positive".into(),
            ));
        }
        Ok(())
    }

    /// Largest one-based target index, 0 when no eigenvalues are involved.
    pub fn max_target(&self) -> usize {
        self.targets.iter().copied().max().unwrap_or(0)
    }

    pub fn psi(&self, lambdas: &[f64]) -> f64 {
        match self.kind {
            PsiKind::WeightedSum => self
                .targets
                .iter()
                .zip(&self.weights)
                .map(|(&t, &c)| c * lambdas[t - 1])
                .sum(),
            PsiKind::NegMinFirst => -lambdas[0],
            PsiKind::InverseSum => self
                .targets
                .iter()
                .zip(&self.weights)
                .map(|(&t, &c)| c / lambdas[t - 1])
                .sum(),
        }
    }

    /// Partial derivatives of `Psi` with respect to each targeted
    /// eigenvalue, in target order.
    pub fn psi_grad(&self, lambdas: &[f64]) -> Vec<f64> {
        match self.kind {
            PsiKind::WeightedSum => self.weights.clone(),
            PsiKind::NegMinFirst => vec![-1.0],
            PsiKind::InverseSum => self
                .targets
                .iter()
                .zip(&self.weights)
                .map(|(&t, &c)| -c / (lambdas[t - 1] * lambdas[t - 1]))
                .collect(),
        }
    }
}

/// Interface energy `gamma * int (eps/2 |grad phi|^2 + psi0(phi) / eps)`.
/// The gradient term is exact for the linear interpolant; the bulk term uses
/// nodal quadrature.
pub fn ginzburg_landau(mesh: &Mesh, phi: &PhaseField, gamma: f64, eps: f64) -> f64 {
    let n = phi.n_components();
    let mut grad_term = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        let grads = mesh.shape_gradients()[t];
        for i in 0..n {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for (k, &v) in tri.iter().enumerate() {
                let val = phi.node(v)[i];
                gx += val * grads[k][0];
                gy += val * grads[k][1];
            }
            grad_term += area * (gx * gx + gy * gy);
        }
    }
    let mut bulk = 0.0;
    for (v, &w) in mesh.vertex_weights().iter().enumerate() {
        bulk += w * bulk_potential(phi.node(v));
    }
    gamma * (0.5 * eps * grad_term + bulk / eps)
}

/// Nodal Riesz representative of the interface-energy derivative.
pub fn ginzburg_landau_grad(mesh: &Mesh, phi: &PhaseField, gamma: f64, eps: f64) -> PhaseField {
    let n = phi.n_components();
    let mut g = PhaseField::zeros(phi.n_vertices(), n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        let grads = mesh.shape_gradients()[t];
        for i in 0..n {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for (k, &v) in tri.iter().enumerate() {
                let val = phi.node(v)[i];
                gx += val * grads[k][0];
                gy += val * grads[k][1];
            }
            for (k, &v) in tri.iter().enumerate() {
                g.node_mut(v)[i] +=
                    gamma * eps * area * (gx * grads[k][0] + gy * grads[k][1]);
            }
        }
    }
    for (v, &w) in mesh.vertex_weights().iter().enumerate() {
        for i in 0..n {
            // psi0'(phi) = -phi
            g.node_mut(v)[i] += gamma / eps * w * (-phi.node(v)[i]);
        }
    }
    g
}

/// Solves for enough smallest pairs to expose every target's cluster: at
/// least one pair beyond the largest target, extending while a target's
/// group touches the end of the computed window.
pub fn solve_target_pairs(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    eig_opts: &EigenOptions,
) -> Result<EigenPairs> {
    let k_mat = assemble_stiffness(mesh, dofmap, phi, mats, p)?;
    let m_mat = assemble_mass(mesh, dofmap, phi, mats, p)?;
    let n = k_mat.dim();
    let mut k = (spec.max_target() + 1).min(n);
    loop {
        let pairs = smallest_eigenpairs(&k_mat, &m_mat, k, eig_opts)?;
        let open_cluster = spec.targets.iter().any(|&t| {
            let g = pairs.group_of(t - 1);
            g.end == pairs.len()
        });
        if !open_cluster || k == n || k >= spec.max_target() + 6 {
            return Ok(pairs);
        }
        k = (k + 2).min(n);
    }
}

/// Objective value; the eigenpairs are returned for reuse.
pub fn objective_eval(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    eig_opts: &EigenOptions,
) -> Result<(f64, EigenPairs)> {
    spec.validate()?;
    let gl = ginzburg_landau(mesh, phi, spec.gamma, spec.epsilon);
    if spec.targets.is_empty() {
        return Ok((gl, empty_pairs()));
    }
    let pairs = solve_target_pairs(mesh, dofmap, phi, spec, mats, p, eig_opts)?;
    Ok((spec.psi(&pairs.lambdas) + gl, pairs))
}

fn empty_pairs() -> EigenPairs {
    EigenPairs {
        lambdas: Vec::new(),
        vectors: DMatrix::zeros(0, 0),
        residuals: Vec::new(),
        multiplicity_groups: Vec::new(),
        sign_fixed: Vec::new(),
    }
}

/// Full objective gradient as a nodal field. Fails with cluster information
/// when a targeted eigenvalue is not simple.
pub fn objective_grad(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    pairs: &EigenPairs,
) -> Result<PhaseField> {
    let mut g = ginzburg_landau_grad(mesh, phi, spec.gamma, spec.epsilon);
    if spec.targets.is_empty() {
        return Ok(g);
    }
    let psi_grad = spec.psi_grad(&pairs.lambdas);
    for (j, &t) in spec.targets.iter().enumerate() {
        let idx = t - 1;
        if !pairs.is_simple(idx) {
            let gr = pairs.group_of(idx);
            return Err(Error::ClusteredEigenvalue {
                index: idx,
                lo: gr.start,
                hi: gr.end,
            });
        }
        let field = eigen_gradient_field(
            mesh,
            dofmap,
            phi,
            mats,
            p,
            &pairs.vector(idx),
            pairs.lambdas[idx],
        )?;
        g.axpy(psi_grad[j], &field);
    }
    Ok(g)
}

/// Smallest directional derivative `g . (theta - phi)` over the probe
/// fields; nonnegative at a stationary point of the constrained problem.
/// Probes must be admissible.
#[allow(clippy::too_many_arguments)]
pub fn vi_residual(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    pairs: &EigenPairs,
    probes: &[PhaseField],
    admissible: &AdmissibleSet,
) -> Result<f64> {
    for (i, probe) in probes.iter().enumerate() {
        if !admissible.is_admissible(mesh, probe, 1e-8) {
            return Err(Error::NonAdmissibleProbe(format!("probe {i}")));
        }
    }
    let g = objective_grad(mesh, dofmap, phi, spec, mats, p, pairs)?;
    Ok(vi_residual_for_gradient(&g, phi, probes))
}

fn vi_residual_for_gradient(g: &PhaseField, phi: &PhaseField, probes: &[PhaseField]) -> f64 {
    let mut min = f64::INFINITY;
    for probe in probes {
        let mut dir = probe.clone();
        dir.axpy(-1.0, phi);
        min = min.min(g.dot(&dir));
    }
    if min == f64::INFINITY {
        0.0
    } else {
        min
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptOptions {
    pub max_iter: usize,
    /// Stop when `|phi_{k+1} - phi_k| / s_k` drops below this.
    pub conv_tol: f64,
    /// Armijo slope fraction.
    pub armijo_sigma: f64,
    /// Step shrink factor for backtracking.
    pub backtrack_beta: f64,
    pub step0: f64,
    pub seed: u64,
    /// Probe count for the variational-inequality residual.
    pub vi_probes: usize,
    pub eig: EigenOptions,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            conv_tol: 1e-6,
            armijo_sigma: 1e-4,
            backtrack_beta: 0.5,
            step0: 1.0,
            seed: 42,
            vi_probes: 100,
            eig: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    /// A targeted eigenvalue collapsed into a multiplicity group that the
    /// objective cannot differentiate through.
    EigenvalueDegenerated,
}

/// Per-iterate log entry.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub psi: f64,
    pub gl_energy: f64,
    /// Targeted eigenvalues, in target order.
    pub lambdas: Vec<f64>,
    /// Step size that produced this iterate (`step0` for the first).
    pub step: f64,
    pub vi_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub phi: PhaseField,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    /// Variational-inequality residual at the final iterate.
    pub vi_residual: f64,
}

impl OptResult {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(0.0)
    }
}

/// One objective evaluation inside the descent loop. `gradient = None`
/// signals a degenerate target eigenvalue: the loop records the iterate and
/// stops with [`Termination::EigenvalueDegenerated`].
pub(crate) struct DriveEval {
    pub objective: f64,
    pub psi: f64,
    pub gl_energy: f64,
    pub lambdas: Vec<f64>,
    pub gradient: Option<PhaseField>,
}

/// Projected-gradient descent loop shared by the eigenvalue-only and the
/// combined objective: Armijo backtracking along the projection arc with an
/// adaptive start step. `evaluate` is called with `need_gradient = false`
/// during the line search.
pub(crate) fn drive(
    mesh: &Mesh,
    admissible: &AdmissibleSet,
    phi0: &PhaseField,
    opts: &OptOptions,
    n_components: usize,
    mut evaluate: impl FnMut(&PhaseField, bool) -> Result<DriveEval>,
    mut on_iterate: impl FnMut(usize, &PhaseField),
) -> Result<OptResult> {
    if !admissible.is_admissible(mesh, phi0, 1e-8) {
        return Err(Error::InvalidArg("initial field is not admissible".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes: Vec<PhaseField> = (0..opts.vi_probes)
        .map(|_| admissible.sample(mesh, n_components, &mut rng))
        .collect::<Result<_>>()?;

    let mut phi = phi0.clone();
    let mut records: Vec<IterRecord> = Vec::new();
    let mut step = opts.step0;
    let mut movement_ratio = f64::INFINITY;
    let mut termination = Termination::MaxIter;
    let mut vi_last = 0.0;

    for iter in 0..=opts.max_iter {
        let eval = evaluate(&phi, true)?;
        vi_last = match &eval.gradient {
            Some(g) => vi_residual_for_gradient(g, &phi, &probes),
            None => f64::NAN,
        };
        records.push(IterRecord {
            iter,
            objective: eval.objective,
            psi: eval.psi,
            gl_energy: eval.gl_energy,
            lambdas: eval.lambdas,
            step,
            vi_residual: vi_last,
        });
        on_iterate(iter, &phi);

        let Some(grad) = eval.gradient else {
            termination = Termination::EigenvalueDegenerated;
            break;
        };
        if movement_ratio < opts.conv_tol {
            termination = Termination::Converged;
            break;
        }
        if iter == opts.max_iter {
            termination = Termination::MaxIter;
            break;
        }

        let mut s = step * 2.0;
        let mut accepted = false;
        for _ in 0..50 {
            let mut trial = phi.clone();
            trial.axpy(-s, &grad);
            let trial = admissible.project(mesh, &trial)?;
            let mut movement = trial.clone();
            movement.axpy(-1.0, &phi);
            let move2 = movement.dot(&movement);
            let trial_obj = evaluate(&trial, false)?.objective;
            if trial_obj <= eval.objective - opts.armijo_sigma * move2 / s {
                phi = trial;
                step = s;
                movement_ratio = move2.sqrt() / s;
                accepted = true;
                break;
            }
            s *= opts.backtrack_beta;
        }
        if !accepted {
            return Err(Error::LineSearchFailure(50));
        }
    }

    Ok(OptResult {
        phi,
        records,
        termination,
        vi_residual: vi_last,
    })
}

/// Rebuilds a descent gradient when the first eigenvalue degenerates under a
/// `NegMinFirst` objective: the cluster member minimizing the one-sided
/// derivative along the naive descent direction replaces the eigenvector.
/// `base` is the gradient of everything except the eigenvalue term. Returns
/// `None` for clusters the objective cannot handle.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cluster_fallback_gradient(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    pairs: &EigenPairs,
    index: usize,
    base: &PhaseField,
) -> Result<Option<PhaseField>> {
    if spec.kind != PsiKind::NegMinFirst || index != 0 {
        return Ok(None);
    }
    let group = pairs.group_of(0);
    let basis_cols: Vec<_> = group.clone().map(|i| pairs.vector(i)).collect();
    let basis = DMatrix::from_columns(&basis_cols);
    let lambda = pairs.lambdas[0];
    let mut probe_dir = base.clone();
    let lead = eigen_gradient_field(mesh, dofmap, phi, mats, p, &pairs.vector(0), lambda)?;
    probe_dir.axpy(-1.0, &lead);
    for v in probe_dir.data_mut() {
        *v = -*v;
    }
    let (_, minimizer) = crate::sensitivity::semi_derivative_minimizer(
        mesh, dofmap, phi, mats, p, &basis, lambda, &probe_dir,
    )?;
    let mut g = base.clone();
    let field = eigen_gradient_field(mesh, dofmap, phi, mats, p, &minimizer, lambda)?;
    // Psi = -lambda_1
    g.axpy(-1.0, &field);
    Ok(Some(g))
}

/// Projected gradient descent over the admissible set.
#[allow(clippy::too_many_arguments)]
pub fn projected_gradient_solve(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi0: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    admissible: &AdmissibleSet,
    opts: &OptOptions,
) -> Result<OptResult> {
    projected_gradient_solve_with(mesh, dofmap, phi0, spec, mats, p, admissible, opts, |_, _| {})
}

/// [`projected_gradient_solve`] with a per-iterate callback (iteration
/// index, current field), used for output cadence.
#[allow(clippy::too_many_arguments)]
pub fn projected_gradient_solve_with(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi0: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    admissible: &AdmissibleSet,
    opts: &OptOptions,
    on_iterate: impl FnMut(usize, &PhaseField),
) -> Result<OptResult> {
    spec.validate()?;
    let evaluate = |phi: &PhaseField, need_gradient: bool| -> Result<DriveEval> {
        let (objective, pairs) = objective_eval(mesh, dofmap, phi, spec, mats, p, &opts.eig)?;
        let gl_energy = ginzburg_landau(mesh, phi, spec.gamma, spec.epsilon);
        let lambdas: Vec<f64> = spec
            .targets
            .iter()
            .map(|&t| pairs.lambdas.get(t - 1).copied().unwrap_or(f64::NAN))
            .collect();
        let gradient = if need_gradient {
            match objective_grad(mesh, dofmap, phi, spec, mats, p, &pairs) {
                Ok(g) => Some(g),
                Err(Error::ClusteredEigenvalue { index, .. }) => {
                    let base = ginzburg_landau_grad(mesh, phi, spec.gamma, spec.epsilon);
                    cluster_fallback_gradient(
                        mesh, dofmap, phi, spec, mats, p, &pairs, index, &base,
                    )?
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(DriveEval {
            objective,
            psi: objective - gl_energy,
            gl_energy,
            lambdas,
            gradient,
        })
    };
    drive(
        mesh,
        admissible,
        phi0,
        opts,
        phi0.n_components(),
        evaluate,
        on_iterate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_dof_map, build_rect_mesh, BoundarySpec, BoundaryTag};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn free_mesh(nx: usize, ny: usize) -> Mesh {
        build_rect_mesh(nx, ny, 1.0, 1.0, &BoundarySpec::uniform(&[BoundaryTag::Neumann0]))
            .unwrap()
    }

    fn clamped() -> (Mesh, DofMap) {
        let mesh = build_rect_mesh(
            8,
            4,
            2.0,
            1.0,
            &BoundarySpec::left_and_rest(&[BoundaryTag::DirichletD], &[BoundaryTag::Neumann0]),
        )
        .unwrap();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        (mesh, map)
    }

    fn two_phase() -> (MaterialSet, CutoffParams) {
        let mats = MaterialSet::new(&[1.0], &[1.0], &[0.3], 1.0, 1.0, 0.3, 0.25).unwrap();
        let p = CutoffParams::default_for(&mats);
        (mats, p)
    }

    #[test]
    fn gl_energy_on_constant_fields() {
        let mesh = free_mesh(4, 4);
        let nv = mesh.num_vertices();
        let e1 = PhaseField::constant(nv, &[1.0, 0.0]);
        assert_eq!(ginzburg_landau(&mesh, &e1, 2.0, 0.1), 0.0);
        let bary = PhaseField::constant(nv, &[0.5, 0.5]);
        // psi0(barycenter) = 1/4, area 1
        assert_relative_eq!(
            ginzburg_landau(&mesh, &bary, 2.0, 0.1),
            2.0 / 0.1 * 0.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gl_gradient_is_exact_for_quadratic_energy() {
        let mesh = free_mesh(3, 3);
        let nv = mesh.num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = PhaseField::from_fn(nv, 2, |_, _| rng.random::<f64>());
        let h = PhaseField::from_fn(nv, 2, |_, _| rng.random::<f64>() - 0.5);
        let (gamma, eps) = (0.7, 0.2);
        let g = ginzburg_landau_grad(&mesh, &phi, gamma, eps);
        let t = 1e-4;
        let mut plus = phi.clone();
        plus.axpy(t, &h);
        let mut minus = phi.clone();
        minus.axpy(-t, &h);
        let fd = (ginzburg_landau(&mesh, &plus, gamma, eps)
            - ginzburg_landau(&mesh, &minus, gamma, eps))
            / (2.0 * t);
        assert_relative_eq!(fd, g.dot(&h), max_relative = 1e-9);
    }

    #[test]
    fn objective_reductions() {
        let (mesh, map) = clamped();
        let (mats, p) = two_phase();
        let phi = PhaseField::constant(mesh.num_vertices(), &[0.6, 0.4]);
        // gamma = 0, Psi = lambda_1
        let spec = ObjectiveSpec {
            targets: vec![1],
            kind: PsiKind::WeightedSum,
            weights: vec![1.0],
            gamma: 0.0,
            epsilon: 0.25,
            lower_bound: 0.0,
        };
        let (j, pairs) = objective_eval(
            &mesh,
            &map,
            &phi,
            &spec,
            &mats,
            &p,
            &EigenOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(j, pairs.lambdas[0], max_relative = 1e-12);

        // no targets: pure interface energy
        let spec_gl = ObjectiveSpec {
            targets: vec![],
            weights: vec![],
            gamma: 3.0,
            ..spec.clone()
        };
        let (j, _) = objective_eval(
            &mesh,
            &map,
            &phi,
            &spec_gl,
            &mats,
            &p,
            &EigenOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(
            j,
            ginzburg_landau(&mesh, &phi, 3.0, 0.25),
            max_relative = 1e-12
        );

        // combined value equals the sum of its parts
        let spec_full = ObjectiveSpec {
            gamma: 3.0,
            ..spec
        };
        let (j, pairs) = objective_eval(
            &mesh,
            &map,
            &phi,
            &spec_full,
            &mats,
            &p,
            &EigenOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(
            j,
            pairs.lambdas[0] + ginzburg_landau(&mesh, &phi, 3.0, 0.25),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gradient_weighted_sum_linearity() {
        let (mesh, map) = clamped();
        let (mats, p) = two_phase();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = PhaseField::from_fn(mesh.num_vertices(), 2, |_, _| {
            0.5 + 0.1 * (rng.random::<f64>() - 0.5)
        });
        let base = ObjectiveSpec {
            targets: vec![1, 2],
            kind: PsiKind::WeightedSum,
            weights: vec![1.0, 0.0],
            gamma: 0.0,
            epsilon: 0.25,
            lower_bound: 0.0,
        };
        let opts = EigenOptions::default();
        let (_, pairs) = objective_eval(&mesh, &map, &phi, &base, &mats, &p, &opts).unwrap();
        let g1 = objective_grad(&mesh, &map, &phi, &base, &mats, &p, &pairs).unwrap();
        let spec2 = ObjectiveSpec {
            weights: vec![0.0, 1.0],
            ..base.clone()
        };
        let g2 = objective_grad(&mesh, &map, &phi, &spec2, &mats, &p, &pairs).unwrap();
        let spec_mix = ObjectiveSpec {
            weights: vec![2.0, -1.5],
            ..base
        };
        let gm = objective_grad(&mesh, &map, &phi, &spec_mix, &mats, &p, &pairs).unwrap();
        let mut expect = PhaseField::zeros(mesh.num_vertices(), 2);
        expect.axpy(2.0, &g1);
        expect.axpy(-1.5, &g2);
        let mut diff: f64 = 0.0;
        for (a, b) in gm.data().iter().zip(expect.data()) {
            diff = diff.max((a - b).abs());
        }
        assert!(diff <= 1e-12);
    }

    #[test]
    fn gl_only_descent_approaches_constant_field() {
        let mesh = free_mesh(6, 6);
        let nv = mesh.num_vertices();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        let (mats, p) = two_phase();
        let m = vec![0.5, 0.5];
        let admissible = AdmissibleSet::unconstrained_mean(m.clone(), nv);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy = PhaseField::from_fn(nv, 2, |_, _| 0.5 + 0.3 * (rng.random::<f64>() - 0.5));
        let phi0 = admissible.project(&mesh, &noisy).unwrap();
        // the constant field is the unique minimizer only while the gradient
        // penalty dominates the concave bulk term: eps * pi^2 > 1 / eps
        let spec = ObjectiveSpec {
            targets: vec![],
            kind: PsiKind::WeightedSum,
            weights: vec![],
            gamma: 10.0,
            epsilon: 0.5,
            lower_bound: 0.0,
        };
        let opts = OptOptions {
            max_iter: 120,
            conv_tol: 1e-8,
            vi_probes: 10,
            ..OptOptions::default()
        };
        let result =
            projected_gradient_solve(&mesh, &map, &phi0, &spec, &mats, &p, &admissible, &opts)
                .unwrap();
        // interface energy decreases monotonically toward the constant field
        for w in result.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
        let spread: f64 = result
            .phi
            .data()
            .iter()
            .map(|&x| (x - 0.5).abs())
            .fold(0.0, f64::max);
        assert!(
            spread < 0.02,
            "field should flatten toward the mean, spread {spread}"
        );
    }

    #[test]
    fn maximize_first_eigenvalue_monotone() {
        let (mesh, map) = clamped();
        let mats = MaterialSet::new(&[1.0], &[2.0], &[0.3], 1.0, 1.0, 0.3, 0.25).unwrap();
        let p = CutoffParams::default_for(&mats);
        let nv = mesh.num_vertices();
        let m = vec![0.4, 0.6];
        let admissible = AdmissibleSet::unconstrained_mean(m.clone(), nv);
        let phi0 = admissible
            .project(&mesh, &PhaseField::constant(nv, &m))
            .unwrap();
        let spec = ObjectiveSpec {
            targets: vec![1],
            kind: PsiKind::NegMinFirst,
            weights: vec![],
            gamma: 0.05,
            epsilon: 0.25,
            lower_bound: 100.0,
        };
        let opts = OptOptions {
            max_iter: 15,
            vi_probes: 10,
            ..OptOptions::default()
        };
        let result =
            projected_gradient_solve(&mesh, &map, &phi0, &spec, &mats, &p, &admissible, &opts)
                .unwrap();
        for w in result.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
        // J >= -c_psi along the run
        for r in &result.records {
            assert!(r.objective >= -spec.lower_bound);
        }
        assert!(result.records.len() >= 2);
        let first = result.records.first().unwrap().lambdas[0];
        let last = result.records.last().unwrap().lambdas[0];
        assert!(last >= first - 1e-12, "lambda_1 went down: {first} -> {last}");
    }

    #[test]
    fn tiny_step_matches_taylor_decrease() {
        let (mesh, map) = clamped();
        let (mats, p) = two_phase();
        let nv = mesh.num_vertices();
        let m = vec![0.5, 0.5];
        let admissible = AdmissibleSet::unconstrained_mean(m.clone(), nv);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = PhaseField::from_fn(nv, 2, |_, _| 0.5 + 0.2 * (rng.random::<f64>() - 0.5));
        let phi0 = admissible.project(&mesh, &noisy).unwrap();
        let spec = ObjectiveSpec {
            targets: vec![1],
            kind: PsiKind::NegMinFirst,
            weights: vec![],
            gamma: 0.1,
            epsilon: 0.25,
            lower_bound: 100.0,
        };
        let s = 1e-5;
        let opts = OptOptions {
            max_iter: 1,
            step0: s / 2.0, // the search starts at twice the stored step
            armijo_sigma: 1e-7,
            vi_probes: 5,
            ..OptOptions::default()
        };
        let result =
            projected_gradient_solve(&mesh, &map, &phi0, &spec, &mats, &p, &admissible, &opts)
                .unwrap();
        let r0 = &result.records[0];
        let r1 = &result.records[1];
        assert_relative_eq!(r1.step, s, max_relative = 1e-12);
        let decrease = r0.objective - r1.objective;
        // expected decrease: s |P g|^2 from the accepted movement
        let mut movement = result.phi.clone();
        movement.axpy(-1.0, &phi0);
        let expected = movement.dot(&movement) / s;
        assert!(
            (decrease - expected).abs() <= 0.2 * expected.abs(),
            "decrease {decrease} vs projected-gradient estimate {expected}"
        );
    }

    #[test]
    fn vi_residual_zero_probe_and_admissibility() {
        let (mesh, map) = clamped();
        let (mats, p) = two_phase();
        let nv = mesh.num_vertices();
        let m = vec![0.5, 0.5];
        let admissible = AdmissibleSet::unconstrained_mean(m.clone(), nv);
        let phi = admissible
            .project(&mesh, &PhaseField::constant(nv, &m))
            .unwrap();
        let spec = ObjectiveSpec {
            targets: vec![1],
            kind: PsiKind::WeightedSum,
            weights: vec![1.0],
            gamma: 0.2,
            epsilon: 0.25,
            lower_bound: 0.0,
        };
        let (_, pairs) =
            objective_eval(&mesh, &map, &phi, &spec, &mats, &p, &EigenOptions::default()).unwrap();
        // theta = phi gives a zero directional derivative
        let r = vi_residual(
            &mesh,
            &map,
            &phi,
            &spec,
            &mats,
            &p,
            &pairs,
            &[phi.clone()],
            &admissible,
        )
        .unwrap();
        assert_eq!(r, 0.0);
        // a non-admissible probe is rejected
        let bad = PhaseField::constant(nv, &[2.0, -1.0]);
        assert!(matches!(
            vi_residual(
                &mesh,
                &map,
                &phi,
                &spec,
                &mats,
                &p,
                &pairs,
                &[bad],
                &admissible
            ),
            Err(Error::NonAdmissibleProbe(_))
        ));
    }

    #[test]
    fn descent_direction_exists_at_nonstationary_point() {
        let (mesh, map) = clamped();
        let (mats, p) = two_phase();
        let nv = mesh.num_vertices();
        let m = vec![0.5, 0.5];
        let admissible = AdmissibleSet::unconstrained_mean(m.clone(), nv);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let noisy = PhaseField::from_fn(nv, 2, |_, _| 0.5 + 0.3 * (rng.random::<f64>() - 0.5));
        let phi = admissible.project(&mesh, &noisy).unwrap();
        let spec = ObjectiveSpec {
            targets: vec![],
            kind: PsiKind::WeightedSum,
            weights: vec![],
            gamma: 5.0,
            epsilon: 0.25,
            lower_bound: 0.0,
        };
        let probes: Vec<PhaseField> = (0..50)
            .map(|_| admissible.sample(&mesh, 2, &mut rng).unwrap())
            .collect();
        let r = vi_residual(
            &mesh,
            &map,
            &phi,
            &spec,
            &mats,
            &p,
            &empty_pairs(),
            &probes,
            &admissible,
        )
        .unwrap();
        assert!(r < 0.0, "expected a descent probe, got {r}");
    }
}
