//! Static loading: state and adjoint solves, compliance and
//! target-displacement functionals, and the combined objective that couples
//! them with the eigenvalue terms.
//!
//! The load problem lives on its own boundary splitting (`DirichletC` /
//! `NeumannG`), independent of the eigenvalue splitting. Discrete
//! functionals reuse the exact quadratures of the assembled load so that the
//! work identity and the adjoint-based gradient hold at machine precision:
//! the gradient returned here is the total derivative of the discrete
//! objective.

use nalgebra::DVector;

use crate::assembly::{
    assemble_load_full, assemble_stiffness, eigen_gradient_field, tri_triple_weight,
};
use crate::eigen::EigenPairs;
use crate::grid::{DofMap, Mesh};
use crate::material::{CutoffParams, MaterialSet};
use crate::opt::{ginzburg_landau, ginzburg_landau_grad, solve_target_pairs, ObjectiveSpec};
use crate::phasefield::PhaseField;
use crate::{Error, Result};

/// Axis-aligned box, used for fixed regions and weight supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Static load data: constant body force and traction, a constant target
/// displacement with its weight support, and the objective weights.
#[derive(Debug, Clone)]
pub struct LoadCase {
    pub body_force: [f64; 2],
    /// Traction on `NeumannG` edges.
    pub traction: [f64; 2],
    /// Target displacement for the deviation term.
    pub target: [f64; 2],
    /// Support of the deviation weight `c`; `None` means the whole domain.
    pub weight_support: Option<Rect>,
    /// Deviation exponent in (0, 1].
    pub exponent: f64,
    /// Compliance weight.
    pub alpha: f64,
    /// Deviation weight.
    pub beta: f64,
}

impl LoadCase {
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(Error::InvalidArg(format!(
                "deviation exponent {} outside (0, 1]",
                self.exponent
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidArg(
                "load weights alpha, beta must be nonnegative".into(),
            ));
        }
        if self.beta > 0.0 {
            let support: f64 = mesh
                .vertex_weights()
                .iter()
                .enumerate()
                .filter(|(v, _)| self.weight(mesh.vertices()[*v]) > 0.0)
                .map(|(_, &w)| w)
                .sum();
            if support <= 0.0 {
                return Err(Error::InvalidArg(
                    "deviation weight has empty support".into(),
                ));
            }
        }
        Ok(())
    }

    /// Indicator weight `c` at a point.
    pub fn weight(&self, p: [f64; 2]) -> f64 {
        match &self.weight_support {
            None => 1.0,
            Some(r) if r.contains(p) => 1.0,
            Some(_) => 0.0,
        }
    }
}

/// Displacement under the load case: `K(phi) u = b(phi)` on the free dofs of
/// the load splitting, returned full-length with zeros on the clamped dofs.
pub fn solve_state(
    mesh: &Mesh,
    dofmap_c: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    load: &LoadCase,
) -> Result<DVector<f64>> {
    load.validate(mesh)?;
    if dofmap_c.n_fixed() == 0 {
        return Err(Error::SingularSystem(
            "load problem needs a nonempty clamped boundary".into(),
        ));
    }
    let k = assemble_stiffness(mesh, dofmap_c, phi, mats, p)?;
    let b_full = assemble_load_full(mesh, phi, |_| load.body_force, |_| load.traction)?;
    let b = dofmap_c.restrict(&b_full);
    let chol = k.banded_cholesky()?;
    let u = chol.solve(&b);
    let resid = (k.mul_vec(&u) - &b).norm();
    if resid > 1e-10 * b.norm().max(1e-300) && b.norm() > 0.0 {
        return Err(Error::SingularSystem(format!(
            "state solve residual {resid:.3e}"
        )));
    }
    Ok(dofmap_c.expand(&u))
}

/// Work of the external loads `int (1 - phi_N) f . u + int_G g . u`, using
/// the same quadratures as the assembled load; equals `u^T K(phi) u` when
/// `u` solves the state problem.
pub fn mean_compliance(mesh: &Mesh, phi: &PhaseField, u: &DVector<f64>, load: &LoadCase) -> f64 {
    let b = assemble_load_full(mesh, phi, |_| load.body_force, |_| load.traction)
        .expect("load assembly for an already validated case");
    b.dot(u)
}

/// Value of the target-displacement functional.
#[derive(Debug, Clone, Copy)]
pub struct TargetDeviation {
    /// `inner^nu`.
    pub value: f64,
    /// The unexponentiated integral.
    pub inner: f64,
    /// False exactly when `inner = 0` with `nu < 1`: the power is not
    /// differentiable there.
    pub differentiable: bool,
}

/// `(int c (1 - phi_N) |u - target|^2)^nu` under nodal quadrature.
pub fn target_deviation(
    mesh: &Mesh,
    phi: &PhaseField,
    u: &DVector<f64>,
    load: &LoadCase,
) -> TargetDeviation {
    let n = phi.n_components();
    let mut inner = 0.0;
    for (v, &w) in mesh.vertex_weights().iter().enumerate() {
        let c = load.weight(mesh.vertices()[v]);
        if c == 0.0 {
            continue;
        }
        let solid = 1.0 - phi.node(v)[n - 1];
        let dx = u[2 * v] - load.target[0];
        let dy = u[2 * v + 1] - load.target[1];
        inner += w * c * solid * (dx * dx + dy * dy);
    }
    let value = inner.powf(load.exponent);
    TargetDeviation {
        value,
        inner,
        differentiable: !(inner == 0.0 && load.exponent < 1.0),
    }
}

/// Adjoint displacement: same operator as the state, loaded with the
/// `u`-derivative of `alpha F + beta J0`. With `beta = 0` this reduces to
/// `alpha u` exactly.
pub fn solve_adjoint(
    mesh: &Mesh,
    dofmap_c: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    u: &DVector<f64>,
    load: &LoadCase,
) -> Result<DVector<f64>> {
    let n = phi.n_components();
    let b_full = assemble_load_full(mesh, phi, |_| load.body_force, |_| load.traction)?;
    let mut rhs = b_full * load.alpha;
    if load.beta > 0.0 {
        let dev = target_deviation(mesh, phi, u, load);
        if !dev.differentiable {
            return Err(Error::NotDifferentiable(
                "target deviation vanishes and its exponent is below one".into(),
            ));
        }
        let scale = 2.0 * load.beta * load.exponent * dev.inner.powf(load.exponent - 1.0);
        for (v, &w) in mesh.vertex_weights().iter().enumerate() {
            let c = load.weight(mesh.vertices()[v]);
            if c == 0.0 {
                continue;
            }
            let solid = 1.0 - phi.node(v)[n - 1];
            rhs[2 * v] += scale * w * c * solid * (u[2 * v] - load.target[0]);
            rhs[2 * v + 1] += scale * w * c * solid * (u[2 * v + 1] - load.target[1]);
        }
    }
    let k = assemble_stiffness(mesh, dofmap_c, phi, mats, p)?;
    let chol = k.banded_cholesky()?;
    let pr = chol.solve(&dofmap_c.restrict(&rhs));
    Ok(dofmap_c.expand(&pr))
}

/// Combined objective value with its decomposition and reusable state.
#[derive(Debug, Clone)]
pub struct CombinedEvaluation {
    pub objective: f64,
    pub compliance: f64,
    pub deviation: f64,
    pub gl_energy: f64,
    pub psi: f64,
    /// Full-length state displacement.
    pub state: DVector<f64>,
    pub pairs: EigenPairs,
}

/// `alpha F + beta J0 + gamma E + Psi(lambda)`.
#[allow(clippy::too_many_arguments)]
pub fn combined_objective(
    mesh: &Mesh,
    dofmap_d: &DofMap,
    dofmap_c: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    load: &LoadCase,
    eig_opts: &crate::eigen::EigenOptions,
) -> Result<CombinedEvaluation> {
    spec.validate()?;
    let u = solve_state(mesh, dofmap_c, phi, mats, p, load)?;
    let compliance = mean_compliance(mesh, phi, &u, load);
    let deviation = target_deviation(mesh, phi, &u, load).value;
    let gl_energy = ginzburg_landau(mesh, phi, spec.gamma, spec.epsilon);
    let (psi, pairs) = if spec.targets.is_empty() {
        (
            0.0,
            EigenPairs {
                lambdas: Vec::new(),
                vectors: nalgebra::DMatrix::zeros(0, 0),
                residuals: Vec::new(),
                multiplicity_groups: Vec::new(),
                sign_fixed: Vec::new(),
            },
        )
    } else {
        let pairs = solve_target_pairs(mesh, dofmap_d, phi, spec, mats, p, eig_opts)?;
        (spec.psi(&pairs.lambdas), pairs)
    };
    Ok(CombinedEvaluation {
        objective: load.alpha * compliance + load.beta * deviation + gl_energy + psi,
        compliance,
        deviation,
        gl_energy,
        psi,
        state: u,
        pairs,
    })
}

/// Total derivative of the combined objective as a nodal field: interface
/// and eigenvalue terms plus the adjoint-based compliance terms.
#[allow(clippy::too_many_arguments)]
pub fn combined_gradient(
    mesh: &Mesh,
    dofmap_d: &DofMap,
    dofmap_c: &DofMap,
    phi: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    load: &LoadCase,
    eval: &CombinedEvaluation,
) -> Result<PhaseField> {
    let n = phi.n_components();
    let u = &eval.state;

    // interface term
    let mut g = ginzburg_landau_grad(mesh, phi, spec.gamma, spec.epsilon);

    // eigenvalue terms
    if !spec.targets.is_empty() {
        let psi_grad = spec.psi_grad(&eval.pairs.lambdas);
        for (j, &t) in spec.targets.iter().enumerate() {
            let idx = t - 1;
            if !eval.pairs.is_simple(idx) {
                let gr = eval.pairs.group_of(idx);
                return Err(Error::ClusteredEigenvalue {
                    index: idx,
                    lo: gr.start,
                    hi: gr.end,
                });
            }
            let field = eigen_gradient_field(
                mesh,
                dofmap_d,
                phi,
                mats,
                p,
                &eval.pairs.vector(idx),
                eval.pairs.lambdas[idx],
            )?;
            g.axpy(psi_grad[j], &field);
        }
    }

    let padj = solve_adjoint(mesh, dofmap_c, phi, mats, p, u, load)?;

    // deviation term: only the void component of the direction enters
    if load.beta > 0.0 {
        let dev = target_deviation(mesh, phi, u, load);
        if !dev.differentiable {
            return Err(Error::NotDifferentiable(
                "target deviation vanishes and its exponent is below one".into(),
            ));
        }
        let scale = load.beta * load.exponent * dev.inner.powf(load.exponent - 1.0);
        for (v, &w) in mesh.vertex_weights().iter().enumerate() {
            let c = load.weight(mesh.vertices()[v]);
            if c == 0.0 {
                continue;
            }
            let dx = u[2 * v] - load.target[0];
            let dy = u[2 * v + 1] - load.target[1];
            g.node_mut(v)[n - 1] -= scale * w * c * (dx * dx + dy * dy);
        }
    }

    // body-force term: -int h_N f . (alpha u + p)
    let av_p = |dof: usize| load.alpha * u[dof] + padj[dof];
    let f = load.body_force;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        for (c, &vc) in tri.iter().enumerate() {
            let mut s = 0.0;
            for a in 0..3 {
                for (b, &vb) in tri.iter().enumerate() {
                    s += tri_triple_weight(area, c, a, b)
                        * (f[0] * av_p(2 * vb) + f[1] * av_p(2 * vb + 1));
                }
            }
            g.node_mut(vc)[n - 1] -= s;
        }
    }

    // elasticity term: -<E(p), E(u)>_{C'(phi) h}
    let mut phibar = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        let grads = mesh.shape_gradients()[t];
        phi.centroid_value(tri, &mut phibar);
        let strain = |vecf: &dyn Fn(usize) -> f64| -> [[f64; 2]; 2] {
            let mut e = [[0.0; 2]; 2];
            for (k, &v) in tri.iter().enumerate() {
                let (ux, uy) = (vecf(2 * v), vecf(2 * v + 1));
                e[0][0] += ux * grads[k][0];
                e[1][1] += uy * grads[k][1];
                e[0][1] += 0.5 * (ux * grads[k][1] + uy * grads[k][0]);
            }
            e[1][0] = e[0][1];
            e
        };
        let eu = strain(&|d| u[d]);
        let ep = strain(&|d| padj[d]);
        let dot = eu[0][0] * ep[0][0] + eu[1][1] * ep[1][1] + 2.0 * eu[0][1] * ep[0][1];
        let tr_prod = (eu[0][0] + eu[1][1]) * (ep[0][0] + ep[1][1]);
        for i in 0..n {
            let slope = p.deriv(phibar[i]);
            if slope == 0.0 {
                continue;
            }
            let (l_i, m_i) = mats.lame(i);
            let contribution = slope / 3.0 * area * (2.0 * m_i * dot + l_i * tr_prod);
            for &v in tri {
                g.node_mut(v)[i] -= contribution;
            }
        }
    }
    Ok(g)
}

/// Projected gradient descent on the combined objective. Degenerate target
/// eigenvalues stop the run with a diagnostic, except a first-eigenvalue
/// objective, which falls back to the one-sided cluster derivative exactly
/// as the eigenvalue-only solver does.
#[allow(clippy::too_many_arguments)]
pub fn combined_optimize(
    mesh: &Mesh,
    dofmap_d: &DofMap,
    dofmap_c: &DofMap,
    phi0: &PhaseField,
    spec: &ObjectiveSpec,
    mats: &MaterialSet,
    p: &CutoffParams,
    load: &LoadCase,
    admissible: &crate::phasefield::AdmissibleSet,
    opts: &crate::opt::OptOptions,
    on_iterate: impl FnMut(usize, &PhaseField),
) -> Result<crate::opt::OptResult> {
    spec.validate()?;
    load.validate(mesh)?;
    let evaluate = |phi: &PhaseField, need_gradient: bool| -> Result<crate::opt::DriveEval> {
        let eval =
            combined_objective(mesh, dofmap_d, dofmap_c, phi, spec, mats, p, load, &opts.eig)?;
        let lambdas: Vec<f64> = spec
            .targets
            .iter()
            .map(|&t| eval.pairs.lambdas.get(t - 1).copied().unwrap_or(f64::NAN))
            .collect();
        let gradient = if need_gradient {
            match combined_gradient(mesh, dofmap_d, dofmap_c, phi, spec, mats, p, load, &eval) {
                Ok(g) => Some(g),
                Err(Error::ClusteredEigenvalue { index, .. }) => {
                    // gradient of everything except the eigenvalue term
                    let bare = ObjectiveSpec {
                        targets: vec![],
                        weights: vec![],
                        ..spec.clone()
                    };
                    let base = combined_gradient(
                        mesh, dofmap_d, dofmap_c, phi, &bare, mats, p, load, &eval,
                    )?;
                    crate::opt::cluster_fallback_gradient(
                        mesh,
                        dofmap_d,
                        phi,
                        spec,
                        mats,
                        p,
                        &eval.pairs,
                        index,
                        &base,
                    )?
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(crate::opt::DriveEval {
            objective: eval.objective,
            psi: eval.psi,
            gl_energy: eval.gl_energy,
            lambdas,
            gradient,
        })
    };
    crate::opt::drive(
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
    use crate::eigen::EigenOptions;
    use crate::grid::{build_dof_map, build_rect_mesh, BoundarySpec, BoundaryTag};
    use crate::opt::{objective_eval, objective_grad, PsiKind};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn beam() -> (Mesh, DofMap, DofMap) {
        // left edge clamped for both splittings, traction on the right
        let mesh = build_rect_mesh(
            6,
            3,
            2.0,
            1.0,
            &BoundarySpec {
                bottom: vec![BoundaryTag::Neumann0],
                right: vec![BoundaryTag::Neumann0, BoundaryTag::NeumannG],
                top: vec![BoundaryTag::Neumann0],
                left: vec![BoundaryTag::DirichletD, BoundaryTag::DirichletC],
            },
        )
        .unwrap();
        let dd = build_dof_map(&mesh, BoundaryTag::DirichletD);
        let dc = build_dof_map(&mesh, BoundaryTag::DirichletC);
        (mesh, dd, dc)
    }

    fn mats() -> (MaterialSet, CutoffParams) {
        let m = MaterialSet::new(&[1.0], &[1.0], &[0.3], 1.0, 1.0, 0.3, 0.25).unwrap();
        let p = CutoffParams::default_for(&m);
        (m, p)
    }

    fn interior_phi(mesh: &Mesh, seed: u64) -> PhaseField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseField::from_fn(mesh.num_vertices(), 2, |_, _| {
            0.5 + 0.1 * (rng.random::<f64>() - 0.5)
        })
    }

    fn pull_down() -> LoadCase {
        LoadCase {
            body_force: [0.0, -1.0],
            traction: [0.0, -0.5],
            target: [0.0, 0.0],
            weight_support: None,
            exponent: 1.0,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    #[test]
    fn zero_load_zero_state() {
        let (mesh, _, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 1);
        let load = LoadCase {
            body_force: [0.0, 0.0],
            traction: [0.0, 0.0],
            ..pull_down()
        };
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        assert_eq!(u.amax(), 0.0);
    }

    #[test]
    fn state_needs_clamped_boundary() {
        let (mesh, _, _) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 2);
        let free_map = crate::grid::build_dof_map_with_fixed(&mesh, None, &[]);
        assert!(matches!(
            solve_state(&mesh, &free_map, &phi, &m, &p, &pull_down()),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn state_matches_dense_solve() {
        let (mesh, _, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 3);
        let load = pull_down();
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        let k = crate::assembly::assemble_stiffness(&mesh, &dc, &phi, &m, &p).unwrap();
        let b = crate::assembly::assemble_load(
            &mesh,
            &dc,
            &phi,
            |_| load.body_force,
            |_| load.traction,
        )
        .unwrap();
        let dense = k.to_dense().lu().solve(&b).unwrap();
        let u_free = dc.restrict(&u);
        assert!((u_free - dense).amax() <= 1e-10);
    }

    #[test]
    fn load_independent_of_constant_void_shift_when_body_force_vanishes() {
        let (mesh, _, _) = beam();
        let phi = interior_phi(&mesh, 4);
        let mut shifted = phi.clone();
        for v in 0..shifted.n_vertices() {
            shifted.node_mut(v)[1] += 0.2;
        }
        let g = [1.0, -2.0];
        let b1 = assemble_load_full(&mesh, &phi, |_| [0.0, 0.0], move |_| g).unwrap();
        let b2 = assemble_load_full(&mesh, &shifted, |_| [0.0, 0.0], move |_| g).unwrap();
        assert!((b1 - b2).amax() == 0.0);
    }

    #[test]
    fn work_identity() {
        let (mesh, _, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 5);
        let load = pull_down();
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        let f = mean_compliance(&mesh, &phi, &u, &load);
        let k = crate::assembly::assemble_stiffness(&mesh, &dc, &phi, &m, &p).unwrap();
        let u_free = dc.restrict(&u);
        assert_relative_eq!(f, k.inner(&u_free, &u_free), max_relative = 1e-10);
        assert!(f > 0.0);
        assert_eq!(mean_compliance(&mesh, &phi, &DVector::zeros(u.len()), &load), 0.0);
    }

    #[test]
    fn doubling_traction_doubles_its_term() {
        let (mesh, _, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 6);
        let mut load = pull_down();
        load.body_force = [0.0, 0.0];
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        let f1 = mean_compliance(&mesh, &phi, &u, &load);
        let mut load2 = load.clone();
        load2.traction = [0.0, -1.0];
        let f2 = mean_compliance(&mesh, &phi, &u, &load2);
        assert_relative_eq!(f2, 2.0 * f1, max_relative = 1e-12);
    }

    #[test]
    fn target_deviation_cases() {
        let (mesh, _, dc) = beam();
        let phi = interior_phi(&mesh, 7);
        let mut load = pull_down();
        load.beta = 1.0;
        // u equal to the target: zero with the non-differentiability flag
        load.exponent = 0.5;
        let u_eq = DVector::zeros(2 * mesh.num_vertices());
        let dev = target_deviation(&mesh, &phi, &u_eq, &load);
        assert_eq!(dev.value, 0.0);
        assert!(!dev.differentiable);

        let (m, p) = mats();
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        load.exponent = 1.0;
        let plain = target_deviation(&mesh, &phi, &u, &load);
        assert!(plain.differentiable);
        load.exponent = 0.5;
        let sqrt = target_deviation(&mesh, &phi, &u, &load);
        assert_relative_eq!(sqrt.value, plain.value.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(sqrt.inner, plain.inner, max_relative = 1e-15);
    }

    #[test]
    fn adjoint_reductions() {
        let (mesh, _, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 8);
        let mut load = pull_down();
        load.alpha = 1.7;
        let u = solve_state(&mesh, &dc, &phi, &m, &p, &load).unwrap();
        // beta = 0: the adjoint equation is the alpha-scaled state equation
        let padj = solve_adjoint(&mesh, &dc, &phi, &m, &p, &u, &load).unwrap();
        let diff = (&padj - load.alpha * &u).norm();
        assert!(diff <= 1e-10 * u.norm(), "adjoint differs: {diff}");

        let mut dead = load.clone();
        dead.alpha = 0.0;
        let padj = solve_adjoint(&mesh, &dc, &phi, &m, &p, &u, &dead).unwrap();
        assert!(padj.amax() <= 1e-14);
    }

    fn eigen_spec(gamma: f64) -> ObjectiveSpec {
        ObjectiveSpec {
            targets: vec![1],
            kind: PsiKind::WeightedSum,
            weights: vec![1.0],
            gamma,
            epsilon: 0.25,
            lower_bound: 0.0,
        }
    }

    #[test]
    fn combined_reduces_to_eigenvalue_objective() {
        let (mesh, dd, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 9);
        let mut load = pull_down();
        load.alpha = 0.0;
        load.beta = 0.0;
        let spec = eigen_spec(0.4);
        let opts = EigenOptions::default();
        let eval =
            combined_objective(&mesh, &dd, &dc, &phi, &spec, &m, &p, &load, &opts).unwrap();
        let (j_eig, pairs) = objective_eval(&mesh, &dd, &phi, &spec, &m, &p, &opts).unwrap();
        assert_relative_eq!(eval.objective, j_eig, epsilon = 1e-12);
        let g_combined =
            combined_gradient(&mesh, &dd, &dc, &phi, &spec, &m, &p, &load, &eval).unwrap();
        let g_eig = objective_grad(&mesh, &dd, &phi, &spec, &m, &p, &pairs).unwrap();
        let mut diff: f64 = 0.0;
        for (a, b) in g_combined.data().iter().zip(g_eig.data()) {
            diff = diff.max((a - b).abs());
        }
        assert!(diff <= 1e-12, "reduction mismatch {diff}");
    }

    #[test]
    fn combined_gradient_finite_difference() {
        let (mesh, dd, dc) = beam();
        let (m, p) = mats();
        let phi = interior_phi(&mesh, 10);
        let load = LoadCase {
            body_force: [0.0, -1.0],
            traction: [0.1, -0.3],
            target: [0.0, -0.05],
            weight_support: Some(Rect {
                x0: 1.0,
                y0: 0.0,
                x1: 2.0,
                y1: 1.0,
            }),
            exponent: 0.5,
            alpha: 0.8,
            beta: 0.6,
        };
        let spec = eigen_spec(0.3);
        let opts = EigenOptions::with_tol(1e-12);
        let eval =
            combined_objective(&mesh, &dd, &dc, &phi, &spec, &m, &p, &load, &opts).unwrap();
        let g = combined_gradient(&mesh, &dd, &dc, &phi, &spec, &m, &p, &load, &eval).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut h = PhaseField::from_fn(mesh.num_vertices(), 2, |_, _| rng.random::<f64>() - 0.5);
        let sup = h.norm_inf();
        for v in h.data_mut() {
            *v /= sup;
        }
        let value_at = |t: f64| -> f64 {
            let mut shifted = phi.clone();
            shifted.axpy(t, &h);
            combined_objective(&mesh, &dd, &dc, &shifted, &spec, &m, &p, &load, &opts)
                .unwrap()
                .objective
        };
        let directional = g.dot(&h);
        let mut remainders = Vec::new();
        for &t in &[1e-2, 3e-3, 1e-3] {
            let fd = (value_at(t) - value_at(-t)) / (2.0 * t);
            remainders.push(((fd - directional).abs().max(1e-300).ln(), t.ln()));
        }
        let n = remainders.len() as f64;
        let sx: f64 = remainders.iter().map(|r| r.1).sum();
        let sy: f64 = remainders.iter().map(|r| r.0).sum();
        let sxx: f64 = remainders.iter().map(|r| r.1 * r.1).sum();
        let sxy: f64 = remainders.iter().map(|r| r.0 * r.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 2.0).abs() <= 0.15,
            "combined gradient FD slope {slope}"
        );
    }
}
