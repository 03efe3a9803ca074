//! Assembly of the discrete bilinear forms.
//!
//! Linear triangles with one-point (centroid) quadrature for the
//! phase-dependent coefficients: density and elasticity are evaluated at the
//! element centroid of the interpolated phase vector, which keeps every
//! element integral closed-form. The mass matrix uses the exact linear
//! element mass (no lumping) so that weighted orthonormality of eigenvectors
//! is meaningful at machine precision. Dirichlet conditions are imposed by
//! dof elimination: assembled operators live on the free dofs of the
//! supplied [`DofMap`].

use nalgebra::DVector;

use crate::grid::{BoundaryTag, DofMap, Mesh};
use crate::material::{CutoffParams, MaterialSet};
use crate::phasefield::PhaseField;
use crate::sparse::{SparseSymMatrix, TripletBuffer};
use crate::{Error, Result};

/// Strain of the linear basis function of local vertex `k`, component `c`,
/// given the shape gradient `g` of that vertex.
fn basis_strain(g: [f64; 2], c: usize) -> [[f64; 2]; 2] {
    match c {
        0 => [[g[0], 0.5 * g[1]], [0.5 * g[1], 0.0]],
        _ => [[0.0, 0.5 * g[0]], [0.5 * g[0], g[1]]],
    }
}

fn strain_product(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], two_mu: f64, lambda: f64) -> f64 {
    let dot = a[0][0] * b[0][0] + a[1][1] * b[1][1] + a[0][1] * b[0][1] + a[1][0] * b[1][0];
    let tr_a = a[0][0] + a[1][1];
    let tr_b = b[0][0] + b[1][1];
    two_mu * dot + lambda * tr_a * tr_b
}

fn check_phi(mesh: &Mesh, phi: &PhaseField, mats: &MaterialSet) -> Result<()> {
    if phi.n_vertices() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "phase field has {} nodes, mesh has {}",
            phi.n_vertices(),
            mesh.num_vertices()
        )));
    }
    if phi.n_components() != mats.n_phases() {
        return Err(Error::DimensionMismatch(format!(
            "phase field has {} components, material set has {}",
            phi.n_components(),
            mats.n_phases()
        )));
    }
    Ok(())
}

/// Effective isotropic coefficients at one element: `(2 mu, lambda, rho)`
/// interpolated through the cutoff, or their directional derivatives when
/// `dir` is given.
fn effective_coeffs(
    phibar: &[f64],
    dirbar: Option<&[f64]>,
    mats: &MaterialSet,
    p: &CutoffParams,
) -> (f64, f64, f64) {
    let mut two_mu = 0.0;
    let mut lambda = 0.0;
    let mut rho = 0.0;
    for i in 0..mats.n_phases() {
        let w = match dirbar {
            None => p.eval(phibar[i]),
            Some(h) => p.deriv(phibar[i]) * h[i],
        };
        let (l_i, m_i) = mats.lame(i);
        two_mu += w * 2.0 * m_i;
        lambda += w * l_i;
        rho += w * mats.scaled_density(i);
    }
    (two_mu, lambda, rho)
}

fn assemble_elastic(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    dir: Option<&PhaseField>,
    mats: &MaterialSet,
    p: &CutoffParams,
    stiffness: bool,
) -> Result<SparseSymMatrix> {
    check_phi(mesh, phi, mats)?;
    if let Some(d) = dir {
        check_phi(mesh, d, mats)?;
    }
    let n = mats.n_phases();
    let mut phibar = vec![0.0; n];
    let mut dirbar = vec![0.0; n];
    let mut buf = TripletBuffer::new(dofmap.n_free());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        phi.centroid_value(tri, &mut phibar);
        let coeffs = match dir {
            None => effective_coeffs(&phibar, None, mats, p),
            Some(d) => {
                d.centroid_value(tri, &mut dirbar);
                effective_coeffs(&phibar, Some(&dirbar), mats, p)
            }
        };
        let (two_mu, lambda, rho) = coeffs;
        let grads = mesh.shape_gradients()[t];
        for a in 0..3 {
            for ca in 0..2 {
                let full_a = 2 * tri[a] + ca;
                let Some(ia) = dofmap.free_index(full_a) else {
                    continue;
                };
                for b in 0..3 {
                    for cb in 0..2 {
                        let full_b = 2 * tri[b] + cb;
                        let Some(ib) = dofmap.free_index(full_b) else {
                            continue;
                        };
                        if ib > ia {
                            continue;
                        }
                        let value = if stiffness {
                            let ea = basis_strain(grads[a], ca);
                            let eb = basis_strain(grads[b], cb);
                            area * strain_product(&ea, &eb, two_mu, lambda)
                        } else if ca == cb {
                            rho * area / 12.0 * if a == b { 2.0 } else { 1.0 }
                        } else {
                            continue;
                        };
                        buf.push(ia, ib, value);
                    }
                }
            }
        }
    }
    Ok(buf.finalize())
}

/// Stiffness matrix of the form `<E(.), E(.)>_{C(phi)}` on free dofs.
pub fn assemble_stiffness(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<SparseSymMatrix> {
    assemble_elastic(mesh, dofmap, phi, None, mats, p, true)
}

/// Weighted mass matrix `(., .)_{rho(phi)}` on free dofs.
pub fn assemble_mass(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<SparseSymMatrix> {
    assemble_elastic(mesh, dofmap, phi, None, mats, p, false)
}

/// Directional stiffness derivative `<E(.), E(.)>_{C'(phi) dir}`; symmetric
/// but generally indefinite.
pub fn assemble_stiffness_dir(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    dir: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<SparseSymMatrix> {
    assemble_elastic(mesh, dofmap, phi, Some(dir), mats, p, true)
}

/// Directional mass derivative `(., .)_{rho'(phi) dir}`.
pub fn assemble_mass_dir(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    dir: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<SparseSymMatrix> {
    assemble_elastic(mesh, dofmap, phi, Some(dir), mats, p, false)
}

/// Exact integral of a product of three linear shape functions on a
/// triangle of the given area.
pub(crate) fn tri_triple_weight(area: f64, i: usize, j: usize, k: usize) -> f64 {
    if i == j && j == k {
        area / 10.0
    } else if i == j || j == k || i == k {
        area / 30.0
    } else {
        area / 60.0
    }
}

/// Load vector on free dofs: body force `(1 - phi_N) f` integrated exactly
/// on the linear interpolants, plus the traction `g` on `NeumannG` edges by
/// the trapezoidal rule.
pub fn assemble_load(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    f: impl Fn([f64; 2]) -> [f64; 2],
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<DVector<f64>> {
    let full = assemble_load_full(mesh, phi, f, g)?;
    Ok(dofmap.restrict(&full))
}

/// Full-length (unreduced) load vector; see [`assemble_load`].
pub fn assemble_load_full(
    mesh: &Mesh,
    phi: &PhaseField,
    f: impl Fn([f64; 2]) -> [f64; 2],
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<DVector<f64>> {
    if phi.n_vertices() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(
            "phase field does not match the mesh".into(),
        ));
    }
    let n = phi.n_components();
    let mut load = DVector::zeros(2 * mesh.num_vertices());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        let fvals: Vec<[f64; 2]> = tri.iter().map(|&v| f(mesh.vertices()[v])).collect();
        let solid: Vec<f64> = tri.iter().map(|&v| 1.0 - phi.node(v)[n - 1]).collect();
        for b in 0..3 {
            for (a, fa) in fvals.iter().enumerate() {
                let mut w = 0.0;
                for (c, sc) in solid.iter().enumerate() {
                    w += sc * tri_triple_weight(area, c, a, b);
                }
                load[2 * tri[b]] += w * fa[0];
                load[2 * tri[b] + 1] += w * fa[1];
            }
        }
    }
    for e in mesh.edges_with_tag(BoundaryTag::NeumannG) {
        let half = 0.5 * mesh.edge_length(e);
        for v in [e.a, e.b] {
            let gv = g(mesh.vertices()[v]);
            load[2 * v] += half * gv[0];
            load[2 * v + 1] += half * gv[1];
        }
    }
    Ok(load)
}

/// Scalar linear stiffness and mass with coefficient `a`, no boundary
/// conditions; the validation operator `(-div(a grad u), a u)`.
pub fn assemble_scalar_laplace(
    mesh: &Mesh,
    coeff: impl Fn([f64; 2]) -> f64,
) -> (SparseSymMatrix, SparseSymMatrix) {
    let nv = mesh.num_vertices();
    let mut kbuf = TripletBuffer::new(nv);
    let mut mbuf = TripletBuffer::new(nv);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        let p = [
            mesh.vertices()[tri[0]],
            mesh.vertices()[tri[1]],
            mesh.vertices()[tri[2]],
        ];
        let centroid = [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ];
        let a = coeff(centroid);
        let grads = mesh.shape_gradients()[t];
        for i in 0..3 {
            for j in 0..=i {
                let kv = a * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                kbuf.push(tri[i], tri[j], kv);
                let mv = a * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                mbuf.push(tri[i], tri[j], mv);
            }
        }
    }
    (kbuf.finalize(), mbuf.finalize())
}

/// Nodal representative `g` of the eigenvalue derivative: `g . h` equals
/// `w^T K'(phi)[h] w - lambda w^T M'(phi)[h] w` for every nodal direction
/// `h`. `w` is a free-dof eigenvector, required to be normalized in the
/// current mass inner product.
pub fn eigen_gradient_field(
    mesh: &Mesh,
    dofmap: &DofMap,
    phi: &PhaseField,
    mats: &MaterialSet,
    p: &CutoffParams,
    w: &DVector<f64>,
    lambda: f64,
) -> Result<PhaseField> {
    check_phi(mesh, phi, mats)?;
    if w.len() != dofmap.n_free() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvector length {} does not match {} free dofs",
            w.len(),
            dofmap.n_free()
        )));
    }
    let mass = assemble_mass(mesh, dofmap, phi, mats, p)?;
    let norm2 = mass.inner(w, w);
    if (norm2 - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized {
            deviation: norm2 - 1.0,
        });
    }

    let n = mats.n_phases();
    let full = dofmap.expand(w);
    let mut phibar = vec![0.0; n];
    let mut grad = PhaseField::zeros(mesh.num_vertices(), n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element_areas()[t];
        phi.centroid_value(tri, &mut phibar);
        let grads = mesh.shape_gradients()[t];
        // strain of w on this element
        let mut e = [[0.0f64; 2]; 2];
        for (k, &v) in tri.iter().enumerate() {
            let (ux, uy) = (full[2 * v], full[2 * v + 1]);
            e[0][0] += ux * grads[k][0];
            e[1][1] += uy * grads[k][1];
            e[0][1] += 0.5 * (ux * grads[k][1] + uy * grads[k][0]);
        }
        e[1][0] = e[0][1];
        let dot_e = e[0][0] * e[0][0] + e[1][1] * e[1][1] + 2.0 * e[0][1] * e[0][1];
        let tr_e = e[0][0] + e[1][1];
        // unit-density element mass quadratic form of w
        let mut mass_quad = 0.0;
        for c in 0..2 {
            let (w0, w1, w2) = (
                full[2 * tri[0] + c],
                full[2 * tri[1] + c],
                full[2 * tri[2] + c],
            );
            mass_quad += 2.0 * (w0 * w0 + w1 * w1 + w2 * w2)
                + 2.0 * (w0 * w1 + w0 * w2 + w1 * w2);
        }
        mass_quad *= area / 12.0;

        for i in 0..n {
            let slope = p.deriv(phibar[i]);
            if slope == 0.0 {
                continue;
            }
            let (l_i, m_i) = mats.lame(i);
            let stiff_term = area * (2.0 * m_i * dot_e + l_i * tr_e * tr_e);
            let mass_term = mats.scaled_density(i) * mass_quad;
            let contribution = slope / 3.0 * (stiff_term - lambda * mass_term);
            for &v in tri {
                grad.node_mut(v)[i] += contribution;
            }
        }
    }
    Ok(grad)
}
