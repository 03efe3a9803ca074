//! The nodal design variable and its admissible set.
//!
//! A [`PhaseField`] stores one `N`-component vector per mesh vertex. The
//! admissible set couples three constraints: every nodal vector lies in the
//! Gibbs simplex (componentwise nonnegative, summing to one), the
//! area-weighted mean equals a prescribed vector, and designated vertices
//! are pinned to full material (`phi_N = 0`) or full void (`phi_N = 1`).
//!
//! Projection works nodewise with a single shared offset: the closest
//! admissible field is `P_G(x_a + c)` per free node, where the offset `c`
//! (a zero-sum vector, acting as the mean constraint's multiplier) is found
//! by a damped semismooth Newton iteration. Pinned nodes are projected onto
//! their restricted simplex first and excluded from the mean balance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::grid::Mesh;
use crate::{Error, Result};

/// Nodal `N`-vector field, node-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    n_components: usize,
    data: Vec<f64>,
}

impl PhaseField {
    pub fn zeros(n_vertices: usize, n_components: usize) -> Self {
        assert!(n_components >= 1);
        Self {
            n_components,
            data: vec![0.0; n_vertices * n_components],
        }
    }

    /// Same vector at every node.
    pub fn constant(n_vertices: usize, values: &[f64]) -> Self {
        let mut field = Self::zeros(n_vertices, values.len());
        for v in 0..n_vertices {
            field.node_mut(v).copy_from_slice(values);
        }
        field
    }

    pub fn from_fn(
        n_vertices: usize,
        n_components: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut field = Self::zeros(n_vertices, n_components);
        for v in 0..n_vertices {
            for i in 0..n_components {
                field.data[v * n_components + i] = f(v, i);
            }
        }
        field
    }

    pub fn n_vertices(&self) -> usize {
        self.data.len() / self.n_components
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn node(&self, v: usize) -> &[f64] {
        &self.data[v * self.n_components..(v + 1) * self.n_components]
    }

    pub fn node_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.data[v * self.n_components..(v + 1) * self.n_components]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of the linear interpolant at a triangle centroid.
    pub fn centroid_value(&self, tri: &[usize; 3], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_components);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.data[tri[0] * self.n_components + i]
                + self.data[tri[1] * self.n_components + i]
                + self.data[tri[2] * self.n_components + i])
                / 3.0;
        }
    }

    /// Area-weighted mean, one value per component.
    pub fn mean(&self, mesh: &Mesh) -> Vec<f64> {
        assert_eq!(self.n_vertices(), mesh.num_vertices());
        let weights = mesh.vertex_weights();
        let total: f64 = weights.iter().sum();
        let mut mean = vec![0.0; self.n_components];
        for v in 0..self.n_vertices() {
            for (i, m) in mean.iter_mut().enumerate() {
                *m += weights[v] * self.data[v * self.n_components + i];
            }
        }
        for m in &mut mean {
            *m /= total;
        }
        mean
    }

    /// `self += alpha * other`, entrywise.
    pub fn axpy(&mut self, alpha: f64, other: &PhaseField) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &PhaseField) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm weighted by the lumped nodal areas; the norm in which
    /// the admissible-set projection is non-expansive.
    pub fn weighted_norm(&self, mesh: &Mesh) -> f64 {
        let weights = mesh.vertex_weights();
        let mut s = 0.0;
        for v in 0..self.n_vertices() {
            let w = weights[v];
            for i in 0..self.n_components {
                let x = self.data[v * self.n_components + i];
                s += w * x * x;
            }
        }
        s.sqrt()
    }
}

/// Exact Euclidean projection onto the unit simplex, in place.
pub fn project_to_simplex(y: &mut [f64]) {
    let n = y.len();
    debug_assert!(n >= 1);
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

/// Vertices pinned to full material (`solid`, `phi_N = 0`) or full void
/// (`void`, `phi = e_N`).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRegions {
    pub solid: Vec<bool>,
    pub void: Vec<bool>,
}

impl FixedRegions {
    pub fn none(n_vertices: usize) -> Self {
        Self {
            solid: vec![false; n_vertices],
            void: vec![false; n_vertices],
        }
    }

    pub fn is_pinned(&self, v: usize) -> bool {
        self.solid[v] || self.void[v]
    }

    fn validate(&self, n_vertices: usize) -> Result<()> {
        if self.solid.len() != n_vertices || self.void.len() != n_vertices {
            return Err(Error::DimensionMismatch(
                "fixed-region masks do not match the mesh".into(),
            ));
        }
        if self.solid.iter().zip(&self.void).any(|(&s, &v)| s && v) {
            return Err(Error::Infeasible(
                "a vertex is pinned to both solid and void".into(),
            ));
        }
        Ok(())
    }
}

/// Mean vector plus fixed regions; the constraint data of the admissible set.
#[derive(Debug, Clone)]
pub struct AdmissibleSet {
    pub mean: Vec<f64>,
    pub fixed: FixedRegions,
}

impl AdmissibleSet {
    pub fn new(mean: Vec<f64>, fixed: FixedRegions) -> Self {
        Self { mean, fixed }
    }

    pub fn unconstrained_mean(mean: Vec<f64>, n_vertices: usize) -> Self {
        Self {
            mean,
            fixed: FixedRegions::none(n_vertices),
        }
    }

    pub fn project(&self, mesh: &Mesh, raw: &PhaseField) -> Result<PhaseField> {
        project_admissible(mesh, raw, &self.mean, &self.fixed)
    }

    /// Projection of componentwise-uniform noise; a cheap admissible sample.
    pub fn sample(&self, mesh: &Mesh, n_components: usize, rng: &mut impl Rng) -> Result<PhaseField> {
        let raw = PhaseField::from_fn(mesh.num_vertices(), n_components, |_, _| {
            rng.random::<f64>()
        });
        self.project(mesh, &raw)
    }

    pub fn is_admissible(&self, mesh: &Mesh, phi: &PhaseField, tol: f64) -> bool {
        let n = phi.n_components();
        for v in 0..phi.n_vertices() {
            let node = phi.node(v);
            if node.iter().any(|&x| x < -tol) {
                return false;
            }
            if (node.iter().sum::<f64>() - 1.0).abs() > tol {
                return false;
            }
            if self.fixed.solid[v] && node[n - 1].abs() > tol {
                return false;
            }
            if self.fixed.void[v] && (node[n - 1] - 1.0).abs() > tol {
                return false;
            }
        }
        let mean = phi.mean(mesh);
        mean.iter()
            .zip(&self.mean)
            .all(|(a, b)| (a - b).abs() <= tol.max(1e-8))
    }
}

const MEAN_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 500;

/// Closest admissible field to `raw` in the area-weighted nodal norm.
pub fn project_admissible(
    mesh: &Mesh,
    raw: &PhaseField,
    mean: &[f64],
    fixed: &FixedRegions,
) -> Result<PhaseField> {
    let n = raw.n_components();
    let nv = raw.n_vertices();
    if nv != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "field has {nv} nodes, mesh has {}",
            mesh.num_vertices()
        )));
    }
    if mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mean vector has {} components, field has {n}",
            mean.len()
        )));
    }
    if mean.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::Infeasible(format!(
            "mean vector {mean:?} must lie in (0,1) componentwise"
        )));
    }
    if (mean.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::Infeasible(format!(
            "mean vector {mean:?} does not sum to one"
        )));
    }
    fixed.validate(nv)?;

    let weights = mesh.vertex_weights();
    let total_weight: f64 = weights.iter().sum();
    let mut phi = raw.clone();

    // Pin fixed nodes first; they do not receive the mean offset.
    let mut pinned_sum = vec![0.0; n];
    let mut free_weight = 0.0;
    let mut free_nodes = Vec::new();
    for v in 0..nv {
        if fixed.void[v] {
            let node = phi.node_mut(v);
            node.fill(0.0);
            node[n - 1] = 1.0;
        } else if fixed.solid[v] {
            let node = phi.node_mut(v);
            node[n - 1] = 0.0;
            project_to_simplex(&mut node[..n - 1]);
            node[n - 1] = 0.0;
        } else {
            free_nodes.push(v);
            free_weight += weights[v];
            continue;
        }
        for (i, s) in pinned_sum.iter_mut().enumerate() {
            *s += weights[v] * phi.node(v)[i];
        }
    }

    // Weighted mean the free nodes must realize.
    let mut target = vec![0.0; n];
    for i in 0..n {
        target[i] = mean[i] * total_weight - pinned_sum[i];
    }
    if free_nodes.is_empty() {
        if target.iter().any(|&t| t.abs() > 1e-10 * total_weight) {
            return Err(Error::Infeasible(
                "all nodes pinned and the pinned mean differs from the prescribed mean".into(),
            ));
        }
        return Ok(phi);
    }
    let mut mbar = vec![0.0; n];
    for i in 0..n {
        mbar[i] = target[i] / free_weight;
        if mbar[i] < -1e-12 || mbar[i] > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!(
                "fixed regions force the free-node mean of component {i} to {:.6}, outside [0, 1]",
                mbar[i]
            )));
        }
        mbar[i] = mbar[i].clamp(0.0, 1.0);
    }

    // Semismooth Newton on the zero-sum offset c.
    let mut c = DVector::<f64>::zeros(n);
    let mut node_buf = vec![0.0; n];
    let mut projected: Vec<f64> = vec![0.0; free_nodes.len() * n];

    let eval = |c: &DVector<f64>, projected: &mut [f64], node_buf: &mut [f64]| -> DVector<f64> {
        let mut mean_free = DVector::zeros(n);
        for (slot, &v) in free_nodes.iter().enumerate() {
            for i in 0..n {
                node_buf[i] = raw.node(v)[i] + c[i];
            }
            project_to_simplex(node_buf);
            projected[slot * n..(slot + 1) * n].copy_from_slice(node_buf);
            for i in 0..n {
                mean_free[i] += weights[v] * node_buf[i];
            }
        }
        mean_free / free_weight
    };

    let mbar_vec = DVector::from_iterator(n, mbar.iter().copied());
    let mut residual = &mbar_vec - eval(&c, &mut projected, &mut node_buf);
    let mut iter = 0;
    while residual.amax() > MEAN_TOL {
        iter += 1;
        if iter > MAX_NEWTON {
            return Err(Error::ProjectionFailure(format!(
                "mean residual {:.3e} after {MAX_NEWTON} Newton steps",
                residual.amax()
            )));
        }
        // Generalized Jacobian of the free-node mean with respect to c:
        // each node contributes I - 11^T/|F| on its free (unclamped) set.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for (slot, &v) in free_nodes.iter().enumerate() {
            let node = &projected[slot * n..(slot + 1) * n];
            let active: Vec<usize> = (0..n).filter(|&i| node[i] > 0.0).collect();
            let k = active.len() as f64;
            let w = weights[v] / free_weight;
            for &i in &active {
                jac[(i, i)] += w;
                for &j in &active {
                    jac[(i, j)] -= w / k;
                }
            }
        }
        let reg = 1e-12 * (1.0 + jac.trace() / n as f64);
        for i in 0..n {
            jac[(i, i)] += reg;
        }
        let mut step = jac
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::ProjectionFailure("singular mean Jacobian".into()))?;
        let shift = step.sum() / n as f64;
        step.add_scalar_mut(-shift);

        // damped update
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &c + alpha * &step;
            let trial_res = &mbar_vec - eval(&trial, &mut projected, &mut node_buf);
            if trial_res.amax() < residual.amax() * (1.0 - 1e-12) || trial_res.amax() <= MEAN_TOL {
                c = trial;
                residual = trial_res;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::ProjectionFailure(format!(
                "stalled at mean residual {:.3e}",
                residual.amax()
            )));
        }
    }

    for (slot, &v) in free_nodes.iter().enumerate() {
        phi.node_mut(v)
            .copy_from_slice(&projected[slot * n..(slot + 1) * n]);
    }
    Ok(phi)
}
