//! Structured triangulated rectangle meshes with tagged boundary segments.
//!
//! The design domain is a rectangle `[0, Lx] x [0, Ly]` split into `nx * ny`
//! grid cells, each cut along the lower-left to upper-right diagonal. Two
//! independent boundary splittings coexist on the same mesh: `DirichletD` /
//! `Neumann0` for the eigenvalue problem and `DirichletC` / `NeumannG` for
//! the static load problem.

use nalgebra::DVector;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    DirichletD,
    Neumann0,
    DirichletC,
    NeumannG,
}

impl BoundaryTag {
    /// 0 for the eigenvalue splitting, 1 for the load splitting. Tags of the
    /// same splitting are mutually exclusive on a side.
    fn splitting(self) -> usize {
        match self {
            BoundaryTag::DirichletD | BoundaryTag::Neumann0 => 0,
            BoundaryTag::DirichletC | BoundaryTag::NeumannG => 1,
        }
    }
}

/// One tagged boundary segment. A geometric edge appears once per splitting
/// it is tagged under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: BoundaryTag,
}

/// Per-side tag assignment, sides ordered bottom, right, top, left.
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub bottom: Vec<BoundaryTag>,
    pub right: Vec<BoundaryTag>,
    pub top: Vec<BoundaryTag>,
    pub left: Vec<BoundaryTag>,
}

impl BoundarySpec {
    /// The same tags on all four sides.
    pub fn uniform(tags: &[BoundaryTag]) -> Self {
        Self {
            bottom: tags.to_vec(),
            right: tags.to_vec(),
            top: tags.to_vec(),
            left: tags.to_vec(),
        }
    }

    /// Cantilever-style split: `left` on the left side, `rest` elsewhere.
    pub fn left_and_rest(left: &[BoundaryTag], rest: &[BoundaryTag]) -> Self {
        Self {
            bottom: rest.to_vec(),
            right: rest.to_vec(),
            top: rest.to_vec(),
            left: left.to_vec(),
        }
    }

    pub fn sides(&self) -> [&[BoundaryTag]; 4] {
        [&self.bottom, &self.right, &self.top, &self.left]
    }

    fn validate(&self) -> Result<()> {
        const NAMES: [&str; 4] = ["bottom", "right", "top", "left"];
        for (side, name) in self.sides().iter().zip(NAMES) {
            for split in 0..2 {
                let count = side.iter().filter(|t| t.splitting() == split).count();
                if count > 1 {
                    return Err(Error::InvalidMesh(format!(
                        "side `{name}` carries {count} tags of the same boundary splitting"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Immutable triangle mesh. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    element_areas: Vec<f64>,
    /// Constant gradients of the three linear shape functions per triangle.
    shape_gradients: Vec<[[f64; 2]; 3]>,
    /// Lumped nodal areas: `w_a = sum_{T owning a} |T| / 3`.
    vertex_weights: Vec<f64>,
}

/// Builds the structured rectangle mesh. Vertices are numbered row-major
/// (x fastest); each cell yields two triangles split along the lower-left to
/// upper-right diagonal, both counterclockwise.
pub fn build_rect_mesh(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    spec: &BoundarySpec,
) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!(
            "cell counts must be positive, got {nx} x {ny}"
        )));
    }
    if !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "side lengths must be positive, got {lx} x {ly}"
        )));
    }
    spec.validate()?;

    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * hx, j as f64 * hy]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let ll = vid(i, j);
            let lr = vid(i + 1, j);
            let ur = vid(i + 1, j + 1);
            let ul = vid(i, j + 1);
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }

    let mut boundary_edges = Vec::new();
    let mut tag_side = |edges: &[(usize, usize)], tags: &[BoundaryTag]| {
        for &tag in tags {
            for &(a, b) in edges {
                boundary_edges.push(BoundaryEdge { a, b, tag });
            }
        }
    };
    let bottom: Vec<_> = (0..nx).map(|i| (vid(i, 0), vid(i + 1, 0))).collect();
    let right: Vec<_> = (0..ny).map(|j| (vid(nx, j), vid(nx, j + 1))).collect();
    let top: Vec<_> = (0..nx).map(|i| (vid(i + 1, ny), vid(i, ny))).collect();
    let left: Vec<_> = (0..ny).map(|j| (vid(0, j + 1), vid(0, j))).collect();
    tag_side(&bottom, &spec.bottom);
    tag_side(&right, &spec.right);
    tag_side(&top, &spec.top);
    tag_side(&left, &spec.left);

    let mut element_areas = Vec::with_capacity(triangles.len());
    let mut shape_gradients = Vec::with_capacity(triangles.len());
    let mut vertex_weights = vec![0.0; vertices.len()];
    for tri in &triangles {
        let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if area <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "triangle {tri:?} has nonpositive area {area}"
            )));
        }
        element_areas.push(area);
        let mut grads = [[0.0; 2]; 3];
        for k in 0..3 {
            let b = p[(k + 1) % 3];
            let c = p[(k + 2) % 3];
            grads[k] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
        }
        shape_gradients.push(grads);
        for &v in tri {
            vertex_weights[v] += area / 3.0;
        }
    }

    Ok(Mesh {
        nx,
        ny,
        lx,
        ly,
        vertices,
        triangles,
        boundary_edges,
        element_areas,
        shape_gradients,
        vertex_weights,
    })
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.lx, self.ly)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.element_areas
    }

    pub fn shape_gradients(&self) -> &[[[f64; 2]; 3]] {
        &self.shape_gradients
    }

    /// Lumped nodal quadrature weights; they sum to the domain area.
    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    pub fn total_area(&self) -> f64 {
        self.element_areas.iter().sum()
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let a = self.vertices[e.a];
        let b = self.vertices[e.b];
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Vertices inside the closed axis-aligned box `[x0, x1] x [y0, y1]`.
    pub fn vertices_in_box(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<usize> {
        let eps = 1e-12 * (self.lx + self.ly);
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p[0] >= x0 - eps && p[0] <= x1 + eps && p[1] >= y0 - eps && p[1] <= y1 + eps
            })
            .map(|(v, _)| v)
            .collect()
    }
}

/// Partition of the `2 * num_vertices` displacement dofs into free and
/// Dirichlet-fixed sets. Dof `2v + c` is component `c` of vertex `v`.
#[derive(Debug, Clone)]
pub struct DofMap {
    free_dofs: Vec<usize>,
    fixed_dofs: Vec<usize>,
    full_to_free: Vec<Option<usize>>,
}

/// Fixes both displacement components of every vertex incident to an edge
/// carrying `tag`.
pub fn build_dof_map(mesh: &Mesh, tag: BoundaryTag) -> DofMap {
    build_dof_map_with_fixed(mesh, Some(tag), &[])
}

/// Like [`build_dof_map`] but also pins `extra_vertices`; used to carve
/// internal supports out of a mesh.
pub fn build_dof_map_with_fixed(
    mesh: &Mesh,
    tag: Option<BoundaryTag>,
    extra_vertices: &[usize],
) -> DofMap {
    let nv = mesh.num_vertices();
    let mut fixed_vertex = vec![false; nv];
    if let Some(tag) = tag {
        for e in mesh.edges_with_tag(tag) {
            fixed_vertex[e.a] = true;
            fixed_vertex[e.b] = true;
        }
    }
    for &v in extra_vertices {
        fixed_vertex[v] = true;
    }
    let mut free_dofs = Vec::new();
    let mut fixed_dofs = Vec::new();
    let mut full_to_free = vec![None; 2 * nv];
    for v in 0..nv {
        for c in 0..2 {
            let dof = 2 * v + c;
            if fixed_vertex[v] {
                fixed_dofs.push(dof);
            } else {
                full_to_free[dof] = Some(free_dofs.len());
                free_dofs.push(dof);
            }
        }
    }
    DofMap {
        free_dofs,
        fixed_dofs,
        full_to_free,
    }
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed_dofs.len()
    }

    pub fn n_total(&self) -> usize {
        self.free_dofs.len() + self.fixed_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    pub fn free_index(&self, full_dof: usize) -> Option<usize> {
        self.full_to_free[full_dof]
    }

    /// Extracts the free components of a full-length vector.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        assert_eq!(full.len(), self.n_total(), "restrict dimension mismatch");
        DVector::from_iterator(self.free_dofs.len(), self.free_dofs.iter().map(|&d| full[d]))
    }

    /// Scatters a free-dof vector into a full-length vector, zero on fixed
    /// dofs.
    pub fn expand(&self, free: &DVector<f64>) -> DVector<f64> {
        assert_eq!(free.len(), self.n_free(), "expand dimension mismatch");
        let mut full = DVector::zeros(self.n_total());
        for (k, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[k];
        }
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_dirichlet() -> BoundarySpec {
        BoundarySpec::uniform(&[BoundaryTag::DirichletD])
    }

    #[test]
    fn unit_square_one_cell() {
        let mesh = build_rect_mesh(1, 1, 1.0, 1.0, &all_dirichlet()).unwrap();
        assert_eq!(mesh.num_triangles(), 2);
        assert_eq!(mesh.num_vertices(), 4);
        for &a in mesh.element_areas() {
            assert_relative_eq!(a, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_by_two_counts() {
        let mesh = build_rect_mesh(2, 2, 1.0, 1.0, &all_dirichlet()).unwrap();
        assert_eq!(mesh.num_triangles(), 8);
        assert_eq!(mesh.num_vertices(), 9);
    }

    #[test]
    fn areas_sum_to_domain_area() {
        let mesh = build_rect_mesh(4, 2, 2.0, 1.0, &all_dirichlet()).unwrap();
        assert_relative_eq!(mesh.total_area(), 2.0, max_relative = 1e-12);
        let weight_sum: f64 = mesh.vertex_weights().iter().sum();
        assert_relative_eq!(weight_sum, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(build_rect_mesh(0, 1, 1.0, 1.0, &all_dirichlet()).is_err());
        assert!(build_rect_mesh(1, 1, -1.0, 1.0, &all_dirichlet()).is_err());
        assert!(build_rect_mesh(1, 1, 1.0, 0.0, &all_dirichlet()).is_err());
    }

    #[test]
    fn rejects_conflicting_side_tags() {
        let spec = BoundarySpec::uniform(&[BoundaryTag::DirichletD, BoundaryTag::Neumann0]);
        assert!(build_rect_mesh(1, 1, 1.0, 1.0, &spec).is_err());
    }

    #[test]
    fn shape_gradients_sum_to_zero_and_reproduce_identity() {
        let mesh = build_rect_mesh(3, 2, 1.5, 1.0, &all_dirichlet()).unwrap();
        for (t, grads) in mesh.shape_gradients().iter().enumerate() {
            for c in 0..2 {
                let s: f64 = grads.iter().map(|g| g[c]).sum();
                assert!(s.abs() <= 1e-12, "gradient sum {s} in triangle {t}");
            }
            // sum_k x_k (grad chi_k)^T = identity for linear elements
            let tri = mesh.triangles()[t];
            let mut m = [[0.0; 2]; 2];
            for k in 0..3 {
                let p = mesh.vertices()[tri[k]];
                for r in 0..2 {
                    for c in 0..2 {
                        m[r][c] += p[r] * grads[k][c];
                    }
                }
            }
            for r in 0..2 {
                for c in 0..2 {
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert!((m[r][c] - expect).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dof_map_left_edge() {
        let mesh = build_rect_mesh(1, 1, 1.0, 1.0, &BoundarySpec::left_and_rest(
            &[BoundaryTag::DirichletD],
            &[BoundaryTag::Neumann0],
        ))
        .unwrap();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        assert_eq!(map.n_fixed(), 4);
        assert_eq!(map.n_free(), 4);
    }

    #[test]
    fn dof_map_no_tagged_edges() {
        let mesh = build_rect_mesh(2, 2, 1.0, 1.0, &BoundarySpec::uniform(&[BoundaryTag::Neumann0]))
            .unwrap();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        assert_eq!(map.n_fixed(), 0);
        assert_eq!(map.n_free(), 18);
    }

    #[test]
    fn dof_map_fully_clamped_two_by_two() {
        let mesh = build_rect_mesh(2, 2, 1.0, 1.0, &all_dirichlet()).unwrap();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        // only the center vertex stays free
        assert_eq!(map.n_free(), 2);
        assert_eq!(map.free_dofs(), &[8, 9]);
    }

    #[test]
    fn restrict_expand_round_trip() {
        let mesh = build_rect_mesh(2, 1, 1.0, 1.0, &all_dirichlet()).unwrap();
        let map = build_dof_map(&mesh, BoundaryTag::DirichletD);
        let full = DVector::from_fn(map.n_total(), |i, _| i as f64);
        let free = map.restrict(&full);
        let back = map.expand(&free);
        for &d in map.free_dofs() {
            assert_eq!(back[d], full[d]);
        }
        for &d in map.fixed_dofs() {
            assert_eq!(back[d], 0.0);
        }
    }

    #[test]
    fn boundary_edges_carry_one_tag_per_splitting() {
        let spec = BoundarySpec::left_and_rest(
            &[BoundaryTag::DirichletD, BoundaryTag::DirichletC],
            &[BoundaryTag::Neumann0, BoundaryTag::NeumannG],
        );
        let mesh = build_rect_mesh(3, 3, 1.0, 1.0, &spec).unwrap();
        use std::collections::HashMap;
        let mut seen: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for e in mesh.boundary_edges() {
            let key = (e.a.min(e.b), e.a.max(e.b), e.tag.splitting());
            *seen.entry(key).or_insert(0) += 1;
        }
        assert!(seen.values().all(|&c| c == 1));
    }
}
