//! Galerkin finite elements for the volume terms: the transient residual,
//! its exact sparse Jacobian, and Dirichlet row replacement, on tet4/hex8
//! meshes with first-order Lagrange bases.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::geometry::Point3;
use crate::mesh::{ElementKind, VolumeMesh};
use crate::quadrature::{gauss_legendre, TET4_POINTS};

/// Node index <-> global DoF index; first-order elements make this the
/// identity over the mesh nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    n_dofs: usize,
}

impl DofMap {
    pub fn new(mesh: &VolumeMesh) -> Self {
        DofMap {
            n_dofs: mesh.n_nodes(),
        }
    }

    #[inline]
    pub fn dof(&self, node: usize) -> usize {
        debug_assert!(node < self.n_dofs);
        node
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }
}

/// Scalar material property, constant or piecewise linear in temperature
/// (linear interpolation, constant extrapolation).
#[derive(Debug, Clone)]
pub enum MaterialProp {
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

impl MaterialProp {
    /// Value and temperature derivative at T.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            MaterialProp::Constant(v) => (*v, 0.0),
            MaterialProp::Table(rows) => {
                assert!(!rows.is_empty(), "empty material table");
                if t <= rows[0].0 {
                    return (rows[0].1, 0.0);
                }
                if t >= rows[rows.len() - 1].0 {
                    return (rows[rows.len() - 1].1, 0.0);
                }
                let k = rows.partition_point(|&(tt, _)| tt <= t).min(rows.len() - 1);
                let (t0, v0) = rows[k - 1];
                let (t1, v1) = rows[k];
                let slope = (v1 - v0) / (t1 - t0);
                (v0 + slope * (t - t0), slope)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Material {
    /// Density in kg/m^3.
    pub rho: f64,
    /// Specific heat in J/(kg K).
    pub cp: MaterialProp,
    /// Conductivity in W/(m K).
    pub k: MaterialProp,
}

impl Material {
    pub fn constant(rho: f64, cp: f64, k: f64) -> Self {
        Material {
            rho,
            cp: MaterialProp::Constant(cp),
            k: MaterialProp::Constant(k),
        }
    }
}

/// Compressed-row sparse matrix over the FEM node-adjacency pattern.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Symmetric sparsity pattern from element connectivity.
    pub fn fem_pattern(mesh: &VolumeMesh) -> Self {
        let n = mesh.n_nodes();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in &mesh.elements {
            let nodes = el.nodes();
            for &a in nodes {
                for &b in nodes {
                    neighbors[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
            col_idx.extend_from_slice(nb);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn zero_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k] += v,
            Err(_) => panic!("entry ({i}, {j}) outside the FEM sparsity pattern"),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "sparse matvec dimension mismatch");
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// Replace row i by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
        }
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let mut trips = Vec::with_capacity(self.values.len());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                trips.push(Triplet::new(i, self.col_idx[k], self.values[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .expect("valid triplets from CSR")
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut d = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[k])] = self.values[k];
            }
        }
        d
    }
}

/// Values and physical gradients of the element basis at one quadrature
/// point, with the integration weight (including the Jacobian).
struct ElemQp {
    weight: f64,
    shape: [f64; 8],
    grad: [[f64; 3]; 8],
    n: usize,
}

fn tet_qps(p: &[Point3]) -> Vec<ElemQp> {
    let d1 = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let d2 = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
    let d3 = [p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]];
    let det = d1[0] * (d2[1] * d3[2] - d2[2] * d3[1]) - d1[1] * (d2[0] * d3[2] - d2[2] * d3[0])
        + d1[2] * (d2[0] * d3[1] - d2[1] * d3[0]);
    let vol = det / 6.0;
    // constant gradients: rows of the inverse Jacobian against barycentric
    let inv = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let g1 = inv(d2, d3);
    let g2 = inv(d3, d1);
    let g3 = inv(d1, d2);
    let mut grad = [[0.0; 3]; 8];
    for d in 0..3 {
        grad[1][d] = g1[d] / det;
        grad[2][d] = g2[d] / det;
        grad[3][d] = g3[d] / det;
        grad[0][d] = -(grad[1][d] + grad[2][d] + grad[3][d]);
    }
    TET4_POINTS
        .iter()
        .map(|bary| {
            let mut shape = [0.0; 8];
            shape[..4].copy_from_slice(bary);
            ElemQp {
                weight: 0.25 * vol,
                shape,
                grad,
                n: 4,
            }
        })
        .collect()
}

fn hex_qps(p: &[Point3]) -> Vec<ElemQp> {
    const SIGNS: [[f64; 3]; 8] = [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ];
    let (gx, gw) = gauss_legendre(2);
    let mut out = Vec::with_capacity(8);
    for (i, &xi) in gx.iter().enumerate() {
        for (j, &eta) in gx.iter().enumerate() {
            for (k, &zeta) in gx.iter().enumerate() {
                let mut shape = [0.0; 8];
                let mut dref = [[0.0; 3]; 8];
                for a in 0..8 {
                    let [sx, sy, sz] = SIGNS[a];
                    shape[a] = 0.125 * (1.0 + sx * xi) * (1.0 + sy * eta) * (1.0 + sz * zeta);
                    dref[a] = [
                        0.125 * sx * (1.0 + sy * eta) * (1.0 + sz * zeta),
                        0.125 * (1.0 + sx * xi) * sy * (1.0 + sz * zeta),
                        0.125 * (1.0 + sx * xi) * (1.0 + sy * eta) * sz,
                    ];
                }
                let mut jac = [[0.0f64; 3]; 3];
                for a in 0..8 {
                    for r in 0..3 {
                        for c in 0..3 {
                            jac[r][c] += dref[a][r] * p[a][c];
                        }
                    }
                }
                let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                    - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                    + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
                let mut inv = [[0.0f64; 3]; 3];
                inv[0][0] = (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) / det;
                inv[0][1] = (jac[0][2] * jac[2][1] - jac[0][1] * jac[2][2]) / det;
                inv[0][2] = (jac[0][1] * jac[1][2] - jac[0][2] * jac[1][1]) / det;
                inv[1][0] = (jac[1][2] * jac[2][0] - jac[1][0] * jac[2][2]) / det;
                inv[1][1] = (jac[0][0] * jac[2][2] - jac[0][2] * jac[2][0]) / det;
                inv[1][2] = (jac[0][2] * jac[1][0] - jac[0][0] * jac[1][2]) / det;
                inv[2][0] = (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]) / det;
                inv[2][1] = (jac[0][1] * jac[2][0] - jac[0][0] * jac[2][1]) / det;
                inv[2][2] = (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]) / det;
                let mut grad = [[0.0; 3]; 8];
                for a in 0..8 {
                    for d in 0..3 {
                        grad[a][d] = inv[0][d] * dref[a][0]
                            + inv[1][d] * dref[a][1]
                            + inv[2][d] * dref[a][2];
                    }
                }
                out.push(ElemQp {
                    weight: gw[i] * gw[j] * gw[k] * det,
                    shape,
                    grad,
                    n: 8,
                });
            }
        }
    }
    out
}

fn element_qps(mesh: &VolumeMesh, e: usize) -> Vec<ElemQp> {
    let el = &mesh.elements[e];
    let p: Vec<Point3> = el.nodes().iter().map(|&n| mesh.nodes[n]).collect();
    match el.kind {
        ElementKind::Tet4 => tet_qps(&p),
        ElementKind::Hex8 => hex_qps(&p),
    }
}

/// Precomputed quadrature geometry (weights, shape values, physical
/// gradients) for every element; temperature independent, so one cache
/// serves all assemblies of a run.
pub struct ElementQuadCache {
    offsets: Vec<usize>,
    qps: Vec<ElemQp>,
}

impl ElementQuadCache {
    pub fn build(mesh: &VolumeMesh) -> Self {
        let mut offsets = Vec::with_capacity(mesh.n_elements() + 1);
        let mut qps = Vec::new();
        offsets.push(0);
        for e in 0..mesh.n_elements() {
            qps.extend(element_qps(mesh, e));
            offsets.push(qps.len());
        }
        ElementQuadCache { offsets, qps }
    }

    fn elem(&self, e: usize) -> &[ElemQp] {
        &self.qps[self.offsets[e]..self.offsets[e + 1]]
    }
}

/// Volume residual of the implicit Euler step: mass + conduction - source,
/// with material properties evaluated at the quadrature-point temperature
/// of the new iterate. `dt` may be infinite for a steady problem.
pub fn assemble_volume_residual(
    mesh: &VolumeMesh,
    mat: &Material,
    t_new: &[f64],
    t_old: &[f64],
    dt: f64,
    source: f64,
) -> Vec<f64> {
    let cache = ElementQuadCache::build(mesh);
    assemble_volume_residual_cached(&cache, mesh, mat, t_new, t_old, dt, source)
}

/// [`assemble_volume_residual`] against a prebuilt quadrature cache.
pub fn assemble_volume_residual_cached(
    cache: &ElementQuadCache,
    mesh: &VolumeMesh,
    mat: &Material,
    t_new: &[f64],
    t_old: &[f64],
    dt: f64,
    source: f64,
) -> Vec<f64> {
    assert!(dt > 0.0, "time step must be positive");
    let n = mesh.n_nodes();
    assert_eq!(t_new.len(), n);
    assert_eq!(t_old.len(), n);
    assert!(
        t_new.iter().all(|v| v.is_finite()),
        "non-finite temperature input"
    );
    let dt_inv = if dt.is_finite() { 1.0 / dt } else { 0.0 };
    let mut res = vec![0.0; n];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.elements[e].nodes();
        for qp in cache.elem(e) {
            let mut t_qp = 0.0;
            let mut told_qp = 0.0;
            let mut grad_t = [0.0f64; 3];
            for (a, &na) in nodes.iter().enumerate() {
                t_qp += qp.shape[a] * t_new[na];
                told_qp += qp.shape[a] * t_old[na];
                for d in 0..3 {
                    grad_t[d] += qp.grad[a][d] * t_new[na];
                }
            }
            let (cp, _) = mat.cp.eval(t_qp);
            let (k, _) = mat.k.eval(t_qp);
            let mass = mat.rho * cp * (t_qp - told_qp) * dt_inv;
            for a in 0..qp.n {
                let flux = k
                    * (grad_t[0] * qp.grad[a][0]
                        + grad_t[1] * qp.grad[a][1]
                        + grad_t[2] * qp.grad[a][2]);
                res[nodes[a]] += qp.weight * (mass * qp.shape[a] + flux - source * qp.shape[a]);
            }
        }
    }
    res
}

/// Exact Jacobian of [`assemble_volume_residual`] with respect to `t_new`,
/// including the material derivative chain terms.
pub fn assemble_jsparse(
    mesh: &VolumeMesh,
    mat: &Material,
    t_new: &[f64],
    t_old: &[f64],
    dt: f64,
    jsp: &mut SparseMatrix,
) {
    let cache = ElementQuadCache::build(mesh);
    assemble_jsparse_cached(&cache, mesh, mat, t_new, t_old, dt, jsp)
}

/// [`assemble_jsparse`] against a prebuilt quadrature cache.
pub fn assemble_jsparse_cached(
    cache: &ElementQuadCache,
    mesh: &VolumeMesh,
    mat: &Material,
    t_new: &[f64],
    t_old: &[f64],
    dt: f64,
    jsp: &mut SparseMatrix,
) {
    assert!(dt > 0.0, "time step must be positive");
    let dt_inv = if dt.is_finite() { 1.0 / dt } else { 0.0 };
    jsp.zero_values();
    for e in 0..mesh.n_elements() {
        let nodes = mesh.elements[e].nodes();
        for qp in cache.elem(e) {
            let mut t_qp = 0.0;
            let mut told_qp = 0.0;
            let mut grad_t = [0.0f64; 3];
            for (a, &na) in nodes.iter().enumerate() {
                t_qp += qp.shape[a] * t_new[na];
                told_qp += qp.shape[a] * t_old[na];
                for d in 0..3 {
                    grad_t[d] += qp.grad[a][d] * t_new[na];
                }
            }
            let (cp, dcp) = mat.cp.eval(t_qp);
            let (k, dk) = mat.k.eval(t_qp);
            let dtemp = t_qp - told_qp;
            for a in 0..qp.n {
                let gt_ga = grad_t[0] * qp.grad[a][0]
                    + grad_t[1] * qp.grad[a][1]
                    + grad_t[2] * qp.grad[a][2];
                for b in 0..qp.n {
                    // d(mass)/dT_b + d(flux)/dT_b
                    let mass = mat.rho
                        * (cp * qp.shape[b] + dcp * qp.shape[b] * dtemp)
                        * dt_inv
                        * qp.shape[a];
                    let flux = k
                        * (qp.grad[b][0] * qp.grad[a][0]
                            + qp.grad[b][1] * qp.grad[a][1]
                            + qp.grad[b][2] * qp.grad[a][2])
                        + dk * qp.shape[b] * gt_ga;
                    jsp.add(nodes[a], nodes[b], qp.weight * (mass + flux));
                }
            }
        }
    }
}

/// Dirichlet rows: residual_N = T_N - value, Jacobian row = identity.
pub fn apply_dirichlet(
    jsp: Option<&mut SparseMatrix>,
    residual: Option<&mut [f64]>,
    bcs: &[(usize, f64)],
    t: &[f64],
) {
    if let Some(res) = residual {
        for &(node, value) in bcs {
            res[node] = t[node] - value;
        }
    }
    if let Some(j) = jsp {
        for &(node, _) in bcs {
            j.set_identity_row(node);
        }
    }
}
