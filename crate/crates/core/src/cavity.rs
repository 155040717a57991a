//! The radiation cavity operator: reflection matrix, nodal projection,
//! reflected row sums, and the actions of S and the cavity Jacobian.
//!
//! The operator is built once per simulation (the view factor matrix and
//! the reflection factorization are temperature independent) and then
//! applied many times inside Newton-Krylov iterations. In low-rank mode
//! the inverse of the reflection matrix is never formed, only its action
//! through the hierarchical LU; Direct mode inverts it explicitly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::cluster::{build_block_tree, build_index_tree};
use crate::fem::SparseMatrix;
use crate::hmatrix::{assemble_hmatrix_symmetric, hlu_factorize, HMatrix, HluFactors, StorageReport};
use crate::mesh::SurfaceMesh;
use crate::viewfactor::{
    assemble_dense_f, compute_row_sums, scale_closed_cavity_dense, viewfactor_entry, QuadPolicy,
    RowSums,
};

/// Stefan-Boltzmann constant in W/(m^2 K^4).
pub const SIGMA_SB: f64 = 5.669e-9;

#[derive(Debug, thiserror::Error)]
pub enum CavityError {
    #[error(transparent)]
    ViewFactor(#[from] crate::viewfactor::VfError),
    #[error(transparent)]
    Structure(#[from] crate::hmatrix::HError),
    #[error(transparent)]
    Factorization(#[from] crate::hmatrix::HluError),
    #[error("emissivity must lie in (0, 1], got {0}")]
    BadEmissivity(f64),
    #[error("dense cavity storage needs {required} bytes, budget is {budget}")]
    MemoryBudget { required: u64, budget: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CavityMode {
    /// Rows of F rescaled so every non-isolated facet redistributes all
    /// of its radiation inside the enclosure.
    Closed,
    /// Unscaled F; the view-factor deficit radiates to an ambient sink.
    Open { t_ambient: f64 },
}

/// Nodal radiation power eta_M = T_M^4.
#[derive(Debug, Clone)]
pub struct NodalPower {
    pub eta: Vec<f64>,
}

impl NodalPower {
    pub fn from_temperatures(t: &[f64]) -> Self {
        NodalPower {
            eta: t.iter().map(|&v| v * v * v * v).collect(),
        }
    }
}

/// Sparse facet-from-node averaging operator P with rows summing to one.
#[derive(Debug, Clone)]
pub struct Projection {
    pub n_facets: usize,
    pub n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Projection {
    /// w = P eta: facet averages of a nodal field.
    pub fn apply(&self, nodal: &[f64]) -> Vec<f64> {
        assert_eq!(nodal.len(), self.n_nodes, "projection dimension mismatch");
        let mut out = vec![0.0; self.n_facets];
        for i in 0..self.n_facets {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * nodal[self.col_idx[k]];
            }
            out[i] = acc;
        }
        out
    }

    /// q = P^T y: scatter facet values back to nodes.
    pub fn apply_transpose(&self, facet: &[f64]) -> Vec<f64> {
        assert_eq!(facet.len(), self.n_facets, "projection dimension mismatch");
        let mut out = vec![0.0; self.n_nodes];
        for i in 0..self.n_facets {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.values[k] * facet[i];
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }
}

/// P_iM = (1/A_i) int_{facet i} phi_M dS by facet quadrature; the row
/// support is the facet's vertex set and each row sums to one.
pub fn build_projection(surf: &SurfaceMesh) -> Projection {
    let nodes = &surf.parent.nodes;
    let n_nodes = surf.parent.n_nodes();
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for f in &surf.facets {
        let ids = f.vertex_ids.as_slice();
        let mut weights = vec![0.0; ids.len()];
        for qp in f.quadrature(nodes, 2) {
            for (a, w) in weights.iter_mut().enumerate() {
                *w += qp.weight * qp.shape[a];
            }
        }
        for (a, &node) in ids.iter().enumerate() {
            col_idx.push(node);
            values.push(weights[a] / f.area);
        }
        row_ptr.push(col_idx.len());
    }
    Projection {
        n_facets: surf.n_facets(),
        n_nodes,
        row_ptr,
        col_idx,
        values,
    }
}

/// View factor matrix in either storage mode.
#[derive(Debug, Clone)]
pub enum FMatrix {
    Dense(Mat<f64>),
    Lowrank(HMatrix),
}

impl FMatrix {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FMatrix::Dense(f) => dense_matvec(f, x),
            FMatrix::Lowrank(h) => h.matvec(x),
        }
    }

    pub fn storage_report(&self) -> StorageReport {
        match self {
            FMatrix::Dense(f) => StorageReport {
                bytes: 8 * (f.nrows() * f.ncols()) as u64,
                max_rank: 0,
                mean_rank: 0.0,
                n_dense_leaves: 1,
                n_lowrank_leaves: 0,
            },
            FMatrix::Lowrank(h) => h.storage_report(),
        }
    }
}

/// Action of C^-1 for the reflection matrix.
#[derive(Debug)]
pub enum ReflectionSolver {
    /// Explicitly inverted dense reflection matrix (Direct mode).
    DenseInverse(Mat<f64>),
    /// Hierarchical LU factors (low-rank mode).
    Hlu(HluFactors),
}

/// Build parameters shared by both cavity paths.
#[derive(Debug, Clone)]
pub struct CavityParams {
    pub emissivity: f64,
    pub sigma: f64,
    pub mode: CavityMode,
    pub quad: QuadPolicy,
    /// Truncation tolerance for the low-rank path.
    pub eps_rel: f64,
    /// Minimal cluster size for the index tree.
    pub n_min: usize,
    /// Admissibility constant.
    pub adm_const: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        CavityParams {
            emissivity: 0.8,
            sigma: SIGMA_SB,
            mode: CavityMode::Closed,
            quad: QuadPolicy::default(),
            eps_rel: 1e-3,
            n_min: 100,
            adm_const: 2.0,
        }
    }
}

/// Wall-clock phases recorded while building the operator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CavityBuildTimings {
    pub build_f_s: f64,
    pub build_lu_s: f64,
}

/// Seconds accumulator that stays shareable across threads.
#[derive(Debug, Default)]
struct SecondsCell(AtomicU64);

impl SecondsCell {
    fn add(&self, secs: f64) {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = f64::from_bits(cur) + secs;
            match self.0.compare_exchange_weak(
                cur,
                next.to_bits(),
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(v) => cur = v,
            }
        }
    }

    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }
}

/// The assembled radiation-cavity operator.
#[derive(Debug)]
pub struct CavityOperator {
    pub f: FMatrix,
    pub solver: ReflectionSolver,
    pub emissivity: Vec<f64>,
    pub areas: Vec<f64>,
    /// Lambda_ii = (1 - eps_i) / A_i.
    pub lambda: Vec<f64>,
    pub projection: Projection,
    /// Row sums r = R 1 of the reflected-exchange tensor.
    pub r: Vec<f64>,
    /// Clamped view-factor row sums (before closed-cavity rescaling).
    pub rowsums: RowSums,
    pub sigma: f64,
    pub mode: CavityMode,
    apply_lu_seconds: SecondsCell,
}

impl CavityOperator {
    pub fn n_facets(&self) -> usize {
        self.areas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.projection.n_nodes
    }

    /// Seconds spent applying the reflection solve so far.
    pub fn apply_lu_seconds(&self) -> f64 {
        self.apply_lu_seconds.get()
    }

    /// y = C^-1 x through the mode's solver.
    pub fn solve_reflection(&self, x: &[f64]) -> Vec<f64> {
        let t0 = Instant::now();
        let y = match &self.solver {
            ReflectionSolver::DenseInverse(inv) => dense_matvec(inv, x),
            ReflectionSolver::Hlu(f) => f.solve(x),
        };
        self.apply_lu_seconds.add(t0.elapsed().as_secs_f64());
        y
    }

    /// Q = P^T Rbar P eta: the nodal radiation flux term.
    pub fn apply_s(&self, eta: &NodalPower) -> Vec<f64> {
        let w = self.projection.apply(&eta.eta);
        let dw: Vec<f64> = w
            .iter()
            .zip(&self.emissivity)
            .map(|(v, e)| v * e)
            .collect();
        let c_inv = self.solve_reflection(&dw);
        let fv = self.f.matvec(&c_inv);
        let y: Vec<f64> = (0..self.n_facets())
            .map(|i| self.sigma * self.emissivity[i] * fv[i] - self.r[i] * w[i])
            .collect();
        self.projection.apply_transpose(&y)
    }

    /// Action of the cavity Jacobian: apply_s with eta = 4 T^3 (.) x.
    pub fn apply_jcav(&self, t: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(t.len(), x.len(), "apply_jcav dimension mismatch");
        let eta = NodalPower {
            eta: t
                .iter()
                .zip(x.iter())
                .map(|(&ti, &xi)| 4.0 * ti * ti * ti * xi)
                .collect(),
        };
        self.apply_s(&eta)
    }

    /// Open-cavity ambient flux residual B_N and its sparse Jacobian
    /// contribution; both vanish for a perfectly closed cavity.
    pub fn ambient_residual(&self, surf: &SurfaceMesh, t: &[f64]) -> Vec<f64> {
        let t_ambient = match self.mode {
            CavityMode::Open { t_ambient } => t_ambient,
            CavityMode::Closed => return vec![0.0; t.len()],
        };
        let eta_inf = t_ambient.powi(4);
        let nodes = &surf.parent.nodes;
        let mut out = vec![0.0; t.len()];
        for (i, f) in surf.facets.iter().enumerate() {
            let deficit = 1.0 - self.rowsums.c[i];
            if deficit == 0.0 {
                continue;
            }
            let ids = f.vertex_ids.as_slice();
            for qp in f.quadrature(nodes, 3) {
                let mut t_qp = 0.0;
                for (a, &node) in ids.iter().enumerate() {
                    t_qp += qp.shape[a] * t[node];
                }
                let val = deficit * (t_qp.powi(4) - eta_inf);
                for (a, &node) in ids.iter().enumerate() {
                    out[node] += qp.weight * val * qp.shape[a];
                }
            }
        }
        out
    }

    /// d(ambient residual)/dT assembled into the FEM sparsity pattern.
    pub fn ambient_jacobian_into(&self, surf: &SurfaceMesh, t: &[f64], jsp: &mut SparseMatrix) {
        if matches!(self.mode, CavityMode::Closed) {
            return;
        }
        let nodes = &surf.parent.nodes;
        for (i, f) in surf.facets.iter().enumerate() {
            let deficit = 1.0 - self.rowsums.c[i];
            if deficit == 0.0 {
                continue;
            }
            let ids = f.vertex_ids.as_slice();
            for qp in f.quadrature(nodes, 3) {
                let mut t_qp = 0.0;
                for (a, &node) in ids.iter().enumerate() {
                    t_qp += qp.shape[a] * t[node];
                }
                let factor = deficit * 4.0 * t_qp.powi(3);
                for (a, &na) in ids.iter().enumerate() {
                    for (b, &nb) in ids.iter().enumerate() {
                        jsp.add(na, nb, qp.weight * factor * qp.shape[a] * qp.shape[b]);
                    }
                }
            }
        }
    }

    pub fn storage_report(&self) -> StorageReport {
        self.f.storage_report()
    }
}

fn dense_matvec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), m.ncols(), "dense matvec dimension mismatch");
    let xc = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let mut y = Mat::<f64>::zeros(m.nrows(), 1);
    faer::linalg::matmul::matmul(
        y.as_mut(),
        faer::Accum::Replace,
        m.as_ref(),
        xc.as_ref(),
        1.0,
        faer::Par::rayon(0),
    );
    (0..m.nrows()).map(|i| y[(i, 0)]).collect()
}

fn validated_emissivity(surf: &SurfaceMesh, value: f64) -> Result<Vec<f64>, CavityError> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(CavityError::BadEmissivity(value));
    }
    Ok(vec![value; surf.n_facets()])
}

/// Row sums r = R 1 with R = sigma D_eps F C^-1 D_eps, via one solve and
/// one matvec against the all-ones vector.
pub fn reflected_row_sums(
    f: &FMatrix,
    solve: impl FnOnce(&[f64]) -> Vec<f64>,
    emissivity: &[f64],
    sigma: f64,
) -> Vec<f64> {
    let eps_vec: Vec<f64> = emissivity.to_vec(); // D_eps * ones
    let c_inv = solve(&eps_vec);
    let fv = f.matvec(&c_inv);
    fv.iter()
        .zip(emissivity)
        .map(|(v, e)| sigma * e * v)
        .collect()
}

/// Reflection matrix C = I - Lambda F in the hierarchical format: every
/// leaf of F is row-scaled by -Lambda and the identity lands on the dense
/// diagonal leaves without touching the block structure.
pub fn build_reflection(
    f: &HMatrix,
    emissivity: &[f64],
    areas: &[f64],
) -> Result<HMatrix, CavityError> {
    let mut c = f.clone();
    let neg_lambda: Vec<f64> = emissivity
        .iter()
        .zip(areas)
        .map(|(e, a)| -(1.0 - e) / a)
        .collect();
    c.scale_rows(&neg_lambda);
    c.add_identity()?;
    Ok(c)
}

/// Closed-cavity row scaling of a hierarchical view factor matrix: rows
/// with a nonzero clamped sum are divided by it, isolated rows stay put.
pub fn scale_closed_cavity_lowrank(f: &mut HMatrix, rowsums: &RowSums) {
    let factors: Vec<f64> = rowsums
        .c
        .iter()
        .map(|&c| if c != 0.0 { 1.0 / c } else { 1.0 })
        .collect();
    f.scale_rows(&factors);
}

/// Assemble the low-rank cavity operator: hierarchical F, row-sum
/// processing, reflection matrix in the same format, and its block LU.
pub fn build_lowrank_operator(
    surf: &SurfaceMesh,
    params: &CavityParams,
) -> Result<(CavityOperator, CavityBuildTimings), CavityError> {
    params.quad.validate()?;
    let emissivity = validated_emissivity(surf, params.emissivity)?;
    let areas = surf.areas();
    let mut timings = CavityBuildTimings::default();

    let t0 = Instant::now();
    let tree = Arc::new(build_index_tree(&surf.centroids(), params.n_min));
    let blocks = Arc::new(build_block_tree(tree, params.adm_const));
    let oracle = |i: usize, j: usize| {
        if i == j {
            0.0
        } else {
            viewfactor_entry(surf, i, j, &params.quad).expect("distinct facet centroids")
        }
    };
    let mut h = assemble_hmatrix_symmetric(oracle, &blocks, params.eps_rel);
    timings.build_f_s = t0.elapsed().as_secs_f64();

    let rowsums = compute_row_sums(|x| h.matvec(x), &areas);
    if matches!(params.mode, CavityMode::Closed) {
        scale_closed_cavity_lowrank(&mut h, &rowsums);
    }

    let t0 = Instant::now();
    let lambda: Vec<f64> = emissivity
        .iter()
        .zip(&areas)
        .map(|(e, a)| (1.0 - e) / a)
        .collect();
    let c = build_reflection(&h, &emissivity, &areas)?;
    let lu = hlu_factorize(&c, params.eps_rel)?;
    timings.build_lu_s = t0.elapsed().as_secs_f64();
    let f = FMatrix::Lowrank(h);

    let r = reflected_row_sums(&f, |x| lu.solve(x), &emissivity, params.sigma);
    let projection = build_projection(surf);
    Ok((
        CavityOperator {
            f,
            solver: ReflectionSolver::Hlu(lu),
            emissivity,
            areas,
            lambda,
            projection,
            r,
            rowsums,
            sigma: params.sigma,
            mode: params.mode,
            apply_lu_seconds: SecondsCell::default(),
        },
        timings,
    ))
}

/// Assemble the Direct-mode operator: dense F and an explicitly inverted
/// reflection matrix, guarded by a storage budget.
pub fn build_direct_operator(
    surf: &SurfaceMesh,
    params: &CavityParams,
    budget_bytes: u64,
) -> Result<(CavityOperator, CavityBuildTimings), CavityError> {
    params.quad.validate()?;
    let n = surf.n_facets() as u64;
    let required = 8 * n * n;
    if required > budget_bytes {
        return Err(CavityError::MemoryBudget {
            required,
            budget: budget_bytes,
        });
    }
    let emissivity = validated_emissivity(surf, params.emissivity)?;
    let areas = surf.areas();
    let mut timings = CavityBuildTimings::default();

    let t0 = Instant::now();
    let mut fd = assemble_dense_f(surf, &params.quad)?;
    timings.build_f_s = t0.elapsed().as_secs_f64();

    let rowsums = compute_row_sums(
        |x| {
            (0..fd.nrows())
                .map(|i| (0..fd.ncols()).map(|j| fd[(i, j)] * x[j]).sum())
                .collect()
        },
        &areas,
    );
    if matches!(params.mode, CavityMode::Closed) {
        scale_closed_cavity_dense(&mut fd, &rowsums);
    }

    let t0 = Instant::now();
    let lambda: Vec<f64> = emissivity
        .iter()
        .zip(&areas)
        .map(|(e, a)| (1.0 - e) / a)
        .collect();
    let nn = fd.nrows();
    let c = Mat::from_fn(nn, nn, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - lambda[i] * fd[(i, j)]
    });
    let inv = c.partial_piv_lu().inverse();
    timings.build_lu_s = t0.elapsed().as_secs_f64();

    let f = FMatrix::Dense(fd);
    let r = reflected_row_sums(
        &f,
        |x| {
            let mut out = vec![0.0; nn];
            for i in 0..nn {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += inv[(i, j)] * xj;
                }
                out[i] = acc;
            }
            out
        },
        &emissivity,
        params.sigma,
    );
    let projection = build_projection(surf);
    Ok((
        CavityOperator {
            f,
            solver: ReflectionSolver::DenseInverse(inv),
            emissivity,
            areas,
            lambda,
            projection,
            r,
            rowsums,
            sigma: params.sigma,
            mode: params.mode,
            apply_lu_seconds: SecondsCell::default(),
        },
        timings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generators::{gen_parallel_plates, CAVITY_TAG};
    use crate::mesh::{extract_boundary, FacetNodes};
    use std::sync::Arc;

    fn plates_surface(m: usize) -> SurfaceMesh {
        let mesh = Arc::new(gen_parallel_plates(1.0, 1.0, m, 1).unwrap());
        extract_boundary(&mesh, &[CAVITY_TAG]).unwrap()
    }

    #[test]
    fn projection_rows_sum_to_one() {
        let surf = plates_surface(3);
        let p = build_projection(&surf);
        for i in 0..surf.n_facets() {
            let (_, vals) = p.row(i);
            assert_eq!(vals.len(), 4);
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            // planar rectangles: each entry 1/4
            for v in vals {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
        // partition of unity: P * uniform = uniform
        let w = p.apply(&vec![5.0; p.n_nodes]);
        for v in w {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_tri_facet_has_thirds() {
        use crate::mesh::unit_tet;
        let mut m = unit_tet();
        m.boundary_tags.insert((0, 3), 1);
        let surf = extract_boundary(&Arc::new(m), &[1]).unwrap();
        let p = build_projection(&surf);
        let (cols, vals) = p.row(0);
        assert_eq!(cols.len(), 3);
        for v in vals {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        match surf.facets[0].vertex_ids {
            FacetNodes::Tri(_) => {}
            _ => panic!("tet face is a triangle"),
        }
    }

    #[test]
    fn blackbody_reflection_is_identity() {
        let surf = plates_surface(2);
        let params = CavityParams {
            emissivity: 1.0,
            n_min: 4,
            ..CavityParams::default()
        };
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        // C = I, so r_i = sigma * sum_k F_ik
        let ones = vec![1.0; surf.n_facets()];
        let fsum = op.f.matvec(&ones);
        for (ri, fi) in op.r.iter().zip(fsum.iter()) {
            assert!((ri - op.sigma * fi).abs() <= 1e-12 * op.sigma * fi.abs().max(1.0));
        }
        // solve_reflection is the identity map
        let x: Vec<f64> = (0..surf.n_facets()).map(|i| (i as f64).sin()).collect();
        let y = op.solve_reflection(&x);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_reflection_matches_elementwise_construction() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            mode: CavityMode::Open { t_ambient: 300.0 },
            ..CavityParams::default()
        };
        // open mode: F unscaled, C = I - Lambda F elementwise
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let f = assemble_dense_f(&surf, &params.quad).unwrap();
        let n = surf.n_facets();
        let c = Mat::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - op.lambda[i] * f[(i, j)]
        });
        // the stored solver is inv(C): C * inv(C) = I
        if let ReflectionSolver::DenseInverse(inv) = &op.solver {
            let prod = &c * inv;
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[(i, j)] - want).abs() < 1e-10);
                }
            }
        } else {
            panic!("direct mode stores a dense inverse");
        }
    }

    #[test]
    fn lowrank_r_matches_dense_r() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-12,
            n_min: 8,
            ..CavityParams::default()
        };
        let (lo, _) = build_lowrank_operator(&surf, &params).unwrap();
        let (hi, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        for (a, b) in lo.r.iter().zip(hi.r.iter()) {
            assert!(
                (a - b).abs() <= 1e-10 * b.abs().max(1e-30),
                "row sums differ: {a} vs {b}"
            );
        }
    }

    #[test]
    fn apply_s_annihilates_uniform_power() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-8,
            n_min: 8,
            ..CavityParams::default()
        };
        let (op, _) = build_lowrank_operator(&surf, &params).unwrap();
        let eta = NodalPower {
            eta: vec![123.0; op.n_nodes()],
        };
        let q = op.apply_s(&eta);
        let scale: f64 =
            op.r.iter().map(|v| v.abs()).fold(0.0, f64::max) * 123.0;
        for v in q {
            assert!(v.abs() <= 1e-10 * scale.max(1e-300), "leak {v} vs {scale}");
        }
        // eta = 0 -> Q = 0 exactly
        let q0 = op.apply_s(&NodalPower {
            eta: vec![0.0; op.n_nodes()],
        });
        assert!(q0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_s_matches_brute_force_dense_s() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            ..CavityParams::default()
        };
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let n = surf.n_facets();
        let n_nodes = op.n_nodes();
        // dense S = P^T Rbar P from the explicit double sum
        let f = match &op.f {
            FMatrix::Dense(f) => f.clone(),
            _ => unreachable!(),
        };
        let inv = match &op.solver {
            ReflectionSolver::DenseInverse(i) => i.clone(),
            _ => unreachable!(),
        };
        let fcinv = &f * &inv;
        let mut rbar = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            let mut rowsum = 0.0;
            for j in 0..n {
                let rij = op.sigma * op.emissivity[i] * op.emissivity[j] * fcinv[(i, j)];
                rbar[(i, j)] = rij;
                rowsum += rij;
            }
            rbar[(i, i)] -= rowsum;
        }
        // pseudo-random nodal power
        let eta: Vec<f64> = (0..n_nodes)
            .map(|i| 1.0 + ((i * 2654435761) % 1000) as f64 / 500.0)
            .collect();
        let w: Vec<f64> = op.projection.apply(&eta);
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                y[i] += rbar[(i, j)] * w[j];
            }
        }
        let want = op.projection.apply_transpose(&y);
        let got = op.apply_s(&NodalPower { eta });
        let scale: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut err = 0.0;
        for (a, b) in got.iter().zip(want.iter()) {
            err += (a - b) * (a - b);
        }
        assert!(
            err.sqrt() <= 1e-9 * scale,
            "apply_s mismatch {} vs scale {scale}",
            err.sqrt()
        );
    }

    #[test]
    fn jcav_matches_central_differences_of_flux() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            ..CavityParams::default()
        };
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let n_nodes = op.n_nodes();
        let t: Vec<f64> = (0..n_nodes)
            .map(|i| 400.0 + 50.0 * (((i * 7919) % 100) as f64 / 100.0))
            .collect();
        let x: Vec<f64> = (0..n_nodes)
            .map(|i| (((i * 104729) % 200) as f64 / 100.0) - 1.0)
            .collect();
        let tnorm: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1e-3 * tnorm / (x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let tp: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a + h * b).collect();
        let tm: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a - h * b).collect();
        let qp = op.apply_s(&NodalPower::from_temperatures(&tp));
        let qm = op.apply_s(&NodalPower::from_temperatures(&tm));
        let fd: Vec<f64> = qp
            .iter()
            .zip(&qm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let got = op.apply_jcav(&t, &x);
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut err = 0.0;
        for (a, b) in got.iter().zip(fd.iter()) {
            err += (a - b) * (a - b);
        }
        assert!(err.sqrt() <= 1e-5 * scale, "jcav fd mismatch {}", err.sqrt());
    }

    #[test]
    fn uniform_jcav_direction_annihilates() {
        let surf = plates_surface(3);
        let params = CavityParams::default();
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let t = vec![500.0; op.n_nodes()];
        let x = vec![1.0; op.n_nodes()];
        let y = op.apply_jcav(&t, &x);
        let scale = 4.0 * 500.0f64.powi(3) * op.r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in y {
            assert!(v.abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn ambient_flux_on_isolated_facet() {
        // one isolated facet: the outer face of a single plate
        let mesh = Arc::new(gen_parallel_plates(1.0, 1.0, 1, 1).unwrap());
        let mut outer = (*mesh).clone();
        outer.boundary_tags.clear();
        outer.boundary_tags.insert((0usize, 0u8), 2);
        outer.boundary_tags.insert((0usize, 1u8), 2);
        let surf = extract_boundary(&Arc::new(outer), &[2]).unwrap();
        let params = CavityParams {
            mode: CavityMode::Open { t_ambient: 300.0 },
            ..CavityParams::default()
        };
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        assert_eq!(op.rowsums.isolated_count(), 2);
        let t = vec![400.0; op.n_nodes()];
        let b = op.ambient_residual(&surf, &t);
        // area-weighted (T^4 - Tinf^4) load: each facet node gets A/4 of it
        let want = (400.0f64.powi(4) - 300.0f64.powi(4)) / 4.0;
        let mut touched = 0;
        for v in &b {
            if v.abs() > 0.0 {
                touched += 1;
                assert!((v - want).abs() <= 1e-12 * want, "{v} vs {want}");
            }
        }
        assert_eq!(touched, 8);
        // T = T_ambient: residual vanishes up to interpolation rounding
        let b0 = op.ambient_residual(&surf, &vec![300.0; op.n_nodes()]);
        let scale = 300.0f64.powi(4);
        assert!(b0.iter().all(|&v| v.abs() <= 1e-12 * scale));
    }

    #[test]
    fn closed_mode_scaled_rows_sum_to_one() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-10,
            n_min: 8,
            mode: CavityMode::Closed,
            ..CavityParams::default()
        };
        let (op, _) = build_lowrank_operator(&surf, &params).unwrap();
        let rs = compute_row_sums(|x| op.f.matvec(x), &op.areas);
        for (i, &s) in rs.s.iter().enumerate() {
            if op.rowsums.c[i] != 0.0 {
                assert!((s - 1.0).abs() <= 1e-12, "row {i}: {s}");
            }
        }
    }

    #[test]
    fn direct_budget_refusal() {
        let surf = plates_surface(4);
        let params = CavityParams::default();
        let err = build_direct_operator(&surf, &params, 10).unwrap_err();
        match err {
            CavityError::MemoryBudget { required, budget } => {
                assert_eq!(required, 8 * 32 * 32);
                assert_eq!(budget, 10);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn direct_refuses_plates_m106_under_2gb() {
        // 22472^2 doubles are about 4 GB; the guard fires before assembly
        let surf = plates_surface(106);
        let err = build_direct_operator(&surf, &CavityParams::default(), 2_000_000_000)
            .unwrap_err();
        match err {
            CavityError::MemoryBudget { required, budget } => {
                assert_eq!(required, 8 * 22472u64 * 22472);
                assert_eq!(budget, 2_000_000_000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn lossless_lowrank_apply_s_matches_direct() {
        let surf = plates_surface(4);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-15,
            n_min: 8,
            ..CavityParams::default()
        };
        let (lo, _) = build_lowrank_operator(&surf, &params).unwrap();
        let (hi, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let eta = NodalPower {
            eta: (0..lo.n_nodes())
                .map(|i| 4.0e9 + 1.0e9 * (((i * 7919) % 97) as f64 / 97.0))
                .collect(),
        };
        let a = lo.apply_s(&eta);
        let b = hi.apply_s(&eta);
        let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut err = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            err += (x - y) * (x - y);
        }
        assert!(
            err.sqrt() <= 1e-9 * scale,
            "direct/low-rank apply_s differ by {:.3e}",
            err.sqrt() / scale
        );
    }
}
