//! Hierarchical block LU factorization and triangular solves.
//!
//! The recursion follows the 2x2 block split of the diagonal: factor the
//! leading block, forward-substitute for U12, backward-substitute for L21,
//! update the trailing block by the Schur product (with rank truncation),
//! and recurse. Dense diagonal leaves use partially pivoted LU with the
//! pivoting kept inside the leaf.

use faer::reborrow::{Reborrow, ReborrowMut};
use faer::{Mat, MatMut};

use super::arith::{gemm, node_matvec, node_mul_dense_acc, node_tmul_dense_acc};
use super::{HBranch, HMatrix, HNode, LowRankBlock, PivLuLeaf};

#[derive(Debug, thiserror::Error)]
pub enum HluError {
    #[error("singular dense diagonal block at rows {lo}..{hi} (pivot {pivot:.3e} below {threshold:.3e})")]
    SingularBlock { lo: usize, hi: usize, pivot: f64, threshold: f64 },
    #[error("cannot factor an admissible (low-rank) diagonal block at rows {lo}..{hi}")]
    LowRankDiagonal { lo: usize, hi: usize },
}

/// Hierarchical LU factors sharing the block tree of the factored matrix.
#[derive(Debug, Clone)]
pub struct HluFactors {
    pub l: HMatrix,
    pub u: HMatrix,
    pub eps_rel: f64,
}

/// Dense partially pivoted LU; returns (unit lower with swaps, upper).
fn dense_lu(mut a: Mat<f64>, row_lo: usize) -> Result<(PivLuLeaf, Mat<f64>), HluError> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let threshold = 1e-14 * a.norm_l2();
    let mut swaps = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if a[(i, k)].abs() > a[(p, k)].abs() {
                p = i;
            }
        }
        swaps[k] = p;
        if p != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
        }
        let pivot = a[(k, k)];
        if pivot.abs() <= threshold {
            return Err(HluError::SingularBlock {
                lo: row_lo,
                hi: row_lo + n,
                pivot: pivot.abs(),
                threshold,
            });
        }
        for i in (k + 1)..n {
            let m = a[(i, k)] / pivot;
            a[(i, k)] = m;
            for j in (k + 1)..n {
                let akj = a[(k, j)];
                a[(i, j)] -= m * akj;
            }
        }
    }
    let mut lower = Mat::<f64>::zeros(n, n);
    let mut upper = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if j < i {
                lower[(i, j)] = a[(i, j)];
            } else {
                upper[(i, j)] = a[(i, j)];
            }
        }
    }
    Ok((PivLuLeaf { lower, swaps }, upper))
}

fn apply_swaps_mat(swaps: &[usize], mut x: MatMut<f64>) {
    for (k, &p) in swaps.iter().enumerate() {
        if p != k {
            for c in 0..x.ncols() {
                let t = x[(k, c)];
                x[(k, c)] = x[(p, c)];
                x[(p, c)] = t;
            }
        }
    }
}

/// x <- L^-1 P x for a pivoted unit-lower dense leaf.
fn leaf_lower_solve(leaf: &PivLuLeaf, mut x: MatMut<f64>) {
    apply_swaps_mat(&leaf.swaps, x.rb_mut());
    let n = leaf.lower.nrows();
    for c in 0..x.ncols() {
        for i in 0..n {
            let mut acc = x[(i, c)];
            for j in 0..i {
                acc -= leaf.lower[(i, j)] * x[(j, c)];
            }
            x[(i, c)] = acc;
        }
    }
}

/// v <- U^-T v (forward substitution with the transposed upper leaf).
fn leaf_upper_tsolve(u: &Mat<f64>, mut v: MatMut<f64>) {
    let n = u.nrows();
    for c in 0..v.ncols() {
        for i in 0..n {
            let mut acc = v[(i, c)];
            for j in 0..i {
                acc -= u[(j, i)] * v[(j, c)];
            }
            v[(i, c)] = acc / u[(i, i)];
        }
    }
}

/// x <- L^-1 x through the structured lower factor, x thin dense.
fn solve_lower_dense(l: &HNode, mut x: MatMut<f64>) {
    match l {
        HNode::PivLu(leaf) => leaf_lower_solve(leaf, x),
        HNode::Branch(b) => {
            debug_assert_eq!(b.n_row_kids(), 2);
            let mid = b.row_offsets[1];
            let (x1, x2) = x.rb_mut().split_at_row_mut(mid);
            let mut x1 = x1;
            let mut x2 = x2;
            solve_lower_dense(b.child(0, 0), x1.rb_mut());
            node_mul_dense_acc(b.child(1, 0), x1.rb(), x2.rb_mut(), -1.0);
            solve_lower_dense(b.child(1, 1), x2.rb_mut());
        }
        _ => unreachable!("lower factor diagonals are PivLu or branches"),
    }
}

/// v <- U^-T v through the structured upper factor.
fn solve_upper_t_dense(u: &HNode, mut v: MatMut<f64>) {
    match u {
        HNode::Dense(ud) => leaf_upper_tsolve(ud, v),
        HNode::Branch(b) => {
            debug_assert_eq!(b.n_col_kids(), 2);
            let mid = b.col_offsets[1];
            let (v1, v2) = v.rb_mut().split_at_row_mut(mid);
            let mut v1 = v1;
            let mut v2 = v2;
            solve_upper_t_dense(b.child(0, 0), v1.rb_mut());
            node_tmul_dense_acc(b.child(0, 1), v1.rb(), v2.rb_mut(), -1.0);
            solve_upper_t_dense(b.child(1, 1), v2.rb_mut());
        }
        _ => unreachable!("upper factor diagonals are dense or branches"),
    }
}

/// b_node <- L^-1 b_node (forward substitution on a block column).
fn solve_lower_node(l: &HNode, b: &mut HNode, eps: f64) {
    match l {
        HNode::PivLu(leaf) => match b {
            HNode::Dense(d) => leaf_lower_solve(leaf, d.as_mut()),
            HNode::LowRank(lr) => {
                if lr.rank() > 0 {
                    leaf_lower_solve(leaf, lr.u.as_mut());
                }
            }
            HNode::Branch(bb) => {
                debug_assert_eq!(bb.n_row_kids(), 1, "leaf rows cannot subdivide");
                for c in bb.children.iter_mut() {
                    solve_lower_node(l, c, eps);
                }
            }
            HNode::PivLu(_) => unreachable!(),
        },
        HNode::Branch(lb) => match b {
            HNode::LowRank(lr) => {
                if lr.rank() > 0 {
                    solve_lower_dense(l, lr.u.as_mut());
                }
            }
            HNode::Dense(d) => solve_lower_dense(l, d.as_mut()),
            HNode::Branch(bb) => {
                debug_assert_eq!(bb.row_offsets, lb.row_offsets, "row splits must agree");
                for ci in 0..bb.n_col_kids() {
                    // X1 = L11^-1 B1
                    {
                        let b1 = bb.child_mut(0, ci);
                        solve_lower_node(lb.child(0, 0), b1, eps);
                    }
                    // B2 <- B2 - L21 X1, then X2 = L22^-1 B2
                    {
                        let nc = bb.n_col_kids();
                        let (row0, row1) = bb.children.split_at_mut(nc);
                        gemm(&mut row1[ci], -1.0, lb.child(1, 0), &row0[ci], eps);
                        solve_lower_node(lb.child(1, 1), &mut row1[ci], eps);
                    }
                }
            }
            HNode::PivLu(_) => unreachable!(),
        },
        _ => unreachable!("lower factors hold PivLu leaves and branches"),
    }
}

/// b_node <- b_node U^-1 (backward substitution on a block row).
fn solve_upper_right_node(u: &HNode, b: &mut HNode, eps: f64) {
    match u {
        HNode::Dense(ud) => match b {
            HNode::Dense(d) => {
                // D <- D U^-1  <=>  U^T (D^T) = ... row-wise backward pass
                let m = d.nrows();
                let n = ud.nrows();
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = d[(i, j)];
                        for k in 0..j {
                            acc -= d[(i, k)] * ud[(k, j)];
                        }
                        d[(i, j)] = acc / ud[(j, j)];
                    }
                }
            }
            HNode::LowRank(lr) => {
                if lr.rank() > 0 {
                    leaf_upper_tsolve(ud, lr.v.as_mut());
                }
            }
            HNode::Branch(bb) => {
                debug_assert_eq!(bb.n_col_kids(), 1, "leaf columns cannot subdivide");
                for c in bb.children.iter_mut() {
                    solve_upper_right_node(u, c, eps);
                }
            }
            HNode::PivLu(_) => unreachable!(),
        },
        HNode::Branch(ub) => match b {
            HNode::LowRank(lr) => {
                if lr.rank() > 0 {
                    solve_upper_t_dense(u, lr.v.as_mut());
                }
            }
            HNode::Branch(bb) => {
                debug_assert_eq!(bb.col_offsets, ub.row_offsets, "column splits must agree");
                for ri in 0..bb.n_row_kids() {
                    let nc = bb.n_col_kids();
                    debug_assert_eq!(nc, 2);
                    // X1 = B1 U11^-1
                    solve_upper_right_node(ub.child(0, 0), &mut bb.children[ri * nc], eps);
                    // B2 <- B2 - X1 U12, then X2 = B2 U22^-1
                    let (left, right) = bb.children[ri * nc..ri * nc + 2].split_at_mut(1);
                    gemm(&mut right[0], -1.0, &left[0], ub.child(0, 1), eps);
                    solve_upper_right_node(ub.child(1, 1), &mut right[0], eps);
                }
            }
            HNode::Dense(_) => unreachable!("dense leaves pair with dense upper diagonals"),
            HNode::PivLu(_) => unreachable!(),
        },
        _ => unreachable!("upper factors hold dense leaves and branches"),
    }
}

fn hlu_node(c: HNode, row_lo: usize, eps: f64) -> Result<(HNode, HNode), HluError> {
    match c {
        HNode::Dense(d) => {
            let (piv, upper) = dense_lu(d, row_lo)?;
            Ok((HNode::PivLu(piv), HNode::Dense(upper)))
        }
        HNode::LowRank(lr) => Err(HluError::LowRankDiagonal {
            lo: row_lo,
            hi: row_lo + lr.nrows(),
        }),
        HNode::Branch(b) => {
            debug_assert_eq!(b.n_row_kids(), 2);
            debug_assert_eq!(b.n_col_kids(), 2);
            let HBranch {
                nrows,
                ncols,
                row_offsets,
                col_offsets,
                mut children,
            } = *b;
            let c22 = children.pop().unwrap();
            let c21 = children.pop().unwrap();
            let c12 = children.pop().unwrap();
            let c11 = children.pop().unwrap();
            let (l11, u11) = hlu_node(c11, row_lo, eps)?;
            let mut u12 = c12;
            solve_lower_node(&l11, &mut u12, eps);
            let mut l21 = c21;
            solve_upper_right_node(&u11, &mut l21, eps);
            let mut c22 = c22;
            gemm(&mut c22, -1.0, &l21, &u12, eps);
            let (l22, u22) = hlu_node(c22, row_lo + row_offsets[1], eps)?;
            let m1 = row_offsets[1];
            let n1 = col_offsets[1];
            let l = HNode::Branch(Box::new(HBranch {
                nrows,
                ncols,
                row_offsets: row_offsets.clone(),
                col_offsets: col_offsets.clone(),
                children: vec![
                    l11,
                    HNode::LowRank(LowRankBlock::zero(m1, ncols - n1)),
                    l21,
                    l22,
                ],
            }));
            let u = HNode::Branch(Box::new(HBranch {
                nrows,
                ncols,
                row_offsets,
                col_offsets,
                children: vec![
                    u11,
                    u12,
                    HNode::LowRank(LowRankBlock::zero(nrows - m1, n1)),
                    u22,
                ],
            }));
            Ok((l, u))
        }
        HNode::PivLu(_) => unreachable!("cannot refactor"),
    }
}

/// Factor C ~= L U on its own block tree, truncating Schur updates at
/// `eps_rel`.
pub fn hlu_factorize(c: &HMatrix, eps_rel: f64) -> Result<HluFactors, HluError> {
    let (l_root, u_root) = hlu_node(c.root().clone(), 0, eps_rel)?;
    Ok(HluFactors {
        l: HMatrix::from_root(c.blocks.clone(), l_root, eps_rel),
        u: HMatrix::from_root(c.blocks.clone(), u_root, eps_rel),
        eps_rel,
    })
}

fn solve_lower_vec(l: &HNode, x: &mut [f64]) {
    match l {
        HNode::PivLu(leaf) => {
            for (k, &p) in leaf.swaps.iter().enumerate() {
                if p != k {
                    x.swap(k, p);
                }
            }
            let n = leaf.lower.nrows();
            for i in 0..n {
                let mut acc = x[i];
                for j in 0..i {
                    acc -= leaf.lower[(i, j)] * x[j];
                }
                x[i] = acc;
            }
        }
        HNode::Branch(b) => {
            let mid = b.row_offsets[1];
            let (x1, x2) = x.split_at_mut(mid);
            solve_lower_vec(b.child(0, 0), x1);
            node_matvec(b.child(1, 0), -1.0, x1, x2);
            solve_lower_vec(b.child(1, 1), x2);
        }
        _ => unreachable!(),
    }
}

fn solve_upper_vec(u: &HNode, x: &mut [f64]) {
    match u {
        HNode::Dense(ud) => {
            let n = ud.nrows();
            for i in (0..n).rev() {
                let mut acc = x[i];
                for j in (i + 1)..n {
                    acc -= ud[(i, j)] * x[j];
                }
                x[i] = acc / ud[(i, i)];
            }
        }
        HNode::Branch(b) => {
            let mid = b.row_offsets[1];
            let (x1, x2) = x.split_at_mut(mid);
            solve_upper_vec(b.child(1, 1), x2);
            node_matvec(b.child(0, 1), -1.0, x2, x1);
            solve_upper_vec(b.child(0, 0), x1);
        }
        _ => unreachable!(),
    }
}

impl HluFactors {
    pub fn n(&self) -> usize {
        self.l.n()
    }

    /// Approximate C^-1 b through forward and backward substitution, in
    /// the original index order.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(b.len(), n, "solve dimension mismatch: {} vs {n}", b.len());
        let perm = &self.l.blocks.tree.perm;
        let mut xp: Vec<f64> = perm.iter().map(|&o| b[o]).collect();
        solve_lower_vec(self.l.root(), &mut xp);
        solve_upper_vec(self.u.root(), &mut xp);
        let mut x = vec![0.0; n];
        for (p, &o) in perm.iter().enumerate() {
            x[o] = xp[p];
        }
        x
    }
}

/// Convenience wrapper mirroring the operation name used by the solver.
pub fn solve_lu(factors: &HluFactors, b: &[f64]) -> Vec<f64> {
    factors.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_block_tree, build_index_tree};
    use crate::geometry::Point3;
    use crate::hmatrix::assemble_hmatrix;
    use std::sync::Arc;

    fn line_h(n: usize, n_min: usize, kernel: impl Fn(usize, usize) -> f64 + Sync, eps: f64) -> HMatrix {
        let pts: Vec<Point3> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        let tree = Arc::new(build_index_tree(&pts, n_min));
        let blocks = Arc::new(build_block_tree(tree, 2.0));
        assemble_hmatrix(kernel, &blocks, eps)
    }

    #[test]
    fn identity_factors_to_identity() {
        let h = line_h(24, 4, |i, j| if i == j { 1.0 } else { 0.0 }, 1e-12);
        let f = hlu_factorize(&h, 1e-12).unwrap();
        let b: Vec<f64> = (0..24).map(|i| (i as f64).cos()).collect();
        let x = f.solve(&b);
        for (a, c) in b.iter().zip(x.iter()) {
            assert!((a - c).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_rhs_solves_to_zero() {
        let h = line_h(16, 4, |i, j| if i == j { 2.0 } else { 0.5 / (1.0 + i.abs_diff(j) as f64) }, 1e-14);
        let f = hlu_factorize(&h, 1e-12).unwrap();
        let x = f.solve(&vec![0.0; 16]);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_tree_matches_textbook_lu() {
        // n_min covers n: a single dense leaf, no truncation path
        let kernel = |i: usize, j: usize| {
            if i == j {
                4.0
            } else {
                1.0 / (1.0 + i.abs_diff(j) as f64)
            }
        };
        let h = line_h(12, 32, kernel, 1e-15);
        let f = hlu_factorize(&h, 1e-15).unwrap();
        let d = h.densify();
        let b: Vec<f64> = (0..12).map(|i| ((i * 5) as f64).sin()).collect();
        let x = f.solve(&b);
        // residual against the dense matrix
        for i in 0..12 {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc += d[(i, j)] * xj;
            }
            assert!((acc - b[i]).abs() <= 1e-13, "row {i}: {acc} vs {}", b[i]);
        }
    }

    #[test]
    fn structured_lu_reaches_truncation_accuracy() {
        // diagonally dominant kernel matrix, like a reflection matrix
        let kernel = |i: usize, j: usize| {
            if i == j {
                1.0
            } else {
                -0.3 / (1.0 + (i.abs_diff(j) as f64).powi(2))
            }
        };
        for eps in [1e-3, 1e-6, 1e-10] {
            let h = line_h(96, 12, kernel, 1e-15);
            let f = hlu_factorize(&h, eps).unwrap();
            let d = h.densify();
            let b: Vec<f64> = (0..96).map(|i| ((i * 7) as f64).cos()).collect();
            let x = f.solve(&b);
            let mut rnorm = 0.0;
            let mut bnorm = 0.0;
            for i in 0..96 {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += d[(i, j)] * xj;
                }
                rnorm += (acc - b[i]).powi(2);
                bnorm += b[i].powi(2);
            }
            let rel = (rnorm / bnorm).sqrt();
            assert!(rel <= 10.0 * eps, "eps {eps}: residual {rel}");
        }
    }

    #[test]
    fn lu_reconstruction_error_tracks_eps() {
        let kernel = |i: usize, j: usize| {
            if i == j {
                1.0
            } else {
                -0.2 / (1.0 + i.abs_diff(j) as f64)
            }
        };
        let h = line_h(64, 8, kernel, 1e-15);
        let d = h.densify();
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-8] {
            let f = hlu_factorize(&h, eps).unwrap();
            let ld = f.l.densify();
            let ud = f.u.densify();
            let rec = &ld * &ud;
            let mut err = 0.0;
            let mut nrm = 0.0;
            for i in 0..64 {
                for j in 0..64 {
                    err += (rec[(i, j)] - d[(i, j)]).powi(2);
                    nrm += d[(i, j)].powi(2);
                }
            }
            let rel = (err / nrm).sqrt();
            assert!(rel <= 10.0 * eps, "eps {eps}: |C - LU| rel {rel}");
            assert!(rel <= last * 1.5, "error should not grow as eps shrinks");
            last = rel.max(1e-16);
        }
    }

    #[test]
    fn singular_block_is_reported() {
        let h = line_h(8, 16, |_, _| 1.0, 1e-12); // rank-1 dense block
        match hlu_factorize(&h, 1e-12) {
            Err(HluError::SingularBlock { lo, hi, .. }) => {
                assert_eq!((lo, hi), (0, 8));
            }
            other => panic!("expected singular block, got {other:?}"),
        }
    }
}
