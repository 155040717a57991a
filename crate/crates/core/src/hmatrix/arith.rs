//! Block arithmetic on hierarchical nodes: matrix-vector products,
//! low-rank and dense accumulation with rank truncation, and the recursive
//! multiply-add that backs the hierarchical LU.

use faer::linalg::matmul::matmul;
use faer::reborrow::ReborrowMut;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use super::aca::recompress;
use super::{HBranch, HNode, LowRankBlock};

/// y += alpha * node * x, all in local (permuted) coordinates.
pub fn node_matvec(node: &HNode, alpha: f64, x: &[f64], y: &mut [f64]) {
    match node {
        HNode::Dense(d) => {
            for i in 0..d.nrows() {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += d[(i, j)] * xj;
                }
                y[i] += alpha * acc;
            }
        }
        HNode::LowRank(lr) => {
            let k = lr.rank();
            if k == 0 {
                return;
            }
            let mut t = vec![0.0; k];
            for c in 0..k {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += lr.v[(j, c)] * xj;
                }
                t[c] = acc;
            }
            for (i, yi) in y.iter_mut().enumerate().take(lr.nrows()) {
                let mut acc = 0.0;
                for (c, tc) in t.iter().enumerate() {
                    acc += lr.u[(i, c)] * tc;
                }
                *yi += alpha * acc;
            }
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    node_matvec(
                        b.child(ri, ci),
                        alpha,
                        &x[b.col_offsets[ci]..b.col_offsets[ci + 1]],
                        &mut y[b.row_offsets[ri]..b.row_offsets[ri + 1]],
                    );
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves have no plain matvec"),
    }
}

/// out += alpha * node * x for a thin dense x.
pub fn node_mul_dense_acc(node: &HNode, x: MatRef<f64>, mut out: MatMut<f64>, alpha: f64) {
    match node {
        HNode::Dense(d) => matmul(out, Accum::Add, d.as_ref(), x, alpha, Par::Seq),
        HNode::LowRank(lr) => {
            if lr.rank() == 0 {
                return;
            }
            let mut t = Mat::<f64>::zeros(lr.rank(), x.ncols());
            matmul(t.as_mut(), Accum::Replace, lr.v.transpose(), x, 1.0, Par::Seq);
            matmul(out, Accum::Add, lr.u.as_ref(), t.as_ref(), alpha, Par::Seq);
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let xs = x.submatrix(
                        b.col_offsets[ci],
                        0,
                        b.col_offsets[ci + 1] - b.col_offsets[ci],
                        x.ncols(),
                    );
                    let os = out.rb_mut().submatrix_mut(
                        b.row_offsets[ri],
                        0,
                        b.row_offsets[ri + 1] - b.row_offsets[ri],
                        x.ncols(),
                    );
                    node_mul_dense_acc(b.child(ri, ci), xs, os, alpha);
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves have no plain product"),
    }
}

/// out += alpha * node^T * x for a thin dense x.
pub fn node_tmul_dense_acc(node: &HNode, x: MatRef<f64>, mut out: MatMut<f64>, alpha: f64) {
    match node {
        HNode::Dense(d) => matmul(out, Accum::Add, d.transpose(), x, alpha, Par::Seq),
        HNode::LowRank(lr) => {
            if lr.rank() == 0 {
                return;
            }
            let mut t = Mat::<f64>::zeros(lr.rank(), x.ncols());
            matmul(t.as_mut(), Accum::Replace, lr.u.transpose(), x, 1.0, Par::Seq);
            matmul(out, Accum::Add, lr.v.as_ref(), t.as_ref(), alpha, Par::Seq);
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let xs = x.submatrix(
                        b.row_offsets[ri],
                        0,
                        b.row_offsets[ri + 1] - b.row_offsets[ri],
                        x.ncols(),
                    );
                    let os = out.rb_mut().submatrix_mut(
                        b.col_offsets[ci],
                        0,
                        b.col_offsets[ci + 1] - b.col_offsets[ci],
                        x.ncols(),
                    );
                    node_tmul_dense_acc(b.child(ri, ci), xs, os, alpha);
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves have no plain product"),
    }
}

/// out += node, written densely in local coordinates.
pub fn densify_into(node: &HNode, mut out: MatMut<f64>) {
    match node {
        HNode::Dense(d) => {
            for j in 0..d.ncols() {
                for i in 0..d.nrows() {
                    out[(i, j)] += d[(i, j)];
                }
            }
        }
        HNode::LowRank(lr) => {
            if lr.rank() > 0 {
                matmul(out, Accum::Add, lr.u.as_ref(), lr.v.transpose(), 1.0, Par::Seq);
            }
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let os = out.rb_mut().submatrix_mut(
                        b.row_offsets[ri],
                        b.col_offsets[ci],
                        b.row_offsets[ri + 1] - b.row_offsets[ri],
                        b.col_offsets[ci + 1] - b.col_offsets[ci],
                    );
                    densify_into(b.child(ri, ci), os);
                }
            }
        }
        HNode::PivLu(p) => {
            // effective factor is P^T L_unit: undo the recorded swaps
            let n = p.lower.nrows();
            let mut l = Mat::<f64>::identity(n, n);
            for j in 0..n {
                for i in (j + 1)..n {
                    l[(i, j)] = p.lower[(i, j)];
                }
            }
            for k in (0..n).rev() {
                let s = p.swaps[k];
                if s != k {
                    for j in 0..n {
                        let t = l[(k, j)];
                        l[(k, j)] = l[(s, j)];
                        l[(s, j)] = t;
                    }
                }
            }
            for j in 0..n {
                for i in 0..n {
                    out[(i, j)] += l[(i, j)];
                }
            }
        }
    }
}

pub fn scale_rows_node(node: &mut HNode, factors: &[f64]) {
    match node {
        HNode::Dense(d) => {
            for i in 0..d.nrows() {
                for j in 0..d.ncols() {
                    d[(i, j)] *= factors[i];
                }
            }
        }
        HNode::LowRank(lr) => {
            for i in 0..lr.u.nrows() {
                for c in 0..lr.u.ncols() {
                    lr.u[(i, c)] *= factors[i];
                }
            }
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let slice = &factors[b.row_offsets[ri]..b.row_offsets[ri + 1]];
                    scale_rows_node(b.child_mut(ri, ci), slice);
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves cannot be rescaled"),
    }
}

/// node <- node + I along the diagonal path; fails on an admissible
/// (low-rank) diagonal leaf.
pub fn add_identity_node(node: &mut HNode, row_lo: usize) -> Result<(), super::HError> {
    match node {
        HNode::Dense(d) => {
            let n = d.nrows().min(d.ncols());
            for i in 0..n {
                d[(i, i)] += 1.0;
            }
            Ok(())
        }
        HNode::LowRank(lr) => Err(super::HError::AdmissibleDiagonal(
            row_lo,
            row_lo + lr.nrows(),
        )),
        HNode::Branch(b) => {
            assert_eq!(
                b.n_row_kids(),
                b.n_col_kids(),
                "diagonal branches are square"
            );
            for i in 0..b.n_row_kids() {
                let off = b.row_offsets[i];
                add_identity_node(b.child_mut(i, i), row_lo + off)?;
            }
            Ok(())
        }
        HNode::PivLu(_) => unreachable!(),
    }
}

/// z += alpha * u * v^T with truncation at eps on low-rank targets.
pub fn add_lowrank(z: &mut HNode, u: MatRef<f64>, v: MatRef<f64>, alpha: f64, eps: f64) {
    let k = u.ncols();
    if k == 0 || alpha == 0.0 {
        return;
    }
    debug_assert_eq!(v.ncols(), k);
    match z {
        HNode::Dense(d) => {
            matmul(d.as_mut(), Accum::Add, u, v.transpose(), alpha, Par::Seq);
        }
        HNode::LowRank(lr) => {
            let k0 = lr.rank();
            let mut uu = Mat::zeros(lr.nrows(), k0 + k);
            let mut vv = Mat::zeros(lr.ncols(), k0 + k);
            for c in 0..k0 {
                for i in 0..lr.nrows() {
                    uu[(i, c)] = lr.u[(i, c)];
                }
                for j in 0..lr.ncols() {
                    vv[(j, c)] = lr.v[(j, c)];
                }
            }
            for c in 0..k {
                for i in 0..lr.nrows() {
                    uu[(i, k0 + c)] = alpha * u[(i, c)];
                }
                for j in 0..lr.ncols() {
                    vv[(j, k0 + c)] = v[(j, c)];
                }
            }
            *lr = recompress(&LowRankBlock { u: uu, v: vv }, eps);
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let us = u.submatrix(
                        b.row_offsets[ri],
                        0,
                        b.row_offsets[ri + 1] - b.row_offsets[ri],
                        k,
                    );
                    let vs = v.submatrix(
                        b.col_offsets[ci],
                        0,
                        b.col_offsets[ci + 1] - b.col_offsets[ci],
                        k,
                    );
                    add_lowrank(b.child_mut(ri, ci), us, vs, alpha, eps);
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves receive no updates"),
    }
}

/// z += alpha * d for a dense update of the full block extent.
pub fn add_dense(z: &mut HNode, d: MatRef<f64>, alpha: f64, eps: f64) {
    match z {
        HNode::Dense(zd) => {
            for j in 0..zd.ncols() {
                for i in 0..zd.nrows() {
                    zd[(i, j)] += alpha * d[(i, j)];
                }
            }
        }
        HNode::LowRank(_) => {
            // formal low-rank wrapper: min(m, n) columns against identity
            let (m, n) = (d.nrows(), d.ncols());
            if n <= m {
                let eye = Mat::<f64>::identity(n, n);
                add_lowrank(z, d, eye.as_ref(), alpha, eps);
            } else {
                let eye = Mat::<f64>::identity(m, m);
                add_lowrank(z, eye.as_ref(), d.transpose(), alpha, eps);
            }
        }
        HNode::Branch(b) => {
            for ri in 0..b.n_row_kids() {
                for ci in 0..b.n_col_kids() {
                    let ds = d.submatrix(
                        b.row_offsets[ri],
                        b.col_offsets[ci],
                        b.row_offsets[ri + 1] - b.row_offsets[ri],
                        b.col_offsets[ci + 1] - b.col_offsets[ci],
                    );
                    add_dense(b.child_mut(ri, ci), ds, alpha, eps);
                }
            }
        }
        HNode::PivLu(_) => unreachable!("factored leaves receive no updates"),
    }
}

fn densify_local(node: &HNode) -> Mat<f64> {
    let mut out = Mat::zeros(node.nrows(), node.ncols());
    densify_into(node, out.as_mut());
    out
}

/// z += alpha * a * b with truncation at eps. Structures must conform:
/// the middle index split of `a` columns and `b` rows comes from the same
/// cluster node.
pub fn gemm(z: &mut HNode, alpha: f64, a: &HNode, b: &HNode, eps: f64) {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(z.nrows(), a.nrows());
    debug_assert_eq!(z.ncols(), b.ncols());
    match (a, b) {
        (HNode::LowRank(la), _) => {
            if la.rank() == 0 {
                return;
            }
            let mut w = Mat::<f64>::zeros(b.ncols(), la.rank());
            node_tmul_dense_acc(b, la.v.as_ref(), w.as_mut(), 1.0);
            add_lowrank(z, la.u.as_ref(), w.as_ref(), alpha, eps);
        }
        (_, HNode::LowRank(lb)) => {
            if lb.rank() == 0 {
                return;
            }
            let mut w = Mat::<f64>::zeros(a.nrows(), lb.rank());
            node_mul_dense_acc(a, lb.u.as_ref(), w.as_mut(), 1.0);
            add_lowrank(z, w.as_ref(), lb.v.as_ref(), alpha, eps);
        }
        (HNode::Dense(da), HNode::Dense(db)) => {
            let p = da * db;
            add_dense(z, p.as_ref(), alpha, eps);
        }
        (HNode::Dense(da), HNode::Branch(_)) => {
            // inner dimension is a dense leaf extent, so densifying b is thin
            let bd = densify_local(b);
            let p = da * &bd;
            add_dense(z, p.as_ref(), alpha, eps);
        }
        (HNode::Branch(_), HNode::Dense(db)) => {
            let ad = densify_local(a);
            let p = &ad * db;
            add_dense(z, p.as_ref(), alpha, eps);
        }
        (HNode::Branch(ba), HNode::Branch(bb)) => {
            debug_assert_eq!(ba.col_offsets, bb.row_offsets, "inner splits must agree");
            match z {
                HNode::Branch(bz) => {
                    debug_assert_eq!(bz.row_offsets, ba.row_offsets);
                    debug_assert_eq!(bz.col_offsets, bb.col_offsets);
                    for ri in 0..ba.n_row_kids() {
                        for ci in 0..bb.n_col_kids() {
                            for ki in 0..ba.n_col_kids() {
                                gemm(
                                    bz.child_mut(ri, ci),
                                    alpha,
                                    ba.child(ri, ki),
                                    bb.child(ki, ci),
                                    eps,
                                );
                            }
                        }
                    }
                }
                _ => {
                    // leaf target under subdivided operands: build the product
                    // per child pair as low rank, then merge and fold into z
                    let mut tmp = HBranch {
                        nrows: z.nrows(),
                        ncols: z.ncols(),
                        row_offsets: ba.row_offsets.clone(),
                        col_offsets: bb.col_offsets.clone(),
                        children: Vec::new(),
                    };
                    for ri in 0..ba.n_row_kids() {
                        for ci in 0..bb.n_col_kids() {
                            let m = tmp.row_offsets[ri + 1] - tmp.row_offsets[ri];
                            let n = tmp.col_offsets[ci + 1] - tmp.col_offsets[ci];
                            tmp.children.push(HNode::LowRank(LowRankBlock::zero(m, n)));
                        }
                    }
                    for ri in 0..ba.n_row_kids() {
                        for ci in 0..bb.n_col_kids() {
                            for ki in 0..ba.n_col_kids() {
                                gemm(
                                    tmp.child_mut(ri, ci),
                                    1.0,
                                    ba.child(ri, ki),
                                    bb.child(ki, ci),
                                    eps,
                                );
                            }
                        }
                    }
                    // merge children into one padded low-rank factor pair
                    let total_rank: usize = tmp
                        .children
                        .iter()
                        .map(|c| match c {
                            HNode::LowRank(lr) => lr.rank(),
                            _ => unreachable!("temporary children stay low-rank"),
                        })
                        .sum();
                    let mut uu = Mat::<f64>::zeros(z.nrows(), total_rank);
                    let mut vv = Mat::<f64>::zeros(z.ncols(), total_rank);
                    let mut off = 0;
                    for ri in 0..tmp.n_row_kids() {
                        for ci in 0..tmp.n_col_kids() {
                            if let HNode::LowRank(lr) = tmp.child(ri, ci) {
                                for c in 0..lr.rank() {
                                    for i in 0..lr.nrows() {
                                        uu[(tmp.row_offsets[ri] + i, off + c)] = lr.u[(i, c)];
                                    }
                                    for j in 0..lr.ncols() {
                                        vv[(tmp.col_offsets[ci] + j, off + c)] = lr.v[(j, c)];
                                    }
                                }
                                off += lr.rank();
                            }
                        }
                    }
                    add_lowrank(z, uu.as_ref(), vv.as_ref(), alpha, eps);
                }
            }
        }
        _ => unreachable!("factored leaves never appear as gemm operands"),
    }
}

/// Leaf-payload addition: dense combinations stay dense, low-rank pairs
/// concatenate factors and recompress.
pub fn block_add(a: &HNode, b: &HNode, eps: f64) -> HNode {
    assert_eq!(a.nrows(), b.nrows(), "block_add dimension mismatch");
    assert_eq!(a.ncols(), b.ncols(), "block_add dimension mismatch");
    match (a, b) {
        (HNode::LowRank(la), HNode::LowRank(_)) => {
            let mut z = HNode::LowRank(la.clone());
            if let HNode::LowRank(lb) = b {
                add_lowrank(&mut z, lb.u.as_ref(), lb.v.as_ref(), 1.0, eps);
            }
            z
        }
        _ => {
            let mut d = densify_local(a);
            densify_into(b, d.as_mut());
            HNode::Dense(d)
        }
    }
}

/// Leaf-payload product: any low-rank operand keeps the result low-rank
/// (then recompressed); dense times dense stays dense.
pub fn block_mul(a: &HNode, b: &HNode, eps: f64) -> HNode {
    assert_eq!(a.ncols(), b.nrows(), "block_mul dimension mismatch");
    match (a, b) {
        (HNode::Dense(da), HNode::Dense(db)) => HNode::Dense(da * db),
        _ => {
            let mut z = HNode::LowRank(LowRankBlock::zero(a.nrows(), b.ncols()));
            gemm(&mut z, 1.0, a, b, eps);
            z
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(m: usize, n: usize, seed: u64) -> Mat<f64> {
        Mat::from_fn(m, n, |i, j| {
            let mut z = seed
                .wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15))
                .wrapping_add((j as u64).wrapping_mul(0xD1B54A32D192ED03));
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn rand_lowrank(m: usize, n: usize, k: usize, seed: u64) -> LowRankBlock {
        LowRankBlock {
            u: rand_mat(m, k, seed),
            v: rand_mat(n, k, seed.wrapping_add(5)),
        }
    }

    fn frob_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                s += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
        s.sqrt()
    }

    #[test]
    fn lowrank_plus_negative_self_cancels() {
        let lr = rand_lowrank(12, 9, 3, 1);
        let a = HNode::LowRank(lr.clone());
        let neg = HNode::LowRank(LowRankBlock {
            u: Mat::from_fn(12, 3, |i, c| -lr.u[(i, c)]),
            v: lr.v.clone(),
        });
        let z = block_add(&a, &neg, 1e-12);
        match z {
            HNode::LowRank(res) => assert_eq!(res.rank(), 0),
            _ => panic!("low-rank + low-rank stays low-rank"),
        }
    }

    #[test]
    fn dense_times_identity_is_unchanged() {
        let d = rand_mat(7, 7, 3);
        let z = block_mul(&HNode::Dense(d.clone()), &HNode::Dense(Mat::identity(7, 7)), 1e-12);
        match z {
            HNode::Dense(res) => {
                assert!(frob_diff(&res, &d) <= 1e-15 * d.norm_l2());
            }
            _ => panic!("dense product stays dense"),
        }
    }

    #[test]
    fn lowrank_product_matches_dense_and_bounds_rank() {
        let a = rand_lowrank(20, 15, 3, 7);
        let b = rand_lowrank(15, 11, 4, 9);
        let z = block_mul(&HNode::LowRank(a.clone()), &HNode::LowRank(b.clone()), 1e-12);
        let dense = a.densify() * b.densify();
        match z {
            HNode::LowRank(res) => {
                assert!(res.rank() <= 3);
                let err = frob_diff(&res.densify(), &dense);
                assert!(err <= 1e-10 * dense.norm_l2(), "err {err}");
            }
            _ => panic!("low-rank product stays low-rank"),
        }
    }

    #[test]
    fn mixed_product_recompresses() {
        let d = rand_mat(10, 8, 2);
        let b = rand_lowrank(8, 12, 2, 4);
        let z = block_mul(&HNode::Dense(d.clone()), &HNode::LowRank(b.clone()), 1e-12);
        let dense = &d * b.densify();
        match z {
            HNode::LowRank(res) => {
                assert!(res.rank() <= 2);
                assert!(frob_diff(&res.densify(), &dense) <= 1e-10 * dense.norm_l2());
            }
            _ => panic!("mixed product is low-rank"),
        }
    }

    #[test]
    fn branch_gemm_matches_dense() {
        // 2x2 branch structure over a 10+6 split
        let mk_branch = |seed: u64| -> HNode {
            HNode::Branch(Box::new(HBranch {
                nrows: 16,
                ncols: 16,
                row_offsets: vec![0, 10, 16],
                col_offsets: vec![0, 10, 16],
                children: vec![
                    HNode::Dense(rand_mat(10, 10, seed)),
                    HNode::LowRank(rand_lowrank(10, 6, 2, seed + 1)),
                    HNode::LowRank(rand_lowrank(6, 10, 2, seed + 2)),
                    HNode::Dense(rand_mat(6, 6, seed + 3)),
                ],
            }))
        };
        let a = mk_branch(10);
        let b = mk_branch(20);
        let mut z = mk_branch(30);
        let za = densify_local(&z);
        let ad = densify_local(&a);
        let bd = densify_local(&b);
        gemm(&mut z, -1.0, &a, &b, 1e-13);
        let want = za - &ad * &bd;
        let got = densify_local(&z);
        let err = frob_diff(&got, &want);
        assert!(err <= 1e-10 * want.norm_l2(), "err {err}");
    }

    #[test]
    fn branch_gemm_into_lowrank_leaf() {
        let a = HNode::Branch(Box::new(HBranch {
            nrows: 12,
            ncols: 12,
            row_offsets: vec![0, 6, 12],
            col_offsets: vec![0, 6, 12],
            children: vec![
                HNode::Dense(rand_mat(6, 6, 40)),
                HNode::LowRank(rand_lowrank(6, 6, 2, 41)),
                HNode::LowRank(rand_lowrank(6, 6, 2, 42)),
                HNode::Dense(rand_mat(6, 6, 43)),
            ],
        }));
        let b = HNode::Branch(Box::new(HBranch {
            nrows: 12,
            ncols: 9,
            row_offsets: vec![0, 6, 12],
            col_offsets: vec![0, 9],
            children: vec![
                HNode::LowRank(rand_lowrank(6, 9, 3, 50)),
                HNode::LowRank(rand_lowrank(6, 9, 3, 51)),
            ],
        }));
        let mut z = HNode::LowRank(rand_lowrank(12, 9, 2, 60));
        let z0 = densify_local(&z);
        let want = &z0 + densify_local(&a) * densify_local(&b);
        gemm(&mut z, 1.0, &a, &b, 1e-13);
        let got = densify_local(&z);
        assert!(frob_diff(&got, &want) <= 1e-9 * want.norm_l2());
    }

    #[test]
    fn matvec_agrees_with_dense() {
        let node = HNode::Branch(Box::new(HBranch {
            nrows: 14,
            ncols: 14,
            row_offsets: vec![0, 8, 14],
            col_offsets: vec![0, 8, 14],
            children: vec![
                HNode::Dense(rand_mat(8, 8, 70)),
                HNode::LowRank(rand_lowrank(8, 6, 3, 71)),
                HNode::LowRank(rand_lowrank(6, 8, 3, 72)),
                HNode::Dense(rand_mat(6, 6, 73)),
            ],
        }));
        let d = densify_local(&node);
        let x: Vec<f64> = (0..14).map(|i| ((i * 3) as f64).sin()).collect();
        let mut y = vec![0.0; 14];
        node_matvec(&node, 2.0, &x, &mut y);
        for i in 0..14 {
            let mut want = 0.0;
            for (j, xj) in x.iter().enumerate() {
                want += 2.0 * d[(i, j)] * xj;
            }
            assert!((y[i] - want).abs() <= 1e-12);
        }
    }
}
