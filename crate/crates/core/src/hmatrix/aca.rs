//! Adaptive cross approximation with full pivoting, plus the QR + SVD
//! recompression used after ACA and inside block arithmetic.

use faer::Mat;

use super::LowRankBlock;

/// Full-pivot ACA of an m x n block given by an entry oracle. The block is
/// materialized once; each step subtracts the rank-1 cross at the entry of
/// maximal absolute value and the exact Frobenius norm of the residual is
/// recomputed, so the returned factors satisfy
/// `|X - U V^T|_F <= eps_rel |X|_F`.
pub fn aca_full_pivot<F>(nrows: usize, ncols: usize, eval: F, eps_rel: f64) -> LowRankBlock
where
    F: Fn(usize, usize) -> f64,
{
    let block = Mat::from_fn(nrows, ncols, eval);
    aca_full_pivot_mat(block, eps_rel)
}

/// Full-pivot ACA on an already materialized block (consumed as the
/// residual work buffer).
pub fn aca_full_pivot_mat(mut r: Mat<f64>, eps_rel: f64) -> LowRankBlock {
    assert!(eps_rel > 0.0, "eps_rel must be positive");
    let (m, n) = (r.nrows(), r.ncols());
    let norm0 = r.norm_l2();
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    if norm0 > 0.0 {
        let kmax = m.min(n);
        loop {
            if r.norm_l2() <= eps_rel * norm0 || us.len() == kmax {
                break;
            }
            // full pivot: entry of maximal absolute value in the residual
            let (mut pi, mut pj, mut pval) = (0usize, 0usize, 0.0f64);
            for j in 0..n {
                for i in 0..m {
                    let a = r[(i, j)].abs();
                    if a > pval {
                        pval = a;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if pval == 0.0 {
                break; // residual is exactly zero
            }
            let pivot = r[(pi, pj)];
            let u: Vec<f64> = (0..m).map(|i| r[(i, pj)]).collect();
            let v: Vec<f64> = (0..n).map(|j| r[(pi, j)] / pivot).collect();
            for j in 0..n {
                let vj = v[j];
                for i in 0..m {
                    r[(i, j)] -= u[i] * vj;
                }
            }
            us.push(u);
            vs.push(v);
        }
    }
    let k = us.len();
    LowRankBlock {
        u: Mat::from_fn(m, k, |i, c| us[c][i]),
        v: Mat::from_fn(n, k, |j, c| vs[c][j]),
    }
}

/// Rank truncation through orthogonal factors: QR of U and V, SVD of the
/// small core, keep singular values above `eps_rel * sigma_1`. The result
/// differs from the input by at most `eps_rel` relative in spectral norm.
pub fn recompress(blk: &LowRankBlock, eps_rel: f64) -> LowRankBlock {
    let k = blk.rank();
    if k == 0 {
        return blk.clone();
    }
    let qr_u = blk.u.qr();
    let qu = qr_u.compute_thin_Q();
    let ru = qr_u.thin_R();
    let qr_v = blk.v.qr();
    let qv = qr_v.compute_thin_Q();
    let rv = qr_v.thin_R();
    let core = &ru * rv.transpose();
    let svd = core.thin_svd().expect("svd of a small core must converge");
    let s = svd.S().column_vector().to_owned();
    let sigma1 = s[0];
    // sigma_1 at the rounding level of the factor product means the block
    // cancelled to numerical zero (e.g. U V^T + (-U) V^T)
    let zero_floor = 1e-15 * blk.u.norm_l2() * blk.v.norm_l2();
    if sigma1 <= zero_floor {
        return LowRankBlock::zero(blk.nrows(), blk.ncols());
    }
    let keep = (0..s.nrows()).take_while(|&i| s[i] > eps_rel * sigma1).count();
    let mut uw = Mat::zeros(core.nrows(), keep);
    for c in 0..keep {
        for i in 0..core.nrows() {
            uw[(i, c)] = svd.U()[(i, c)] * s[c];
        }
    }
    let mut vw = Mat::zeros(core.ncols(), keep);
    for c in 0..keep {
        for i in 0..core.ncols() {
            vw[(i, c)] = svd.V()[(i, c)];
        }
    }
    LowRankBlock {
        u: &qu * &uw,
        v: &qv * &vw,
    }
}
