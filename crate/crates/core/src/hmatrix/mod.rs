//! Hierarchical block low-rank matrix format.
//!
//! An [`HMatrix`] mirrors a [`BlockTree`]: admissible leaves hold a
//! [`LowRankBlock`] built by full-pivot ACA, inadmissible leaves hold the
//! dense block. Block arithmetic, the hierarchical LU, and the triangular
//! solves live in [`arith`] and [`lu`]; everything internal works in the
//! permuted index order, only the public matvec/solve surface speaks the
//! original facet numbering.

pub mod aca;
pub mod arith;
pub mod lu;

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;

use crate::cluster::{BlockKind, BlockNodeKind, BlockTree};

pub use aca::{aca_full_pivot, aca_full_pivot_mat, recompress};
pub use lu::{hlu_factorize, HluError, HluFactors};

/// Low-rank factor pair: the block is approximated by `u * v^T`.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    pub u: Mat<f64>,
    pub v: Mat<f64>,
}

impl LowRankBlock {
    pub fn zero(nrows: usize, ncols: usize) -> Self {
        LowRankBlock {
            u: Mat::zeros(nrows, 0),
            v: Mat::zeros(ncols, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn densify(&self) -> Mat<f64> {
        &self.u * self.v.transpose()
    }
}

/// Pivoted dense LU of a diagonal leaf: unit lower factor packed strictly
/// below the diagonal, row swaps recorded in application order.
#[derive(Debug, Clone)]
pub struct PivLuLeaf {
    pub lower: Mat<f64>,
    pub swaps: Vec<usize>,
}

/// One node of the stored block hierarchy.
#[derive(Debug, Clone)]
pub enum HNode {
    Dense(Mat<f64>),
    LowRank(LowRankBlock),
    /// Only inside L factors, at diagonal leaves.
    PivLu(PivLuLeaf),
    Branch(Box<HBranch>),
}

#[derive(Debug, Clone)]
pub struct HBranch {
    pub nrows: usize,
    pub ncols: usize,
    /// Local row offsets of the children, length `row kids + 1`.
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
    /// Row-major over (row kids x col kids).
    pub children: Vec<HNode>,
}

impl HBranch {
    pub fn n_row_kids(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_col_kids(&self) -> usize {
        self.col_offsets.len() - 1
    }

    pub fn child(&self, ri: usize, ci: usize) -> &HNode {
        &self.children[ri * self.n_col_kids() + ci]
    }

    pub fn child_mut(&mut self, ri: usize, ci: usize) -> &mut HNode {
        let nc = self.n_col_kids();
        &mut self.children[ri * nc + ci]
    }
}

impl HNode {
    pub fn nrows(&self) -> usize {
        match self {
            HNode::Dense(d) => d.nrows(),
            HNode::LowRank(lr) => lr.nrows(),
            HNode::PivLu(p) => p.lower.nrows(),
            HNode::Branch(b) => b.nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            HNode::Dense(d) => d.ncols(),
            HNode::LowRank(lr) => lr.ncols(),
            HNode::PivLu(p) => p.lower.ncols(),
            HNode::Branch(b) => b.ncols,
        }
    }
}

/// Storage accounting for one hierarchical matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub bytes: u64,
    pub max_rank: usize,
    pub mean_rank: f64,
    pub n_dense_leaves: usize,
    pub n_lowrank_leaves: usize,
}

/// Permuted block-tree matrix with dense and low-rank leaves.
#[derive(Debug, Clone)]
pub struct HMatrix {
    pub blocks: Arc<BlockTree>,
    root: HNode,
    pub eps_rel: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum HError {
    #[error("identity cannot be added to a low-rank diagonal block at rows {0}..{1}")]
    AdmissibleDiagonal(usize, usize),
}

impl HMatrix {
    pub fn n(&self) -> usize {
        self.blocks.tree.n()
    }

    pub fn root(&self) -> &HNode {
        &self.root
    }

    pub(crate) fn from_root(blocks: Arc<BlockTree>, root: HNode, eps_rel: f64) -> Self {
        HMatrix {
            blocks,
            root,
            eps_rel,
        }
    }

    /// y = H x in the original (unpermuted) index order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n, "matvec dimension mismatch: {} vs {n}", x.len());
        let perm = &self.blocks.tree.perm;
        let xp: Vec<f64> = perm.iter().map(|&o| x[o]).collect();
        let mut yp = vec![0.0; n];
        arith::node_matvec(&self.root, 1.0, &xp, &mut yp);
        let mut y = vec![0.0; n];
        for (p, &o) in perm.iter().enumerate() {
            y[o] = yp[p];
        }
        y
    }

    /// Row scaling H <- diag(factors) H, factors in original index order.
    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.n());
        let perm = &self.blocks.tree.perm;
        let fp: Vec<f64> = perm.iter().map(|&o| factors[o]).collect();
        arith::scale_rows_node(&mut self.root, &fp);
    }

    /// H <- H + I, touching only dense diagonal leaves.
    pub fn add_identity(&mut self) -> Result<(), HError> {
        arith::add_identity_node(&mut self.root, 0)
    }

    /// Dense reconstruction in the original index order (tests and the
    /// dense reference path only).
    pub fn densify(&self) -> Mat<f64> {
        let n = self.n();
        let mut local = Mat::<f64>::zeros(n, n);
        arith::densify_into(&self.root, local.as_mut());
        let iperm = &self.blocks.tree.iperm;
        Mat::from_fn(n, n, |i, j| local[(iperm[i], iperm[j])])
    }

    pub fn storage_report(&self) -> StorageReport {
        let mut rep = StorageReport {
            bytes: 0,
            max_rank: 0,
            mean_rank: 0.0,
            n_dense_leaves: 0,
            n_lowrank_leaves: 0,
        };
        let mut rank_sum = 0usize;
        fn walk(node: &HNode, rep: &mut StorageReport, rank_sum: &mut usize) {
            match node {
                HNode::Dense(d) => {
                    rep.bytes += 8 * (d.nrows() * d.ncols()) as u64;
                    rep.n_dense_leaves += 1;
                }
                HNode::PivLu(p) => {
                    rep.bytes += 8 * (p.lower.nrows() * p.lower.ncols()) as u64;
                    rep.n_dense_leaves += 1;
                }
                HNode::LowRank(lr) => {
                    let k = lr.rank();
                    rep.bytes += 8 * ((lr.nrows() + lr.ncols()) * k) as u64;
                    rep.n_lowrank_leaves += 1;
                    rep.max_rank = rep.max_rank.max(k);
                    *rank_sum += k;
                }
                HNode::Branch(b) => {
                    for c in &b.children {
                        walk(c, rep, rank_sum);
                    }
                }
            }
        }
        walk(&self.root, &mut rep, &mut rank_sum);
        if rep.n_lowrank_leaves > 0 {
            rep.mean_rank = rank_sum as f64 / rep.n_lowrank_leaves as f64;
        }
        rep
    }
}

/// Assemble an H-matrix over `blocks` from a global entry oracle given in
/// the ORIGINAL index order. Dense leaves are filled exactly; admissible
/// leaves run ACA at eps/2 and are recompressed with the remaining half of
/// the budget so the per-leaf error stays below `eps_rel` in the Frobenius
/// norm, which makes the global bound sum up leaf-wise.
pub fn assemble_hmatrix<F>(oracle: F, blocks: &Arc<BlockTree>, eps_rel: f64) -> HMatrix
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    assert!(eps_rel > 0.0, "eps_rel must be positive");
    let tree = &blocks.tree;
    let perm = &tree.perm;
    let leaf_ids = blocks.leaves();
    let payloads: Vec<(usize, HNode)> = leaf_ids
        .par_iter()
        .map(|&id| {
            let (rlo, rhi) = blocks.row_range(id);
            let (clo, chi) = blocks.col_range(id);
            let m = rhi - rlo;
            let n = chi - clo;
            let node = match blocks.node(id).kind {
                BlockNodeKind::Leaf(BlockKind::Dense) => HNode::Dense(Mat::from_fn(m, n, |i, j| {
                    oracle(perm[rlo + i], perm[clo + j])
                })),
                BlockNodeKind::Leaf(BlockKind::LowRank) => {
                    let block =
                        Mat::from_fn(m, n, |i, j| oracle(perm[rlo + i], perm[clo + j]));
                    let lr = aca_full_pivot_mat(block, eps_rel / 2.0);
                    let k = lr.rank().max(1) as f64;
                    let lr = recompress(&lr, eps_rel / (2.0 * k.sqrt()));
                    HNode::LowRank(lr)
                }
                BlockNodeKind::Branch { .. } => unreachable!("leaf list"),
            };
            (id, node)
        })
        .collect();
    let mut slots: Vec<Option<HNode>> = (0..blocks.nodes.len()).map(|_| None).collect();
    for (id, node) in payloads {
        slots[id] = Some(node);
    }
    let root = build_node(blocks, 0, &mut slots);
    HMatrix {
        blocks: Arc::clone(blocks),
        root,
        eps_rel,
    }
}

/// Assembly for a symmetric oracle on the symmetric block tree: only the
/// lower-or-diagonal half of the leaves is evaluated, the mirror leaf
/// reuses the payload transposed (dense) or with swapped factors
/// (low-rank), halving both quadrature and ACA work.
pub fn assemble_hmatrix_symmetric<F>(oracle: F, blocks: &Arc<BlockTree>, eps_rel: f64) -> HMatrix
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    assert!(eps_rel > 0.0, "eps_rel must be positive");
    let tree = &blocks.tree;
    let perm = &tree.perm;
    let leaf_ids = blocks.leaves();
    let mut mirror = std::collections::HashMap::new();
    for &id in &leaf_ids {
        let node = blocks.node(id);
        mirror.insert((node.row, node.col), id);
    }
    let primary: Vec<usize> = leaf_ids
        .iter()
        .copied()
        .filter(|&id| {
            let node = blocks.node(id);
            node.row <= node.col
        })
        .collect();
    let payloads: Vec<(usize, HNode)> = primary
        .par_iter()
        .map(|&id| {
            let (rlo, rhi) = blocks.row_range(id);
            let (clo, chi) = blocks.col_range(id);
            let m = rhi - rlo;
            let n = chi - clo;
            let node = match blocks.node(id).kind {
                BlockNodeKind::Leaf(BlockKind::Dense) => HNode::Dense(Mat::from_fn(m, n, |i, j| {
                    oracle(perm[rlo + i], perm[clo + j])
                })),
                BlockNodeKind::Leaf(BlockKind::LowRank) => {
                    let block =
                        Mat::from_fn(m, n, |i, j| oracle(perm[rlo + i], perm[clo + j]));
                    let lr = aca_full_pivot_mat(block, eps_rel / 2.0);
                    let k = lr.rank().max(1) as f64;
                    let lr = recompress(&lr, eps_rel / (2.0 * k.sqrt()));
                    HNode::LowRank(lr)
                }
                BlockNodeKind::Branch { .. } => unreachable!("leaf list"),
            };
            (id, node)
        })
        .collect();
    let mut slots: Vec<Option<HNode>> = (0..blocks.nodes.len()).map(|_| None).collect();
    for (id, node) in payloads {
        let bn = blocks.node(id);
        if bn.row != bn.col {
            let mid = mirror[&(bn.col, bn.row)];
            slots[mid] = Some(match &node {
                HNode::Dense(d) => HNode::Dense(d.transpose().to_owned()),
                HNode::LowRank(lr) => HNode::LowRank(LowRankBlock {
                    u: lr.v.clone(),
                    v: lr.u.clone(),
                }),
                _ => unreachable!(),
            });
        }
        slots[id] = Some(node);
    }
    let root = build_node(blocks, 0, &mut slots);
    HMatrix {
        blocks: Arc::clone(blocks),
        root,
        eps_rel,
    }
}

fn build_node(blocks: &BlockTree, id: usize, slots: &mut Vec<Option<HNode>>) -> HNode {
    match &blocks.node(id).kind {
        BlockNodeKind::Leaf(_) => slots[id].take().expect("payload assembled"),
        BlockNodeKind::Branch {
            row_kids,
            col_kids,
            children,
        } => {
            let tree = &blocks.tree;
            let (rlo, rhi) = blocks.row_range(id);
            let (clo, chi) = blocks.col_range(id);
            let mut row_offsets = vec![0];
            for &r in row_kids {
                row_offsets.push(row_offsets.last().unwrap() + tree.node(r).len());
            }
            let mut col_offsets = vec![0];
            for &c in col_kids {
                col_offsets.push(col_offsets.last().unwrap() + tree.node(c).len());
            }
            let children: Vec<HNode> = children
                .clone()
                .into_iter()
                .map(|cid| build_node(blocks, cid, slots))
                .collect();
            HNode::Branch(Box::new(HBranch {
                nrows: rhi - rlo,
                ncols: chi - clo,
                row_offsets,
                col_offsets,
                children,
            }))
        }
    }
}
