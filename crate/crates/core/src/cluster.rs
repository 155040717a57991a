//! Geometric clustering of facet centroids and the admissibility-driven
//! block partition of the matrix index set.
//!
//! The index tree splits the centroid cloud recursively at the median of
//! the longest bounding-box axis until clusters hold at most `n_min`
//! points; the induced permutation makes every cluster a contiguous range.
//! The block tree then subdivides index-pair blocks until they are either
//! admissible (well separated, stored low-rank) or pairs of leaves (stored
//! dense).

use crate::geometry::{Aabb, Point3};
use std::sync::Arc;

/// One cluster: a contiguous range of permuted positions.
#[derive(Debug, Clone)]
pub struct ClusterNode {
    /// Permuted index range [start, end).
    pub range: (usize, usize),
    pub children: Option<[usize; 2]>,
    pub bbox: Aabb,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        self.range.1 - self.range.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary cluster tree over facet centroids with its permutation.
#[derive(Debug, Clone)]
pub struct IndexTree {
    pub nodes: Vec<ClusterNode>,
    /// perm[p] = original index stored at permuted position p.
    pub perm: Vec<usize>,
    /// iperm[original index] = permuted position.
    pub iperm: Vec<usize>,
    pub n_min: usize,
}

pub const ROOT: usize = 0;

impl IndexTree {
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    /// Child ids; a leaf yields itself so block recursion can keep
    /// splitting the other side.
    pub fn children_or_self(&self, id: usize) -> Vec<usize> {
        match self.nodes[id].children {
            Some([a, b]) => vec![a, b],
            None => vec![id],
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }
}

/// Recursive median split along the longest bounding-box axis; stops when
/// a cluster holds at most `n_min` points. Ties in the median go to the
/// lower half.
pub fn build_index_tree(centroids: &[Point3], n_min: usize) -> IndexTree {
    assert!(!centroids.is_empty(), "cannot cluster an empty point set");
    assert!(n_min >= 1, "n_min must be >= 1");
    let n = centroids.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut nodes = Vec::new();
    nodes.push(ClusterNode {
        range: (0, n),
        children: None,
        bbox: Aabb::from_points(centroids.iter()),
    });
    let mut stack = vec![ROOT];
    while let Some(id) = stack.pop() {
        let (lo, hi) = nodes[id].range;
        if hi - lo <= n_min {
            continue;
        }
        let axis = nodes[id].bbox.longest_axis();
        // median element: lower half gets the extra element on odd counts
        let mid = lo + (hi - lo).div_ceil(2);
        perm[lo..hi].select_nth_unstable_by(mid - lo - 1, |&a, &b| {
            centroids[a][axis]
                .partial_cmp(&centroids[b][axis])
                .expect("non-finite centroid coordinate")
        });
        let left_box = Aabb::from_points(perm[lo..mid].iter().map(|&i| &centroids[i]));
        let right_box = Aabb::from_points(perm[mid..hi].iter().map(|&i| &centroids[i]));
        let left = nodes.len();
        nodes.push(ClusterNode {
            range: (lo, mid),
            children: None,
            bbox: left_box,
        });
        let right = nodes.len();
        nodes.push(ClusterNode {
            range: (mid, hi),
            children: None,
            bbox: right_box,
        });
        nodes[id].children = Some([left, right]);
        stack.push(left);
        stack.push(right);
    }
    let mut iperm = vec![0usize; n];
    for (pos, &orig) in perm.iter().enumerate() {
        iperm[orig] = pos;
    }
    IndexTree {
        nodes,
        perm,
        iperm,
        n_min,
    }
}

/// Geometric admissibility: min(diam(A_sigma), diam(A_tau)) <= c dist.
/// Touching or overlapping boxes (dist = 0) are never admissible, which
/// keeps every diagonal block inadmissible.
pub fn admissible(sigma: &ClusterNode, tau: &ClusterNode, c: f64) -> bool {
    let dist = sigma.bbox.distance(&tau.bbox);
    let d = sigma.bbox.diameter().min(tau.bbox.diameter());
    dist > 0.0 && d <= c * dist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Admissible: stored as a low-rank factorization.
    LowRank,
    /// Pair of index-tree leaves: stored dense.
    Dense,
}

#[derive(Debug, Clone)]
pub enum BlockNodeKind {
    Leaf(BlockKind),
    /// Children ids, row-major over (row children x col children).
    Branch {
        row_kids: Vec<usize>,
        col_kids: Vec<usize>,
        children: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct BlockNode {
    pub row: usize,
    pub col: usize,
    pub kind: BlockNodeKind,
}

/// Block partition of the (permuted) index set pairs.
#[derive(Debug, Clone)]
pub struct BlockTree {
    pub tree: Arc<IndexTree>,
    pub nodes: Vec<BlockNode>,
    pub adm_const: f64,
}

impl BlockTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, id: usize) -> &BlockNode {
        &self.nodes[id]
    }

    pub fn row_range(&self, id: usize) -> (usize, usize) {
        self.tree.node(self.nodes[id].row).range
    }

    pub fn col_range(&self, id: usize) -> (usize, usize) {
        self.tree.node(self.nodes[id].col).range
    }

    /// Leaf block ids in construction order.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, BlockNodeKind::Leaf(_)))
            .collect()
    }

    /// Sparsity constant of the partition: the largest number of leaf
    /// blocks sharing one row cluster.
    pub fn sparsity_constant(&self) -> usize {
        let mut count = vec![0usize; self.tree.nodes.len()];
        for id in self.leaves() {
            count[self.nodes[id].row] += 1;
        }
        count.into_iter().max().unwrap_or(0)
    }
}

/// Recursive block subdivision from (root, root): admissible pairs become
/// low-rank leaves, leaf pairs dense leaves, everything else recurses into
/// all child pairs.
pub fn build_block_tree(tree: Arc<IndexTree>, adm_const: f64) -> BlockTree {
    assert!(adm_const > 0.0, "admissibility constant must be positive");
    let mut nodes = Vec::new();
    nodes.push(BlockNode {
        row: ROOT,
        col: ROOT,
        kind: BlockNodeKind::Leaf(BlockKind::Dense), // placeholder, fixed below
    });
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let (row, col) = (nodes[id].row, nodes[id].col);
        let sigma = tree.node(row);
        let tau = tree.node(col);
        let kind = if admissible(sigma, tau, adm_const) {
            BlockNodeKind::Leaf(BlockKind::LowRank)
        } else if sigma.is_leaf() && tau.is_leaf() {
            BlockNodeKind::Leaf(BlockKind::Dense)
        } else {
            let row_kids = tree.children_or_self(row);
            let col_kids = tree.children_or_self(col);
            let mut children = Vec::with_capacity(row_kids.len() * col_kids.len());
            for &r in &row_kids {
                for &c in &col_kids {
                    let child = nodes.len();
                    nodes.push(BlockNode {
                        row: r,
                        col: c,
                        kind: BlockNodeKind::Leaf(BlockKind::Dense),
                    });
                    children.push(child);
                    stack.push(child);
                }
            }
            BlockNodeKind::Branch {
                row_kids,
                col_kids,
                children,
            }
        };
        nodes[id].kind = kind;
    }
    BlockTree {
        tree,
        nodes,
        adm_const,
    }
}

/// Render the leaf partition as a binary PPM (P6): dense leaves blue,
/// low-rank leaves gray, matching the usual block-structure plots.
pub fn block_structure_ppm(blocks: &BlockTree, max_pixels: usize) -> Vec<u8> {
    let n = blocks.tree.n();
    let size = n.min(max_pixels.max(1));
    let px = |idx: usize| -> usize { (idx * size) / n };
    const BLUE: [u8; 3] = [70, 70, 230];
    const GRAY: [u8; 3] = [214, 214, 214];
    let mut img = vec![255u8; size * size * 3];
    for id in blocks.leaves() {
        let color = match blocks.node(id).kind {
            BlockNodeKind::Leaf(BlockKind::Dense) => BLUE,
            BlockNodeKind::Leaf(BlockKind::LowRank) => GRAY,
            _ => unreachable!(),
        };
        let (rlo, rhi) = blocks.row_range(id);
        let (clo, chi) = blocks.col_range(id);
        for r in px(rlo)..px(rhi).max(px(rlo) + 1).min(size) {
            for c in px(clo)..px(chi).max(px(clo) + 1).min(size) {
                let o = (r * size + c) * 3;
                img[o..o + 3].copy_from_slice(&color);
            }
        }
    }
    let mut out = format!("P6\n{size} {size}\n255\n").into_bytes();
    out.extend_from_slice(&img);
    out
}
