//! View-factor entries F_ij and their dense assembly.
//!
//! Each entry is the double surface integral of cos(phi_i) cos(phi_j) /
//! (pi R^2) over the facet pair, evaluated by tensor Gauss quadrature whose
//! order adapts to the distance/diameter ratio of the pair. Point pairs
//! where either cosine is non-positive contribute zero, which keeps every
//! entry non-negative.

use faer::Mat;
use rayon::prelude::*;

use crate::geometry::{dist, dot, sub};
use crate::mesh::SurfaceMesh;

#[derive(Debug, thiserror::Error)]
pub enum VfError {
    #[error("coincident quadrature points while integrating facet pair ({i}, {j})")]
    CoincidentPoints { i: usize, j: usize },
    #[error("dense view-factor assembly needs at least 2 facets, got {0}")]
    TooFewFacets(usize),
    #[error("quadrature policy invalid: {0}")]
    BadPolicy(String),
}

/// Distance-ratio driven Gauss order schedule.
///
/// A pair at centroid distance d with facet diameters up to h is integrated
/// at the order of the first threshold with d/h below it; pairs sharing a
/// vertex use `max_order` directly.
#[derive(Debug, Clone)]
pub struct QuadPolicy {
    /// (ratio upper bound, Gauss order), ratios ascending.
    pub thresholds: Vec<(f64, usize)>,
    /// Fallback for far pairs and the order for vertex-sharing pairs.
    pub max_order: usize,
    pub far_order: usize,
}

impl Default for QuadPolicy {
    fn default() -> Self {
        QuadPolicy {
            thresholds: vec![(2.0, 4), (4.0, 3), (8.0, 2)],
            max_order: 6,
            far_order: 1,
        }
    }
}

impl QuadPolicy {
    /// Fixed-order policy, used by convergence studies.
    pub fn uniform(order: usize) -> Self {
        QuadPolicy {
            thresholds: Vec::new(),
            max_order: order,
            far_order: order,
        }
    }

    pub fn validate(&self) -> Result<(), VfError> {
        let mut last_ratio = 0.0;
        let mut last_order = usize::MAX;
        for &(ratio, order) in &self.thresholds {
            if ratio <= last_ratio {
                return Err(VfError::BadPolicy("ratios must ascend".into()));
            }
            if order < 1 || order > last_order {
                return Err(VfError::BadPolicy("orders must descend and be >= 1".into()));
            }
            last_ratio = ratio;
            last_order = order;
        }
        if self.far_order < 1 || self.max_order < 1 || self.max_order > 8 {
            return Err(VfError::BadPolicy("orders must be in 1..=8".into()));
        }
        Ok(())
    }

    pub fn order_for(&self, ratio: f64) -> usize {
        for &(bound, order) in &self.thresholds {
            if ratio < bound {
                return order;
            }
        }
        self.far_order
    }
}

fn shares_vertex(surf: &SurfaceMesh, i: usize, j: usize) -> bool {
    let a = surf.facets[i].vertex_ids.as_slice();
    let b = surf.facets[j].vertex_ids.as_slice();
    a.iter().any(|v| b.contains(v))
}

/// View factor between facets i and j (i != j); symmetric in (i, j) by
/// construction. The result carries units of area.
pub fn viewfactor_entry(
    surf: &SurfaceMesh,
    i: usize,
    j: usize,
    policy: &QuadPolicy,
) -> Result<f64, VfError> {
    if i > j {
        return viewfactor_entry(surf, j, i, policy);
    }
    assert_ne!(i, j, "view factor is only defined for distinct facets");
    let fi = &surf.facets[i];
    let fj = &surf.facets[j];
    let order = if shares_vertex(surf, i, j) {
        policy.max_order
    } else {
        let d = dist(fi.centroid, fj.centroid);
        let h = fi.diameter.max(fj.diameter);
        policy.order_for(d / h)
    };
    let nodes = &surf.parent.nodes;
    let qi = fi.quadrature(nodes, order);
    let qj = fj.quadrature(nodes, order);
    let mut sum = 0.0;
    for a in &qi {
        for b in &qj {
            let d = sub(b.point, a.point);
            let r2 = dot(d, d);
            if r2 == 0.0 {
                return Err(VfError::CoincidentPoints { i, j });
            }
            let ci = dot(fi.normal, d); // cos(phi_i) * R
            let cj = -dot(fj.normal, d); // cos(phi_j) * R
            if ci > 0.0 && cj > 0.0 {
                sum += a.weight * b.weight * ci * cj / (std::f64::consts::PI * r2 * r2);
            }
        }
    }
    Ok(sum)
}

/// Dense view factor matrix: zero diagonal, exactly symmetric (the upper
/// triangle is computed and mirrored).
pub fn assemble_dense_f(surf: &SurfaceMesh, policy: &QuadPolicy) -> Result<Mat<f64>, VfError> {
    let n = surf.n_facets();
    if n < 2 {
        return Err(VfError::TooFewFacets(n));
    }
    policy.validate()?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in (i + 1)..n {
                row[j] = viewfactor_entry(surf, i, j, policy)?;
            }
            Ok(row)
        })
        .collect::<Result<_, VfError>>()?;
    let mut f = Mat::<f64>::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            f[(i, j)] = v;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = f[(i, j)];
            f[(j, i)] = v;
        }
    }
    Ok(f)
}

/// Scaled and clamped view-factor row sums.
#[derive(Debug, Clone)]
pub struct RowSums {
    /// s_i = (1/A_i) sum_j F_ij
    pub s: Vec<f64>,
    /// s clamped into [0, 1]
    pub c: Vec<f64>,
}

impl RowSums {
    pub fn isolated_count(&self) -> usize {
        self.c.iter().filter(|&&c| c == 0.0).count()
    }
}

/// Row sums below this count as isolated. Physical rows are orders of
/// magnitude larger even for the most distant facet pairs; anything
/// smaller is low-rank compression dust in an identically zero row, and
/// must not be rescaled into a unit row by the closed-cavity treatment.
pub const ISOLATED_ROWSUM_FLOOR: f64 = 1e-12;

/// Row sums via one action of F on the all-ones vector.
pub fn compute_row_sums(f_action: impl FnOnce(&[f64]) -> Vec<f64>, areas: &[f64]) -> RowSums {
    let ones = vec![1.0; areas.len()];
    let fsum = f_action(&ones);
    assert_eq!(fsum.len(), areas.len(), "row-sum action dimension mismatch");
    let s: Vec<f64> = fsum.iter().zip(areas).map(|(v, a)| v / a).collect();
    let c = s
        .iter()
        .map(|&si| {
            if si < ISOLATED_ROWSUM_FLOOR {
                0.0
            } else if si > 1.0 {
                1.0
            } else {
                si
            }
        })
        .collect();
    RowSums { s, c }
}

/// Closed-cavity scaling: divide row i by c_i wherever c_i != 0; isolated
/// rows stay untouched.
pub fn scale_closed_cavity_dense(f: &mut Mat<f64>, rowsums: &RowSums) {
    let n = f.nrows();
    assert_eq!(rowsums.c.len(), n);
    for i in 0..n {
        let c = rowsums.c[i];
        if c != 0.0 {
            for j in 0..f.ncols() {
                f[(i, j)] /= c;
            }
        }
    }
}
