//! Volume meshes, boundary facet extraction, and facet geometry.
//!
//! A [`VolumeMesh`] holds tet4/hex8 elements plus integer sidesets marking
//! boundary faces. [`extract_boundary`] turns a set of sideset tags into a
//! [`SurfaceMesh`] of planar (tri3) or bilinear (quad4) facets carrying the
//! centroid, outward unit normal, and area used by the radiation kernel.

pub mod generators;
pub mod io;

use std::collections::HashMap;
use std::sync::Arc;

use crate::geometry::{add, cross, dist, norm, normalize, scale, sub, Point3};
use crate::quadrature::{quad_rule, tri_rule, FacetQp};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("parse failure at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported element kind: {0}")]
    UnsupportedElement(String),
    #[error("element {elem} has non-positive volume {volume:.3e}")]
    InvertedElement { elem: usize, volume: f64 },
    #[error("element {elem} references node {node} out of {n_nodes}")]
    BadNodeIndex {
        elem: usize,
        node: usize,
        n_nodes: usize,
    },
    #[error("boundary extraction selected no faces for tags {0:?}")]
    EmptySelection(Vec<i32>),
    #[error("non-manifold face on element {elem} (shared by {count} elements)")]
    NonManifold { elem: usize, count: usize },
    #[error("invalid generator parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Tet4,
    Hex8,
}

impl ElementKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Tet4 => 4,
            ElementKind::Hex8 => 8,
        }
    }

    pub fn n_faces(self) -> usize {
        match self {
            ElementKind::Tet4 => 4,
            ElementKind::Hex8 => 6,
        }
    }
}

/// Local face connectivity, ordered so the face normal points out of the
/// element when the element has positive volume.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1], // z-
    [4, 5, 6, 7], // z+
    [0, 1, 5, 4], // y-
    [1, 2, 6, 5], // x+
    [2, 3, 7, 6], // y+
    [3, 0, 4, 7], // x-
];

#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub kind: ElementKind,
    nodes: [usize; 8],
}

impl Element {
    pub fn new(kind: ElementKind, nodes: &[usize]) -> Self {
        assert_eq!(nodes.len(), kind.n_nodes());
        let mut buf = [0usize; 8];
        buf[..nodes.len()].copy_from_slice(nodes);
        Element { kind, nodes: buf }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.kind.n_nodes()]
    }

    /// Global node ids of a local face, outward-ordered.
    pub fn face_nodes(&self, face: usize) -> Vec<usize> {
        match self.kind {
            ElementKind::Tet4 => TET_FACES[face].iter().map(|&l| self.nodes[l]).collect(),
            ElementKind::Hex8 => HEX_FACES[face].iter().map(|&l| self.nodes[l]).collect(),
        }
    }
}

/// Tet/hex volume mesh with sideset tags on boundary faces.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub nodes: Vec<Point3>,
    pub elements: Vec<Element>,
    /// (element index, local face) -> sideset tag.
    pub boundary_tags: HashMap<(usize, u8), i32>,
    /// Per-element region id (generator body index or gmsh physical tag).
    pub element_regions: Vec<u32>,
}

impl VolumeMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Signed volume of an element by the standard formulas.
    pub fn element_volume(&self, e: usize) -> f64 {
        let el = &self.elements[e];
        match el.kind {
            ElementKind::Tet4 => {
                let p: Vec<Point3> = el.nodes().iter().map(|&n| self.nodes[n]).collect();
                let a = sub(p[1], p[0]);
                let b = sub(p[2], p[0]);
                let c = sub(p[3], p[0]);
                crate::geometry::dot(a, cross(b, c)) / 6.0
            }
            ElementKind::Hex8 => {
                let p: Vec<Point3> = el.nodes().iter().map(|&n| self.nodes[n]).collect();
                let (gx, gw) = crate::quadrature::gauss_legendre(2);
                let mut vol = 0.0;
                for (i, &xi) in gx.iter().enumerate() {
                    for (j, &eta) in gx.iter().enumerate() {
                        for (k, &zeta) in gx.iter().enumerate() {
                            let det = hex_jacobian_det(&p, xi, eta, zeta);
                            vol += gw[i] * gw[j] * gw[k] * det;
                        }
                    }
                }
                vol
            }
        }
    }

    /// Check node indices and element volumes; loaders and generators call
    /// this before handing the mesh out.
    pub fn validate(&self) -> Result<(), MeshError> {
        for (e, el) in self.elements.iter().enumerate() {
            for &n in el.nodes() {
                if n >= self.nodes.len() {
                    return Err(MeshError::BadNodeIndex {
                        elem: e,
                        node: n,
                        n_nodes: self.nodes.len(),
                    });
                }
            }
            let v = self.element_volume(e);
            if !(v > 0.0) {
                return Err(MeshError::InvertedElement { elem: e, volume: v });
            }
        }
        Ok(())
    }
}

/// Trilinear shape derivatives -> jacobian determinant at (xi, eta, zeta).
fn hex_jacobian_det(p: &[Point3], xi: f64, eta: f64, zeta: f64) -> f64 {
    let signs = [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ];
    let mut j = [[0.0f64; 3]; 3];
    for a in 0..8 {
        let [sx, sy, sz] = signs[a];
        let gx = 0.125 * sx * (1.0 + sy * eta) * (1.0 + sz * zeta);
        let gy = 0.125 * (1.0 + sx * xi) * sy * (1.0 + sz * zeta);
        let gz = 0.125 * (1.0 + sx * xi) * (1.0 + sy * eta) * sz;
        for d in 0..3 {
            j[0][d] += gx * p[a][d];
            j[1][d] += gy * p[a][d];
            j[2][d] += gz * p[a][d];
        }
    }
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

/// Vertex ids of a facet in outward-ordered sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetNodes {
    Tri([usize; 3]),
    Quad([usize; 4]),
}

impl FacetNodes {
    pub fn as_slice(&self) -> &[usize] {
        match self {
            FacetNodes::Tri(n) => n,
            FacetNodes::Quad(n) => n,
        }
    }
}

/// One radiating boundary facet.
#[derive(Debug, Clone)]
pub struct Facet {
    pub vertex_ids: FacetNodes,
    pub centroid: Point3,
    pub normal: Point3,
    pub area: f64,
    /// Largest vertex-to-vertex distance; drives the quadrature policy.
    pub diameter: f64,
    pub parent_elem: usize,
    pub region: u32,
}

impl Facet {
    /// Quadrature points over the facet at the given order, weights
    /// carrying the surface Jacobian.
    pub fn quadrature(&self, nodes: &[Point3], order: usize) -> Vec<FacetQp> {
        match self.vertex_ids {
            FacetNodes::Tri(v) => {
                let verts = [nodes[v[0]], nodes[v[1]], nodes[v[2]]];
                tri_rule(&verts, order)
            }
            FacetNodes::Quad(v) => {
                let verts = [nodes[v[0]], nodes[v[1]], nodes[v[2]], nodes[v[3]]];
                quad_rule(&verts, order)
            }
        }
    }
}

/// The radiating boundary manifold: one facet per tagged face of the parent
/// volume mesh.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub facets: Vec<Facet>,
    pub parent: Arc<VolumeMesh>,
}

impl SurfaceMesh {
    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn centroids(&self) -> Vec<Point3> {
        self.facets.iter().map(|f| f.centroid).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.facets.iter().map(|f| f.area).collect()
    }
}

fn facet_from_face(mesh: &VolumeMesh, elem: usize, face: usize) -> Facet {
    let el = &mesh.elements[elem];
    let ids = el.face_nodes(face);
    let region = mesh.element_regions.get(elem).copied().unwrap_or(0);
    match ids.len() {
        3 => {
            let v = [mesh.nodes[ids[0]], mesh.nodes[ids[1]], mesh.nodes[ids[2]]];
            let n = cross(sub(v[1], v[0]), sub(v[2], v[0]));
            let area = 0.5 * norm(n);
            let centroid = scale(add(v[0], add(v[1], v[2])), 1.0 / 3.0);
            let diameter = dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[0], v[2]));
            Facet {
                vertex_ids: FacetNodes::Tri([ids[0], ids[1], ids[2]]),
                centroid,
                normal: normalize(n),
                area,
                diameter,
                parent_elem: elem,
                region,
            }
        }
        4 => {
            let v = [
                mesh.nodes[ids[0]],
                mesh.nodes[ids[1]],
                mesh.nodes[ids[2]],
                mesh.nodes[ids[3]],
            ];
            // bilinear patch: area and centroid from 2x2 Gauss on the mapping
            let qps = quad_rule(&v, 2);
            let area: f64 = qps.iter().map(|q| q.weight).sum();
            let mut centroid = [0.0; 3];
            for q in &qps {
                centroid = add(centroid, scale(q.point, q.weight));
            }
            centroid = scale(centroid, 1.0 / area);
            // normal at patch center
            let tx = sub(add(v[1], v[2]), add(v[0], v[3]));
            let te = sub(add(v[2], v[3]), add(v[0], v[1]));
            let normal = normalize(cross(tx, te));
            let mut diameter = 0.0f64;
            for a in 0..4 {
                for b in (a + 1)..4 {
                    diameter = diameter.max(dist(v[a], v[b]));
                }
            }
            Facet {
                vertex_ids: FacetNodes::Quad([ids[0], ids[1], ids[2], ids[3]]),
                centroid,
                normal,
                area,
                diameter,
                parent_elem: elem,
                region,
            }
        }
        _ => unreachable!("faces are tri3 or quad4"),
    }
}

/// Extract the facets whose sideset tag is in `tags`, in (element, face)
/// order. Extraction is deterministic and idempotent.
pub fn extract_boundary(mesh: &Arc<VolumeMesh>, tags: &[i32]) -> Result<SurfaceMesh, MeshError> {
    if tags.is_empty() {
        return Err(MeshError::EmptySelection(Vec::new()));
    }
    // face-sharing counts to detect non-manifold input
    let mut face_count: HashMap<Vec<usize>, usize> = HashMap::new();
    for el in &mesh.elements {
        for face in 0..el.kind.n_faces() {
            let mut key = el.face_nodes(face);
            key.sort_unstable();
            *face_count.entry(key).or_insert(0) += 1;
        }
    }

    let mut selected: Vec<(usize, usize)> = mesh
        .boundary_tags
        .iter()
        .filter(|(_, tag)| tags.contains(tag))
        .map(|(&(elem, face), _)| (elem, face as usize))
        .collect();
    selected.sort_unstable();
    if selected.is_empty() {
        return Err(MeshError::EmptySelection(tags.to_vec()));
    }

    let mut facets = Vec::with_capacity(selected.len());
    for &(elem, face) in &selected {
        let mut key = mesh.elements[elem].face_nodes(face);
        key.sort_unstable();
        let count = face_count[&key];
        if count > 2 {
            return Err(MeshError::NonManifold { elem, count });
        }
        facets.push(facet_from_face(mesh, elem, face));
    }
    Ok(SurfaceMesh {
        facets,
        parent: Arc::clone(mesh),
    })
}

#[cfg(test)]
pub(crate) fn unit_tet() -> VolumeMesh {
    VolumeMesh {
        nodes: vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ],
        elements: vec![Element::new(ElementKind::Tet4, &[0, 1, 2, 3])],
        boundary_tags: HashMap::new(),
        element_regions: vec![0],
    }
}

#[cfg(test)]
pub(crate) fn unit_hex() -> VolumeMesh {
    VolumeMesh {
        nodes: vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ],
        elements: vec![Element::new(ElementKind::Hex8, &[0, 1, 2, 3, 4, 5, 6, 7])],
        boundary_tags: HashMap::new(),
        element_regions: vec![0],
    }
}
