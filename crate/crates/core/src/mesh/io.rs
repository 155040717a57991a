//! Mesh file I/O: the native plain-text format and a Gmsh ASCII v2 subset.
//!
//! Native format, counts explicit, whitespace separated:
//!
//! ```text
//! NODES <n>
//! x y z
//! ELEMENTS <n>
//! tet4|hex8 <node ids...>
//! REGIONS <n>        # optional, one region id per element
//! <id>
//! SIDESETS <n>
//! <element> <local face> <tag>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Element, ElementKind, MeshError, VolumeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    GmshAsciiV2,
    NativeText,
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<VolumeMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mesh = match format {
        MeshFormat::NativeText => parse_native(&text, path),
        MeshFormat::GmshAsciiV2 => parse_gmsh_v2(&text, path),
    }?;
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_native(mesh: &VolumeMesh, path: &Path) -> Result<(), MeshError> {
    let mut out = String::new();
    let _ = writeln!(out, "NODES {}", mesh.nodes.len());
    for n in &mesh.nodes {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", n[0], n[1], n[2]);
    }
    let _ = writeln!(out, "ELEMENTS {}", mesh.elements.len());
    for el in &mesh.elements {
        let kind = match el.kind {
            ElementKind::Tet4 => "tet4",
            ElementKind::Hex8 => "hex8",
        };
        let ids: Vec<String> = el.nodes().iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "{kind} {}", ids.join(" "));
    }
    let _ = writeln!(out, "REGIONS {}", mesh.element_regions.len());
    for r in &mesh.element_regions {
        let _ = writeln!(out, "{r}");
    }
    let mut tags: Vec<((usize, u8), i32)> = mesh.boundary_tags.iter().map(|(&k, &v)| (k, v)).collect();
    tags.sort_unstable();
    let _ = writeln!(out, "SIDESETS {}", tags.len());
    for ((elem, face), tag) in tags {
        let _ = writeln!(out, "{elem} {face} {tag}");
    }
    std::fs::write(path, out).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    path: String,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Lines {
            iter: text.lines().enumerate(),
            path: path.display().to_string(),
            line: 0,
        }
    }

    /// Next non-empty, non-comment line.
    fn next(&mut self) -> Option<&'a str> {
        for (idx, raw) in self.iter.by_ref() {
            self.line = idx + 1;
            let s = raw.trim();
            if !s.is_empty() && !s.starts_with('#') {
                return Some(s);
            }
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, MeshError> {
        self.next().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }
}

fn parse_count(lines: &mut Lines, keyword: &str) -> Result<usize, MeshError> {
    let s = lines.expect(keyword)?;
    let mut it = s.split_whitespace();
    let kw = it.next().unwrap_or("");
    if kw != keyword {
        return Err(lines.err(format!("expected section {keyword}, found {kw:?}")));
    }
    it.next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| lines.err(format!("bad count in {keyword} header")))
}

fn parse_native(text: &str, path: &Path) -> Result<VolumeMesh, MeshError> {
    let mut lines = Lines::new(text, path);
    let n_nodes = parse_count(&mut lines, "NODES")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let s = lines.expect("node coordinates")?;
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| lines.err(format!("bad coordinate: {e}")))?;
        if vals.len() != 3 {
            return Err(lines.err("expected 3 coordinates"));
        }
        nodes.push([vals[0], vals[1], vals[2]]);
    }
    let n_elems = parse_count(&mut lines, "ELEMENTS")?;
    let mut elements = Vec::with_capacity(n_elems);
    for _ in 0..n_elems {
        let s = lines.expect("element connectivity")?;
        let mut it = s.split_whitespace();
        let kind = match it.next().unwrap_or("") {
            "tet4" => ElementKind::Tet4,
            "hex8" => ElementKind::Hex8,
            other => return Err(MeshError::UnsupportedElement(other.to_string())),
        };
        let ids: Vec<usize> = it
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| lines.err(format!("bad node id: {e}")))?;
        if ids.len() != kind.n_nodes() {
            return Err(lines.err(format!(
                "element needs {} nodes, got {}",
                kind.n_nodes(),
                ids.len()
            )));
        }
        elements.push(Element::new(kind, &ids));
    }
    let mut element_regions = vec![0u32; n_elems];
    // optional REGIONS section, then SIDESETS
    let header = lines.expect("REGIONS or SIDESETS")?;
    let mut it = header.split_whitespace();
    let kw = it.next().unwrap_or("");
    let count: usize = it
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| lines.err("bad section count"))?;
    let n_sets = match kw {
        "REGIONS" => {
            if count != n_elems {
                return Err(lines.err(format!("REGIONS count {count} != ELEMENTS {n_elems}")));
            }
            for r in element_regions.iter_mut() {
                let s = lines.expect("region id")?;
                *r = s.parse().map_err(|e| lines.err(format!("bad region id: {e}")))?;
            }
            parse_count(&mut lines, "SIDESETS")?
        }
        "SIDESETS" => count,
        other => return Err(lines.err(format!("expected REGIONS or SIDESETS, found {other:?}"))),
    };
    let mut boundary_tags = HashMap::new();
    for _ in 0..n_sets {
        let s = lines.expect("sideset entry")?;
        let vals: Vec<&str> = s.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(lines.err("sideset entry needs: element face tag"));
        }
        let elem: usize = vals[0].parse().map_err(|e| lines.err(format!("{e}")))?;
        let face: u8 = vals[1].parse().map_err(|e| lines.err(format!("{e}")))?;
        let tag: i32 = vals[2].parse().map_err(|e| lines.err(format!("{e}")))?;
        if elem >= elements.len() || (face as usize) >= elements[elem].kind.n_faces() {
            return Err(lines.err(format!("sideset ({elem}, {face}) out of range")));
        }
        boundary_tags.insert((elem, face), tag);
    }
    Ok(VolumeMesh {
        nodes,
        elements,
        boundary_tags,
        element_regions,
    })
}

/// Gmsh ASCII v2 subset: $Nodes, $Elements with element types 4 (tet4),
/// 5 (hex8), 2 (tri3), 3 (quad4). Surface elements become sideset tags on
/// the volume face with the same node set; the first tag is the physical
/// group.
fn parse_gmsh_v2(text: &str, path: &Path) -> Result<VolumeMesh, MeshError> {
    let mut lines = Lines::new(text, path);
    let mut nodes: Vec<[f64; 3]> = Vec::new();
    let mut id_map: HashMap<usize, usize> = HashMap::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut element_regions: Vec<u32> = Vec::new();
    let mut surface_elems: Vec<(Vec<usize>, i32)> = Vec::new();

    while let Some(s) = lines.next() {
        match s {
            "$MeshFormat" => {
                let header = lines.expect("format line")?;
                let version = header.split_whitespace().next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported gmsh version {version}")));
                }
                while let Some(t) = lines.next() {
                    if t == "$EndMeshFormat" {
                        break;
                    }
                }
            }
            "$Nodes" => {
                let n: usize = lines
                    .expect("node count")?
                    .parse()
                    .map_err(|e| lines.err(format!("bad node count: {e}")))?;
                for _ in 0..n {
                    let row = lines.expect("node line")?;
                    let vals: Vec<&str> = row.split_whitespace().collect();
                    if vals.len() != 4 {
                        return Err(lines.err("node line needs: id x y z"));
                    }
                    let id: usize = vals[0].parse().map_err(|e| lines.err(format!("{e}")))?;
                    let xyz: Vec<f64> = vals[1..]
                        .iter()
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| lines.err(format!("{e}")))?;
                    id_map.insert(id, nodes.len());
                    nodes.push([xyz[0], xyz[1], xyz[2]]);
                }
                let end = lines.expect("$EndNodes")?;
                if end != "$EndNodes" {
                    return Err(lines.err("expected $EndNodes"));
                }
            }
            "$Elements" => {
                let n: usize = lines
                    .expect("element count")?
                    .parse()
                    .map_err(|e| lines.err(format!("bad element count: {e}")))?;
                for _ in 0..n {
                    let row = lines.expect("element line")?;
                    let vals: Vec<usize> = row
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| lines.err(format!("{e}")))?;
                    if vals.len() < 3 {
                        return Err(lines.err("short element line"));
                    }
                    let etype = vals[1];
                    let n_tags = vals[2];
                    let tags = &vals[3..3 + n_tags];
                    let conn_ids = &vals[3 + n_tags..];
                    let physical = tags.first().copied().unwrap_or(0) as i32;
                    let conn: Vec<usize> = conn_ids
                        .iter()
                        .map(|id| {
                            id_map
                                .get(id)
                                .copied()
                                .ok_or_else(|| lines.err(format!("unknown node id {id}")))
                        })
                        .collect::<Result<_, _>>()?;
                    match etype {
                        4 => {
                            if conn.len() != 4 {
                                return Err(lines.err("tet4 needs 4 nodes"));
                            }
                            elements.push(Element::new(ElementKind::Tet4, &conn));
                            element_regions.push(physical.max(0) as u32);
                        }
                        5 => {
                            if conn.len() != 8 {
                                return Err(lines.err("hex8 needs 8 nodes"));
                            }
                            elements.push(Element::new(ElementKind::Hex8, &conn));
                            element_regions.push(physical.max(0) as u32);
                        }
                        2 | 3 => surface_elems.push((conn, physical)),
                        other => {
                            return Err(MeshError::UnsupportedElement(format!(
                                "gmsh element type {other}"
                            )))
                        }
                    }
                }
                let end = lines.expect("$EndElements")?;
                if end != "$EndElements" {
                    return Err(lines.err("expected $EndElements"));
                }
            }
            section if section.starts_with('$') && !section.starts_with("$End") => {
                // skip unknown sections ($PhysicalNames etc.)
                let closing = format!("$End{}", &section[1..]);
                while let Some(t) = lines.next() {
                    if t == closing {
                        break;
                    }
                }
            }
            _ => {}
        }
    }

    // map surface elements onto volume faces by node set
    let mut face_lookup: HashMap<Vec<usize>, (usize, u8)> = HashMap::new();
    for (e, el) in elements.iter().enumerate() {
        for face in 0..el.kind.n_faces() {
            let mut key = el.face_nodes(face);
            key.sort_unstable();
            face_lookup.entry(key).or_insert((e, face as u8));
        }
    }
    let mut boundary_tags = HashMap::new();
    for (conn, tag) in surface_elems {
        let mut key = conn.clone();
        key.sort_unstable();
        match face_lookup.get(&key) {
            Some(&(e, f)) => {
                boundary_tags.insert((e, f), tag);
            }
            None => {
                return Err(MeshError::Parse {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!("surface element {conn:?} matches no volume face"),
                })
            }
        }
    }
    Ok(VolumeMesh {
        nodes,
        elements,
        boundary_tags,
        element_regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generators::{gen_parallel_plates, CAVITY_TAG};
    use crate::mesh::extract_boundary;
    use std::sync::Arc;

    #[test]
    fn native_single_tet_round_trip() {
        let text = "NODES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nELEMENTS 1\ntet4 0 1 2 3\nSIDESETS 1\n0 3 5\n";
        let dir = std::env::temp_dir();
        let path = dir.join("radcav_unit_tet.mesh");
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh(&path, MeshFormat::NativeText).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_elements(), 1);
        assert!((mesh.element_volume(0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(mesh.boundary_tags[&(0, 3)], 5);
    }

    #[test]
    fn native_unit_hex() {
        let text = "NODES 8\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                    ELEMENTS 1\nhex8 0 1 2 3 4 5 6 7\nSIDESETS 0\n";
        let path = std::env::temp_dir().join("radcav_unit_hex.mesh");
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh(&path, MeshFormat::NativeText).unwrap();
        assert_eq!(mesh.n_elements(), 1);
        assert!((mesh.element_volume(0) - 1.0).abs() < 1e-14);
        assert_eq!(mesh.elements[0].kind.n_faces(), 6);
    }

    #[test]
    fn generated_plates_round_trip() {
        let mesh = gen_parallel_plates(1.0, 1.0, 4, 1).unwrap();
        let path = std::env::temp_dir().join("radcav_plates_rt.mesh");
        save_native(&mesh, &path).unwrap();
        let back = load_mesh(&path, MeshFormat::NativeText).unwrap();
        assert_eq!(back.n_nodes(), mesh.n_nodes());
        assert_eq!(back.n_elements(), mesh.n_elements());
        assert_eq!(back.boundary_tags.len(), mesh.boundary_tags.len());
        assert_eq!(back.element_regions, mesh.element_regions);
        let a = extract_boundary(&Arc::new(mesh), &[CAVITY_TAG]).unwrap();
        let b = extract_boundary(&Arc::new(back), &[CAVITY_TAG]).unwrap();
        assert_eq!(a.n_facets(), b.n_facets());
    }

    #[test]
    fn gmsh_v2_tet_with_surface_tags() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n\
                    $Elements\n2\n1 4 2 10 1 1 2 3 4\n2 2 2 7 1 1 2 3\n$EndElements\n";
        let path = std::env::temp_dir().join("radcav_gmsh_tet.msh");
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh(&path, MeshFormat::GmshAsciiV2).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_elements(), 1);
        assert_eq!(mesh.element_regions[0], 10);
        // tri (1,2,3) is the z=0 face, local face 3 of the tet
        assert_eq!(mesh.boundary_tags[&(0, 3)], 7);
    }

    #[test]
    fn malformed_files_error() {
        let path = std::env::temp_dir().join("radcav_bad.mesh");
        std::fs::write(&path, "NODES x\n").unwrap();
        assert!(matches!(
            load_mesh(&path, MeshFormat::NativeText),
            Err(MeshError::Parse { .. })
        ));
        std::fs::write(&path, "NODES 1\n0 0 0\nELEMENTS 1\npyramid5 0 0 0 0 0\nSIDESETS 0\n").unwrap();
        assert!(matches!(
            load_mesh(&path, MeshFormat::NativeText),
            Err(MeshError::UnsupportedElement(_))
        ));
        // inverted tet: swap two nodes
        std::fs::write(
            &path,
            "NODES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nELEMENTS 1\ntet4 0 2 1 3\nSIDESETS 0\n",
        )
        .unwrap();
        assert!(matches!(
            load_mesh(&path, MeshFormat::NativeText),
            Err(MeshError::InvertedElement { .. })
        ));
    }
}
