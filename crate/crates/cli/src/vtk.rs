//! Legacy ASCII VTK writer for unstructured tet/hex grids with a point
//! scalar field.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use radcav::mesh::{ElementKind, VolumeMesh};

pub fn write_temperature_snapshot(
    mesh: &VolumeMesh,
    temperature: &[f64],
    title: &str,
    path: &Path,
) -> Result<()> {
    assert_eq!(temperature.len(), mesh.n_nodes());
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(out, "{:.9e} {:.9e} {:.9e}", p[0], p[1], p[2]);
    }
    let total: usize = mesh.elements.iter().map(|e| e.nodes().len() + 1).sum();
    let _ = writeln!(out, "CELLS {} {total}", mesh.n_elements());
    for el in &mesh.elements {
        let ids: Vec<String> = el.nodes().iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "{} {}", ids.len(), ids.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.n_elements());
    for el in &mesh.elements {
        let code = match el.kind {
            ElementKind::Tet4 => 10,
            ElementKind::Hex8 => 12,
        };
        let _ = writeln!(out, "{code}");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_nodes());
    let _ = writeln!(out, "SCALARS temperature double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for t in temperature {
        let _ = writeln!(out, "{t:.9e}");
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use radcav::mesh::generators::gen_parallel_plates;

    #[test]
    fn snapshot_has_legacy_header_and_counts() {
        let mesh = gen_parallel_plates(1.0, 1.0, 2, 1).unwrap();
        let t: Vec<f64> = (0..mesh.n_nodes()).map(|i| 300.0 + i as f64).collect();
        let path = std::env::temp_dir().join("radcav_snap_test.vtk");
        write_temperature_snapshot(&mesh, &t, "step 1", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains(&format!("POINTS {} double", mesh.n_nodes())));
        assert!(text.contains(&format!("CELL_TYPES {}", mesh.n_elements())));
        assert!(text.contains("SCALARS temperature double 1"));
        // every hex cell line starts with its node count
        assert!(text.lines().any(|l| l.starts_with("8 ")));
    }
}
