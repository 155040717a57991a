//! Command implementations shared by the binary and the integration
//! tests: mesh generation, simulation runs, comparison studies, and the
//! block-structure image.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::json;

use radcav::cavity::{
    build_direct_operator, build_lowrank_operator, CavityBuildTimings, CavityError, CavityOperator,
};
use radcav::cluster::{block_structure_ppm, build_block_tree, build_index_tree};
use radcav::hmatrix::assemble_hmatrix_symmetric;
use radcav::mesh::generators::{gen_fibonacci_bodies, gen_parallel_plates, CAVITY_TAG};
use radcav::mesh::io::{load_mesh, save_native};
use radcav::mesh::{extract_boundary, SurfaceMesh, VolumeMesh};
use radcav::solver::{error_e_t, run_transient, TimeSeries, TransientProblem};
use radcav::viewfactor::assemble_dense_f;

use crate::config::{MeshSource, SimulationConfig, SolverKind};
use crate::vtk::write_temperature_snapshot;

pub fn build_volume_mesh(cfg: &SimulationConfig) -> Result<VolumeMesh> {
    let mesh = match &cfg.mesh {
        MeshSource::Plates { m, layers } => gen_parallel_plates(
            cfg.plate_dims.l,
            cfg.plate_dims.separation,
            *m,
            *layers,
        )?,
        MeshSource::Fib { level, body } => gen_fibonacci_bodies(*level, *body)?,
        MeshSource::File { path, format } => load_mesh(path, *format)?,
    };
    Ok(mesh)
}

pub fn initial_temperature(mesh: &VolumeMesh, cfg: &SimulationConfig) -> Vec<f64> {
    let mut t0 = vec![cfg.init_uniform; mesh.n_nodes()];
    if cfg.init_regions.is_empty() {
        return t0;
    }
    for (e, el) in mesh.elements.iter().enumerate() {
        let region = mesh.element_regions.get(e).copied().unwrap_or(0);
        if let Some(&(_, temp)) = cfg.init_regions.iter().find(|&&(r, _)| r == region) {
            for &n in el.nodes() {
                t0[n] = temp;
            }
        }
    }
    t0
}

pub struct RunArtifacts {
    pub series: TimeSeries,
    pub diag: serde_json::Value,
    pub run_csv: PathBuf,
}

fn build_operator(
    surf: &SurfaceMesh,
    cfg: &SimulationConfig,
) -> Result<(CavityOperator, CavityBuildTimings), CavityError> {
    match cfg.solver_kind {
        SolverKind::Lowrank => build_lowrank_operator(surf, &cfg.cavity_params()),
        SolverKind::Direct => {
            build_direct_operator(surf, &cfg.cavity_params(), cfg.direct_budget_bytes)
        }
    }
}

/// Peak resident set size in bytes, best effort (Linux /proc).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

pub const RUN_CSV_HEADER: &str = "step,time_s,min_T,max_T,mean_T,newton_iters,krylov_iters_total,build_F_s,build_LU_s,apply_LU_s,other_s";

fn write_run_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    for rec in &series.records {
        let n = rec.temperature.len() as f64;
        let min = rec.temperature.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rec.temperature.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean: f64 = rec.temperature.iter().sum::<f64>() / n;
        out.push_str(&format!(
            "{},{:.6},{:.9e},{:.9e},{:.9e},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            rec.step,
            rec.time_s,
            min,
            max,
            mean,
            rec.newton_iters,
            rec.krylov_iters,
            series.build_f_s,
            series.build_lu_s,
            rec.apply_lu_s,
            rec.other_s,
        ));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Run a full simulation from a config and write run.csv, VTK snapshots,
/// and diag.json into the output directory.
pub fn cmd_run(cfg: &SimulationConfig) -> Result<RunArtifacts> {
    let mesh = Arc::new(build_volume_mesh(cfg)?);
    let t0 = initial_temperature(&mesh, cfg);
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;

    let surf = if cfg.cavity_enabled {
        Some(extract_boundary(&mesh, &[CAVITY_TAG])?)
    } else {
        None
    };
    let built = match &surf {
        Some(s) => {
            let (op, timings) = build_operator(s, cfg)?;
            Some((op, timings))
        }
        None => None,
    };

    let problem = TransientProblem {
        mesh: &mesh,
        surface: surf.as_ref(),
        material: &cfg.material,
        dirichlet: &[],
        source: cfg.source,
    };
    let cavity = built.as_ref().map(|(op, _)| op);
    let mut series = run_transient(&problem, cavity, &cfg.newton, cfg.dt, cfg.t_final, &t0)?;
    if let Some((_, timings)) = &built {
        series.build_f_s = timings.build_f_s;
        series.build_lu_s = timings.build_lu_s;
    }

    let run_csv = cfg.output_dir.join("run.csv");
    write_run_csv(&run_csv, &series)?;

    if cfg.vtk_every > 0 {
        for rec in &series.records {
            if rec.step % cfg.vtk_every == 0 || rec.step == series.records.len() {
                let path = cfg.output_dir.join(format!("snap_{:04}.vtk", rec.step));
                write_temperature_snapshot(
                    &mesh,
                    &rec.temperature,
                    &format!("temperature at t = {} s", rec.time_s),
                    &path,
                )?;
            }
        }
    }

    let diag = {
        let storage = cavity.map(|op| op.storage_report());
        let n_facets = surf.as_ref().map(|s| s.n_facets()).unwrap_or(0);
        let dense_baseline = 8u64 * (n_facets as u64) * (n_facets as u64);
        json!({
            "n_nodes": mesh.n_nodes(),
            "n_elements": mesh.n_elements(),
            "n_facets": n_facets,
            "solver_kind": match cfg.solver_kind {
                SolverKind::Lowrank => "lowrank",
                SolverKind::Direct => "direct",
            },
            "eps_rel": cfg.eps_rel,
            "isolated_facets": cavity.map(|op| op.rowsums.isolated_count()),
            "storage": storage.map(|s| json!({
                "bytes": s.bytes,
                "max_rank": s.max_rank,
                "mean_rank": s.mean_rank,
                "n_dense_leaves": s.n_dense_leaves,
                "n_lowrank_leaves": s.n_lowrank_leaves,
            })),
            "dense_baseline_bytes": dense_baseline,
            "build_F_s": series.build_f_s,
            "build_LU_s": series.build_lu_s,
            "peak_rss_bytes": peak_rss_bytes(),
        })
    };
    let diag_path = cfg.output_dir.join("diag.json");
    std::fs::write(&diag_path, serde_json::to_string_pretty(&diag)?)
        .with_context(|| format!("cannot write {}", diag_path.display()))?;

    Ok(RunArtifacts {
        series,
        diag,
        run_csv,
    })
}

pub const COMPARE_CSV_HEADER: &str = "eps_rel,e_T,f_rel_err,bytes,wall_s";

/// Run the Direct reference once, then a low-rank run per tolerance, and
/// tabulate e(T), the view-factor compression error, storage bytes, and
/// wall time.
pub fn cmd_compare(cfg: &SimulationConfig, eps_list: &[f64]) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let csv_path = cfg.output_dir.join("compare.csv");
    let mut out = String::from(COMPARE_CSV_HEADER);
    out.push('\n');
    if eps_list.is_empty() {
        std::fs::write(&csv_path, out)?;
        return Ok(csv_path);
    }

    let mesh = Arc::new(build_volume_mesh(cfg)?);
    let t0 = initial_temperature(&mesh, cfg);
    let surf = extract_boundary(&mesh, &[CAVITY_TAG])?;
    let problem = TransientProblem {
        mesh: &mesh,
        surface: Some(&surf),
        material: &cfg.material,
        dirichlet: &[],
        source: cfg.source,
    };

    // Direct reference (may be refused by the memory budget)
    let direct_series = match build_direct_operator(
        &surf,
        &cfg.cavity_params(),
        cfg.direct_budget_bytes,
    ) {
        Ok((op, _)) => Some(run_transient(
            &problem,
            Some(&op),
            &cfg.newton,
            cfg.dt,
            cfg.t_final,
            &t0,
        )?),
        Err(CavityError::MemoryBudget { required, budget }) => {
            eprintln!(
                "direct reference refused: needs {required} bytes, budget {budget}; e_T reported as nan"
            );
            None
        }
        Err(e) => return Err(e.into()),
    };

    // raw dense F for the compression-error column
    let dense_f = if direct_series.is_some() {
        Some(assemble_dense_f(&surf, &cfg.cavity_params().quad)?)
    } else {
        None
    };
    let dense_norm = dense_f.as_ref().map(|f| {
        let mut s = 0.0;
        for j in 0..f.ncols() {
            for i in 0..f.nrows() {
                s += f[(i, j)] * f[(i, j)];
            }
        }
        s.sqrt()
    });

    for &eps in eps_list {
        let wall = Instant::now();
        let mut sub = cfg.clone();
        sub.eps_rel = eps;
        sub.solver_kind = SolverKind::Lowrank;
        let (op, timings) = build_lowrank_operator(&surf, &sub.cavity_params())?;
        let mut series = run_transient(&problem, Some(&op), &cfg.newton, cfg.dt, cfg.t_final, &t0)?;
        series.build_f_s = timings.build_f_s;
        series.build_lu_s = timings.build_lu_s;
        let wall_s = wall.elapsed().as_secs_f64();
        let e_t = match &direct_series {
            Some(d) => error_e_t(&series, d)?,
            None => f64::NAN,
        };
        let f_err = match (&dense_f, dense_norm) {
            (Some(fd), Some(norm)) => {
                let tree = Arc::new(build_index_tree(&surf.centroids(), sub.n_min));
                let blocks = Arc::new(build_block_tree(tree, sub.adm_const));
                let h = assemble_hmatrix_symmetric(|i, j| fd[(i, j)], &blocks, eps);
                let hd = h.densify();
                let mut err = 0.0;
                for j in 0..fd.ncols() {
                    for i in 0..fd.nrows() {
                        err += (hd[(i, j)] - fd[(i, j)]).powi(2);
                    }
                }
                err.sqrt() / norm
            }
            _ => f64::NAN,
        };
        let bytes = op.storage_report().bytes;
        out.push_str(&format!(
            "{eps:.3e},{e_t:.9e},{f_err:.9e},{bytes},{wall_s:.3}\n"
        ));
    }
    std::fs::write(&csv_path, &out)?;
    Ok(csv_path)
}

/// Write the block-structure image of the cavity partition.
pub fn cmd_block_image(cfg: &SimulationConfig, leaf_size: usize, out_path: &Path) -> Result<()> {
    let mesh = Arc::new(build_volume_mesh(cfg)?);
    let surf = extract_boundary(&mesh, &[CAVITY_TAG])?;
    let tree = Arc::new(build_index_tree(&surf.centroids(), leaf_size));
    let blocks = Arc::new(build_block_tree(tree, cfg.adm_const));
    let ppm = block_structure_ppm(&blocks, 1024);
    std::fs::write(out_path, ppm).with_context(|| format!("cannot write {}", out_path.display()))?;
    Ok(())
}

/// Generate a mesh file and report the cavity facet count.
pub fn cmd_gen_mesh(source: &MeshSource, cfg: &SimulationConfig, out: &Path) -> Result<usize> {
    let mut sub = cfg.clone();
    sub.mesh = source.clone();
    let mesh = build_volume_mesh(&sub)?;
    save_native(&mesh, out)?;
    let n = extract_boundary(&Arc::new(mesh), &[CAVITY_TAG])
        .map(|s| s.n_facets())
        .unwrap_or(0);
    Ok(n)
}

/// Exit codes: 2 config/input error, 3 solver failure, 4 memory budget.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(CavityError::MemoryBudget { .. }) = cause.downcast_ref::<CavityError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<radcav::solver::SolverError>() {
            return match e {
                radcav::solver::SolverError::Cavity(CavityError::MemoryBudget { .. }) => 4,
                _ => 3,
            };
        }
    }
    2
}
