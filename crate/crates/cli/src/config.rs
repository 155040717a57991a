//! Simulation configuration: flat `key = value` text grouped in
//! `[section]` headers. Unknown keys are rejected so typos surface as
//! config errors instead of silently picking defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use radcav::cavity::{CavityMode, CavityParams, SIGMA_SB};
use radcav::fem::{Material, MaterialProp};
use radcav::mesh::generators::BodyKind;
use radcav::mesh::io::MeshFormat;
use radcav::solver::NewtonConfig;
use radcav::viewfactor::QuadPolicy;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeshSource {
    Plates {
        m: usize,
        layers: usize,
    },
    Fib {
        level: usize,
        body: BodyKind,
    },
    File {
        path: PathBuf,
        format: MeshFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Lowrank,
    Direct,
}

/// Geometry scales for the plates generator (separate from the integer
/// grid parameters so the mesh source stays hashable in tests).
#[derive(Debug, Clone, Copy)]
pub struct PlateDims {
    pub l: f64,
    pub separation: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub mesh: MeshSource,
    pub plate_dims: PlateDims,
    pub cavity_enabled: bool,
    pub mode: CavityMode,
    pub emissivity: f64,
    pub sigma: f64,
    pub material: Material,
    pub dt: f64,
    pub t_final: f64,
    pub solver_kind: SolverKind,
    pub eps_rel: f64,
    pub n_min: usize,
    pub adm_const: f64,
    pub newton: NewtonConfig,
    pub direct_budget_bytes: u64,
    pub init_uniform: f64,
    /// Per-region initial temperature overrides (region id, temperature).
    pub init_regions: Vec<(u32, f64)>,
    pub source: f64,
    pub output_dir: PathBuf,
    /// Write a VTK snapshot every k steps (0 disables snapshots).
    pub vtk_every: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mesh: MeshSource::Plates { m: 4, layers: 1 },
            plate_dims: PlateDims {
                l: 1.0,
                separation: 1.0,
            },
            cavity_enabled: true,
            mode: CavityMode::Closed,
            emissivity: 0.8,
            sigma: SIGMA_SB,
            material: Material::constant(8000.0, 500.0, 15.0),
            dt: 25.0,
            t_final: 1000.0,
            solver_kind: SolverKind::Lowrank,
            eps_rel: 1e-3,
            n_min: 100,
            adm_const: 2.0,
            newton: NewtonConfig::default(),
            direct_budget_bytes: 4_000_000_000,
            init_uniform: 300.0,
            init_regions: Vec::new(),
            source: 0.0,
            output_dir: PathBuf::from("out"),
            vtk_every: 10,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_rel > 0.0 && self.eps_rel < 1.0) {
            bail!("eps_rel must lie in (0, 1), got {}", self.eps_rel);
        }
        if !(self.emissivity > 0.0 && self.emissivity <= 1.0) {
            bail!("emissivity must lie in (0, 1], got {}", self.emissivity);
        }
        for (name, v) in [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("sigma", self.sigma),
            ("adm_const", self.adm_const),
            ("plates.l", self.plate_dims.l),
            ("plates.separation", self.plate_dims.separation),
            ("init.uniform", self.init_uniform),
        ] {
            if !(v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if self.n_min < 1 {
            bail!("n_min must be >= 1");
        }
        Ok(())
    }

    pub fn cavity_params(&self) -> CavityParams {
        CavityParams {
            emissivity: self.emissivity,
            sigma: self.sigma,
            mode: self.mode,
            quad: QuadPolicy::default(),
            eps_rel: self.eps_rel,
            n_min: self.n_min,
            adm_const: self.adm_const,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Load a config file and apply `section.key=value` overrides on top,
    /// the `--set` flag of the run/compare/block-image commands.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = SimulationConfig::default();
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.insert(full, value.trim().to_string());
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("override needs section.key=value, got {item:?}"))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }

        let mut take = |key: &str| entries.remove(key);
        let parse_f64 = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|e| anyhow!("bad float for {key}: {v:?} ({e})"))
        };
        let parse_usize = |key: &str, v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|e| anyhow!("bad integer for {key}: {v:?} ({e})"))
        };

        // mesh
        let source = take("mesh.source").unwrap_or_else(|| "plates".into());
        cfg.mesh = match source.as_str() {
            "plates" => {
                let m = match take("mesh.m") {
                    Some(v) => parse_usize("mesh.m", &v)?,
                    None => 4,
                };
                let layers = match take("mesh.layers") {
                    Some(v) => parse_usize("mesh.layers", &v)?,
                    None => 1,
                };
                if let Some(v) = take("mesh.l") {
                    cfg.plate_dims.l = parse_f64("mesh.l", &v)?;
                }
                if let Some(v) = take("mesh.separation") {
                    cfg.plate_dims.separation = parse_f64("mesh.separation", &v)?;
                }
                MeshSource::Plates { m, layers }
            }
            "fib" => {
                let level = match take("mesh.level") {
                    Some(v) => parse_usize("mesh.level", &v)?,
                    None => 1,
                };
                let body = match take("mesh.body").as_deref() {
                    None | Some("sphere_like") => BodyKind::SphereLike,
                    Some("cube") => BodyKind::Cube,
                    Some(other) => bail!("unknown mesh.body {other:?}"),
                };
                MeshSource::Fib { level, body }
            }
            "file" => {
                let path = take("mesh.path").ok_or_else(|| anyhow!("mesh.path required"))?;
                let format = match take("mesh.format").as_deref() {
                    None | Some("native") => MeshFormat::NativeText,
                    Some("gmsh") => MeshFormat::GmshAsciiV2,
                    Some(other) => bail!("unknown mesh.format {other:?}"),
                };
                MeshSource::File {
                    path: PathBuf::from(path),
                    format,
                }
            }
            other => bail!("unknown mesh.source {other:?}"),
        };

        // cavity
        if let Some(v) = take("cavity.enabled") {
            cfg.cavity_enabled = parse_bool("cavity.enabled", &v)?;
        }
        let t_ambient = match take("cavity.t_ambient") {
            Some(v) => Some(parse_f64("cavity.t_ambient", &v)?),
            None => None,
        };
        match take("cavity.mode").as_deref() {
            None | Some("closed") => cfg.mode = CavityMode::Closed,
            Some("open") => {
                cfg.mode = CavityMode::Open {
                    t_ambient: t_ambient
                        .ok_or_else(|| anyhow!("cavity.t_ambient required in open mode"))?,
                }
            }
            Some(other) => bail!("unknown cavity.mode {other:?}"),
        }
        if let Some(v) = take("cavity.emissivity") {
            cfg.emissivity = parse_f64("cavity.emissivity", &v)?;
        }
        if let Some(v) = take("cavity.sigma") {
            cfg.sigma = parse_f64("cavity.sigma", &v)?;
        }

        // material
        if let Some(v) = take("material.rho") {
            cfg.material.rho = parse_f64("material.rho", &v)?;
        }
        match (take("material.cp"), take("material.cp_table")) {
            (Some(v), None) => cfg.material.cp = MaterialProp::Constant(parse_f64("material.cp", &v)?),
            (None, Some(t)) => cfg.material.cp = parse_table("material.cp_table", &t)?,
            (None, None) => {}
            _ => bail!("material.cp and material.cp_table are mutually exclusive"),
        }
        match (take("material.k"), take("material.k_table")) {
            (Some(v), None) => cfg.material.k = MaterialProp::Constant(parse_f64("material.k", &v)?),
            (None, Some(t)) => cfg.material.k = parse_table("material.k_table", &t)?,
            (None, None) => {}
            _ => bail!("material.k and material.k_table are mutually exclusive"),
        }

        // time
        if let Some(v) = take("time.dt") {
            cfg.dt = parse_f64("time.dt", &v)?;
        }
        if let Some(v) = take("time.t_final") {
            cfg.t_final = parse_f64("time.t_final", &v)?;
        }

        // solver
        match take("solver.kind").as_deref() {
            None | Some("lowrank") => cfg.solver_kind = SolverKind::Lowrank,
            Some("direct") => cfg.solver_kind = SolverKind::Direct,
            Some(other) => bail!("unknown solver.kind {other:?}"),
        }
        if let Some(v) = take("solver.eps_rel") {
            cfg.eps_rel = parse_f64("solver.eps_rel", &v)?;
        }
        if let Some(v) = take("solver.n_min") {
            cfg.n_min = parse_usize("solver.n_min", &v)?;
        }
        if let Some(v) = take("solver.adm_const") {
            cfg.adm_const = parse_f64("solver.adm_const", &v)?;
        }
        if let Some(v) = take("solver.abs_tol") {
            cfg.newton.abs_tol = parse_f64("solver.abs_tol", &v)?;
        }
        if let Some(v) = take("solver.rel_tol") {
            cfg.newton.rel_tol = parse_f64("solver.rel_tol", &v)?;
        }
        if let Some(v) = take("solver.max_newton") {
            cfg.newton.max_iters = parse_usize("solver.max_newton", &v)?;
        }
        if let Some(v) = take("solver.krylov_rtol") {
            cfg.newton.krylov_rtol = parse_f64("solver.krylov_rtol", &v)?;
        }
        if let Some(v) = take("solver.krylov_restart") {
            cfg.newton.krylov_restart = parse_usize("solver.krylov_restart", &v)?;
        }
        if let Some(v) = take("solver.krylov_max") {
            cfg.newton.krylov_max_iters = parse_usize("solver.krylov_max", &v)?;
        }
        if let Some(v) = take("solver.direct_budget_bytes") {
            cfg.direct_budget_bytes = v
                .parse::<u64>()
                .map_err(|e| anyhow!("bad solver.direct_budget_bytes: {e}"))?;
        }

        // init
        if let Some(v) = take("init.uniform") {
            cfg.init_uniform = parse_f64("init.uniform", &v)?;
        }

        // source
        if let Some(v) = take("source.volumetric") {
            cfg.source = parse_f64("source.volumetric", &v)?;
        }

        // output
        if let Some(v) = take("output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = take("output.vtk_every") {
            cfg.vtk_every = parse_usize("output.vtk_every", &v)?;
        }
        drop(take);

        // per-region initial temperature overrides
        let region_keys: Vec<String> = entries
            .keys()
            .filter(|k| k.starts_with("init.region_"))
            .cloned()
            .collect();
        for key in region_keys {
            let v = entries.remove(&key).unwrap();
            let region: u32 = key
                .trim_start_matches("init.region_")
                .parse()
                .map_err(|e| anyhow!("bad region id in {key}: {e}"))?;
            cfg.init_regions.push((region, parse_f64(&key, &v)?));
        }
        cfg.init_regions.sort_unstable_by_key(|&(r, _)| r);

        if let Some((key, _)) = entries.into_iter().next() {
            bail!("unknown config key {key:?}");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("bad boolean for {key}: {v:?}"),
    }
}

/// Comma-separated `T:value` pairs, e.g. `250:400, 500:520`.
fn parse_table(key: &str, v: &str) -> Result<MaterialProp> {
    let mut rows = Vec::new();
    for item in v.split(',') {
        let (t, val) = item
            .trim()
            .split_once(':')
            .ok_or_else(|| anyhow!("{key}: expected T:value, got {item:?}"))?;
        rows.push((
            t.trim().parse::<f64>().map_err(|e| anyhow!("{key}: {e}"))?,
            val.trim().parse::<f64>().map_err(|e| anyhow!("{key}: {e}"))?,
        ));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        bail!("{key}: table temperatures must strictly increase");
    }
    Ok(MaterialProp::Table(rows))
}
