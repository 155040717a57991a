//! Implicit-Euler time stepping with Newton-Krylov iterations.
//!
//! Each Newton step factors the sparse volume Jacobian and runs restarted
//! GMRES on the left-preconditioned total Jacobian, whose cavity part is
//! applied matrix-free through the cavity operator. The dense Direct path
//! runs the identical loop with a Direct-mode operator.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu as FaerSparseLu;
use faer::sparse::SparseColMat;
use faer::Mat;

use crate::cavity::{CavityMode, CavityOperator, NodalPower};
use crate::fem::{
    apply_dirichlet, assemble_jsparse_cached, assemble_volume_residual_cached, ElementQuadCache,
    Material, SparseMatrix,
};
#[cfg(test)]
use crate::fem::assemble_jsparse;
use crate::mesh::{SurfaceMesh, VolumeMesh};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("newton did not converge at step {step} after {iters} iterations (residual {residual:.3e})")]
    NewtonDiverged {
        step: usize,
        iters: usize,
        residual: f64,
    },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("sparse factorization failed: {0}")]
    SparseFactorization(String),
    #[error("time series grids are misaligned: {0}")]
    MisalignedGrids(String),
    #[error(transparent)]
    Cavity(#[from] crate::cavity::CavityError),
}

/// Newton and Krylov tolerances; none of them are published with the
/// method, so the defaults are engineering choices.
#[derive(Debug, Clone)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub krylov_rtol: f64,
    pub krylov_restart: usize,
    pub krylov_max_iters: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_iters: 25,
            krylov_rtol: 1e-8,
            krylov_restart: 30,
            krylov_max_iters: 300,
        }
    }
}

/// Per-step record of the transient run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub time_s: f64,
    pub temperature: Vec<f64>,
    pub newton_iters: usize,
    pub krylov_iters: usize,
    pub apply_lu_s: f64,
    pub other_s: f64,
}

/// Full solution history plus once-per-simulation phase timings.
#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    pub records: Vec<StepRecord>,
    pub build_f_s: f64,
    pub build_lu_s: f64,
}

impl TimeSeries {
    pub fn final_temperature(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.temperature.as_slice())
    }
}

/// Total Jacobian action J x = J_sparse x - J_cav x; the cavity term
/// enters with a minus sign because the residual subtracts the flux Q_N.
pub fn total_jacobian_action(
    jsp: &SparseMatrix,
    cavity: Option<&CavityOperator>,
    t: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let mut y = jsp.matvec(x);
    if let Some(op) = cavity {
        let jc = op.apply_jcav(t, x);
        for (yi, ji) in y.iter_mut().zip(jc.iter()) {
            *yi -= ji;
        }
    }
    y
}

pub struct SparseLu {
    lu: FaerSparseLu<usize, f64>,
    n: usize,
}

/// Fill-reducing analysis of the FEM sparsity pattern, computed once per
/// run and reused by every numeric refactorization.
pub struct SparseSymbolic {
    sym: faer::sparse::linalg::solvers::SymbolicLu<usize>,
}

impl SparseSymbolic {
    pub fn analyze(jsp: &SparseMatrix) -> Result<Self, SolverError> {
        let mat: SparseColMat<usize, f64> = jsp.to_faer();
        let symbolic = mat
            .symbolic()
            .to_owned()
            .map_err(|e| SolverError::SparseFactorization(format!("{e:?}")))?;
        let sym = faer::sparse::linalg::solvers::SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| SolverError::SparseFactorization(format!("{e:?}")))?;
        Ok(SparseSymbolic { sym })
    }
}

impl SparseLu {
    pub fn factor(jsp: &SparseMatrix) -> Result<Self, SolverError> {
        let mat: SparseColMat<usize, f64> = jsp.to_faer();
        let lu = mat
            .sp_lu()
            .map_err(|e| SolverError::SparseFactorization(format!("{e:?}")))?;
        Ok(SparseLu { lu, n: jsp.n })
    }

    /// Numeric refactorization against a precomputed symbolic analysis.
    pub fn factor_with(symbolic: &SparseSymbolic, jsp: &SparseMatrix) -> Result<Self, SolverError> {
        let mat: SparseColMat<usize, f64> = jsp.to_faer();
        let lu = FaerSparseLu::try_new_with_symbolic(symbolic.sym.clone(), mat.as_ref())
            .map_err(|e| SolverError::SparseFactorization(format!("{e:?}")))?;
        Ok(SparseLu { lu, n: jsp.n })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
/// Returns the iterate and the total iteration count; the caller supplies
/// an already-preconditioned operator and right-hand side.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    restart: usize,
    rtol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize), SolverError> {
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let target = rtol * b_norm;
    let mut total_iters = 0usize;

    loop {
        // residual of the current iterate
        let ax = apply(&x);
        let mut r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= target {
            return Ok((x, total_iters));
        }
        if total_iters >= max_iters {
            return Err(SolverError::LinearSolve(format!(
                "gmres stagnated at residual {beta:.3e} (target {target:.3e}) after {total_iters} iterations"
            )));
        }
        for v in r.iter_mut() {
            *v /= beta;
        }
        let m = restart.min(max_iters - total_iters).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r];
        let mut h = vec![vec![0.0f64; 0]; 0]; // h[j] holds column j (len j+2)
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut converged_at = None;
        for j in 0..m {
            total_iters += 1;
            let mut w = apply(&basis[j]);
            let mut hj = vec![0.0f64; j + 2];
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(&w, vi);
                hj[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi.iter()) {
                    *wk -= hij * vk;
                }
            }
            let wnorm = norm2(&w);
            hj[j + 1] = wnorm;
            // apply accumulated rotations to the new column
            for i in 0..j {
                let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            let denom = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (hj[j] / denom, hj[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            hj[j] = c * hj[j] + s * hj[j + 1];
            hj[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(hj);
            let res = g[j + 1].abs();
            if res <= target || wnorm == 0.0 {
                converged_at = Some(j + 1);
                break;
            }
            if j + 1 < m {
                for v in w.iter_mut() {
                    *v /= wnorm;
                }
                basis.push(w);
            }
        }
        // solve the triangular system for the Krylov coefficients
        let k = converged_at.unwrap_or(h.len());
        let mut y = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                acc -= h[jj][i] * yj;
            }
            y[i] = acc / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(basis[i].iter()) {
                *xk += yi * vk;
            }
        }
        if converged_at.is_some() {
            // verify against the true preconditioned residual
            let ax = apply(&x);
            let res = b
                .iter()
                .zip(ax.iter())
                .map(|(bi, ai)| (bi - ai) * (bi - ai))
                .sum::<f64>()
                .sqrt();
            if res <= target * (1.0 + 1e-8) {
                return Ok((x, total_iters));
            }
        }
    }
}

/// Left-preconditioned Krylov solve of J x = b with the factored sparse
/// Jacobian as the preconditioner.
pub fn preconditioned_solve(
    jsp_factor: &SparseLu,
    action: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, usize), SolverError> {
    let rhs = jsp_factor.solve(b);
    gmres(
        |x| jsp_factor.solve(&action(x)),
        &rhs,
        cfg.krylov_restart,
        cfg.krylov_rtol,
        cfg.krylov_max_iters,
    )
}

/// Everything the transient driver needs besides the cavity operator.
pub struct TransientProblem<'a> {
    pub mesh: &'a VolumeMesh,
    /// Radiating surface; required when a cavity operator is given.
    pub surface: Option<&'a SurfaceMesh>,
    pub material: &'a Material,
    pub dirichlet: &'a [(usize, f64)],
    /// Uniform volumetric heat source (W/m^3).
    pub source: f64,
}

fn full_residual(
    problem: &TransientProblem,
    quad: &ElementQuadCache,
    cavity: Option<&CavityOperator>,
    t_new: &[f64],
    t_old: &[f64],
    dt: f64,
) -> Vec<f64> {
    let mut res = assemble_volume_residual_cached(
        quad,
        problem.mesh,
        problem.material,
        t_new,
        t_old,
        dt,
        problem.source,
    );
    if let Some(op) = cavity {
        let q = op.apply_s(&NodalPower::from_temperatures(t_new));
        for (ri, qi) in res.iter_mut().zip(q.iter()) {
            *ri -= qi;
        }
        if matches!(op.mode, CavityMode::Open { .. }) {
            let surf = problem.surface.expect("open cavity needs the surface");
            let b = op.ambient_residual(surf, t_new);
            for (ri, bi) in res.iter_mut().zip(b.iter()) {
                *ri += bi;
            }
        }
    }
    apply_dirichlet(None, Some(&mut res), problem.dirichlet, t_new);
    res
}

/// March the implicit-Euler scheme from `t0` over `n_steps = t_final/dt`
/// uniform steps. The cavity operator (and with it F and the reflection
/// factorization) is built once by the caller and reused for every step.
pub fn run_transient(
    problem: &TransientProblem,
    cavity: Option<&CavityOperator>,
    cfg: &NewtonConfig,
    dt: f64,
    t_final: f64,
    t0: &[f64],
) -> Result<TimeSeries, SolverError> {
    assert!(dt > 0.0 && t_final > 0.0, "time parameters must be positive");
    let n_steps = (t_final / dt).round() as usize;
    assert!(
        (n_steps as f64 * dt - t_final).abs() <= 1e-9 * t_final,
        "dt must divide t_final"
    );
    let n = problem.mesh.n_nodes();
    assert_eq!(t0.len(), n, "initial state dimension mismatch");
    if let Some(op) = cavity {
        assert_eq!(op.n_nodes(), n, "cavity operator built for another mesh");
    }

    let mut series = TimeSeries::default();
    let mut t_old = t0.to_vec();
    let quad = ElementQuadCache::build(problem.mesh);
    let mut pattern = SparseMatrix::fem_pattern(problem.mesh);
    let mut symbolic: Option<SparseSymbolic> = None;
    let mut apply_lu_last = cavity.map(|op| op.apply_lu_seconds()).unwrap_or(0.0);

    for step in 1..=n_steps {
        let step_start = Instant::now();
        let mut t_new = t_old.clone();
        let mut newton_iters = 0usize;
        let mut krylov_total = 0usize;
        let mut res = full_residual(problem, &quad, cavity, &t_new, &t_old, dt);
        let r0 = norm2(&res).max(f64::MIN_POSITIVE);
        loop {
            let rnorm = norm2(&res);
            if rnorm <= cfg.abs_tol.max(cfg.rel_tol * r0) {
                break;
            }
            if newton_iters >= cfg.max_iters {
                return Err(SolverError::NewtonDiverged {
                    step,
                    iters: newton_iters,
                    residual: rnorm,
                });
            }
            newton_iters += 1;
            assemble_jsparse_cached(
                &quad,
                problem.mesh,
                problem.material,
                &t_new,
                &t_old,
                dt,
                &mut pattern,
            );
            if let Some(op) = cavity {
                if matches!(op.mode, CavityMode::Open { .. }) {
                    let surf = problem.surface.expect("open cavity needs the surface");
                    op.ambient_jacobian_into(surf, &t_new, &mut pattern);
                }
            }
            apply_dirichlet(Some(&mut pattern), None, problem.dirichlet, &t_new);
            if symbolic.is_none() {
                symbolic = Some(SparseSymbolic::analyze(&pattern)?);
            }
            let factor = SparseLu::factor_with(symbolic.as_ref().unwrap(), &pattern)?;
            let dirichlet = problem.dirichlet;
            let t_lin = t_new.clone();
            let action = |x: &[f64]| {
                let mut y = total_jacobian_action(&pattern, cavity, &t_lin, x);
                for &(node, _) in dirichlet {
                    y[node] = x[node];
                }
                y
            };
            let minus_res: Vec<f64> = res.iter().map(|v| -v).collect();
            let (dx, iters) = preconditioned_solve(&factor, action, &minus_res, cfg)?;
            krylov_total += iters;
            for (ti, di) in t_new.iter_mut().zip(dx.iter()) {
                *ti += di;
            }
            res = full_residual(problem, &quad, cavity, &t_new, &t_old, dt);
        }
        let apply_lu_now = cavity.map(|op| op.apply_lu_seconds()).unwrap_or(0.0);
        let apply_lu_s = apply_lu_now - apply_lu_last;
        apply_lu_last = apply_lu_now;
        let wall = step_start.elapsed().as_secs_f64();
        series.records.push(StepRecord {
            step,
            time_s: step as f64 * dt,
            temperature: t_new.clone(),
            newton_iters,
            krylov_iters: krylov_total,
            apply_lu_s,
            other_s: (wall - apply_lu_s).max(0.0),
        });
        t_old = t_new;
    }
    Ok(series)
}

/// Dense reference path: the identical march with a Direct-mode operator.
pub fn run_direct(
    problem: &TransientProblem,
    cavity: Option<&CavityOperator>,
    cfg: &NewtonConfig,
    dt: f64,
    t_final: f64,
    t0: &[f64],
) -> Result<TimeSeries, SolverError> {
    if let Some(op) = cavity {
        debug_assert!(
            matches!(op.solver, crate::cavity::ReflectionSolver::DenseInverse(_)),
            "run_direct expects a Direct-mode operator"
        );
    }
    run_transient(problem, cavity, cfg, dt, t_final, t0)
}

/// Discrete space-time error: max over steps of |T - T_ref|_2 / |T_ref|_2.
pub fn error_e_t(lowrank: &TimeSeries, direct: &TimeSeries) -> Result<f64, SolverError> {
    if lowrank.records.len() != direct.records.len() {
        return Err(SolverError::MisalignedGrids(format!(
            "{} vs {} steps",
            lowrank.records.len(),
            direct.records.len()
        )));
    }
    let mut worst = 0.0f64;
    for (a, b) in lowrank.records.iter().zip(direct.records.iter()) {
        if (a.time_s - b.time_s).abs() > 1e-9 * b.time_s.max(1.0) {
            return Err(SolverError::MisalignedGrids(format!(
                "time {} vs {}",
                a.time_s, b.time_s
            )));
        }
        let mut diff = 0.0;
        let mut nrm = 0.0;
        for (x, y) in a.temperature.iter().zip(b.temperature.iter()) {
            diff += (x - y) * (x - y);
            nrm += y * y;
        }
        worst = worst.max((diff / nrm).sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{build_direct_operator, build_lowrank_operator, CavityParams};
    use crate::mesh::generators::{gen_parallel_plates, CAVITY_TAG};
    use crate::mesh::extract_boundary;
    use std::sync::Arc;

    #[test]
    fn gmres_identity_converges_immediately() {
        let b: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let (x, iters) = gmres(|v| v.to_vec(), &b, 5, 1e-12, 100).unwrap();
        assert!(iters <= 1);
        for (a, c) in x.iter().zip(b.iter()) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_zero_rhs_is_zero() {
        let (x, iters) = gmres(|v| v.to_vec(), &[0.0; 7], 5, 1e-12, 100).unwrap();
        assert_eq!(iters, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 24;
        let a = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut acc = 3.0 * x[i];
                    if i > 0 {
                        acc += 0.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        acc -= 0.7 * x[i + 1];
                    }
                    acc
                })
                .collect()
        };
        let want: Vec<f64> = (0..n).map(|i| ((i * 3) as f64).cos()).collect();
        let b = a(&want);
        let (x, iters) = gmres(a, &b, 8, 1e-12, 500).unwrap();
        assert!(iters > 0);
        for (u, v) in x.iter().zip(want.iter()) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }

    fn plates_setup(
        m: usize,
    ) -> (
        Arc<crate::mesh::VolumeMesh>,
        crate::mesh::SurfaceMesh,
        Material,
    ) {
        let mesh = Arc::new(gen_parallel_plates(1.0, 1.0, m, 1).unwrap());
        let surf = extract_boundary(&mesh, &[CAVITY_TAG]).unwrap();
        (mesh, surf, Material::constant(8000.0, 500.0, 15.0))
    }

    #[test]
    fn jacobian_action_reduces_to_sparse_without_cavity() {
        let (mesh, _surf, mat) = plates_setup(2);
        let n = mesh.n_nodes();
        let t: Vec<f64> = (0..n).map(|i| 300.0 + (i % 5) as f64).collect();
        let mut jsp = SparseMatrix::fem_pattern(&mesh);
        assemble_jsparse(&mesh, &mat, &t, &t, 25.0, &mut jsp);
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) as f64).sin()).collect();
        let got = total_jacobian_action(&jsp, None, &t, &x);
        let want = jsp.matvec(&x);
        assert_eq!(got, want);
        let zero = total_jacobian_action(&jsp, None, &t, &vec![0.0; n]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_jacobian_matches_full_residual_differences() {
        let (mesh, surf, mat) = plates_setup(4);
        let params = CavityParams {
            emissivity: 0.8,
            ..CavityParams::default()
        };
        let (op, _) = build_direct_operator(&surf, &params, u64::MAX).unwrap();
        let n = mesh.n_nodes();
        let problem = TransientProblem {
            mesh: &mesh,
            surface: Some(&surf),
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let t_old: Vec<f64> = (0..n).map(|i| 350.0 + ((i * 13) % 50) as f64).collect();
        let t: Vec<f64> = (0..n).map(|i| 400.0 + ((i * 29) % 80) as f64).collect();
        let x: Vec<f64> = (0..n)
            .map(|i| (((i * 104729) % 200) as f64 / 100.0) - 1.0)
            .collect();
        let dt = 25.0;
        let mut jsp = SparseMatrix::fem_pattern(&mesh);
        assemble_jsparse(&mesh, &mat, &t, &t_old, dt, &mut jsp);
        let h = 1e-4 * norm2(&t) / norm2(&x);
        let tp: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a + h * b).collect();
        let tm: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a - h * b).collect();
        let quad = ElementQuadCache::build(&mesh);
        let rp = full_residual(&problem, &quad, Some(&op), &tp, &t_old, dt);
        let rm = full_residual(&problem, &quad, Some(&op), &tm, &t_old, dt);
        let fd: Vec<f64> = rp
            .iter()
            .zip(rm.iter())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let got = total_jacobian_action(&jsp, Some(&op), &t, &x);
        let scale = norm2(&fd);
        let mut err = 0.0;
        for (a, b) in got.iter().zip(fd.iter()) {
            err += (a - b) * (a - b);
        }
        assert!(
            err.sqrt() <= 1e-5 * scale,
            "sign or value mismatch: {} vs {scale}",
            err.sqrt()
        );
    }

    #[test]
    fn uniform_closed_cavity_is_a_fixed_point() {
        let (mesh, surf, mat) = plates_setup(2);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-6,
            n_min: 4,
            ..CavityParams::default()
        };
        let (op, _) = build_lowrank_operator(&surf, &params).unwrap();
        let problem = TransientProblem {
            mesh: &mesh,
            surface: Some(&surf),
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let t0 = vec![450.0; mesh.n_nodes()];
        let series = run_transient(&problem, Some(&op), &NewtonConfig::default(), 25.0, 250.0, &t0)
            .unwrap();
        assert_eq!(series.records.len(), 10);
        for rec in &series.records {
            let min = rec.temperature.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = rec.temperature.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max - min <= 1e-8, "step {}: spread {}", rec.step, max - min);
        }
    }

    #[test]
    fn linear_conduction_converges_in_one_newton_iteration() {
        let (mesh, _surf, mat) = plates_setup(2);
        let n = mesh.n_nodes();
        let problem = TransientProblem {
            mesh: &mesh,
            surface: None,
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let t0: Vec<f64> = (0..n).map(|i| 300.0 + (i % 7) as f64).collect();
        let series =
            run_transient(&problem, None, &NewtonConfig::default(), 25.0, 100.0, &t0).unwrap();
        for rec in &series.records {
            assert!(rec.newton_iters <= 2, "step {}: {}", rec.step, rec.newton_iters);
        }
        // times increase strictly by dt
        for (k, rec) in series.records.iter().enumerate() {
            assert!((rec.time_s - 25.0 * (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn krylov_stays_cheap_per_newton_step() {
        let (mesh, surf, mat) = plates_setup(4);
        let params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-6,
            n_min: 8,
            ..CavityParams::default()
        };
        let (op, _) = build_lowrank_operator(&surf, &params).unwrap();
        let problem = TransientProblem {
            mesh: &mesh,
            surface: Some(&surf),
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let t0: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| if p[2] < 0.5 { 900.0 } else { 300.0 })
            .collect();
        let series =
            run_transient(&problem, Some(&op), &NewtonConfig::default(), 25.0, 250.0, &t0).unwrap();
        for rec in &series.records {
            assert!(
                rec.krylov_iters <= 20 * rec.newton_iters.max(1),
                "step {}: {} krylov for {} newton",
                rec.step,
                rec.krylov_iters,
                rec.newton_iters
            );
        }
    }

    #[test]
    fn direct_and_lowrank_agree_at_tight_tolerance() {
        let (mesh, surf, mat) = plates_setup(3);
        let lo_params = CavityParams {
            emissivity: 0.8,
            eps_rel: 1e-14,
            n_min: 4,
            ..CavityParams::default()
        };
        let (lo, _) = build_lowrank_operator(&surf, &lo_params).unwrap();
        let (hi, _) = build_direct_operator(&surf, &lo_params, u64::MAX).unwrap();
        let problem = TransientProblem {
            mesh: &mesh,
            surface: Some(&surf),
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let n = mesh.n_nodes();
        let t0: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| if p[2] < 0.5 { 900.0 } else { 300.0 })
            .collect();
        assert_eq!(t0.len(), n);
        let cfg = NewtonConfig::default();
        let a = run_transient(&problem, Some(&lo), &cfg, 25.0, 250.0, &t0).unwrap();
        let b = run_direct(&problem, Some(&hi), &cfg, 25.0, 250.0, &t0).unwrap();
        let e = error_e_t(&a, &b).unwrap();
        assert!(e <= 1e-9, "e(T) = {e}");
    }

    #[test]
    fn error_metric_edge_cases() {
        let (mesh, _surf, mat) = plates_setup(1);
        let problem = TransientProblem {
            mesh: &mesh,
            surface: None,
            material: &mat,
            dirichlet: &[],
            source: 0.0,
        };
        let t0 = vec![400.0; mesh.n_nodes()];
        let s = run_transient(&problem, None, &NewtonConfig::default(), 50.0, 100.0, &t0).unwrap();
        assert_eq!(error_e_t(&s, &s).unwrap(), 0.0);
        // homogeneity: T = (1 + delta) T_ref gives e = delta
        let mut scaled = s.clone();
        for rec in scaled.records.iter_mut() {
            for v in rec.temperature.iter_mut() {
                *v *= 1.001;
            }
        }
        let e = error_e_t(&scaled, &s).unwrap();
        assert!((e - 1e-3).abs() < 1e-9);
        // misaligned grids error out
        let mut short = s.clone();
        short.records.pop();
        assert!(error_e_t(&short, &s).is_err());
    }
}
