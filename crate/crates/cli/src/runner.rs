//! Experiment orchestration and on-disk artifacts.
//!
//! Every subcommand writes CSV files with a header row, `.` as the decimal
//! separator and LF endings into the output directory. Numbers are printed
//! with the shortest round-trip formatting, so identical runs produce byte
//! identical files; timing columns in `compare_cn.csv` are the exception and
//! vary between runs by nature.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::{MeshSpec, ProblemConfig, Spacing};
use stheat::cn;
use stheat::linalg::DenseMatrix;
use stheat::spacetime::{
    assemble_spacetime_load, interpolate_in_time, SpaceTimeSystem, TrialVector,
};
use stheat::spatial::{export_snapshot, SpatialMesh, SpatialOperators};
use stheat::temporal::{TemporalMesh, TemporalOperators};
use stheat::{Error, Result};

/// Largest trial dimension the dense condition number analysis accepts.
const DIAG_CAP: usize = 5000;

/// Tolerance and iteration headroom for sweep reference solutions.
const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAXIT: usize = 2000;

fn build_mesh(cfg: &ProblemConfig) -> Result<SpatialMesh> {
    match &cfg.mesh {
        MeshSpec::UnitInterval(n) => SpatialMesh::unit_interval(*n),
        MeshSpec::Lshape(r) => SpatialMesh::lshape(*r),
        MeshSpec::Dir(path) => SpatialMesh::load(path),
    }
}

fn build_temporal_mesh(cfg: &ProblemConfig, num_elements: usize) -> Result<TemporalMesh> {
    match &cfg.spacing {
        Spacing::Uniform => TemporalMesh::uniform(num_elements, cfg.horizon),
        Spacing::Random => TemporalMesh::random(num_elements, cfg.horizon, cfg.seed),
        Spacing::Explicit(nodes) => {
            if num_elements != cfg.num_elements {
                return Err(Error::InvalidInput(
                    "K sweeps need uniform or random spacing, not an explicit node list".into(),
                ));
            }
            TemporalMesh::new(nodes.clone())
        }
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{header}");
    for row in rows {
        let _ = writeln!(text, "{row}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Relative nodal discrepancy: max over temporal nodes of the spatial mass
/// norm of the difference, scaled by the largest mass norm of the reference.
fn relative_nodal_discrepancy(
    ops: &SpatialOperators,
    values: &DenseMatrix,
    reference: &DenseMatrix,
) -> Result<f64> {
    let mass_norm = |v: &[f64]| -> Result<f64> {
        let mv = ops.mass.mul_vec(v)?;
        Ok(mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
    };
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for k in 0..reference.ncols() {
        scale = scale.max(mass_norm(reference.col(k))?);
        let diff: Vec<f64> = values
            .col(k)
            .iter()
            .zip(reference.col(k))
            .map(|(a, b)| a - b)
            .collect();
        worst = worst.max(mass_norm(&diff)?);
    }
    if scale == 0.0 {
        return Ok(worst);
    }
    Ok(worst / scale)
}

struct Assembled {
    mesh: SpatialMesh,
    temporal_mesh: TemporalMesh,
    system: SpaceTimeSystem,
    rhs: stheat::spacetime::TestVector,
}

/// Builds mesh, operators, preconditioned system and load for `k` elements.
fn assemble(cfg: &ProblemConfig, k: usize, nref: usize) -> Result<Assembled> {
    let mesh = build_mesh(cfg)?;
    let a_fn = |p: [f64; 2]| cfg.a.eval(0.0, p[0], p[1]);
    let ops = SpatialOperators::assemble(&mesh, &a_fn)?;
    let temporal_mesh = build_temporal_mesh(cfg, k)?;
    let temporal = TemporalOperators::assemble(&temporal_mesh, nref);
    let f_fn = |t: f64, p: [f64; 2]| cfg.f.eval(t, p[0], p[1]);
    let g_fn = |t: f64, p: [f64; 2]| cfg.g.eval(t, p[0], p[1]);
    let h_fn = |p: [f64; 2]| cfg.h.eval(0.0, p[0], p[1]);
    let rhs = assemble_spacetime_load(
        &mesh,
        &ops,
        &temporal,
        &f_fn,
        &g_fn,
        &h_fn,
        cfg.quadrature,
    )?;
    let mut system = SpaceTimeSystem::new(ops, temporal)?;
    system.build_preconditioner()?;
    Ok(Assembled {
        mesh,
        temporal_mesh,
        system,
        rhs,
    })
}

/// Full nodal row (Dirichlet zeros included) for one temporal column.
fn full_nodal_values(mesh: &SpatialMesh, ops: &SpatialOperators, free: &[f64]) -> Vec<f64> {
    (0..mesh.num_nodes())
        .map(|node| match ops.node_to_free[node] {
            Some(i) => free[i],
            None => 0.0,
        })
        .collect()
}

/// Solves the configured problem; writes `report.csv`, `solution.csv` and
/// one `snapshot_<i>.txt` per requested time. Returns convergence.
pub fn run_solve(cfg: &ProblemConfig, out: &Path) -> Result<bool> {
    let parts = assemble(cfg, cfg.num_elements, cfg.nref)?;
    let (u, report) = parts.system.solve(&parts.rhs, cfg.tol, cfg.maxit)?;

    let rows: Vec<String> = report
        .history
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{i},{r}"))
        .collect();
    write_csv(&out.join("report.csv"), "iteration,residual", &rows)?;

    let ops = parts.system.spatial();
    let mut header = String::from("t");
    for node in 1..=parts.mesh.num_nodes() {
        let _ = write!(header, ",node_{node}");
    }
    let rows: Vec<String> = parts
        .temporal_mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut row = format!("{t}");
            for v in full_nodal_values(&parts.mesh, ops, u.values.col(k)) {
                let _ = write!(row, ",{v}");
            }
            row
        })
        .collect();
    write_csv(&out.join("solution.csv"), &header, &rows)?;

    for (i, &t) in cfg.snapshots.iter().enumerate() {
        let values = interpolate_in_time(&u, &parts.temporal_mesh, t)?;
        export_snapshot(
            &parts.mesh,
            ops,
            &values,
            &out.join(format!("snapshot_{i}.txt")),
        )?;
    }

    println!(
        "solve: {} iterations, residual {:.6e} of initial {:.6e}, converged: {}",
        report.iterations, report.residual, report.initial_residual, report.converged
    );
    Ok(report.converged)
}

/// Iteration counts, conditioning indicators and reference errors over the
/// configured (K, nref) grid; writes `sweep.csv`.
pub fn run_sweep(cfg: &ProblemConfig, out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for &nref in &cfg.sweep_nref {
        for &k in &cfg.sweep_k {
            let parts = assemble(cfg, k, nref)?;
            let (u, report) = parts.system.solve(&parts.rhs, cfg.tol, cfg.maxit)?;
            let diag = parts.system.diagnostics(DIAG_CAP)?;

            // Reference on the same trial mesh refined twice (4x elements);
            // nested nodes make the coarse embedding exact.
            let (mid_mesh, coarse_to_mid) = parts.temporal_mesh.refine_uniform();
            let (fine_mesh, mid_to_fine) = mid_mesh.refine_uniform();
            let a_fn = |p: [f64; 2]| cfg.a.eval(0.0, p[0], p[1]);
            let fine_ops = SpatialOperators::assemble(&parts.mesh, &a_fn)?;
            let fine_temporal = TemporalOperators::assemble(&fine_mesh, nref);
            let f_fn = |t: f64, p: [f64; 2]| cfg.f.eval(t, p[0], p[1]);
            let g_fn = |t: f64, p: [f64; 2]| cfg.g.eval(t, p[0], p[1]);
            let h_fn = |p: [f64; 2]| cfg.h.eval(0.0, p[0], p[1]);
            let fine_rhs = assemble_spacetime_load(
                &parts.mesh,
                &fine_ops,
                &fine_temporal,
                &f_fn,
                &g_fn,
                &h_fn,
                cfg.quadrature,
            )?;
            let mut fine_system = SpaceTimeSystem::new(fine_ops, fine_temporal)?;
            fine_system.build_preconditioner()?;
            let tol = cfg.tol.min(REFERENCE_TOL);
            let maxit = cfg.maxit.max(REFERENCE_MAXIT);
            let (reference, _) = fine_system.solve(&fine_rhs, tol, maxit)?;

            let embedded = u
                .values
                .mul_sparse_transpose(&coarse_to_mid)?
                .mul_sparse_transpose(&mid_to_fine)?;
            let mut difference = reference.values.clone();
            difference.axpy(-1.0, &embedded);
            let error = fine_system.m_norm(&TrialVector { values: difference })?;

            let row = format!(
                "{k},{nref},{},{},{},{},{}",
                report.iterations, diag.cond, diag.kappa_h, diag.cfl_h, error
            );
            println!("sweep: {row}");
            rows.push(row);
        }
    }
    write_csv(
        &out.join("sweep.csv"),
        "K,nref,iterations,cond,kappa_h,cfl_h,xnorm_error",
        &rows,
    )
}

/// Wall-clock comparison against Crank-Nicolson time stepping over the
/// configured K list; writes `compare_cn.csv`. Timing columns are
/// informational; the discrepancy column is the relative nodal metric.
pub fn run_compare_cn(cfg: &ProblemConfig, out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for &k in &cfg.compare_k {
        let started = Instant::now();
        let parts = assemble(cfg, k, cfg.nref)?;
        let assembly_seconds = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let (u, report) = parts.system.solve(&parts.rhs, cfg.tol, cfg.maxit)?;
        let glsqr_seconds = started.elapsed().as_secs_f64();

        let ops = parts.system.spatial();
        let f_fn = |t: f64, p: [f64; 2]| cfg.f.eval(t, p[0], p[1]);
        let g_fn = |t: f64, p: [f64; 2]| cfg.g.eval(t, p[0], p[1]);
        let h_fn = |p: [f64; 2]| cfg.h.eval(0.0, p[0], p[1]);
        let started = Instant::now();
        let reference = cn::solve(
            &parts.mesh,
            ops,
            &parts.temporal_mesh,
            &f_fn,
            &g_fn,
            &h_fn,
        )?;
        let cn_seconds = started.elapsed().as_secs_f64();

        let discrepancy = relative_nodal_discrepancy(ops, &u.values, &reference)?;
        let row = format!(
            "{k},{},{glsqr_seconds},{assembly_seconds},{cn_seconds},{discrepancy}",
            report.iterations
        );
        println!("compare-cn: {row}");
        rows.push(row);
    }
    write_csv(
        &out.join("compare_cn.csv"),
        "K,iterations,glsqr_seconds,assembly_seconds,cn_seconds,max_discrepancy",
        &rows,
    )
}

/// Conditioning indicators of the configured system; writes `diag.csv`.
pub fn run_diag(cfg: &ProblemConfig, out: &Path) -> Result<()> {
    let parts = assemble(cfg, cfg.num_elements, cfg.nref)?;
    let diag = parts.system.diagnostics(DIAG_CAP)?;
    let row = format!(
        "{},{},{},{},{},{},{}",
        cfg.num_elements,
        cfg.nref,
        parts.system.num_spatial() * parts.system.num_trial(),
        parts.system.num_spatial() * (parts.system.num_test() + 1),
        diag.cond,
        diag.kappa_h,
        diag.cfl_h
    );
    println!("diag: {row}");
    write_csv(
        &out.join("diag.csv"),
        "K,nref,trial_dofs,test_rows,cond,kappa_h,cfl_h",
        &[row],
    )
}
