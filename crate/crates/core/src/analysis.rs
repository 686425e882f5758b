//! Error measurement and experiment harness: discrete error norms against the
//! manufactured solutions, experimental orders of convergence, parameter
//! sweeps over mesh widths and step sizes, a sampled study of the
//! trace-coupling constants, and the wall-time comparison between the
//! monolithic and the splitting integrators.
//!
//! All results are plain data; the CSV writers at the bottom of the module
//! are the interchange format of the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, interpolate_exact, BlockOperators};
use crate::linalg::{axpy, factorize, weighted_inner, LinalgError};
use crate::mesh::{mesh_stats, unit_disk_mesh, Mesh, MeshError};
use crate::problems::Problem;
use crate::schemes::{integrate_with_ops, SchemeConfig, SchemeError, SchemeKind, Trajectory};

/// Errors from the analysis layer; mostly propagated from below.
#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Discrete error norms and bookkeeping for one run on one mesh.
///
/// `err_linf_l2` is the maximum over all recorded times `t ≥ 0` of the
/// combined mass-weighted L² norm of the bulk and surface errors;
/// `err_l2_h1` is the step-size-weighted `l²` sum over the computed steps
/// (`t > 0`) of the full H¹ norms (mass plus stiffness) of both components.
/// The reference is the nodal interpolant of the exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub scheme: &'static str,
    pub problem: &'static str,
    /// Mesh width (longest edge).
    pub h: f64,
    /// Bulk unknowns.
    pub n_u: usize,
    /// Surface unknowns.
    pub n_p: usize,
    pub tau: f64,
    pub err_linf_l2: f64,
    pub err_l2_h1: f64,
    pub wall_time_seconds: f64,
    pub newton_iters_total: usize,
}

/// Measure a computed trajectory against the problem's exact solution.
///
/// `ops` must be the operators assembled on `mesh` (they supply the norm
/// weights); `traj` must have been produced on the same mesh.
pub fn trajectory_errors(
    traj: &Trajectory,
    mesh: &Mesh,
    problem: &Problem,
    ops: &BlockOperators,
) -> Result<ErrorReport, AnalysisError> {
    let exact = problem
        .exact
        .ok_or(SchemeError::MissingExact(problem.name))?;
    if traj.times.len() != traj.u.len() || traj.times.len() != traj.p.len() {
        return Err(AnalysisError::InvalidInput(
            "trajectory time/state lengths disagree".into(),
        ));
    }
    if traj.history_len == 0 || traj.history_len > traj.times.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "trajectory history length {} out of range",
            traj.history_len
        )));
    }

    // The last history entry sits at t = 0 and enters the max norm; earlier
    // (negative-time) history entries are initialization data and do not.
    let first = traj.history_len - 1;
    let mut linf_sq: f64 = 0.0;
    let mut h1_acc: f64 = 0.0;
    for k in first..traj.times.len() {
        let (eu, ep) = interpolate_exact(mesh, exact, traj.times[k]);
        let du = axpy(&eu, -1.0, &traj.u[k]);
        let dp = axpy(&ep, -1.0, &traj.p[k]);
        let mu = weighted_inner(&ops.mu, &du, &du)?.max(0.0);
        let mp = weighted_inner(&ops.mp, &dp, &dp)?.max(0.0);
        linf_sq = linf_sq.max(mu + mp);
        if k >= traj.history_len {
            let ku = weighted_inner(&ops.ku, &du, &du)?.max(0.0);
            let kp = weighted_inner(&ops.kp, &dp, &dp)?.max(0.0);
            h1_acc += mu + ku + mp + kp;
        }
    }
    let err_linf_l2 = linf_sq.sqrt();
    let err_l2_h1 = (traj.tau * h1_acc).sqrt();
    if !err_linf_l2.is_finite() || !err_l2_h1.is_finite() {
        return Err(AnalysisError::InvalidInput(
            "trajectory produced non-finite error norms".into(),
        ));
    }
    Ok(ErrorReport {
        scheme: traj.kind.name(),
        problem: problem.name,
        h: mesh_stats(mesh).h,
        n_u: ops.n_u,
        n_p: ops.n_p,
        tau: traj.tau,
        err_linf_l2,
        err_l2_h1,
        wall_time_seconds: traj.wall_time_seconds,
        newton_iters_total: traj.newton_iters_total(),
    })
}

/// One row of an order-of-convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct EocRow {
    pub tau: f64,
    pub error: f64,
    /// `log(e_prev/e) / log(tau_prev/tau)` against the previous row; absent
    /// for the first row and whenever either error is not a positive finite
    /// number.
    pub eoc: Option<f64>,
}

/// Order-of-convergence table over a step-size refinement at fixed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct EocTable {
    pub rows: Vec<EocRow>,
    /// The last error, if the tail of the table has stopped converging
    /// (trailing observed orders below 0.5), i.e. the spatial saturation
    /// level.
    pub plateau: Option<f64>,
}

/// Observed convergence orders for a `(tau, error)` series with strictly
/// decreasing step sizes.
pub fn eoc(pairs: &[(f64, f64)]) -> Result<EocTable, AnalysisError> {
    if pairs.len() < 2 {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least 2 (tau, error) pairs, got {}",
            pairs.len()
        )));
    }
    for w in pairs.windows(2) {
        if !(w[1].0 > 0.0 && w[0].0 > w[1].0 && w[0].0.is_finite()) {
            return Err(AnalysisError::InvalidInput(format!(
                "step sizes must be positive, finite and strictly decreasing; got {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    let positive = |e: f64| e > 0.0 && e.is_finite();
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, &(tau, error)) in pairs.iter().enumerate() {
        let eoc = (k > 0 && positive(pairs[k - 1].1) && positive(error))
            .then(|| (pairs[k - 1].1 / error).ln() / (pairs[k - 1].0 / tau).ln());
        rows.push(EocRow { tau, error, eoc });
    }
    // Saturation: the trailing observed orders (the last two once the table is
    // long enough, otherwise the single one available) are all below 0.5.
    let need = if rows.len() >= 3 { 2 } else { 1 };
    let saturated = rows[rows.len() - need..]
        .iter()
        .all(|r| matches!(r.eoc, Some(e) if e < 0.5));
    let plateau = saturated.then(|| rows[rows.len() - 1].error);
    Ok(EocTable { rows, plateau })
}

/// The observed orders from rows still in the step-size-dominated regime:
/// a pair qualifies when the geometric mean of its two errors sits more than
/// a factor 5 above the smallest error of the table, i.e. clearly above the
/// saturation floor.
pub fn pre_plateau_eocs(table: &EocTable) -> Vec<f64> {
    let floor = table
        .rows
        .iter()
        .map(|r| r.error)
        .filter(|e| *e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for k in 1..table.rows.len() {
        if let Some(e) = table.rows[k].eoc {
            let mean = (table.rows[k - 1].error * table.rows[k].error).sqrt();
            if mean > 5.0 * floor {
                out.push(e);
            }
        }
    }
    out
}

/// The step-size grid used by the sweeps: `tau_max · 2^{-k}` for
/// `k = 0 .. count`.
pub fn tau_grid(tau_max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| tau_max / f64::powi(2.0, k as i32)).collect()
}

/// `(tau, err_linf_l2)` pairs of a report series, for [`eoc`].
pub fn linf_pairs(reports: &[ErrorReport]) -> Vec<(f64, f64)> {
    reports.iter().map(|r| (r.tau, r.err_linf_l2)).collect()
}

/// `(tau, err_l2_h1)` pairs of a report series, for [`eoc`].
pub fn h1_pairs(reports: &[ErrorReport]) -> Vec<(f64, f64)> {
    reports.iter().map(|r| (r.tau, r.err_l2_h1)).collect()
}

/// Run `scheme` on every `(target width, step size)` cell of a grid and
/// report the errors.
///
/// Rows are ordered mesh-outer/step-inner in the given order, regardless of
/// `workers`. Operators are assembled once per mesh and shared. With
/// `workers > 1` the cells run concurrently; everything except wall-clock
/// times is bitwise independent of the worker count.
pub fn convergence_sweep(
    problem: &Problem,
    kind: SchemeKind,
    target_widths: &[f64],
    taus: &[f64],
    final_time: f64,
    workers: usize,
) -> Result<Vec<ErrorReport>, AnalysisError> {
    if target_widths.is_empty() || taus.is_empty() {
        return Err(AnalysisError::InvalidInput(
            "sweep grids must be nonempty".into(),
        ));
    }
    if workers == 0 {
        return Err(AnalysisError::InvalidInput(
            "worker count must be at least 1".into(),
        ));
    }
    let mut levels = Vec::with_capacity(target_widths.len());
    for &target in target_widths {
        let mesh = unit_disk_mesh(target)?;
        let ops = assemble(&mesh, problem);
        levels.push((mesh, ops));
    }

    let n_cells = levels.len() * taus.len();
    let cell = |index: usize| -> Result<ErrorReport, AnalysisError> {
        let (mesh, ops) = &levels[index / taus.len()];
        let tau = taus[index % taus.len()];
        let config = SchemeConfig::new(kind, tau, final_time)?;
        let traj = integrate_with_ops(mesh, ops, problem, &config)?;
        trajectory_errors(&traj, mesh, problem, ops)
    };

    if workers == 1 {
        return (0..n_cells).map(cell).collect();
    }

    let slots: Vec<Mutex<Option<Result<ErrorReport, AnalysisError>>>> =
        (0..n_cells).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..workers.min(n_cells) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= n_cells {
                    break;
                }
                let result = cell(index);
                *slots[index].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap()
                .expect("every sweep cell is claimed by exactly one worker")
        })
        .collect()
}

/// Sampled bounds of the boundary-trace coupling blocks at one mesh width.
///
/// For random surface vectors `p`, the lifted boundary trace
/// `u₂ = Mλ⁻¹ Bp p` satisfies `‖u₂‖²_{M22} ≤ c_mass · h · ‖p‖²_{Mp}` and
/// `‖u₂‖²_{K22} ≤ c_stiffness / h · ‖p‖²_{Mp}` with constants independent of
/// the mesh width; the fields record the largest sampled quotients.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstantRow {
    pub h: f64,
    pub c_mass: f64,
    pub c_stiffness: f64,
}

/// Number of random surface vectors sampled per mesh in
/// [`trace_coupling_constants`].
pub const TRACE_SAMPLES: usize = 50;

/// Estimate the trace-coupling constants on a ladder of meshes by random
/// sampling. Deterministically seeded; at least 3 levels required so the
/// width-dependence is observable.
pub fn trace_coupling_constants(
    target_widths: &[f64],
) -> Result<Vec<TraceConstantRow>, AnalysisError> {
    if target_widths.len() < 3 {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least 3 mesh levels, got {}",
            target_widths.len()
        )));
    }
    let problem = crate::problems::linear_problem();
    let mut rows = Vec::with_capacity(target_widths.len());
    for (level, &target) in target_widths.iter().enumerate() {
        let mesh = unit_disk_mesh(target)?;
        let ops = assemble(&mesh, &problem);
        let h = mesh_stats(&mesh).h;
        let trace = factorize(&ops.mlam)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0a2d + level as u64);
        let mut c_mass: f64 = 0.0;
        let mut c_stiffness: f64 = 0.0;
        for _ in 0..TRACE_SAMPLES {
            let p: Vec<f64> = (0..ops.n_p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u2 = trace.solve(&ops.bp.matvec(&p)?)?;
            let p_mass = weighted_inner(&ops.mp, &p, &p)?;
            c_mass = c_mass.max(weighted_inner(&ops.m22, &u2, &u2)? / (h * p_mass));
            c_stiffness = c_stiffness.max(weighted_inner(&ops.k22, &u2, &u2)? * h / p_mass);
        }
        rows.push(TraceConstantRow { h, c_mass, c_stiffness });
    }
    Ok(rows)
}

/// Wall-time comparison of the monolithic scheme against the splitting
/// scheme for one `(h, tau)` cell: medians over repetitions and their ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub h: f64,
    pub tau: f64,
    pub monolithic_seconds: f64,
    pub split_seconds: f64,
    /// `monolithic_seconds / split_seconds`; above 1 means the splitting
    /// scheme is faster.
    pub speedup: f64,
}

/// Benchmark the monolithic integrator against the second-order splitting
/// integrator over a grid of meshes and step sizes.
///
/// Each cell is integrated `repetitions ≥ 3` times per scheme and the median
/// wall time is reported, so a single slow outlier cannot skew a cell.
/// Runs are serial; time cells with `workers = 1` elsewhere for honest
/// numbers.
pub fn speedup_benchmark(
    problem: &Problem,
    target_widths: &[f64],
    taus: &[f64],
    final_time: f64,
    repetitions: usize,
) -> Result<Vec<SpeedupRow>, AnalysisError> {
    if repetitions < 3 {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least 3 repetitions for a stable median, got {repetitions}"
        )));
    }
    if target_widths.is_empty() || taus.is_empty() {
        return Err(AnalysisError::InvalidInput(
            "benchmark grids must be nonempty".into(),
        ));
    }
    let mut rows = Vec::with_capacity(target_widths.len() * taus.len());
    for &target in target_widths {
        let mesh = unit_disk_mesh(target)?;
        let ops = assemble(&mesh, problem);
        let h = mesh_stats(&mesh).h;
        for &tau in taus {
            let monolithic_seconds = median_wall_time(
                &mesh, &ops, problem, SchemeKind::Monolithic, tau, final_time, repetitions,
            )?;
            let split_seconds = median_wall_time(
                &mesh, &ops, problem, SchemeKind::SplitDelayB, tau, final_time, repetitions,
            )?;
            rows.push(SpeedupRow {
                h,
                tau,
                monolithic_seconds,
                split_seconds,
                speedup: monolithic_seconds / split_seconds,
            });
        }
    }
    Ok(rows)
}

/// Median stepping wall time of `repetitions` identical runs.
fn median_wall_time(
    mesh: &Mesh,
    ops: &BlockOperators,
    problem: &Problem,
    kind: SchemeKind,
    tau: f64,
    final_time: f64,
    repetitions: usize,
) -> Result<f64, AnalysisError> {
    let config = SchemeConfig::new(kind, tau, final_time)?;
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        times.push(integrate_with_ops(mesh, ops, problem, &config)?.wall_time_seconds);
    }
    Ok(median(&mut times))
}

/// Median of a nonempty slice (averages the middle pair for even lengths).
fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Exact header of the error-report CSV format.
pub const CSV_HEADER: &str =
    "scheme,problem,h,n_u,n_p,tau,err_linf_l2,err_l2_h1,wall_time_s,newton_iters";

/// Render reports as CSV. Floating-point columns carry 17 significant digits
/// so rendering round-trips the values exactly.
pub fn reports_to_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::with_capacity(128 * (reports.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.scheme,
            r.problem,
            r.h,
            r.n_u,
            r.n_p,
            r.tau,
            r.err_linf_l2,
            r.err_l2_h1,
            r.wall_time_seconds,
            r.newton_iters_total,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Render the wall-time comparison as CSV.
pub fn speedup_to_csv(rows: &[SpeedupRow]) -> String {
    let mut out = String::from("h,tau,mono_wall_s,split_wall_s,speedup\n");
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.h, r.tau, r.monolithic_seconds, r.split_seconds, r.speedup,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Render the trace-constant study as CSV.
pub fn trace_constants_to_csv(rows: &[TraceConstantRow]) -> String {
    let mut out = String::from("h,c_mass,c_stiffness\n");
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", r.h, r.c_mass, r.c_stiffness)
            .expect("writing to a String cannot fail");
    }
    out
}

/// Write a rendered table to disk.
pub fn write_text(path: &Path, contents: &str) -> Result<(), AnalysisError> {
    fs::write(path, contents).map_err(|source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    })
}
