//! Command-line driver for the bulk–surface solver: mesh generation, single
//! integrations, convergence sweeps, a built-in verification suite, and the
//! monolithic-versus-splitting timing study.
//!
//! Exit codes: 0 on success, 1 when a run or a verification check fails,
//! 2 on usage errors (bad flags or inconsistent parameter combinations).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bulksurf::analysis::{
    convergence_sweep, reports_to_csv, speedup_benchmark, speedup_to_csv, tau_grid,
    trace_coupling_constants, trajectory_errors, write_text, AnalysisError,
};
use bulksurf::assembly::{assemble, interpolate_exact};
use bulksurf::linalg::{norm2, SparseMatrix};
use bulksurf::mesh::{mesh_stats, unit_disk_mesh, write_mesh, MeshError, WIDTH_LADDER};
use bulksurf::problems::{
    linear_problem, problem_by_name, shipped_problems, validate_problem, Problem,
};
use bulksurf::schemes::reference::dense_step;
use bulksurf::schemes::stencils::{
    backward_difference, bdf2_derivative, derivative_gap_identity, increment_product_identity,
    value_product_identity,
};
use bulksurf::schemes::{
    integrate_with_ops, FemRhs, MonolithicIntegrator, SchemeConfig, SchemeError, SchemeKind,
    SplitIntegrator, StepResult,
};

/// Finite-element study of parabolic problems with dynamic boundary
/// conditions on the unit disk: bulk–surface splitting integrators against a
/// monolithic reference scheme.
#[derive(Parser)]
#[command(name = "bulksurf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate the unit disk and write the mesh to a file.
    Mesh {
        /// Target mesh width (longest triangle edge), in (0, 1.2].
        #[arg(long, value_name = "H")]
        target_h: f64,
        /// Output path for the mesh file.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Integrate one scheme on one mesh and report its errors as CSV.
    Run {
        /// Time integrator: split-a, split-b, split-c, aux, mono, or third.
        #[arg(long, value_name = "NAME")]
        scheme: String,
        /// Manufactured problem: linear or semilinear.
        #[arg(long, value_name = "NAME")]
        problem: String,
        /// Target mesh width (longest triangle edge), in (0, 1.2].
        #[arg(long, value_name = "H")]
        target_h: f64,
        /// Time-step size; must divide the final time.
        #[arg(long, value_name = "TAU")]
        tau: f64,
        /// End of the integration interval [0, T].
        #[arg(long, value_name = "T", default_value_t = 1.0)]
        final_time: f64,
        /// Output CSV path; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run a scheme over a grid of mesh widths and step sizes; CSV output.
    Sweep {
        /// Time integrator: split-a, split-b, split-c, aux, mono, or third.
        #[arg(long, value_name = "NAME")]
        scheme: String,
        /// Manufactured problem: linear or semilinear.
        #[arg(long, value_name = "NAME")]
        problem: String,
        /// Number of mesh refinement levels to sweep (1 to 7, coarse first).
        #[arg(long, value_name = "K")]
        h_levels: usize,
        /// Largest step size of the grid; halved tau-count - 1 times.
        #[arg(long, value_name = "TAU", default_value_t = 0.2)]
        tau_max: f64,
        /// Number of step sizes (tau-max, tau-max/2, ...).
        #[arg(long, value_name = "N", default_value_t = 9)]
        tau_count: usize,
        /// End of the integration interval [0, T].
        #[arg(long, value_name = "T", default_value_t = 1.0)]
        final_time: f64,
        /// Concurrent sweep cells; 1 keeps wall times comparable.
        #[arg(long, value_name = "N", default_value_t = 1)]
        workers: usize,
        /// Output CSV path; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the built-in verification suite; exits 0 only if every check passes.
    Verify,
    /// Compare monolithic and splitting wall times over a mesh/step grid.
    Speedup {
        /// Manufactured problem: linear or semilinear.
        #[arg(long, value_name = "NAME", default_value = "semilinear")]
        problem: String,
        /// Number of mesh refinement levels to benchmark (1 to 7, coarse first).
        #[arg(long, value_name = "K")]
        h_levels: usize,
        /// Largest step size of the grid; halved tau-count - 1 times.
        #[arg(long, value_name = "TAU", default_value_t = 0.2)]
        tau_max: f64,
        /// Number of step sizes (tau-max, tau-max/2, ...).
        #[arg(long, value_name = "N", default_value_t = 3)]
        tau_count: usize,
        /// Timed repetitions per cell and scheme; the median is reported.
        #[arg(long, value_name = "N", default_value_t = 3)]
        repetitions: usize,
        /// End of the integration interval [0, T].
        #[arg(long, value_name = "T", default_value_t = 1.0)]
        final_time: f64,
        /// Output CSV path; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

/// Failures split by exit code: usage problems exit 2, runtime failures 1.
enum CliError {
    Usage(String),
    Run(String),
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match &e {
            SchemeError::InvalidConfig(_) | SchemeError::InvalidStepSize { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match &e {
            MeshError::InvalidTargetWidth(_) => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidInput(_) => CliError::Usage(e.to_string()),
            AnalysisError::Scheme(inner) => inner.into(),
            AnalysisError::Mesh(inner) => inner.into(),
            _ => CliError::Run(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            eprintln!("run 'bulksurf <COMMAND> --help' for usage");
            ExitCode::from(2)
        }
        Err(CliError::Run(message)) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Mesh { target_h, out } => cmd_mesh(target_h, &out),
        Command::Run { scheme, problem, target_h, tau, final_time, out } => {
            cmd_run(&scheme, &problem, target_h, tau, final_time, out.as_deref())
        }
        Command::Sweep {
            scheme,
            problem,
            h_levels,
            tau_max,
            tau_count,
            final_time,
            workers,
            out,
        } => cmd_sweep(
            &scheme,
            &problem,
            h_levels,
            tau_max,
            tau_count,
            final_time,
            workers,
            out.as_deref(),
        ),
        Command::Verify => cmd_verify(),
        Command::Speedup {
            problem,
            h_levels,
            tau_max,
            tau_count,
            repetitions,
            final_time,
            out,
        } => cmd_speedup(
            &problem,
            h_levels,
            tau_max,
            tau_count,
            repetitions,
            final_time,
            out.as_deref(),
        ),
    }
}

fn scheme_by_flag(name: &str) -> Result<SchemeKind, CliError> {
    SchemeKind::from_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scheme '{name}'; expected one of split-a, split-b, split-c, aux, mono, third"
        ))
    })
}

fn problem_by_flag(name: &str) -> Result<Problem, CliError> {
    problem_by_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown problem '{name}'; expected linear or semilinear"
        ))
    })
}

/// The first `levels` entries of the built-in mesh refinement ladder.
fn ladder_widths(levels: usize) -> Result<&'static [f64], CliError> {
    if levels == 0 || levels > WIDTH_LADDER.len() {
        return Err(CliError::Usage(format!(
            "--h-levels must be between 1 and {}, got {levels}",
            WIDTH_LADDER.len()
        )));
    }
    Ok(&WIDTH_LADDER[..levels])
}

fn step_grid(tau_max: f64, tau_count: usize) -> Result<Vec<f64>, CliError> {
    if !(tau_max > 0.0) || !tau_max.is_finite() {
        return Err(CliError::Usage(format!(
            "--tau-max must be positive and finite, got {tau_max}"
        )));
    }
    if tau_count == 0 {
        return Err(CliError::Usage("--tau-count must be at least 1".into()));
    }
    Ok(tau_grid(tau_max, tau_count))
}

/// Write `contents` to `out`, or to stdout when no path was given.
fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_text(path, contents)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_mesh(target_h: f64, out: &Path) -> Result<(), CliError> {
    let mesh = unit_disk_mesh(target_h)?;
    write_mesh(&mesh, out)?;
    let s = mesh_stats(&mesh);
    println!(
        "wrote {}: {} vertices ({} interior, {} boundary), {} triangles, \
         h = {:.6}, min edge = {:.6}, area = {:.6}",
        out.display(),
        s.n_vertices,
        s.n_interior,
        s.n_boundary,
        s.n_triangles,
        s.h,
        s.min_edge,
        s.area,
    );
    Ok(())
}

fn cmd_run(
    scheme: &str,
    problem: &str,
    target_h: f64,
    tau: f64,
    final_time: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let kind = scheme_by_flag(scheme)?;
    let problem = problem_by_flag(problem)?;
    let config = SchemeConfig::new(kind, tau, final_time)?;
    let mesh = unit_disk_mesh(target_h)?;
    let ops = assemble(&mesh, &problem);
    let traj = integrate_with_ops(&mesh, &ops, &problem, &config)?;
    let report = trajectory_errors(&traj, &mesh, &problem, &ops)?;
    emit(out, &reports_to_csv(&[report]))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    scheme: &str,
    problem: &str,
    h_levels: usize,
    tau_max: f64,
    tau_count: usize,
    final_time: f64,
    workers: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let kind = scheme_by_flag(scheme)?;
    let problem = problem_by_flag(problem)?;
    let widths = ladder_widths(h_levels)?;
    let taus = step_grid(tau_max, tau_count)?;
    let reports = convergence_sweep(&problem, kind, widths, &taus, final_time, workers)?;
    emit(out, &reports_to_csv(&reports))
}

fn cmd_speedup(
    problem: &str,
    h_levels: usize,
    tau_max: f64,
    tau_count: usize,
    repetitions: usize,
    final_time: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let problem = problem_by_flag(problem)?;
    let widths = ladder_widths(h_levels)?;
    let taus = step_grid(tau_max, tau_count)?;
    let rows = speedup_benchmark(&problem, widths, &taus, final_time, repetitions)?;
    emit(out, &speedup_to_csv(&rows))
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

fn cmd_verify() -> Result<(), CliError> {
    let checks: [(&str, fn() -> Result<String, String>); 5] = [
        ("difference identities", check_identities),
        ("stencil residual orders", check_stencil_orders),
        ("dense one-step oracle", check_dense_oracle),
        ("trace-constant uniformity", check_trace_constants),
        ("manufactured-solution residuals", check_problem_residuals),
    ];
    let mut failures = 0usize;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Run(format!(
            "{failures} of {} verification checks failed",
            checks.len()
        )));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn rel_gap_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn rel_gap_vec(a: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(reference).map(|(x, y)| x - y).collect();
    norm2(&diff) / norm2(reference).max(1e-12)
}

/// Random symmetric positive definite weight `AᵀA + I/2`.
fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SparseMatrix {
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut v = if i == j { 0.5 } else { 0.0 };
            for row in &a {
                v += row[i] * row[j];
            }
            triplets.push((i, j, v));
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets).expect("square dense triplets")
}

/// The three summation identities behind the stability analysis, on 1000
/// random windows with random SPD weights.
fn check_identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..7);
        let tau = rng.random_range(1e-3..1.0);
        let w: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let m = random_spd(&mut rng, n);

        let (lhs, rhs) = derivative_gap_identity([&w[0], &w[1], &w[2], &w[3]], tau);
        for (a, b) in lhs.iter().zip(&rhs) {
            worst = worst.max(rel_gap_scalar(*a, *b));
        }
        let (lhs, rhs) = increment_product_identity(&m, [&w[0], &w[1], &w[2]], tau);
        worst = worst.max(rel_gap_scalar(lhs, rhs));
        let (lhs, rhs) = value_product_identity(&m, [&w[0], &w[1], &w[2]], tau);
        worst = worst.max(rel_gap_scalar(lhs, rhs));
    }
    if worst <= 1e-12 {
        Ok(format!(
            "3 identities x 1000 random windows, worst relative gap {worst:.2e}"
        ))
    } else {
        Err(format!("worst relative gap {worst:.2e} exceeds 1e-12"))
    }
}

/// Log-log slopes of the stencil residuals on sin(t): the two-step derivative
/// residual and the second difference shrink at order 2, the third difference
/// at order 3.
fn check_stencil_orders() -> Result<String, String> {
    let r = |t: f64| t.sin();
    let dr = |t: f64| t.cos();
    let t0 = 1.0;
    let mut rows: Vec<(f64, [f64; 3])> = Vec::new();
    for k in 3..=10 {
        let tau = 0.5f64.powi(k);
        let w: Vec<Vec<f64>> = (0..4).map(|j| vec![r(t0 - j as f64 * tau)]).collect();
        let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
        let d = bdf2_derivative([&w[0], &w[1], &w[2]], tau);
        let e2 = backward_difference(2, &refs);
        let e3 = backward_difference(3, &refs);
        rows.push((tau, [(d[0] - dr(t0)).abs(), e2[0].abs(), e3[0].abs()]));
    }
    let slope = |idx: usize| -> f64 {
        let pts: Vec<(f64, f64)> = rows.iter().map(|(tau, e)| (tau.ln(), e[idx].ln())).collect();
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let slopes = [slope(0), slope(1), slope(2)];
    let targets = [2.0, 2.0, 3.0];
    let ok = slopes
        .iter()
        .zip(targets)
        .all(|(s, t)| (s - t).abs() <= 0.1);
    let detail = format!(
        "derivative residual {:.3}, second difference {:.3}, third difference {:.3}",
        slopes[0], slopes[1], slopes[2]
    );
    if ok {
        Ok(detail)
    } else {
        Err(format!("{detail}; want 2, 2, 3 within 0.1"))
    }
}

/// One step of every integrator against an independently assembled dense
/// solve of the same step equations, on a tiny mesh.
fn check_dense_oracle() -> Result<String, String> {
    let mesh = unit_disk_mesh(0.9).map_err(|e| e.to_string())?;
    let stats = mesh_stats(&mesh);
    if stats.n_vertices > 30 {
        return Err(format!(
            "reference mesh has {} vertices, want at most 30",
            stats.n_vertices
        ));
    }
    let problem = linear_problem();
    let ops = assemble(&mesh, &problem);
    let rhs = FemRhs { mesh: &mesh, ops: &ops, problem: &problem };
    let exact = problem.exact.expect("shipped problem has an exact solution");
    let tau = 0.05;
    let t_new = 0.3;
    let history: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
        .map(|k| interpolate_exact(&mesh, exact, t_new - (k as f64 + 1.0) * tau))
        .collect();
    let u_refs: Vec<&[f64]> = history.iter().map(|(u, _)| u.as_slice()).collect();
    let p_refs: Vec<&[f64]> = history.iter().map(|(_, p)| p.as_slice()).collect();

    let mut worst: f64 = 0.0;
    for kind in SchemeKind::ALL {
        let config = SchemeConfig::new(kind, tau, 1.0).map_err(|e| e.to_string())?;
        let step: StepResult = if kind == SchemeKind::Monolithic {
            MonolithicIntegrator::new(&ops, &rhs, &config)
                .and_then(|integrator| integrator.step(t_new, &u_refs, &p_refs, None))
                .map_err(|e| format!("{}: {e}", kind.name()))?
        } else {
            SplitIntegrator::new(&ops, &rhs, &config)
                .and_then(|integrator| integrator.step(t_new, &u_refs, &p_refs))
                .map_err(|e| format!("{}: {e}", kind.name()))?
        };
        let dense = dense_step(&ops, &rhs, kind, tau, t_new, &u_refs, &p_refs)
            .map_err(|e| format!("{} dense reference: {e}", kind.name()))?;
        worst = worst.max(rel_gap_vec(&step.u, &dense.u));
        worst = worst.max(rel_gap_vec(&step.p, &dense.p));
        worst = worst.max(rel_gap_vec(&step.lambda, &dense.lambda));
    }
    if worst <= 1e-9 {
        Ok(format!(
            "6 schemes on a {}-vertex mesh, worst relative gap {worst:.2e}",
            stats.n_vertices
        ))
    } else {
        Err(format!("worst relative gap {worst:.2e} exceeds 1e-9"))
    }
}

/// The sampled trace-coupling constants stay within a factor 2 across four
/// mesh refinements.
fn check_trace_constants() -> Result<String, String> {
    let rows = trace_coupling_constants(&WIDTH_LADDER[..4]).map_err(|e| e.to_string())?;
    let spread = |select: fn(&bulksurf::analysis::TraceConstantRow) -> f64| -> (f64, f64, f64) {
        let values: Vec<f64> = rows.iter().map(select).collect();
        let max = values.iter().cloned().fold(0.0f64, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        (min, max, max / min)
    };
    let (mass_min, mass_max, mass_ratio) = spread(|r| r.c_mass);
    let (stiff_min, stiff_max, stiff_ratio) = spread(|r| r.c_stiffness);
    let detail = format!(
        "mass constant in [{mass_min:.3}, {mass_max:.3}] (spread {mass_ratio:.2}), \
         stiffness constant in [{stiff_min:.3}, {stiff_max:.3}] (spread {stiff_ratio:.2}) \
         over 4 widths"
    );
    if mass_min > 0.0 && stiff_min > 0.0 && mass_ratio < 2.0 && stiff_ratio < 2.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; want positive with spread below 2"))
    }
}

/// Finite-difference PDE residuals of both shipped manufactured problems at
/// 100 random sample points each.
fn check_problem_residuals() -> Result<String, String> {
    let mut details = Vec::new();
    for problem in shipped_problems() {
        let report = validate_problem(&problem, 100, 2026).map_err(|e| e.to_string())?;
        details.push(format!(
            "{}: bulk {:.1e}, surface {:.1e}, source-derivative {:.1e}",
            report.problem,
            report.bulk_residual_max,
            report.surf_residual_max,
            report.jacobian_mismatch_max
        ));
        if !report.pass {
            return Err(format!(
                "{} fails validation ({})",
                report.problem,
                details.last().expect("just pushed")
            ));
        }
    }
    Ok(details.join("; "))
}
