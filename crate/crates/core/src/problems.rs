//! Model problems on the unit disk.
//!
//! A [`Problem`] couples a bulk diffusion equation with a dynamic boundary
//! condition on the unit circle:
//!
//! ```text
//!   u_t - alpha * laplace(u)                     = f_bulk(t, x, y, u)   in the disk,
//!   p_t - kappa * laplace_surface(p) + alpha * du/dnu = f_surf(t, x, y, p)   on the circle,
//!   p = trace of u on the circle.
//! ```
//!
//! The two shipped problems are manufactured: their sources are chosen so a
//! known closed-form solution satisfies the system exactly, which makes
//! convergence orders measurable.  [`validate_problem`] double-checks that
//! construction with finite differences at random sample points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Errors from problem validation.
#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("problem `{0}` has no exact solution to validate against")]
    MissingExact(&'static str),
}

/// A semi-linear parabolic problem with a dynamic boundary condition.
///
/// Sources receive `(t, x, y, state)` where `state` is the local solution
/// value; state-independent sources simply ignore it.  The `*_dstate` fields
/// hold the derivative of the source with respect to the state, used by the
/// Newton solvers.
#[derive(Clone, Copy)]
pub struct Problem {
    pub name: &'static str,
    /// Bulk diffusion coefficient.
    pub alpha: f64,
    /// Surface diffusion coefficient.
    pub kappa: f64,
    pub bulk_source: fn(f64, f64, f64, f64) -> f64,
    pub bulk_source_dstate: fn(f64, f64, f64, f64) -> f64,
    /// Whether `bulk_source` actually depends on the state argument.
    pub bulk_state_dependent: bool,
    pub surf_source: fn(f64, f64, f64, f64) -> f64,
    pub surf_source_dstate: fn(f64, f64, f64, f64) -> f64,
    /// Whether `surf_source` actually depends on the state argument.
    pub surf_state_dependent: bool,
    /// Closed-form solution `exact(t, x, y)`, defined on a neighborhood of
    /// the closed disk so normal derivatives can be sampled across the
    /// boundary.
    pub exact: Option<fn(f64, f64, f64) -> f64>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("kappa", &self.kappa)
            .field("bulk_state_dependent", &self.bulk_state_dependent)
            .field("surf_state_dependent", &self.surf_state_dependent)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

/// Linear problem with exact solution `u = exp(-t) * x * y`.
///
/// On the circle `laplace_surface(u) = -4 u` and `du/dnu = 2 u`, so the
/// surface source collapses to `5 u`.
pub fn linear_problem() -> Problem {
    fn exact(t: f64, x: f64, y: f64) -> f64 {
        (-t).exp() * x * y
    }
    fn bulk(t: f64, x: f64, y: f64, _u: f64) -> f64 {
        // u_t - laplace(u) with laplace(x*y) = 0.
        -(-t).exp() * x * y
    }
    fn surf(t: f64, x: f64, y: f64, _p: f64) -> f64 {
        5.0 * (-t).exp() * x * y
    }
    fn zero(_t: f64, _x: f64, _y: f64, _s: f64) -> f64 {
        0.0
    }
    Problem {
        name: "linear",
        alpha: 1.0,
        kappa: 1.0,
        bulk_source: bulk,
        bulk_source_dstate: zero,
        bulk_state_dependent: false,
        surf_source: surf,
        surf_source_dstate: zero,
        surf_state_dependent: false,
        exact: Some(exact),
    }
}

/// Semi-linear problem with exact solution `u = r^4 * cos(pi t / 2)` and a
/// cubic surface nonlinearity `-p^3 + p`.
pub fn semilinear_problem() -> Problem {
    use std::f64::consts::FRAC_PI_2;
    fn exact(t: f64, x: f64, y: f64) -> f64 {
        let r2 = x * x + y * y;
        r2 * r2 * (FRAC_PI_2 * t).cos()
    }
    fn bulk(t: f64, x: f64, y: f64, _u: f64) -> f64 {
        // u_t - laplace(u) with laplace(r^4) = 16 r^2.
        let r2 = x * x + y * y;
        -FRAC_PI_2 * (FRAC_PI_2 * t).sin() * r2 * r2 - 16.0 * r2 * (FRAC_PI_2 * t).cos()
    }
    fn surf(t: f64, _x: f64, _y: f64, p: f64) -> f64 {
        // On the circle the exact trace is c(t) = cos(pi t / 2), constant in
        // space, so laplace_surface vanishes and du/dnu = 4 c(t).  The source
        // balances p_t + du/dnu and carries the nonlinearity  -p^3 + p.
        let c = (FRAC_PI_2 * t).cos();
        let g = -FRAC_PI_2 * (FRAC_PI_2 * t).sin() + 4.0 * c + c * c * c - c;
        g - p * p * p + p
    }
    fn surf_dp(_t: f64, _x: f64, _y: f64, p: f64) -> f64 {
        -3.0 * p * p + 1.0
    }
    fn zero(_t: f64, _x: f64, _y: f64, _s: f64) -> f64 {
        0.0
    }
    Problem {
        name: "semilinear",
        alpha: 1.0,
        kappa: 1.0,
        bulk_source: bulk,
        bulk_source_dstate: zero,
        bulk_state_dependent: false,
        surf_source: surf,
        surf_source_dstate: surf_dp,
        surf_state_dependent: true,
        exact: Some(exact),
    }
}

/// Both shipped problems, in a fixed order.
pub fn shipped_problems() -> [Problem; 2] {
    [linear_problem(), semilinear_problem()]
}

/// Looks a problem up by its command-line name.
pub fn problem_by_name(name: &str) -> Option<Problem> {
    match name {
        "linear" => Some(linear_problem()),
        "semilinear" => Some(semilinear_problem()),
        _ => None,
    }
}

/// Outcome of the finite-difference validation of a manufactured problem.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub problem: &'static str,
    pub n_samples: usize,
    /// Largest bulk PDE residual over all samples.
    pub bulk_residual_max: f64,
    /// Largest surface PDE residual over all samples.
    pub surf_residual_max: f64,
    /// Largest mismatch between analytic and finite-difference source
    /// derivatives with respect to the state.
    pub jacobian_mismatch_max: f64,
    /// Bound on |d f_surf / dp| on a ball of radius 2 around the exact
    /// trace values (the nonlinearity's local Lipschitz constant).
    pub lipschitz_bound: f64,
    /// Sample `(t, x, y)` with the largest bulk residual.
    pub worst_bulk_point: (f64, f64, f64),
    /// Sample `(t, x, y)` with the largest surface residual.
    pub worst_surf_point: (f64, f64, f64),
    pub pass: bool,
}

const RESIDUAL_TOL: f64 = 1e-5;
const JACOBIAN_TOL: f64 = 1e-6;

/// Checks by central finite differences (step `1e-5`) that the manufactured
/// sources satisfy the PDE system at `n_samples` random space-time points,
/// and that the analytic source derivatives match difference quotients.
pub fn validate_problem(
    problem: &Problem,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport, ProblemError> {
    let exact = problem.exact.ok_or(ProblemError::MissingExact(problem.name))?;
    let d = 1e-5;
    // Second differences divide by d^2, which amplifies rounding of O(1)
    // function values to ~4e-16/d^2; a wider step keeps that amplification
    // (~4e-7) and the truncation error (~1e-8 * |u''''|) both far below the
    // residual tolerance.
    let d2 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut report = ValidationReport {
        problem: problem.name,
        n_samples,
        bulk_residual_max: 0.0,
        surf_residual_max: 0.0,
        jacobian_mismatch_max: 0.0,
        lipschitz_bound: 0.0,
        worst_bulk_point: (0.0, 0.0, 0.0),
        worst_surf_point: (0.0, 0.0, 0.0),
        pass: false,
    };

    for _ in 0..n_samples {
        let t = rng.random_range(0.0..1.0);

        // Bulk sample: stay a finite-difference stencil away from the rim.
        let r = 0.95 * rng.random_range(0.0f64..1.0).sqrt();
        let theta = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let (x, y) = (r * theta.cos(), r * theta.sin());
        let u = exact(t, x, y);
        let du_dt = (exact(t + d, x, y) - exact(t - d, x, y)) / (2.0 * d);
        let laplace = (exact(t, x + d2, y) - 2.0 * u + exact(t, x - d2, y)
            + exact(t, x, y + d2) - 2.0 * u + exact(t, x, y - d2))
            / (d2 * d2);
        let bulk_residual =
            (du_dt - problem.alpha * laplace - (problem.bulk_source)(t, x, y, u)).abs();
        if bulk_residual > report.bulk_residual_max {
            report.bulk_residual_max = bulk_residual;
            report.worst_bulk_point = (t, x, y);
        }

        // Surface sample on the unit circle; arc length equals angle, so the
        // surface Laplacian is the second angular derivative.
        let phi = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let (bx, by) = (phi.cos(), phi.sin());
        let on_circle = |ang: f64| exact(t, ang.cos(), ang.sin());
        let p = on_circle(phi);
        let dp_dt = (exact(t + d, bx, by) - exact(t - d, bx, by)) / (2.0 * d);
        let surf_laplace = (on_circle(phi + d2) - 2.0 * p + on_circle(phi - d2)) / (d2 * d2);
        let radial = |rr: f64| exact(t, rr * bx, rr * by);
        let normal_derivative = (radial(1.0 + d) - radial(1.0 - d)) / (2.0 * d);
        let surf_residual = (dp_dt - problem.kappa * surf_laplace
            + problem.alpha * normal_derivative
            - (problem.surf_source)(t, bx, by, p))
            .abs();
        if surf_residual > report.surf_residual_max {
            report.surf_residual_max = surf_residual;
            report.worst_surf_point = (t, bx, by);
        }

        // Analytic state derivatives against central difference quotients.
        let bulk_jac_fd =
            ((problem.bulk_source)(t, x, y, u + d) - (problem.bulk_source)(t, x, y, u - d))
                / (2.0 * d);
        let surf_jac_fd =
            ((problem.surf_source)(t, bx, by, p + d) - (problem.surf_source)(t, bx, by, p - d))
                / (2.0 * d);
        report.jacobian_mismatch_max = report
            .jacobian_mismatch_max
            .max((bulk_jac_fd - (problem.bulk_source_dstate)(t, x, y, u)).abs())
            .max((surf_jac_fd - (problem.surf_source_dstate)(t, bx, by, p)).abs());

        // Lipschitz bound of the surface nonlinearity on a radius-2 ball
        // around the exact trace value.
        for k in 0..=40 {
            let q = p - 2.0 + 4.0 * k as f64 / 40.0;
            report.lipschitz_bound = report
                .lipschitz_bound
                .max((problem.surf_source_dstate)(t, bx, by, q).abs());
        }
    }

    report.pass = report.bulk_residual_max <= RESIDUAL_TOL
        && report.surf_residual_max <= RESIDUAL_TOL
        && report.jacobian_mismatch_max <= JACOBIAN_TOL;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_problem_satisfies_its_pde() {
        let report = validate_problem(&linear_problem(), 100, 42).unwrap();
        assert!(
            report.pass,
            "bulk {} surf {} jac {}",
            report.bulk_residual_max, report.surf_residual_max, report.jacobian_mismatch_max
        );
        // The linear problem has state-independent sources.
        assert_relative_eq!(report.lipschitz_bound, 0.0);
    }

    #[test]
    fn semilinear_problem_satisfies_its_pde() {
        let report = validate_problem(&semilinear_problem(), 100, 42).unwrap();
        assert!(
            report.pass,
            "bulk {} surf {} jac {}",
            report.bulk_residual_max, report.surf_residual_max, report.jacobian_mismatch_max
        );
        // Trace values live in [-1, 1]; on the radius-2 ball the cubic's
        // derivative -3q^2 + 1 is largest in magnitude at |q| = 3.
        assert!(report.lipschitz_bound > 1.0);
        assert!(report.lipschitz_bound <= 26.0 + 1e-9);
    }

    #[test]
    fn exact_solutions_match_closed_forms_at_spot_points() {
        let lin = linear_problem();
        let e = lin.exact.unwrap();
        assert_relative_eq!(e(0.0, 0.5, 0.5), 0.25, epsilon = 1e-15);
        assert_relative_eq!(e(1.0, 1.0, 1.0), (-1.0f64).exp(), epsilon = 1e-15);

        let semi = semilinear_problem();
        let e = semi.exact.unwrap();
        assert_relative_eq!(e(0.0, 1.0, 0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(e(1.0, 0.5, 0.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(e(0.0, 0.5, 0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn semilinear_surface_source_has_cubic_nonlinearity() {
        let semi = semilinear_problem();
        let (t, x, y) = (0.3, 1.0, 0.0);
        let base = (semi.surf_source)(t, x, y, 0.0);
        let at = |p: f64| (semi.surf_source)(t, x, y, p) - base;
        assert_relative_eq!(at(2.0), -8.0 + 2.0, epsilon = 1e-12);
        assert_relative_eq!(at(-1.0), 1.0 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn validation_report_is_deterministic() {
        let a = validate_problem(&semilinear_problem(), 50, 7).unwrap();
        let b = validate_problem(&semilinear_problem(), 50, 7).unwrap();
        assert_eq!(a.bulk_residual_max, b.bulk_residual_max);
        assert_eq!(a.surf_residual_max, b.surf_residual_max);
        assert_eq!(a.worst_bulk_point, b.worst_bulk_point);
    }

    #[test]
    fn problem_lookup_by_name() {
        assert_eq!(problem_by_name("linear").unwrap().name, "linear");
        assert_eq!(problem_by_name("semilinear").unwrap().name, "semilinear");
        assert!(problem_by_name("cubic").is_none());
    }

    #[test]
    fn problem_without_exact_solution_cannot_be_validated() {
        let mut p = linear_problem();
        p.exact = None;
        assert!(matches!(
            validate_problem(&p, 10, 0),
            Err(ProblemError::MissingExact(_))
        ));
    }
}
