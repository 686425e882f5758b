//! Time integrators for the coupled bulk–surface system.
//!
//! All schemes advance the block-discretized system
//!
//! ```text
//!   Mu du/dt + Ku u - Buᵀ λ = fΩ(t, u)
//!   Mp dp/dt + Kp p + Bpᵀ λ = fΓ(t, p)
//!   Bu u = Bp p
//! ```
//!
//! with a BDF time discretization. The splitting schemes first assign the
//! boundary degrees of freedom of `u` (and a discrete boundary velocity) from
//! extrapolated surface history, which decouples the bulk solve from the
//! surface solve; the monolithic scheme solves the full saddle-point system.
//!
//! Histories are always ordered **newest first**: `hist[k]` is the value at
//! `t - k·τ` when preparing a step that produces the value at `t + τ` (split
//! variants read slightly different offsets per their stencil definitions; see
//! [`delay_extrapolation`]).

pub mod reference;
pub mod stencils;

use std::collections::VecDeque;
use std::time::Instant;

use crate::assembly::{assemble, bulk_nodal_values, interpolate_exact, surf_nodal_values, BlockOperators};
use crate::linalg::{axpy, factorize, lincomb, norm2, Factorization, LinalgError, SparseMatrix};
use crate::mesh::Mesh;
use crate::problems::Problem;

/// Absolute Euclidean-norm tolerance for Newton residuals.
pub const NEWTON_TOL: f64 = 1e-12;
/// Maximum Newton iterations per nonlinear solve.
pub const NEWTON_MAX_ITER: usize = 25;

/// The available time-stepping schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Bulk–surface splitting, BDF-2, first-order boundary-velocity stencil.
    SplitDelayA,
    /// Bulk–surface splitting, BDF-2, second-order boundary-velocity stencil.
    SplitDelayB,
    /// Bulk–surface splitting, BDF-2, second-order five-point boundary-velocity stencil.
    SplitDelayC,
    /// Splitting with the boundary trace recovered from the surface solution
    /// after each step; produces the same interior/surface values as
    /// [`SchemeKind::SplitDelayB`].
    Auxiliary,
    /// Fully coupled BDF-2 solve of the saddle-point system.
    Monolithic,
    /// Bulk–surface splitting, BDF-3, third-order extrapolations.
    ThirdOrder,
}

impl SchemeKind {
    /// All schemes, in documentation order.
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::SplitDelayA,
        SchemeKind::SplitDelayB,
        SchemeKind::SplitDelayC,
        SchemeKind::Auxiliary,
        SchemeKind::Monolithic,
        SchemeKind::ThirdOrder,
    ];

    /// Command-line name of the scheme.
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::SplitDelayA => "split-a",
            SchemeKind::SplitDelayB => "split-b",
            SchemeKind::SplitDelayC => "split-c",
            SchemeKind::Auxiliary => "aux",
            SchemeKind::Monolithic => "mono",
            SchemeKind::ThirdOrder => "third",
        }
    }

    /// Parse a command-line name.
    pub fn from_name(name: &str) -> Option<SchemeKind> {
        SchemeKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Number of known values (t ≤ t⁰) a run starts from. Entry `k` of the
    /// initial history holds the state at `t⁰ - k·τ`.
    pub fn history_depth(self) -> usize {
        match self {
            SchemeKind::SplitDelayA | SchemeKind::SplitDelayB | SchemeKind::Auxiliary => 3,
            SchemeKind::SplitDelayC => 5,
            SchemeKind::Monolithic => 2,
            SchemeKind::ThirdOrder => 4,
        }
    }

    /// Number of past `u` values entering the BDF stencil (excluding the new value).
    fn u_depth(self) -> usize {
        match self {
            SchemeKind::ThirdOrder => 3,
            _ => 2,
        }
    }

    /// Number of past `p` values read by the delay extrapolations.
    fn p_depth(self) -> usize {
        match self {
            SchemeKind::SplitDelayA => 2,
            SchemeKind::SplitDelayB | SchemeKind::Auxiliary => 3,
            SchemeKind::SplitDelayC => 4,
            SchemeKind::Monolithic => 2,
            SchemeKind::ThirdOrder => 4,
        }
    }

    /// Leading BDF coefficient `c` in `c/τ · M x_new + …`.
    fn lead_coefficient(self) -> f64 {
        match self {
            SchemeKind::ThirdOrder => 11.0 / 6.0,
            _ => 3.0 / 2.0,
        }
    }

    /// Coefficients of the past values in the BDF history combination
    /// `(1/τ)·Σ c_k x_k` that moves to the right-hand side.
    fn history_coefficients(self) -> &'static [f64] {
        match self {
            // BDF-2: (3x⁰ - 4x¹ + x²)/(2τ); past part (4x¹ - x²)/(2τ).
            SchemeKind::ThirdOrder => &[3.0, -1.5, 1.0 / 3.0],
            // BDF-3: (11x⁰ - 18x¹ + 9x² - 2x³)/(6τ); past part (18x¹ - 9x² + 2x³)/(6τ).
            _ => &[2.0, -0.5],
        }
    }
}

/// Errors produced while configuring or running a scheme.
#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("invalid step size: {n} steps of tau = {tau} do not reach final time {final_time}")]
    InvalidStepSize { tau: f64, final_time: f64, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("history too short: stencil needs {needed} past values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("Newton did not reach tolerance {tol:e} within {max_iter} iterations at t = {t} (residual {residual:e})")]
    NewtonDiverged { t: f64, tol: f64, max_iter: usize, residual: f64 },
    #[error("problem `{0}` has no exact solution to initialize the history from")]
    MissingExact(&'static str),
}

/// Validated time-stepping configuration.
#[derive(Debug, Clone, Copy)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub tau: f64,
    pub final_time: f64,
    n_steps: usize,
}

impl SchemeConfig {
    /// Validate that `tau` divides `final_time` (up to a relative tolerance of
    /// 1e-9) and both are positive and finite.
    pub fn new(kind: SchemeKind, tau: f64, final_time: f64) -> Result<SchemeConfig, SchemeError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SchemeError::InvalidConfig(format!("tau must be positive and finite, got {tau}")));
        }
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(SchemeError::InvalidConfig(format!(
                "final time must be positive and finite, got {final_time}"
            )));
        }
        let n = (final_time / tau).round();
        let n_steps = if n >= 1.0 { n as usize } else { 1 };
        if (n_steps as f64 * tau - final_time).abs() > 1e-9 * final_time.max(1.0) {
            return Err(SchemeError::InvalidStepSize { tau, final_time, n: n_steps });
        }
        Ok(SchemeConfig { kind, tau, final_time, n_steps })
    }

    /// Number of time steps performed after the initial history.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
}

/// Right-hand-side provider for the block system. `state` carries the current
/// solution iterate so state-dependent sources can be evaluated; providers for
/// linear problems ignore it and report `None` Jacobians.
pub trait SystemRhs {
    /// Load vector for the bulk rows: `[fΩ; f₂]` of length `n_u`, evaluated at
    /// time `t` with bulk state `u` (full vector, interior then boundary).
    fn bulk_load(&self, t: f64, u: &[f64]) -> Vec<f64>;
    /// Load vector for the surface rows, length `n_p`.
    fn surf_load(&self, t: f64, p: &[f64]) -> Vec<f64>;
    /// Nodal derivative of the bulk source with respect to the state, or
    /// `None` when the bulk source is state-independent.
    fn bulk_source_jacobian(&self, t: f64, u: &[f64]) -> Option<Vec<f64>>;
    /// Nodal derivative of the surface source, or `None` when state-independent.
    fn surf_source_jacobian(&self, t: f64, p: &[f64]) -> Option<Vec<f64>>;
}

/// The standard provider: mass-matrix-weighted nodal source values of a
/// [`Problem`], i.e. `Mu·fΩ(t, x, u)` and `Mp·fΓ(t, x, p)`.
pub struct FemRhs<'a> {
    pub mesh: &'a Mesh,
    pub ops: &'a BlockOperators,
    pub problem: &'a Problem,
}

impl SystemRhs for FemRhs<'_> {
    fn bulk_load(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let nodal = bulk_nodal_values(self.mesh, self.problem.bulk_source, t, u);
        self.ops.mu.matvec(&nodal).expect("bulk mass dimensions")
    }

    fn surf_load(&self, t: f64, p: &[f64]) -> Vec<f64> {
        let nodal = surf_nodal_values(self.mesh, self.problem.surf_source, t, p);
        self.ops.mp.matvec(&nodal).expect("surface mass dimensions")
    }

    fn bulk_source_jacobian(&self, t: f64, u: &[f64]) -> Option<Vec<f64>> {
        if !self.problem.bulk_state_dependent {
            return None;
        }
        Some(bulk_nodal_values(self.mesh, self.problem.bulk_source_dstate, t, u))
    }

    fn surf_source_jacobian(&self, t: f64, p: &[f64]) -> Option<Vec<f64>> {
        if !self.problem.surf_state_dependent {
            return None;
        }
        Some(surf_nodal_values(self.mesh, self.problem.surf_source_dstate, t, p))
    }
}

/// State-independent loads given directly as vector-valued functions of time.
/// Used by tests and the dense reference stepper to drive the block system
/// with manufactured right-hand sides.
pub struct DirectRhs<FB, FS>
where
    FB: Fn(f64) -> Vec<f64>,
    FS: Fn(f64) -> Vec<f64>,
{
    pub bulk: FB,
    pub surf: FS,
}

impl<FB, FS> SystemRhs for DirectRhs<FB, FS>
where
    FB: Fn(f64) -> Vec<f64>,
    FS: Fn(f64) -> Vec<f64>,
{
    fn bulk_load(&self, t: f64, _u: &[f64]) -> Vec<f64> {
        (self.bulk)(t)
    }
    fn surf_load(&self, t: f64, _p: &[f64]) -> Vec<f64> {
        (self.surf)(t)
    }
    fn bulk_source_jacobian(&self, _t: f64, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn surf_source_jacobian(&self, _t: f64, _p: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Weighted right-hand sides for the delayed boundary data of a splitting step.
///
/// Given surface history `p_hist` (newest first, `p_hist[k]` at `t - k·τ` where
/// `t + τ` is the time being stepped to), returns `(Bp·q, Bp·v)` where `q`
/// extrapolates `p(t + τ)` and `v` extrapolates `ṗ(t + τ)`:
///
/// - trace value `q`: `2p⁰ - p¹` for the BDF-2 variants,
///   `3p⁰ - 3p¹ + p²` for the BDF-3 variant;
/// - trace velocity `v`:
///   - variant A: `(p⁰ - p¹)/τ`
///   - variant B / auxiliary: `(5p⁰ - 8p¹ + 3p²)/(2τ)`
///   - variant C: `(6p⁰ - 11p¹ + 6p² - p³)/(2τ)`
///   - third order: `(26p⁰ - 57p¹ + 42p² - 11p³)/(6τ)`
pub fn delay_extrapolation(
    kind: SchemeKind,
    p_hist: &[&[f64]],
    tau: f64,
    bp: &SparseMatrix,
) -> Result<(Vec<f64>, Vec<f64>), SchemeError> {
    let needed = kind.p_depth();
    if p_hist.len() < needed {
        return Err(SchemeError::InsufficientHistory { needed, got: p_hist.len() });
    }
    let value_coeffs: &[f64] = match kind {
        SchemeKind::ThirdOrder => &[3.0, -3.0, 1.0],
        _ => &[2.0, -1.0],
    };
    let velocity_coeffs: Vec<f64> = match kind {
        SchemeKind::SplitDelayA => vec![1.0 / tau, -1.0 / tau],
        SchemeKind::SplitDelayB | SchemeKind::Auxiliary => {
            vec![5.0 / (2.0 * tau), -8.0 / (2.0 * tau), 3.0 / (2.0 * tau)]
        }
        SchemeKind::SplitDelayC => {
            vec![6.0 / (2.0 * tau), -11.0 / (2.0 * tau), 6.0 / (2.0 * tau), -1.0 / (2.0 * tau)]
        }
        SchemeKind::ThirdOrder => {
            vec![26.0 / (6.0 * tau), -57.0 / (6.0 * tau), 42.0 / (6.0 * tau), -11.0 / (6.0 * tau)]
        }
        SchemeKind::Monolithic => {
            return Err(SchemeError::InvalidConfig(
                "the monolithic scheme does not extrapolate boundary data".into(),
            ))
        }
    };
    let value = lincomb(value_coeffs, &p_hist[..value_coeffs.len()]);
    let velocity = lincomb(&velocity_coeffs, &p_hist[..velocity_coeffs.len()]);
    Ok((bp.matvec(&value)?, bp.matvec(&velocity)?))
}

/// Result of a single time step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Full bulk vector at the new time (interior then boundary values).
    pub u: Vec<f64>,
    /// Surface vector at the new time.
    pub p: Vec<f64>,
    /// Lagrange multiplier at the new time.
    pub lambda: Vec<f64>,
    /// Newton iterations spent in this step (0 for fully linear steps).
    pub newton_iters: usize,
}

/// Rolling solver state: newest-first ring buffers of past `u` and `p` values,
/// the last multiplier, and the current step index/time.
pub struct SchemeState {
    kind: SchemeKind,
    tau: f64,
    u_hist: VecDeque<Vec<f64>>,
    p_hist: VecDeque<Vec<f64>>,
    last_lambda: Option<Vec<f64>>,
    /// Steps completed so far (history initialization does not count).
    pub step_index: usize,
    /// Time of the newest state in the buffers.
    pub time: f64,
}

impl SchemeState {
    /// Build the state from initial data, oldest first: `initial[k]` holds
    /// `(u, p)` at `t⁰ - (depth - 1 - k)·τ`. Requires exactly
    /// `kind.history_depth()` entries.
    pub fn new(
        kind: SchemeKind,
        tau: f64,
        t0: f64,
        initial: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<SchemeState, SchemeError> {
        let depth = kind.history_depth();
        if initial.len() != depth {
            return Err(SchemeError::InsufficientHistory { needed: depth, got: initial.len() });
        }
        let mut u_hist = VecDeque::with_capacity(depth + 1);
        let mut p_hist = VecDeque::with_capacity(depth + 1);
        for (u, p) in initial {
            u_hist.push_front(u);
            p_hist.push_front(p);
        }
        Ok(SchemeState { kind, tau, u_hist, p_hist, last_lambda: None, step_index: 0, time: t0 })
    }

    /// Newest-first references to the stored bulk vectors.
    pub fn u_history(&self) -> Vec<&[f64]> {
        self.u_hist.iter().map(|v| v.as_slice()).collect()
    }

    /// Newest-first references to the stored surface vectors.
    pub fn p_history(&self) -> Vec<&[f64]> {
        self.p_hist.iter().map(|v| v.as_slice()).collect()
    }

    /// Most recent multiplier, if a step has been taken.
    pub fn last_lambda(&self) -> Option<&[f64]> {
        self.last_lambda.as_deref()
    }

    /// Record a completed step and drop history entries beyond the scheme's depth.
    pub fn push(&mut self, result: &StepResult) {
        self.u_hist.push_front(result.u.clone());
        self.p_hist.push_front(result.p.clone());
        let depth = self.kind.history_depth();
        while self.u_hist.len() > depth {
            self.u_hist.pop_back();
        }
        while self.p_hist.len() > depth {
            self.p_hist.pop_back();
        }
        self.last_lambda = Some(result.lambda.clone());
        self.step_index += 1;
        self.time += self.tau;
    }
}

/// Complete record of a time-stepping run.
///
/// `times[k]` pairs with `u[k]` and `p[k]`; the first `history_len` entries
/// are the initialization (t ≤ t⁰) and the rest are computed steps.
/// `lambda[k]` holds the multiplier of computed step `k`, i.e. it pairs with
/// `times[history_len + k]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Scheme that produced this run.
    pub kind: SchemeKind,
    /// Step size of the run.
    pub tau: f64,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// Number of leading entries that are initial data rather than steps.
    pub history_len: usize,
    /// Newton iterations per computed step.
    pub newton_iters: Vec<usize>,
    /// Time spent stepping (factorizations included, assembly and history
    /// interpolation excluded), in seconds.
    pub wall_time_seconds: f64,
}

impl Trajectory {
    /// Total Newton iterations over the whole run.
    pub fn newton_iters_total(&self) -> usize {
        self.newton_iters.iter().sum()
    }

    /// Largest per-step Newton count (0 for linear runs).
    pub fn newton_iters_max(&self) -> usize {
        self.newton_iters.iter().copied().max().unwrap_or(0)
    }
}

/// Shared Newton loop for implicit solves of the form
/// `A·x = c + load(x)` with Jacobian `A - M·diag(jac(x))`.
///
/// `linear_solver` must be the factorization of `A`; it doubles as the solver
/// for the first iterate when the problem is linear. Returns the solution and
/// the number of Newton updates performed.
#[allow(clippy::too_many_arguments)]
fn implicit_solve(
    a: &SparseMatrix,
    a_factor: &Factorization,
    mass: &SparseMatrix,
    load: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    jacobian: &mut dyn FnMut(&[f64]) -> Option<Vec<f64>>,
    c: &[f64],
    guess: &[f64],
    t: f64,
) -> Result<(Vec<f64>, usize), SchemeError> {
    // Probe the Jacobian once: state-independent sources take the direct path.
    let Some(mut jac_nodal) = jacobian(guess) else {
        let rhs = axpy(c, 1.0, &load(guess));
        return Ok((a_factor.solve(&rhs)?, 0));
    };

    let mut x = guess.to_vec();
    for iter in 0..=NEWTON_MAX_ITER {
        // Residual R(x) = A·x - load(x) - c.
        let mut r = a.matvec(&x)?;
        r = axpy(&r, -1.0, &load(&x));
        r = axpy(&r, -1.0, c);
        let residual = norm2(&r);
        if residual <= NEWTON_TOL {
            return Ok((x, iter));
        }
        if iter == NEWTON_MAX_ITER {
            return Err(SchemeError::NewtonDiverged {
                t,
                tol: NEWTON_TOL,
                max_iter: NEWTON_MAX_ITER,
                residual,
            });
        }
        if iter > 0 {
            jac_nodal = jacobian(&x).expect("Jacobian availability cannot change mid-solve");
        }
        // J = A - M·diag(g'(x)); step x ← x - J⁻¹ R(x).
        let j = a.add_scaled(1.0, &mass.scale_cols(&jac_nodal), -1.0)?;
        let delta = factorize(&j)?.solve(&r)?;
        x = axpy(&x, -1.0, &delta);
    }
    unreachable!("loop returns or errors before falling through")
}

/// Splitting integrator covering the delay variants, the auxiliary-variable
/// formulation, and the third-order scheme. Factorizations of the constant
/// matrices are computed once at construction.
pub struct SplitIntegrator<'a, R: SystemRhs> {
    ops: &'a BlockOperators,
    rhs: &'a R,
    kind: SchemeKind,
    tau: f64,
    /// `c/τ·M₁₁ + K₁₁` and its factorization.
    a_bulk: SparseMatrix,
    f_bulk: Factorization,
    /// `c/τ·Mp + Kp` and its factorization.
    a_surf: SparseMatrix,
    f_surf: Factorization,
    /// Factorization of the boundary mass matrix `Mλ`.
    f_mlam: Factorization,
}

impl<'a, R: SystemRhs> SplitIntegrator<'a, R> {
    pub fn new(
        ops: &'a BlockOperators,
        rhs: &'a R,
        config: &SchemeConfig,
    ) -> Result<SplitIntegrator<'a, R>, SchemeError> {
        if config.kind == SchemeKind::Monolithic {
            return Err(SchemeError::InvalidConfig(
                "the monolithic scheme is handled by MonolithicIntegrator".into(),
            ));
        }
        let scale = config.kind.lead_coefficient() / config.tau;
        let a_bulk = ops.m11.add_scaled(scale, &ops.k11, 1.0)?;
        let f_bulk = factorize(&a_bulk)?;
        let a_surf = ops.mp.add_scaled(scale, &ops.kp, 1.0)?;
        let f_surf = factorize(&a_surf)?;
        let f_mlam = factorize(&ops.mlam)?;
        Ok(SplitIntegrator {
            ops,
            rhs,
            kind: config.kind,
            tau: config.tau,
            a_bulk,
            f_bulk,
            a_surf,
            f_surf,
            f_mlam,
        })
    }

    /// Advance one step to time `t_new`. Histories are newest first:
    /// `u_hist[k]`, `p_hist[k]` hold the values at `t_new - (k+1)·τ`.
    pub fn step(
        &self,
        t_new: f64,
        u_hist: &[&[f64]],
        p_hist: &[&[f64]],
    ) -> Result<StepResult, SchemeError> {
        let ops = self.ops;
        let n1 = ops.n1;
        let u_depth = self.kind.u_depth();
        if u_hist.len() < u_depth {
            return Err(SchemeError::InsufficientHistory { needed: u_depth, got: u_hist.len() });
        }

        // Stage (i): boundary values from the delayed extrapolations.
        let (rhs_u2, rhs_w) = delay_extrapolation(self.kind, p_hist, self.tau, &ops.bp)?;
        let u2 = self.f_mlam.solve(&rhs_u2)?;
        let w = self.f_mlam.solve(&rhs_w)?;

        // Stage (ii): interior solve.
        // c_bulk = M₁₁·(history combination)/τ - M₁₂·w - K₁₂·u₂.
        let hist_coeffs: Vec<f64> =
            self.kind.history_coefficients().iter().map(|c| c / self.tau).collect();
        let u1_hist: Vec<Vec<f64>> = u_hist[..u_depth].iter().map(|u| u[..n1].to_vec()).collect();
        let u1_refs: Vec<&[f64]> = u1_hist.iter().map(|v| v.as_slice()).collect();
        let hist_comb = lincomb(&hist_coeffs, &u1_refs);
        let mut c_bulk = ops.m11.matvec(&hist_comb)?;
        c_bulk = axpy(&c_bulk, -1.0, &ops.m12.matvec(&w)?);
        c_bulk = axpy(&c_bulk, -1.0, &ops.k12.matvec(&u2)?);

        // Full-state scratch vector with the new boundary values installed;
        // sources see [u₁; u₂] with u₁ the current iterate.
        let mut u_full = u_hist[0].to_vec();
        u_full[n1..].copy_from_slice(&u2);

        let mut load_full: Option<Vec<f64>> = None;
        let (u1, bulk_iters) = {
            let mut load = |x: &[f64]| {
                let mut state = u_full.clone();
                state[..n1].copy_from_slice(x);
                let full = self.rhs.bulk_load(t_new, &state);
                let interior = full[..n1].to_vec();
                load_full = Some(full);
                interior
            };
            let mut jac = |x: &[f64]| {
                let mut state = u_full.clone();
                state[..n1].copy_from_slice(x);
                self.rhs.bulk_source_jacobian(t_new, &state).map(|j| j[..n1].to_vec())
            };
            implicit_solve(
                &self.a_bulk,
                &self.f_bulk,
                &ops.m11,
                &mut load,
                &mut jac,
                &c_bulk,
                &u_full[..n1],
                t_new,
            )?
        };
        u_full[..n1].copy_from_slice(&u1);
        // For state-dependent sources the cached load belongs to the last
        // Newton iterate, not the accepted solution; refresh it.
        let load_full = if bulk_iters == 0 {
            load_full.expect("direct path evaluates the load once")
        } else {
            self.rhs.bulk_load(t_new, &u_full)
        };

        // Stage (iii): multiplier from the boundary rows of the bulk equation:
        // Mλ·λ = M₂₁·(D u₁) + K₂₁·u₁ + M₂₂·w + K₂₂·u₂ - f₂.
        let mut d_coeffs = vec![self.kind.lead_coefficient() / self.tau];
        d_coeffs.extend(hist_coeffs.iter().map(|c| -c));
        let mut d_refs: Vec<&[f64]> = vec![&u1];
        d_refs.extend(u1_refs.iter().copied());
        let du1 = lincomb(&d_coeffs, &d_refs);
        let mut lam_rhs = ops.m21.matvec(&du1)?;
        lam_rhs = axpy(&lam_rhs, 1.0, &ops.k21.matvec(&u1)?);
        lam_rhs = axpy(&lam_rhs, 1.0, &ops.m22.matvec(&w)?);
        lam_rhs = axpy(&lam_rhs, 1.0, &ops.k22.matvec(&u2)?);
        lam_rhs = axpy(&lam_rhs, -1.0, &load_full[n1..]);
        let lambda = self.f_mlam.solve(&lam_rhs)?;

        // Stage (iv): surface solve.
        // c_surf = Mp·(history combination)/τ - Bpᵀ·λ.
        let p_hist_comb = lincomb(&hist_coeffs, &p_hist[..u_depth]);
        let mut c_surf = ops.mp.matvec(&p_hist_comb)?;
        c_surf = axpy(&c_surf, -1.0, &ops.bp.transpose_matvec(&lambda)?);
        let (p_new, surf_iters) = {
            let mut load = |x: &[f64]| self.rhs.surf_load(t_new, x);
            let mut jac = |x: &[f64]| self.rhs.surf_source_jacobian(t_new, x);
            implicit_solve(
                &self.a_surf,
                &self.f_surf,
                &ops.mp,
                &mut load,
                &mut jac,
                &c_surf,
                p_hist[0],
                t_new,
            )?
        };

        // The auxiliary formulation stores the recovered trace Mλ·û₂ = Bp·pⁿ⁺¹
        // instead of the extrapolated one; interior, multiplier, and surface
        // values are identical to variant B.
        if self.kind == SchemeKind::Auxiliary {
            let recovered = self.f_mlam.solve(&ops.bp.matvec(&p_new)?)?;
            u_full[n1..].copy_from_slice(&recovered);
        }

        Ok(StepResult { u: u_full, p: p_new, lambda, newton_iters: bulk_iters + surf_iters })
    }
}

/// Fully coupled BDF-2 integrator for the saddle-point system in the unknowns
/// `z = [u; p; λ]`.
pub struct MonolithicIntegrator<'a, R: SystemRhs> {
    ops: &'a BlockOperators,
    rhs: &'a R,
    tau: f64,
    /// Saddle matrix `[[c/τ·Mu + Ku, 0, -Buᵀ], [0, c/τ·Mp + Kp, Bpᵀ], [Bu, -Bp, 0]]`.
    a_mono: SparseMatrix,
    f_mono: Factorization,
}

impl<'a, R: SystemRhs> MonolithicIntegrator<'a, R> {
    pub fn new(
        ops: &'a BlockOperators,
        rhs: &'a R,
        config: &SchemeConfig,
    ) -> Result<MonolithicIntegrator<'a, R>, SchemeError> {
        if config.kind != SchemeKind::Monolithic {
            return Err(SchemeError::InvalidConfig(
                "MonolithicIntegrator only runs the monolithic scheme".into(),
            ));
        }
        let (n_u, n_p, n_l) = (ops.n_u, ops.n_p, ops.n_lambda);
        let (pu, pp, pl) = (0, n_u, n_u + n_p);
        let n = n_u + n_p + n_l;
        let scale = config.kind.lead_coefficient() / config.tau;
        let mut triplets = Vec::new();
        for (r, c, v) in ops.mu.iter() {
            triplets.push((pu + r, pu + c, scale * v));
        }
        for (r, c, v) in ops.ku.iter() {
            triplets.push((pu + r, pu + c, v));
        }
        for (r, c, v) in ops.bu.iter() {
            triplets.push((pu + c, pl + r, -v)); // -Buᵀ·λ in the bulk rows
            triplets.push((pl + r, pu + c, v)); // Bu·u in the constraint rows
        }
        for (r, c, v) in ops.mp.iter() {
            triplets.push((pp + r, pp + c, scale * v));
        }
        for (r, c, v) in ops.kp.iter() {
            triplets.push((pp + r, pp + c, v));
        }
        for (r, c, v) in ops.bp.iter() {
            triplets.push((pp + c, pl + r, v)); // +Bpᵀ·λ in the surface rows
            triplets.push((pl + r, pp + c, -v)); // -Bp·p in the constraint rows
        }
        let a_mono = SparseMatrix::from_triplets(n, n, &triplets)?;
        let f_mono = factorize(&a_mono)?;
        Ok(MonolithicIntegrator { ops, rhs, tau: config.tau, a_mono, f_mono })
    }

    /// Advance one step to time `t_new`. `lambda_prev` seeds the Newton iterate
    /// for the multiplier; pass `None` on the first step (λ enters linearly, so
    /// zeros are an admissible start).
    pub fn step(
        &self,
        t_new: f64,
        u_hist: &[&[f64]],
        p_hist: &[&[f64]],
        lambda_prev: Option<&[f64]>,
    ) -> Result<StepResult, SchemeError> {
        let ops = self.ops;
        let (n_u, n_p, n_l) = (ops.n_u, ops.n_p, ops.n_lambda);
        if u_hist.len() < 2 || p_hist.len() < 2 {
            return Err(SchemeError::InsufficientHistory {
                needed: 2,
                got: u_hist.len().min(p_hist.len()),
            });
        }

        // History contributions (4x¹ - x²)/(2τ) weighted by the mass matrices.
        let hist_coeffs = [2.0 / self.tau, -0.5 / self.tau];
        let u_comb = lincomb(&hist_coeffs, &u_hist[..2]);
        let p_comb = lincomb(&hist_coeffs, &p_hist[..2]);
        let cu = ops.mu.matvec(&u_comb)?;
        let cp = ops.mp.matvec(&p_comb)?;
        let mut c = vec![0.0; n_u + n_p + n_l];
        c[..n_u].copy_from_slice(&cu);
        c[n_u..n_u + n_p].copy_from_slice(&cp);

        let nonlinear = self.rhs.bulk_source_jacobian(t_new, u_hist[0]).is_some()
            || self.rhs.surf_source_jacobian(t_new, p_hist[0]).is_some();

        let load = |u: &[f64], p: &[f64]| -> Vec<f64> {
            let fu = self.rhs.bulk_load(t_new, u);
            let fp = self.rhs.surf_load(t_new, p);
            let mut f = vec![0.0; n_u + n_p + n_l];
            f[..n_u].copy_from_slice(&fu);
            f[n_u..n_u + n_p].copy_from_slice(&fp);
            f
        };

        let (z, iters) = if !nonlinear {
            let rhs_vec = axpy(&c, 1.0, &load(u_hist[0], p_hist[0]));
            (self.f_mono.solve(&rhs_vec)?, 0)
        } else {
            // Newton on R(z) = A·z - load(z) - c with the previous step as guess.
            let mut z = vec![0.0; n_u + n_p + n_l];
            z[..n_u].copy_from_slice(u_hist[0]);
            z[n_u..n_u + n_p].copy_from_slice(p_hist[0]);
            if let Some(lam) = lambda_prev {
                z[n_u + n_p..].copy_from_slice(lam);
            }
            let mut iters = 0;
            loop {
                let mut r = self.a_mono.matvec(&z)?;
                r = axpy(&r, -1.0, &load(&z[..n_u], &z[n_u..n_u + n_p]));
                r = axpy(&r, -1.0, &c);
                let residual = norm2(&r);
                if residual <= NEWTON_TOL {
                    break;
                }
                if iters == NEWTON_MAX_ITER {
                    return Err(SchemeError::NewtonDiverged {
                        t: t_new,
                        tol: NEWTON_TOL,
                        max_iter: NEWTON_MAX_ITER,
                        residual,
                    });
                }
                // J = A - blkdiag(Mu·diag(fΩ'), Mp·diag(fΓ'), 0).
                let mut corr = Vec::new();
                if let Some(jac) = self.rhs.bulk_source_jacobian(t_new, &z[..n_u]) {
                    for (r_, c_, v) in ops.mu.scale_cols(&jac).iter() {
                        corr.push((r_, c_, v));
                    }
                }
                if let Some(jac) = self.rhs.surf_source_jacobian(t_new, &z[n_u..n_u + n_p]) {
                    for (r_, c_, v) in ops.mp.scale_cols(&jac).iter() {
                        corr.push((n_u + r_, n_u + c_, v));
                    }
                }
                let n = n_u + n_p + n_l;
                let corr_mat = SparseMatrix::from_triplets(n, n, &corr)?;
                let j = self.a_mono.add_scaled(1.0, &corr_mat, -1.0)?;
                let delta = factorize(&j)?.solve(&r)?;
                z = axpy(&z, -1.0, &delta);
                iters += 1;
            }
            (z, iters)
        };

        Ok(StepResult {
            u: z[..n_u].to_vec(),
            p: z[n_u..n_u + n_p].to_vec(),
            lambda: z[n_u + n_p..].to_vec(),
            newton_iters: iters,
        })
    }
}

/// Run a scheme on a problem over `[0, T]`, assembling the operators first.
///
/// The history is initialized from exact nodal interpolants at
/// `t = -(depth-1)·τ, …, -τ, 0`; the problem must provide an exact solution.
pub fn integrate(
    mesh: &Mesh,
    problem: &Problem,
    config: &SchemeConfig,
) -> Result<Trajectory, SchemeError> {
    let ops = assemble(mesh, problem);
    integrate_with_ops(mesh, &ops, problem, config)
}

/// [`integrate`] with pre-assembled operators, so sweeps can reuse them across
/// step sizes. Wall time covers stepping and factorizations only.
pub fn integrate_with_ops(
    mesh: &Mesh,
    ops: &BlockOperators,
    problem: &Problem,
    config: &SchemeConfig,
) -> Result<Trajectory, SchemeError> {
    let exact = problem.exact.ok_or(SchemeError::MissingExact(problem.name))?;
    let rhs = FemRhs { mesh, ops, problem };
    let depth = config.kind.history_depth();
    let n_steps = config.n_steps();

    let mut times = Vec::with_capacity(depth + n_steps);
    let mut u_traj = Vec::with_capacity(depth + n_steps);
    let mut p_traj = Vec::with_capacity(depth + n_steps);
    let mut initial = Vec::with_capacity(depth);
    for k in 0..depth {
        let t = -(config.tau) * (depth - 1 - k) as f64;
        let (u, p) = interpolate_exact(mesh, exact, t);
        times.push(t);
        u_traj.push(u.clone());
        p_traj.push(p.clone());
        initial.push((u, p));
    }
    let mut state = SchemeState::new(config.kind, config.tau, 0.0, initial)?;
    let mut lambda_traj = Vec::with_capacity(n_steps);
    let mut newton_iters = Vec::with_capacity(n_steps);

    let start = Instant::now();
    match config.kind {
        SchemeKind::Monolithic => {
            let integ = MonolithicIntegrator::new(ops, &rhs, config)?;
            for n in 1..=n_steps {
                let t_new = config.tau * n as f64;
                let result = integ.step(
                    t_new,
                    &state.u_history(),
                    &state.p_history(),
                    state.last_lambda(),
                )?;
                times.push(t_new);
                u_traj.push(result.u.clone());
                p_traj.push(result.p.clone());
                lambda_traj.push(result.lambda.clone());
                newton_iters.push(result.newton_iters);
                state.push(&result);
            }
        }
        _ => {
            let integ = SplitIntegrator::new(ops, &rhs, config)?;
            for n in 1..=n_steps {
                let t_new = config.tau * n as f64;
                let result = integ.step(t_new, &state.u_history(), &state.p_history())?;
                times.push(t_new);
                u_traj.push(result.u.clone());
                p_traj.push(result.p.clone());
                lambda_traj.push(result.lambda.clone());
                newton_iters.push(result.newton_iters);
                state.push(&result);
            }
        }
    }
    let wall_time_seconds = start.elapsed().as_secs_f64();

    Ok(Trajectory {
        kind: config.kind,
        tau: config.tau,
        times,
        u: u_traj,
        p: p_traj,
        lambda: lambda_traj,
        history_len: depth,
        newton_iters,
        wall_time_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::weighted_norm;
    use crate::mesh::unit_disk_mesh;
    use crate::problems::{linear_problem, semilinear_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(got: &[f64], want: &[f64]) -> f64 {
        let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
        norm2(&diff) / norm2(want).max(1e-300)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(SchemeKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(SchemeKind::from_name("bogus"), None);
        let names: Vec<&str> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(names, ["split-a", "split-b", "split-c", "aux", "mono", "third"]);
    }

    #[test]
    fn history_depths_cover_the_stencils() {
        let depths: Vec<usize> =
            SchemeKind::ALL.iter().map(|k| k.history_depth()).collect();
        assert_eq!(depths, [3, 3, 5, 3, 2, 4]);
        for kind in SchemeKind::ALL {
            assert!(kind.p_depth() <= kind.history_depth());
            assert!(kind.u_depth() <= kind.history_depth());
            assert_eq!(kind.history_coefficients().len(), kind.u_depth());
        }
    }

    #[test]
    fn config_validates_step_size_and_final_time() {
        // 0.3 does not divide 1.0.
        assert!(matches!(
            SchemeConfig::new(SchemeKind::SplitDelayB, 0.3, 1.0),
            Err(SchemeError::InvalidStepSize { .. })
        ));
        for bad in [0.0, -0.1, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                SchemeConfig::new(SchemeKind::SplitDelayB, bad, 1.0),
                Err(SchemeError::InvalidConfig(_))
            ));
            assert!(matches!(
                SchemeConfig::new(SchemeKind::SplitDelayB, 0.1, bad),
                Err(SchemeError::InvalidConfig(_))
            ));
        }
        let config = SchemeConfig::new(SchemeKind::SplitDelayB, 0.0125, 1.0).unwrap();
        assert_eq!(config.n_steps(), 80);
        assert_eq!(SchemeConfig::new(SchemeKind::Monolithic, 0.2, 1.0).unwrap().n_steps(), 5);
    }

    /// Hand-computed extrapolation values on scalar history
    /// p = [3, 1, 2, 4] (newest first) with τ = 1/2 and Bp = [2].
    #[test]
    fn delay_extrapolation_matches_hand_computed_values() {
        let bp = SparseMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap();
        let hist_own = [vec![3.0], vec![1.0], vec![2.0], vec![4.0]];
        let hist: Vec<&[f64]> = hist_own.iter().map(|v| v.as_slice()).collect();
        let tau = 0.5;

        let cases: [(SchemeKind, f64, f64); 5] = [
            // value 2·3-1 = 5, velocity (3-1)/τ = 4
            (SchemeKind::SplitDelayA, 5.0, 4.0),
            // velocity (5·3 - 8·1 + 3·2)/(2τ) = 13
            (SchemeKind::SplitDelayB, 5.0, 13.0),
            (SchemeKind::Auxiliary, 5.0, 13.0),
            // velocity (6·3 - 11·1 + 6·2 - 4)/(2τ) = 15
            (SchemeKind::SplitDelayC, 5.0, 15.0),
            // value 3·3 - 3·1 + 2 = 8, velocity (26·3 - 57·1 + 42·2 - 11·4)/(6τ) = 61/3
            (SchemeKind::ThirdOrder, 8.0, 61.0 / 3.0),
        ];
        for (kind, value, velocity) in cases {
            let (got_value, got_velocity) =
                delay_extrapolation(kind, &hist, tau, &bp).unwrap();
            assert!(
                (got_value[0] - 2.0 * value).abs() < 1e-12,
                "{}: value {} != {}",
                kind.name(),
                got_value[0],
                2.0 * value
            );
            assert!(
                (got_velocity[0] - 2.0 * velocity).abs() < 1e-12,
                "{}: velocity {} != {}",
                kind.name(),
                got_velocity[0],
                2.0 * velocity
            );
        }

        assert!(matches!(
            delay_extrapolation(SchemeKind::Monolithic, &hist, tau, &bp),
            Err(SchemeError::InvalidConfig(_))
        ));
        assert!(matches!(
            delay_extrapolation(SchemeKind::SplitDelayC, &hist[..3], tau, &bp),
            Err(SchemeError::InsufficientHistory { needed: 4, got: 3 })
        ));
    }

    /// Coefficient vectors of polynomial-in-time nodal data plus a chosen
    /// multiplier, and the loads that make them an exact solution of the
    /// block system.
    struct PolySolution {
        n1: usize,
        u_coeffs: Vec<Vec<f64>>,
        l_coeffs: Vec<Vec<f64>>,
    }

    impl PolySolution {
        /// Random data with `u` of the given degree in time, its boundary
        /// part capped at `boundary_degree`, and λ of the same degree as `u`.
        fn random(
            rng: &mut ChaCha8Rng,
            n_u: usize,
            n_l: usize,
            n1: usize,
            degree: usize,
            boundary_degree: usize,
        ) -> PolySolution {
            let u_coeffs: Vec<Vec<f64>> = (0..=degree)
                .map(|k| {
                    let mut v = random_vec(rng, n_u);
                    if k > boundary_degree {
                        v[n1..].iter_mut().for_each(|x| *x = 0.0);
                    }
                    v
                })
                .collect();
            let l_coeffs = (0..=degree).map(|_| random_vec(rng, n_l)).collect();
            PolySolution { n1, u_coeffs, l_coeffs }
        }

        fn eval(coeffs: &[Vec<f64>], t: f64) -> Vec<f64> {
            let mut out = vec![0.0; coeffs[0].len()];
            for (k, c) in coeffs.iter().enumerate() {
                let w = t.powi(k as i32);
                for (o, &x) in out.iter_mut().zip(c) {
                    *o += w * x;
                }
            }
            out
        }

        fn eval_derivative(coeffs: &[Vec<f64>], t: f64) -> Vec<f64> {
            let mut out = vec![0.0; coeffs[0].len()];
            for (k, c) in coeffs.iter().enumerate().skip(1) {
                let w = k as f64 * t.powi(k as i32 - 1);
                for (o, &x) in out.iter_mut().zip(c) {
                    *o += w * x;
                }
            }
            out
        }

        fn u_at(&self, t: f64) -> Vec<f64> {
            Self::eval(&self.u_coeffs, t)
        }
        fn du_at(&self, t: f64) -> Vec<f64> {
            Self::eval_derivative(&self.u_coeffs, t)
        }
        fn p_at(&self, t: f64) -> Vec<f64> {
            self.u_at(t)[self.n1..].to_vec()
        }
        fn lam_at(&self, t: f64) -> Vec<f64> {
            Self::eval(&self.l_coeffs, t)
        }
    }

    /// One step from exact polynomial history reproduces the exact values:
    /// every stencil is exact on polynomials of its design degree, so with
    /// bulk data one degree above the boundary data (matching the trace
    /// extrapolation's lower degree) all truncation terms vanish.
    #[test]
    fn one_step_is_exact_on_polynomial_data() {
        let mesh = unit_disk_mesh(0.9).unwrap();
        let problem = linear_problem();
        let ops = assemble(&mesh, &problem);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tau = 0.1;
        let t0 = 0.4;
        let t_new = t0 + tau;

        for kind in SchemeKind::ALL {
            let (degree, boundary_degree) = match kind {
                // The coupled solve has no trace extrapolation, so the
                // boundary data may carry the full quadratic.
                SchemeKind::Monolithic => (2, 2),
                SchemeKind::ThirdOrder => (3, 2),
                _ => (2, 1),
            };
            let poly = PolySolution::random(
                &mut rng, ops.n_u, ops.n_lambda, ops.n1, degree, boundary_degree,
            );

            let bulk = |t: f64| -> Vec<f64> {
                let mut f = axpy(
                    &ops.mu.matvec(&poly.du_at(t)).unwrap(),
                    1.0,
                    &ops.ku.matvec(&poly.u_at(t)).unwrap(),
                );
                f = axpy(&f, -1.0, &ops.bu.transpose_matvec(&poly.lam_at(t)).unwrap());
                f
            };
            let surf = |t: f64| -> Vec<f64> {
                let dp = self::PolySolution::eval_derivative(&poly.u_coeffs, t)[poly.n1..].to_vec();
                let mut f = axpy(
                    &ops.mp.matvec(&dp).unwrap(),
                    1.0,
                    &ops.kp.matvec(&poly.p_at(t)).unwrap(),
                );
                f = axpy(&f, 1.0, &ops.bp.transpose_matvec(&poly.lam_at(t)).unwrap());
                f
            };
            let rhs = DirectRhs { bulk, surf };

            let depth = kind.history_depth();
            let u_hist_own: Vec<Vec<f64>> =
                (0..depth).map(|k| poly.u_at(t0 - k as f64 * tau)).collect();
            let p_hist_own: Vec<Vec<f64>> =
                (0..depth).map(|k| poly.p_at(t0 - k as f64 * tau)).collect();
            let u_hist: Vec<&[f64]> = u_hist_own.iter().map(|v| v.as_slice()).collect();
            let p_hist: Vec<&[f64]> = p_hist_own.iter().map(|v| v.as_slice()).collect();

            let config = SchemeConfig::new(kind, tau, 1.0).unwrap();
            let got = match kind {
                SchemeKind::Monolithic => MonolithicIntegrator::new(&ops, &rhs, &config)
                    .unwrap()
                    .step(t_new, &u_hist, &p_hist, None)
                    .unwrap(),
                _ => SplitIntegrator::new(&ops, &rhs, &config)
                    .unwrap()
                    .step(t_new, &u_hist, &p_hist)
                    .unwrap(),
            };

            let eu = rel_err(&got.u, &poly.u_at(t_new));
            let ep = rel_err(&got.p, &poly.p_at(t_new));
            let el = rel_err(&got.lambda, &poly.lam_at(t_new));
            assert!(eu < 1e-9, "{}: bulk error {eu:e}", kind.name());
            assert!(ep < 1e-9, "{}: surface error {ep:e}", kind.name());
            assert!(el < 1e-9, "{}: multiplier error {el:e}", kind.name());
        }
    }

    /// Time-constant data with matching constant loads is reproduced without
    /// drift over several steps.
    #[test]
    fn constant_states_are_fixed_points() {
        let mesh = unit_disk_mesh(0.9).unwrap();
        let problem = linear_problem();
        let ops = assemble(&mesh, &problem);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u_star = random_vec(&mut rng, ops.n_u);
        let p_star = u_star[ops.n1..].to_vec();
        let lam_star = random_vec(&mut rng, ops.n_lambda);
        let tau = 0.05;

        let f_bulk = {
            let mut f = ops.ku.matvec(&u_star).unwrap();
            f = axpy(&f, -1.0, &ops.bu.transpose_matvec(&lam_star).unwrap());
            f
        };
        let f_surf = {
            let mut f = ops.kp.matvec(&p_star).unwrap();
            f = axpy(&f, 1.0, &ops.bp.transpose_matvec(&lam_star).unwrap());
            f
        };
        let rhs = DirectRhs { bulk: |_t| f_bulk.clone(), surf: |_t| f_surf.clone() };

        for kind in SchemeKind::ALL {
            let depth = kind.history_depth();
            let config = SchemeConfig::new(kind, tau, 1.0).unwrap();
            let initial = vec![(u_star.clone(), p_star.clone()); depth];
            let mut state = SchemeState::new(kind, tau, 0.0, initial).unwrap();
            for n in 1..=5 {
                let t_new = n as f64 * tau;
                let result = match kind {
                    SchemeKind::Monolithic => {
                        MonolithicIntegrator::new(&ops, &rhs, &config)
                            .unwrap()
                            .step(t_new, &state.u_history(), &state.p_history(), state.last_lambda())
                            .unwrap()
                    }
                    _ => SplitIntegrator::new(&ops, &rhs, &config)
                        .unwrap()
                        .step(t_new, &state.u_history(), &state.p_history())
                        .unwrap(),
                };
                assert!(
                    max_abs_diff(&result.u, &u_star) < 1e-10,
                    "{}: bulk drifted at step {n}",
                    kind.name()
                );
                assert!(
                    max_abs_diff(&result.p, &p_star) < 1e-10,
                    "{}: surface drifted at step {n}",
                    kind.name()
                );
                assert!(
                    max_abs_diff(&result.lambda, &lam_star) < 1e-9,
                    "{}: multiplier drifted at step {n}",
                    kind.name()
                );
                state.push(&result);
            }
        }
    }

    /// Zero sources and zero initial data keep every scheme at exactly zero.
    #[test]
    fn zero_data_yields_zero_trajectory() {
        fn zero_source(_t: f64, _x: f64, _y: f64, _s: f64) -> f64 {
            0.0
        }
        fn zero_exact(_t: f64, _x: f64, _y: f64) -> f64 {
            0.0
        }
        let problem = crate::problems::Problem {
            name: "zero",
            alpha: 1.0,
            kappa: 1.0,
            bulk_source: zero_source,
            bulk_source_dstate: zero_source,
            bulk_state_dependent: false,
            surf_source: zero_source,
            surf_source_dstate: zero_source,
            surf_state_dependent: false,
            exact: Some(zero_exact),
        };
        let mesh = unit_disk_mesh(0.9).unwrap();
        for kind in SchemeKind::ALL {
            let config = SchemeConfig::new(kind, 0.05, 0.25).unwrap();
            let traj = integrate(&mesh, &problem, &config).unwrap();
            for u in &traj.u {
                assert!(u.iter().all(|&x| x == 0.0), "{}: nonzero bulk", kind.name());
            }
            for p in &traj.p {
                assert!(p.iter().all(|&x| x == 0.0), "{}: nonzero surface", kind.name());
            }
            for l in &traj.lambda {
                assert!(l.iter().all(|&x| x == 0.0), "{}: nonzero multiplier", kind.name());
            }
        }
    }

    /// The auxiliary formulation produces bitwise the same interior, surface,
    /// and multiplier values as the delay variant it reformulates; only the
    /// stored boundary trace differs (recovered rather than extrapolated).
    #[test]
    fn auxiliary_matches_its_delay_variant_exactly() {
        let mesh = unit_disk_mesh(0.45).unwrap();
        for problem in [linear_problem(), semilinear_problem()] {
            let ops = assemble(&mesh, &problem);
            let cfg_b = SchemeConfig::new(SchemeKind::SplitDelayB, 0.05, 0.25).unwrap();
            let cfg_aux = SchemeConfig::new(SchemeKind::Auxiliary, 0.05, 0.25).unwrap();
            let traj_b = integrate_with_ops(&mesh, &ops, &problem, &cfg_b).unwrap();
            let traj_aux = integrate_with_ops(&mesh, &ops, &problem, &cfg_aux).unwrap();

            let n1 = ops.n1;
            let mut boundary_differs = false;
            for (ub, ua) in traj_b.u.iter().zip(&traj_aux.u) {
                assert_eq!(ub[..n1], ua[..n1], "{}: interior values differ", problem.name);
                if ub[n1..] != ua[n1..] {
                    boundary_differs = true;
                }
            }
            assert_eq!(traj_b.p, traj_aux.p, "{}: surface values differ", problem.name);
            assert_eq!(traj_b.lambda, traj_aux.lambda, "{}: multipliers differ", problem.name);
            assert!(boundary_differs, "{}: traces should differ", problem.name);
        }
    }

    /// After every computed step the stored boundary values satisfy the
    /// scheme's own constraint equation to solver accuracy.
    #[test]
    fn steps_satisfy_their_boundary_constraint() {
        let mesh = unit_disk_mesh(0.45).unwrap();
        let problem = linear_problem();
        let ops = assemble(&mesh, &problem);
        let n1 = ops.n1;
        for kind in SchemeKind::ALL {
            let config = SchemeConfig::new(kind, 0.05, 0.25).unwrap();
            let traj = integrate_with_ops(&mesh, &ops, &problem, &config).unwrap();
            for i in traj.history_len..traj.times.len() {
                let u2 = &traj.u[i][n1..];
                let residual = match kind {
                    SchemeKind::Monolithic | SchemeKind::Auxiliary => {
                        // Coupled constraint / recovered trace: Mλ·u₂ = Bp·pⁿ.
                        let lhs = ops.mlam.matvec(u2).unwrap();
                        let rhs_vec = ops.bp.matvec(&traj.p[i]).unwrap();
                        max_abs_diff(&lhs, &rhs_vec)
                    }
                    _ => {
                        let coeffs: &[f64] = match kind {
                            SchemeKind::ThirdOrder => &[3.0, -3.0, 1.0],
                            _ => &[2.0, -1.0],
                        };
                        let past: Vec<&[f64]> =
                            (1..=coeffs.len()).map(|k| traj.p[i - k].as_slice()).collect();
                        let lhs = ops.mlam.matvec(u2).unwrap();
                        let rhs_vec = ops.bp.matvec(&lincomb(coeffs, &past)).unwrap();
                        max_abs_diff(&lhs, &rhs_vec)
                    }
                };
                assert!(
                    residual < 1e-11,
                    "{}: constraint residual {residual:e} at step {i}",
                    kind.name()
                );
            }
        }
    }

    /// The three delay variants integrate the same equation and differ only
    /// in the boundary-velocity stencil, so their trajectories converge to
    /// each other as τ shrinks. The gap between the two stencils that share a
    /// design order (B and C) is a third difference of the surface history
    /// and shrinks at second order once the interpolant-initialization
    /// transient has decayed; gaps against the lower-order stencil (A) shrink
    /// at first order, which is that stencil's truncation gap. Rates measured
    /// with the dense-verified integrators: A–B 1.0, B–C at the final time
    /// 2.1.
    #[test]
    fn variant_trajectories_converge_to_each_other() {
        let mesh = unit_disk_mesh(crate::mesh::WIDTH_LADDER[0]).unwrap();
        let problem = linear_problem();
        let ops = assemble(&mesh, &problem);
        let kinds =
            [SchemeKind::SplitDelayA, SchemeKind::SplitDelayB, SchemeKind::SplitDelayC];

        let run = |kind: SchemeKind, tau: f64, t_final: f64| -> Trajectory {
            let config = SchemeConfig::new(kind, tau, t_final).unwrap();
            integrate_with_ops(&mesh, &ops, &problem, &config).unwrap()
        };
        let max_gap = |a: &Trajectory, b: &Trajectory| -> f64 {
            let mut d: f64 = 0.0;
            for k in 0..a.lambda.len() {
                let ia = a.history_len + k;
                let ib = b.history_len + k;
                d = d.max(max_abs_diff(&a.u[ia][..ops.n1], &b.u[ib][..ops.n1]));
                d = d.max(max_abs_diff(&a.p[ia], &b.p[ib]));
            }
            d
        };
        let final_gap = |a: &Trajectory, b: &Trajectory| -> f64 {
            let ia = a.times.len() - 1;
            let ib = b.times.len() - 1;
            max_abs_diff(&a.u[ia][..ops.n1], &b.u[ib][..ops.n1])
                .max(max_abs_diff(&a.p[ia], &b.p[ib]))
        };

        // Every pairwise gap, maximized over all steps, shrinks as τ halves.
        let mut gaps: Vec<[f64; 3]> = Vec::new();
        for tau in [0.02, 0.01, 0.005] {
            let trajs: Vec<Trajectory> = kinds.iter().map(|&k| run(k, tau, 0.2)).collect();
            gaps.push([
                max_gap(&trajs[0], &trajs[1]),
                max_gap(&trajs[1], &trajs[2]),
                max_gap(&trajs[0], &trajs[2]),
            ]);
        }
        for pair in 0..3 {
            for k in 1..gaps.len() {
                assert!(
                    gaps[k][pair] < gaps[k - 1][pair],
                    "pair {pair}: gap did not shrink: {gaps:?}"
                );
            }
        }

        // At the final time the startup transient has been damped out and
        // the rates are the stencil-gap orders: one against A, two for B–C.
        let mut final_gaps: Vec<[f64; 3]> = Vec::new();
        for tau in [0.05, 0.025, 0.0125] {
            let trajs: Vec<Trajectory> = kinds.iter().map(|&k| run(k, tau, 1.0)).collect();
            final_gaps.push([
                final_gap(&trajs[0], &trajs[1]),
                final_gap(&trajs[1], &trajs[2]),
                final_gap(&trajs[0], &trajs[2]),
            ]);
        }
        for k in 1..final_gaps.len() {
            for (pair, min_rate) in [(0, 0.9), (1, 1.7), (2, 0.9)] {
                let rate = (final_gaps[k - 1][pair] / final_gaps[k][pair]).log2();
                assert!(
                    rate > min_rate,
                    "pair {pair}: final-time rate {rate:.2} below {min_rate}: {final_gaps:?}"
                );
            }
        }
    }

    /// Shape of the recorded trajectory: exact init segment, equidistant
    /// times, one multiplier per computed step, Newton counts zero for the
    /// linear problem and positive for the semilinear one.
    #[test]
    fn trajectory_records_history_steps_and_newton_counts() {
        let mesh = unit_disk_mesh(0.45).unwrap();
        let tau = 0.05;
        for kind in SchemeKind::ALL {
            let config = SchemeConfig::new(kind, tau, 0.25).unwrap();
            let traj = integrate(&mesh, &linear_problem(), &config).unwrap();
            let depth = kind.history_depth();
            assert_eq!(traj.history_len, depth);
            assert_eq!(traj.times.len(), depth + 5);
            assert_eq!(traj.u.len(), depth + 5);
            assert_eq!(traj.p.len(), depth + 5);
            assert_eq!(traj.lambda.len(), 5);
            assert_eq!(traj.newton_iters, vec![0; 5]);
            assert!((traj.times[0] + (depth - 1) as f64 * tau).abs() < 1e-12);
            for w in traj.times.windows(2) {
                assert!((w[1] - w[0] - tau).abs() < 1e-12);
            }
            assert!((traj.times[depth + 4] - 0.25).abs() < 1e-12);
            assert!(traj.wall_time_seconds >= 0.0);
        }

        let config = SchemeConfig::new(SchemeKind::SplitDelayB, tau, 0.25).unwrap();
        let traj = integrate(&mesh, &semilinear_problem(), &config).unwrap();
        assert!(traj.newton_iters.iter().all(|&n| n >= 1));
        assert_eq!(traj.newton_iters_total(), traj.newton_iters.iter().sum::<usize>());
        assert_eq!(
            traj.newton_iters_max(),
            traj.newton_iters.iter().copied().max().unwrap()
        );
    }

    /// Newton converges in a few iterations from the previous step's value on
    /// the semilinear problem, for both split and coupled solves.
    #[test]
    fn newton_converges_quickly_on_the_semilinear_problem() {
        let mesh = unit_disk_mesh(0.45).unwrap();
        let problem = semilinear_problem();
        let exact = problem.exact.unwrap();
        for kind in [SchemeKind::SplitDelayB, SchemeKind::Monolithic, SchemeKind::ThirdOrder] {
            let config = SchemeConfig::new(kind, 0.025, 0.25).unwrap();
            let traj = integrate(&mesh, &problem, &config).unwrap();
            assert!(
                traj.newton_iters_max() <= 6,
                "{}: {} iterations in one step",
                kind.name(),
                traj.newton_iters_max()
            );
            // Sanity only (the coarse mesh carries a few percent of spatial
            // error); convergence orders are measured elsewhere.
            let (u_ref, _) = interpolate_exact(&mesh, exact, 0.25);
            let last = traj.u.last().unwrap();
            assert!(rel_err(last, &u_ref) < 0.25, "{}: inaccurate", kind.name());
        }
    }

    /// The splitting perturbs the multiplier relative to the coupled solve by
    /// the delay-extrapolation truncation. At the final time (startup
    /// transient damped out) the relative gap in the boundary-mass norm
    /// shrinks at second order: measured 3.48e-6 at τ = 2e-3 and 8.64e-7 at
    /// τ = 1e-3 on the coarsest ladder mesh (rate 2.01); the threshold is
    /// just over twice the measured value.
    #[test]
    fn split_and_monolithic_multipliers_agree_as_steps_shrink() {
        let mesh = unit_disk_mesh(crate::mesh::WIDTH_LADDER[0]).unwrap();
        let problem = linear_problem();
        let ops = assemble(&mesh, &problem);
        let mut gaps = Vec::new();
        for tau in [2e-3, 1e-3] {
            let cfg_b = SchemeConfig::new(SchemeKind::SplitDelayB, tau, 0.1).unwrap();
            let cfg_m = SchemeConfig::new(SchemeKind::Monolithic, tau, 0.1).unwrap();
            let traj_b = integrate_with_ops(&mesh, &ops, &problem, &cfg_b).unwrap();
            let traj_m = integrate_with_ops(&mesh, &ops, &problem, &cfg_m).unwrap();
            let lb = traj_b.lambda.last().unwrap();
            let lm = traj_m.lambda.last().unwrap();
            let d: Vec<f64> = lb.iter().zip(lm).map(|(a, b)| a - b).collect();
            let num = weighted_norm(&ops.mlam, &d).unwrap();
            let den = weighted_norm(&ops.mlam, lm).unwrap();
            gaps.push(num / den);
        }
        let rate = (gaps[0] / gaps[1]).log2();
        assert!(rate > 1.7, "multiplier gap rate {rate:.2}: {gaps:?}");
        assert!(gaps[1] < 2e-6, "multiplier gap {:.3e} above threshold", gaps[1]);
    }

    #[test]
    fn integrate_requires_an_exact_solution() {
        let mut problem = linear_problem();
        problem.exact = None;
        let mesh = unit_disk_mesh(0.9).unwrap();
        let config = SchemeConfig::new(SchemeKind::SplitDelayB, 0.05, 0.25).unwrap();
        assert!(matches!(
            integrate(&mesh, &problem, &config),
            Err(SchemeError::MissingExact("linear"))
        ));
    }

    /// The rolling state keeps exactly `history_depth` entries, newest first.
    #[test]
    fn scheme_state_trims_and_orders_history() {
        let kind = SchemeKind::SplitDelayB;
        let initial =
            vec![(vec![1.0], vec![1.0]), (vec![2.0], vec![2.0]), (vec![3.0], vec![3.0])];
        let mut state = SchemeState::new(kind, 0.1, 0.0, initial).unwrap();
        assert_eq!(state.u_history(), [&[3.0][..], &[2.0], &[1.0]]);
        assert!(state.last_lambda().is_none());

        let result = StepResult {
            u: vec![4.0],
            p: vec![4.0],
            lambda: vec![9.0],
            newton_iters: 0,
        };
        state.push(&result);
        assert_eq!(state.u_history(), [&[4.0][..], &[3.0], &[2.0]]);
        assert_eq!(state.p_history(), [&[4.0][..], &[3.0], &[2.0]]);
        assert_eq!(state.last_lambda(), Some(&[9.0][..]));
        assert_eq!(state.step_index, 1);
        assert!((state.time - 0.1).abs() < 1e-15);

        assert!(matches!(
            SchemeState::new(kind, 0.1, 0.0, vec![(vec![1.0], vec![1.0])]),
            Err(SchemeError::InsufficientHistory { needed: 3, got: 1 })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
            coeffs.iter().enumerate().map(|(k, c)| c * t.powi(k as i32)).sum()
        }

        fn poly_derivative(coeffs: &[f64], t: f64) -> f64 {
            coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c * t.powi(k as i32 - 1))
                .sum()
        }

        /// Scalar extrapolations through a 1×1 identity weight.
        fn scalar_extrapolation(
            kind: SchemeKind,
            coeffs: &[f64],
            t: f64,
            tau: f64,
        ) -> (f64, f64) {
            let bp = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
            let hist_own: Vec<Vec<f64>> =
                (1..=4).map(|k| vec![poly_eval(coeffs, t - k as f64 * tau)]).collect();
            let hist: Vec<&[f64]> = hist_own.iter().map(|v| v.as_slice()).collect();
            let (value, velocity) = delay_extrapolation(kind, &hist, tau, &bp).unwrap();
            (value[0], velocity[0])
        }

        proptest! {
            /// Each extrapolation reproduces the target value/derivative
            /// exactly on polynomials of its design degree.
            #[test]
            fn extrapolations_are_exact_at_their_design_degree(
                coeffs in proptest::array::uniform4(-1.0f64..1.0),
                t in -1.0f64..1.0,
                tau in 0.05f64..0.8,
            ) {
                // (kind, degree on which the value part is exact,
                //  degree on which the velocity part is exact)
                let cases = [
                    (SchemeKind::SplitDelayA, 1, 1),
                    (SchemeKind::SplitDelayB, 1, 2),
                    (SchemeKind::SplitDelayC, 1, 2),
                    (SchemeKind::ThirdOrder, 2, 3),
                ];
                for (kind, value_degree, velocity_degree) in cases {
                    let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>() / tau;
                    let mut value_coeffs = coeffs;
                    value_coeffs[value_degree + 1..].iter_mut().for_each(|c| *c = 0.0);
                    let (value, _) = scalar_extrapolation(kind, &value_coeffs, t, tau);
                    prop_assert!(
                        (value - poly_eval(&value_coeffs, t)).abs() <= 1e-9 * scale,
                        "{}: value stencil not exact at degree {}",
                        kind.name(), value_degree
                    );

                    let mut velocity_coeffs = coeffs;
                    velocity_coeffs[velocity_degree + 1..].iter_mut().for_each(|c| *c = 0.0);
                    let (_, velocity) = scalar_extrapolation(kind, &velocity_coeffs, t, tau);
                    prop_assert!(
                        (velocity - poly_derivative(&velocity_coeffs, t)).abs() <= 1e-9 * scale,
                        "{}: velocity stencil not exact at degree {}",
                        kind.name(), velocity_degree
                    );
                }
            }
        }
    }
}



