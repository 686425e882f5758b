//! Dense single-step reference solver.
//!
//! [`dense_step`] assembles the full linear system of one time step as a dense
//! matrix and solves it with the partial-pivot Gaussian elimination from
//! [`crate::linalg::solve_dense`]. No sparse factorizations, no staged solves:
//! every equation of the step enters one square system. It exists purely as a
//! cross-check for the production integrators, which must reproduce its
//! results to solver accuracy on linear problems.
//!
//! State-dependent sources are rejected: the one-shot system is linear by
//! construction.

use super::{
    delay_extrapolation, SchemeError, SchemeKind, StepResult, SystemRhs,
};
use crate::assembly::BlockOperators;
use crate::linalg::{axpy, lincomb, solve_dense, SparseMatrix};

/// Add `scale * mat` into the dense block starting at `(row0, col0)`.
fn add_block(a: &mut [Vec<f64>], row0: usize, col0: usize, mat: &SparseMatrix, scale: f64) {
    for (r, c, v) in mat.iter() {
        a[row0 + r][col0 + c] += scale * v;
    }
}

/// Add `scale * matᵀ` into the dense block starting at `(row0, col0)`.
fn add_block_t(a: &mut [Vec<f64>], row0: usize, col0: usize, mat: &SparseMatrix, scale: f64) {
    for (r, c, v) in mat.iter() {
        a[row0 + c][col0 + r] += scale * v;
    }
}

/// Advance one step to `t_new` by solving the complete step system densely.
///
/// Histories are newest first, as in the integrators. The provider's sources
/// must be state-independent (both Jacobian probes must return `None`);
/// otherwise an `InvalidConfig` error is returned.
pub fn dense_step<R: SystemRhs>(
    ops: &BlockOperators,
    rhs: &R,
    kind: SchemeKind,
    tau: f64,
    t_new: f64,
    u_hist: &[&[f64]],
    p_hist: &[&[f64]],
) -> Result<StepResult, SchemeError> {
    let (n_u, n_p, n_l, n1) = (ops.n_u, ops.n_p, ops.n_lambda, ops.n1);
    let zeros_u = vec![0.0; n_u];
    let zeros_p = vec![0.0; n_p];
    if rhs.bulk_source_jacobian(t_new, &zeros_u).is_some()
        || rhs.surf_source_jacobian(t_new, &zeros_p).is_some()
    {
        return Err(SchemeError::InvalidConfig(
            "the dense reference step requires state-independent sources".into(),
        ));
    }
    let u_depth = kind.u_depth();
    if u_hist.len() < u_depth || p_hist.len() < u_depth {
        return Err(SchemeError::InsufficientHistory {
            needed: u_depth,
            got: u_hist.len().min(p_hist.len()),
        });
    }

    let scale = kind.lead_coefficient() / tau;
    let hist_coeffs: Vec<f64> =
        kind.history_coefficients().iter().map(|c| c / tau).collect();
    let f_bulk = rhs.bulk_load(t_new, &zeros_u);
    let f_surf = rhs.surf_load(t_new, &zeros_p);
    let p_comb = lincomb(&hist_coeffs, &p_hist[..u_depth]);

    if kind == SchemeKind::Monolithic {
        // Unknowns z = [u; p; λ].
        let n = n_u + n_p + n_l;
        let (pu, pp, pl) = (0, n_u, n_u + n_p);
        let mut a = vec![vec![0.0; n]; n];
        add_block(&mut a, pu, pu, &ops.mu, scale);
        add_block(&mut a, pu, pu, &ops.ku, 1.0);
        add_block_t(&mut a, pu, pl, &ops.bu, -1.0);
        add_block(&mut a, pp, pp, &ops.mp, scale);
        add_block(&mut a, pp, pp, &ops.kp, 1.0);
        add_block_t(&mut a, pp, pl, &ops.bp, 1.0);
        add_block(&mut a, pl, pu, &ops.bu, 1.0);
        add_block(&mut a, pl, pp, &ops.bp, -1.0);

        let u_comb = lincomb(&hist_coeffs, &u_hist[..u_depth]);
        let mut b = vec![0.0; n];
        b[pu..pu + n_u].copy_from_slice(&axpy(&f_bulk, 1.0, &ops.mu.matvec(&u_comb)?));
        b[pp..pp + n_p].copy_from_slice(&axpy(&f_surf, 1.0, &ops.mp.matvec(&p_comb)?));

        let z = solve_dense(&a, &b)?;
        return Ok(StepResult {
            u: z[pu..pu + n_u].to_vec(),
            p: z[pp..pp + n_p].to_vec(),
            lambda: z[pl..pl + n_l].to_vec(),
            newton_iters: 0,
        });
    }

    // Splitting variants: unknowns z = [u₁; u₂; w; λ; p].
    let n = n1 + 3 * n_l + n_p;
    let (pu1, pu2, pw, pl, pp) = (0, n1, n1 + n_l, n1 + 2 * n_l, n1 + 3 * n_l);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];

    // Delay constraints: Mλ·u₂ and Mλ·w equal the extrapolated data.
    let (rhs_u2, rhs_w) = delay_extrapolation(kind, p_hist, tau, &ops.bp)?;
    add_block(&mut a, pu2, pu2, &ops.mlam, 1.0);
    b[pu2..pu2 + n_l].copy_from_slice(&rhs_u2);
    add_block(&mut a, pw, pw, &ops.mlam, 1.0);
    b[pw..pw + n_l].copy_from_slice(&rhs_w);

    // Interior rows: M₁₁·D u₁ + K₁₁·u₁ + M₁₂·w + K₁₂·u₂ = f₁.
    let u1_hist: Vec<Vec<f64>> = u_hist[..u_depth].iter().map(|u| u[..n1].to_vec()).collect();
    let u1_refs: Vec<&[f64]> = u1_hist.iter().map(|v| v.as_slice()).collect();
    let u1_comb = lincomb(&hist_coeffs, &u1_refs);
    add_block(&mut a, pu1, pu1, &ops.m11, scale);
    add_block(&mut a, pu1, pu1, &ops.k11, 1.0);
    add_block(&mut a, pu1, pw, &ops.m12, 1.0);
    add_block(&mut a, pu1, pu2, &ops.k12, 1.0);
    b[pu1..pu1 + n1].copy_from_slice(&axpy(&f_bulk[..n1], 1.0, &ops.m11.matvec(&u1_comb)?));

    // Boundary rows: M₂₁·D u₁ + K₂₁·u₁ + M₂₂·w + K₂₂·u₂ - Mλ·λ = f₂.
    add_block(&mut a, pl, pu1, &ops.m21, scale);
    add_block(&mut a, pl, pu1, &ops.k21, 1.0);
    add_block(&mut a, pl, pw, &ops.m22, 1.0);
    add_block(&mut a, pl, pu2, &ops.k22, 1.0);
    add_block(&mut a, pl, pl, &ops.mlam, -1.0);
    b[pl..pl + n_l].copy_from_slice(&axpy(&f_bulk[n1..], 1.0, &ops.m21.matvec(&u1_comb)?));

    // Surface rows: Mp·D p + Kp·p + Bpᵀ·λ = fΓ.
    add_block(&mut a, pp, pp, &ops.mp, scale);
    add_block(&mut a, pp, pp, &ops.kp, 1.0);
    add_block_t(&mut a, pp, pl, &ops.bp, 1.0);
    b[pp..pp + n_p].copy_from_slice(&axpy(&f_surf, 1.0, &ops.mp.matvec(&p_comb)?));

    let z = solve_dense(&a, &b)?;
    let p_new = z[pp..pp + n_p].to_vec();
    let mut u_new = vec![0.0; n_u];
    u_new[..n1].copy_from_slice(&z[pu1..pu1 + n1]);
    if kind == SchemeKind::Auxiliary {
        // The auxiliary formulation stores the trace recovered from the new
        // surface value: Mλ·û₂ = Bp·p.
        let mlam_dense: Vec<Vec<f64>> = {
            let mut m = vec![vec![0.0; n_l]; n_l];
            add_block(&mut m, 0, 0, &ops.mlam, 1.0);
            m
        };
        let recovered = solve_dense(&mlam_dense, &ops.bp.matvec(&p_new)?)?;
        u_new[n1..].copy_from_slice(&recovered);
    } else {
        u_new[n1..].copy_from_slice(&z[pu2..pu2 + n_l]);
    }

    Ok(StepResult {
        u: u_new,
        p: p_new,
        lambda: z[pl..pl + n_l].to_vec(),
        newton_iters: 0,
    })
}
