//! Multistep difference stencils and their algebraic identities.
//!
//! Histories are passed newest-first: `hist[0]` is the most recent value.
//! The two-step backward differentiation derivative and the shifted
//! "one-ahead" derivative (which approximates the derivative one step past
//! its newest datum) differ by exactly three third differences; that and
//! two summation-by-parts expansions of products with the BDF derivative
//! are the identities the stability analysis of the splitting schemes rests
//! on, so they are exposed here for direct verification.

use crate::linalg::{lincomb, weighted_inner, weighted_norm, SparseMatrix};

/// Two-step BDF derivative: `(3 x[0] - 4 x[1] + x[2]) / (2 tau)`,
/// approximating the derivative at the time of `x[0]`.
pub fn bdf2_derivative(hist: [&[f64]; 3], tau: f64) -> Vec<f64> {
    let s = 1.0 / (2.0 * tau);
    lincomb(&[3.0 * s, -4.0 * s, s], &hist)
}

/// Shifted derivative `(5 x[0] - 8 x[1] + 3 x[2]) / (2 tau)`, approximating
/// the derivative one step *ahead* of its newest datum `x[0]`.
pub fn ahead_derivative(hist: [&[f64]; 3], tau: f64) -> Vec<f64> {
    let s = 1.0 / (2.0 * tau);
    lincomb(&[5.0 * s, -8.0 * s, 3.0 * s], &hist)
}

/// Three-step BDF derivative:
/// `(11 x[0] - 18 x[1] + 9 x[2] - 2 x[3]) / (6 tau)`.
pub fn bdf3_derivative(hist: [&[f64]; 4], tau: f64) -> Vec<f64> {
    let s = 1.0 / (6.0 * tau);
    lincomb(&[11.0 * s, -18.0 * s, 9.0 * s, -2.0 * s], &hist)
}

/// Backward difference of the given order (1, 2, or 3) applied to a
/// newest-first history; no division by the step size.
pub fn backward_difference(order: usize, hist: &[&[f64]]) -> Vec<f64> {
    let coeffs: &[f64] = match order {
        1 => &[1.0, -1.0],
        2 => &[1.0, -2.0, 1.0],
        3 => &[1.0, -3.0, 3.0, -1.0],
        _ => panic!("backward differences implemented for orders 1..=3, got {order}"),
    };
    assert!(
        hist.len() >= coeffs.len(),
        "order-{order} difference needs {} history values, got {}",
        coeffs.len(),
        hist.len()
    );
    lincomb(coeffs, &hist[..coeffs.len()])
}

/// Both sides of the derivative-gap identity on a window `[x0, x1, x2, x3]`
/// (newest first):
///
/// ```text
///   2 tau * (bdf2 - ahead_shifted) x  =  3 * (third backward difference) x,
/// ```
///
/// where the shifted derivative is evaluated from the *older* three values
/// so both derivatives target the same time point.
pub fn derivative_gap_identity(hist: [&[f64]; 4], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let d_bdf = bdf2_derivative([hist[0], hist[1], hist[2]], tau);
    let d_ahead = ahead_derivative([hist[1], hist[2], hist[3]], tau);
    let lhs: Vec<f64> = d_bdf
        .iter()
        .zip(&d_ahead)
        .map(|(a, b)| 2.0 * tau * (a - b))
        .collect();
    let rhs: Vec<f64> = backward_difference(3, &hist)
        .into_iter()
        .map(|v| 3.0 * v)
        .collect();
    (lhs, rhs)
}

/// Both sides of the increment-product expansion for a symmetric positive
/// definite `M` and a window `[x0, x1, x2]` (newest first):
///
/// ```text
///   2 tau * <E x0, M * bdf2(x)>
///     = 5/2 |E x0|_M^2 - 1/2 |E x1|_M^2 + 1/2 |E^2 x0|_M^2,
/// ```
///
/// with `E` the first and `E^2` the second backward difference.
pub fn increment_product_identity(
    m: &SparseMatrix,
    hist: [&[f64]; 3],
    tau: f64,
) -> (f64, f64) {
    let e_new = backward_difference(1, &hist[..2]);
    let e_old = backward_difference(1, &hist[1..]);
    let e2 = backward_difference(2, &hist);
    let d = bdf2_derivative(hist, tau);
    let lhs = 2.0 * tau * weighted_inner(m, &e_new, &d).expect("matching dimensions");
    let n_new = weighted_norm(m, &e_new).expect("matching dimensions");
    let n_old = weighted_norm(m, &e_old).expect("matching dimensions");
    let n_e2 = weighted_norm(m, &e2).expect("matching dimensions");
    let rhs = 2.5 * n_new * n_new - 0.5 * n_old * n_old + 0.5 * n_e2 * n_e2;
    (lhs, rhs)
}

/// Both sides of the value-product expansion for a symmetric positive
/// definite `M` and a window `[x0, x1, x2]` (newest first):
///
/// ```text
///   4 tau * <x0, M * bdf2(x)>
///     = |x0|_M^2 - |x1|_M^2 + |2 x0 - x1|_M^2 - |2 x1 - x2|_M^2
///       + |x0 - 2 x1 + x2|_M^2.
/// ```
pub fn value_product_identity(m: &SparseMatrix, hist: [&[f64]; 3], tau: f64) -> (f64, f64) {
    let d = bdf2_derivative(hist, tau);
    let lhs = 4.0 * tau * weighted_inner(m, hist[0], &d).expect("matching dimensions");
    let sq = |v: &[f64]| {
        let n = weighted_norm(m, v).expect("matching dimensions");
        n * n
    };
    let two_minus = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| 2.0 * x - y).collect()
    };
    let rhs = sq(hist[0]) - sq(hist[1]) + sq(&two_minus(hist[0], hist[1]))
        - sq(&two_minus(hist[1], hist[2]))
        + sq(&backward_difference(2, &hist));
    (lhs, rhs)
}
