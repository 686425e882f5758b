//! P1 finite-element operators on disk meshes.
//!
//! Bulk unknowns live on all mesh vertices, surface unknowns on the
//! boundary loop.  Because nodes are numbered interior-first, the bulk mass
//! and stiffness matrices split into contiguous blocks
//!
//! ```text
//!   Mu = [ M11  M12 ]      Ku = [ K11  K12 ]
//!        [ M21  M22 ],          [ K21  K22 ],
//! ```
//!
//! where index range `0..n1` covers interior nodes and `n1..n_u` the
//! boundary ring.  The trace coupling `Bu u = Bp p` is enforced through a
//! boundary mass matrix: with matching bulk and surface meshes, `Bu` is
//! `[0  Mlam]` and `Bp` equals `Mlam` entrywise.

use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;
use crate::problems::Problem;

/// All assembled operators of a problem on one mesh, with the block
/// structure induced by interior-first numbering.
#[derive(Debug, Clone)]
pub struct BlockOperators {
    /// Number of bulk unknowns (all vertices).
    pub n_u: usize,
    /// Number of surface unknowns (boundary vertices).
    pub n_p: usize,
    /// Number of multiplier unknowns (equals `n_p`).
    pub n_lambda: usize,
    /// Number of interior bulk unknowns; blocks split at this index.
    pub n1: usize,

    /// Bulk mass matrix (`n_u x n_u`).
    pub mu: SparseMatrix,
    /// Bulk stiffness matrix scaled by the diffusion coefficient.
    pub ku: SparseMatrix,
    /// Surface mass matrix (`n_p x n_p`).
    pub mp: SparseMatrix,
    /// Surface stiffness matrix scaled by the surface diffusion coefficient.
    pub kp: SparseMatrix,
    /// Multiplier-space boundary mass matrix (`n_lambda x n_lambda`).
    pub mlam: SparseMatrix,
    /// Trace coupling applied to surface unknowns (`n_lambda x n_p`).
    pub bp: SparseMatrix,
    /// Trace coupling applied to bulk unknowns (`n_lambda x n_u`),
    /// structurally `[0  Mlam]`.
    pub bu: SparseMatrix,

    pub m11: SparseMatrix,
    pub m12: SparseMatrix,
    pub m21: SparseMatrix,
    pub m22: SparseMatrix,
    pub k11: SparseMatrix,
    pub k12: SparseMatrix,
    pub k21: SparseMatrix,
    pub k22: SparseMatrix,
}

/// Assembles mass, stiffness, and coupling operators for `problem` on
/// `mesh`.
pub fn assemble(mesh: &Mesh, problem: &Problem) -> BlockOperators {
    let n_u = mesh.n_vertices();
    let n1 = mesh.n_interior();
    let n_p = mesh.n_boundary();
    let verts = mesh.vertices();

    // Bulk matrices from triangle contributions.
    let mut m_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * mesh.triangles().len());
    let mut k_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * mesh.triangles().len());
    for t in mesh.triangles() {
        let [a, b, c] = *t;
        let (pa, pb, pc) = (verts[a], verts[b], verts[c]);
        let area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]);
        let area = 0.5 * area2;

        // Gradients of the three barycentric basis functions.
        let grads = [
            [(pb[1] - pc[1]) / area2, (pc[0] - pb[0]) / area2],
            [(pc[1] - pa[1]) / area2, (pa[0] - pc[0]) / area2],
            [(pa[1] - pb[1]) / area2, (pb[0] - pa[0]) / area2],
        ];
        let idx = [a, b, c];
        for i in 0..3 {
            for j in 0..3 {
                let mass = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                let stiff =
                    problem.alpha * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                m_trip.push((idx[i], idx[j], mass));
                k_trip.push((idx[i], idx[j], stiff));
            }
        }
    }
    let mu = SparseMatrix::from_triplets(n_u, n_u, &m_trip).expect("triangle indices in range");
    let ku = SparseMatrix::from_triplets(n_u, n_u, &k_trip).expect("triangle indices in range");

    // Surface matrices from boundary segments, in boundary-local indices.
    // The boundary curve is the polygon through the boundary ring, so
    // element lengths are chord lengths.
    let loop_idx = mesh.boundary_loop();
    let mut mp_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * n_p);
    let mut kp_trip: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * n_p);
    for k in 0..n_p {
        let k2 = (k + 1) % n_p;
        let (a, b) = (verts[loop_idx[k]], verts[loop_idx[k2]]);
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let locals = [k, k2];
        for i in 0..2 {
            for j in 0..2 {
                let mass = len / 6.0 * if i == j { 2.0 } else { 1.0 };
                let stiff = problem.kappa / len * if i == j { 1.0 } else { -1.0 };
                mp_trip.push((locals[i], locals[j], mass));
                kp_trip.push((locals[i], locals[j], stiff));
            }
        }
    }
    let mp = SparseMatrix::from_triplets(n_p, n_p, &mp_trip).expect("boundary indices in range");
    let kp = SparseMatrix::from_triplets(n_p, n_p, &kp_trip).expect("boundary indices in range");

    // Multiplier space: same trace mesh, so its mass matrix and the surface
    // coupling coincide with the unscaled boundary mass matrix.
    let mlam_trip = mp_trip.clone();
    let mlam =
        SparseMatrix::from_triplets(n_p, n_p, &mlam_trip).expect("boundary indices in range");
    let bp = mlam.clone();
    let bu_trip: Vec<(usize, usize, f64)> = mlam.iter().map(|(r, c, v)| (r, n1 + c, v)).collect();
    let bu = SparseMatrix::from_triplets(n_p, n_u, &bu_trip).expect("shifted indices in range");

    BlockOperators {
        n_u,
        n_p,
        n_lambda: n_p,
        n1,
        m11: mu.block(0..n1, 0..n1),
        m12: mu.block(0..n1, n1..n_u),
        m21: mu.block(n1..n_u, 0..n1),
        m22: mu.block(n1..n_u, n1..n_u),
        k11: ku.block(0..n1, 0..n1),
        k12: ku.block(0..n1, n1..n_u),
        k21: ku.block(n1..n_u, 0..n1),
        k22: ku.block(n1..n_u, n1..n_u),
        mu,
        ku,
        mp,
        kp,
        mlam,
        bp,
        bu,
    }
}

/// Nodal values of `f(t, x, y, state)` at every mesh vertex.
pub fn bulk_nodal_values(
    mesh: &Mesh,
    f: fn(f64, f64, f64, f64) -> f64,
    t: f64,
    state: &[f64],
) -> Vec<f64> {
    mesh.vertices()
        .iter()
        .zip(state)
        .map(|(v, &s)| f(t, v[0], v[1], s))
        .collect()
}

/// Nodal values of `f(t, x, y, state)` at the boundary vertices.
pub fn surf_nodal_values(
    mesh: &Mesh,
    f: fn(f64, f64, f64, f64) -> f64,
    t: f64,
    state: &[f64],
) -> Vec<f64> {
    mesh.boundary_loop()
        .iter()
        .zip(state)
        .map(|(&b, &s)| {
            let v = mesh.vertices()[b];
            f(t, v[0], v[1], s)
        })
        .collect()
}

/// Nodal interpolants of the exact solution at time `t`: values at all bulk
/// vertices and, separately, at the boundary vertices.
pub fn interpolate_exact(
    mesh: &Mesh,
    exact: fn(f64, f64, f64) -> f64,
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|v| exact(t, v[0], v[1]))
        .collect();
    let p: Vec<f64> = mesh
        .boundary_loop()
        .iter()
        .map(|&b| u[b])
        .collect();
    (u, p)
}
