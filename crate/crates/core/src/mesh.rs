//! Triangulations of the unit disk.
//!
//! Meshes are generated as concentric rings of nodes: ring `j` of `m` sits
//! at radius `j/m` and carries `6j` equally spaced nodes, and adjacent rings
//! are stitched with a deterministic angular sweep.  The resulting lattice
//! is quasi-uniform, and nodes are numbered interior-first: the center and
//! all inner rings come before the boundary ring, so every operator block
//! split by interior/boundary index ranges is contiguous.
//!
//! The plain-text file format is `NV NT NB` on the first line, followed by
//! `NV` vertex lines `x y`, `NT` triangle lines `i j k` (0-based, positively
//! oriented), and `NB` boundary-loop indices in angular order.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Errors from mesh generation and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("target mesh width {0} is not in (0, 1.2]")]
    InvalidTargetWidth(f64),
    #[error("mesh I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

/// Canonical mesh-width refinement ladder: consecutive targets shrink by
/// roughly `sqrt(2)`, spanning the range used by the convergence studies.
pub const WIDTH_LADDER: [f64; 7] = [
    0.20741, 0.14394, 0.093568, 0.067169, 0.045276, 0.032228, 0.024661,
];

/// A triangulation of the unit disk with interior-first node numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Global indices of the boundary nodes in angular order; entry `k` is
    /// vertex `n_interior + k`.
    boundary: Vec<usize>,
    n_interior: usize,
}

/// Summary statistics of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    /// Longest edge length (the mesh width `h`).
    pub h: f64,
    /// Shortest edge length.
    pub min_edge: f64,
    pub n_vertices: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_triangles: usize,
    /// Sum of triangle areas (area of the inscribed polygon).
    pub area: f64,
}

impl Mesh {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary node indices in angular order, forming the boundary loop.
    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }
}

/// Signed (doubled) area of the triangle `(a, b, c)`.
fn signed_area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Generates a quasi-uniform triangulation of the unit disk whose measured
/// mesh width lies within `[0.5, 1.5] * target_h`.  Equal inputs produce
/// identical meshes.
pub fn unit_disk_mesh(target_h: f64) -> Result<Mesh, MeshError> {
    if !(target_h > 0.0 && target_h <= 1.2) || !target_h.is_finite() {
        return Err(MeshError::InvalidTargetWidth(target_h));
    }
    let m = (1.2 / target_h).ceil() as usize;
    let m = m.max(1);

    // Ring j of m holds 6j nodes at radius j/m; ring 0 is the center node.
    // Rings 0..m are interior, ring m is the boundary.
    let ring_start = |j: usize| -> usize {
        if j == 0 {
            0
        } else {
            1 + 3 * j * (j - 1)
        }
    };
    let n_interior = 1 + 3 * m * (m - 1);
    let n_vertices = n_interior + 6 * m;

    let mut vertices = Vec::with_capacity(n_vertices);
    vertices.push([0.0, 0.0]);
    for j in 1..=m {
        let r = j as f64 / m as f64;
        let n = 6 * j;
        for k in 0..n {
            let theta = 2.0 * PI * k as f64 / n as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    debug_assert_eq!(vertices.len(), n_vertices);

    let mut triangles = Vec::with_capacity(6 * m * m);
    // Center fan: ring 1 has 6 nodes.
    for k in 0..6 {
        let a = ring_start(1) + k;
        let b = ring_start(1) + (k + 1) % 6;
        triangles.push([a, b, 0]);
    }
    // Stitch consecutive rings with an angular two-pointer sweep.
    for j in 1..m {
        let (ni, no) = (6 * j, 6 * (j + 1));
        let (si, so) = (ring_start(j), ring_start(j + 1));
        let inner_angle = |i: usize| 2.0 * PI * i as f64 / ni as f64;
        let outer_angle = |k: usize| 2.0 * PI * k as f64 / no as f64;
        let (mut i, mut k) = (0usize, 0usize);
        while i < ni || k < no {
            let next_inner = if i < ni { inner_angle(i + 1) } else { f64::INFINITY };
            let next_outer = if k < no { outer_angle(k + 1) } else { f64::INFINITY };
            if next_outer <= next_inner {
                // Advance along the outer ring: (outer k, outer k+1, inner i).
                let a = so + k % no;
                let b = so + (k + 1) % no;
                let c = si + i % ni;
                triangles.push([a, b, c]);
                k += 1;
            } else {
                // Advance along the inner ring: (inner i+1, inner i, outer k).
                let a = si + (i + 1) % ni;
                let b = si + i % ni;
                let c = so + k % no;
                triangles.push([a, b, c]);
                i += 1;
            }
        }
    }
    debug_assert_eq!(triangles.len(), 6 * m * m);

    for t in &triangles {
        debug_assert!(
            signed_area2(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > 0.0,
            "triangle {t:?} is not positively oriented"
        );
    }

    let boundary: Vec<usize> = (n_interior..n_vertices).collect();
    Ok(Mesh {
        vertices,
        triangles,
        boundary,
        n_interior,
    })
}

/// Computes edge-length and area statistics.
pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let mut h = 0.0f64;
    let mut min_edge = f64::INFINITY;
    let mut area = 0.0;
    for t in &mesh.triangles {
        let v = [
            mesh.vertices[t[0]],
            mesh.vertices[t[1]],
            mesh.vertices[t[2]],
        ];
        for e in 0..3 {
            let (a, b) = (v[e], v[(e + 1) % 3]);
            let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            h = h.max(len);
            min_edge = min_edge.min(len);
        }
        area += 0.5 * signed_area2(v[0], v[1], v[2]);
    }
    MeshStats {
        h,
        min_edge,
        n_vertices: mesh.n_vertices(),
        n_interior: mesh.n_interior,
        n_boundary: mesh.boundary.len(),
        n_triangles: mesh.triangles.len(),
        area,
    }
}

/// Serializes a mesh to the plain-text format; floating-point coordinates
/// keep 17 significant digits so reading back is exact.
pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    let mut out = String::new();
    use std::fmt::Write as _;
    writeln!(
        out,
        "{} {} {}",
        mesh.n_vertices(),
        mesh.triangles.len(),
        mesh.boundary.len()
    )
    .expect("string write");
    for v in &mesh.vertices {
        writeln!(out, "{:.16e} {:.16e}", v[0], v[1]).expect("string write");
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).expect("string write");
    }
    for b in &mesh.boundary {
        writeln!(out, "{}", b).expect("string write");
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads and validates a mesh file.  Validation covers counts, index
/// bounds, interior-first numbering (boundary nodes occupy the trailing
/// index block in loop order), and positive triangle orientation.
pub fn read_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut lines = reader.lines().enumerate();

    let mut next_line = |what: &str| -> Result<(usize, String), MeshError> {
        match lines.next() {
            Some((idx, Ok(s))) => Ok((idx + 1, s)),
            Some((idx, Err(e))) => Err(MeshError::Format {
                line: idx + 1,
                message: e.to_string(),
            }),
            None => Err(MeshError::Format {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    let (lno, header) = next_line("header")?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| MeshError::Format {
            line: lno,
            message: format!("bad header: {e}"),
        })?;
    let [nv, nt, nb] = counts[..] else {
        return Err(MeshError::Format {
            line: lno,
            message: format!("header must be `NV NT NB`, got {} fields", counts.len()),
        });
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (lno, s) = next_line("vertex")?;
        let coords: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeshError::Format {
                line: lno,
                message: format!("bad vertex: {e}"),
            })?;
        let [x, y] = coords[..] else {
            return Err(MeshError::Format {
                line: lno,
                message: "vertex line must have two coordinates".into(),
            });
        };
        vertices.push([x, y]);
    }

    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (lno, s) = next_line("triangle")?;
        let idx: Vec<usize> = s
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeshError::Format {
                line: lno,
                message: format!("bad triangle: {e}"),
            })?;
        let [i, j, k] = idx[..] else {
            return Err(MeshError::Format {
                line: lno,
                message: "triangle line must have three indices".into(),
            });
        };
        triangles.push([i, j, k]);
    }

    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (lno, s) = next_line("boundary index")?;
        let b: usize = s.trim().parse().map_err(|e| MeshError::Format {
            line: lno,
            message: format!("bad boundary index: {e}"),
        })?;
        boundary.push(b);
    }

    if nb > nv {
        return Err(MeshError::Invalid(format!(
            "boundary count {nb} exceeds vertex count {nv}"
        )));
    }
    let n_interior = nv - nb;
    for (k, &b) in boundary.iter().enumerate() {
        if b != n_interior + k {
            return Err(MeshError::Invalid(format!(
                "boundary loop entry {k} is vertex {b}; interior-first numbering requires {}",
                n_interior + k
            )));
        }
    }
    for (ti, t) in triangles.iter().enumerate() {
        for &i in t {
            if i >= nv {
                return Err(MeshError::Invalid(format!(
                    "triangle {ti} references vertex {i} of {nv}"
                )));
            }
        }
        if signed_area2(vertices[t[0]], vertices[t[1]], vertices[t[2]]) <= 0.0 {
            return Err(MeshError::Invalid(format!(
                "triangle {ti} is not positively oriented"
            )));
        }
    }

    Ok(Mesh {
        vertices,
        triangles,
        boundary,
        n_interior,
    })
}
