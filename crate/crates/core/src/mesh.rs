//! Triangulation of the zero level set for offline viewing.
//!
//! Each cube of eight neighboring samples is split into six tetrahedra along
//! its main diagonal and every tetrahedron is cut by the linear interpolant
//! of `φ`. Cubes that wrap across the periodic boundary are included with
//! unwrapped coordinates, so the mesh covers exactly one period
//! `[h/2, 1 + h/2)³`; vertices on opposite faces are not stitched.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Counter-clockwise seen from the `φ > 0` side.
    pub triangles: Vec<[usize; 3]>,
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const TETS: [[usize; 4]; 6] = [
    [0, 5, 1, 6],
    [0, 1, 2, 6],
    [0, 2, 3, 6],
    [0, 3, 7, 6],
    [0, 7, 4, 6],
    [0, 4, 5, 6],
];

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct Builder<'a> {
    field: &'a ScalarField,
    mesh: TriangleMesh,
    edges: HashMap<(usize, usize), usize>,
    side: usize,
}

impl Builder<'_> {
    /// Unwrapped lattice point `(i, j, k)` with each index in `0..=n`.
    fn key(&self, p: [usize; 3]) -> usize {
        p[0] + self.side * (p[1] + self.side * p[2])
    }

    fn position(&self, p: [usize; 3]) -> [f64; 3] {
        let h = self.field.grid().spacing();
        [
            (p[0] as f64 + 0.5) * h[0],
            (p[1] as f64 + 0.5) * h[1],
            (p[2] as f64 + 0.5) * h[2],
        ]
    }

    fn value(&self, p: [usize; 3]) -> f64 {
        self.field.get(p[0] as isize, p[1] as isize, p[2] as isize)
    }

    fn vertex(&mut self, a: [usize; 3], b: [usize; 3]) -> usize {
        let (ka, kb) = (self.key(a), self.key(b));
        let key = (ka.min(kb), ka.max(kb));
        if let Some(&v) = self.edges.get(&key) {
            return v;
        }
        let (fa, fb) = (self.value(a), self.value(b));
        let t = fa / (fa - fb);
        let (pa, pb) = (self.position(a), self.position(b));
        let v = self.mesh.vertices.len();
        self.mesh.vertices.push([
            pa[0] + t * (pb[0] - pa[0]),
            pa[1] + t * (pb[1] - pa[1]),
            pa[2] + t * (pb[2] - pa[2]),
        ]);
        self.edges.insert(key, v);
        v
    }

    /// Adds triangle `(a, b, c)` oriented so its normal points along `out`.
    fn triangle(&mut self, a: usize, b: usize, c: usize, out: [f64; 3]) {
        let v = &self.mesh.vertices;
        let n = cross(sub(v[b], v[a]), sub(v[c], v[a]));
        if dot(n, out) >= 0.0 {
            self.mesh.triangles.push([a, b, c]);
        } else {
            self.mesh.triangles.push([a, c, b]);
        }
    }

    fn tetrahedron(&mut self, pts: [[usize; 3]; 4]) {
        let vals = pts.map(|p| self.value(p));
        let inside: Vec<usize> = (0..4).filter(|&i| vals[i] < 0.0).collect();
        let outside: Vec<usize> = (0..4).filter(|&i| vals[i] >= 0.0).collect();
        if inside.is_empty() || outside.is_empty() {
            return;
        }
        let centroid = |idx: &[usize]| {
            let mut c = [0.0; 3];
            for &i in idx {
                let p = self.position(pts[i]);
                for a in 0..3 {
                    c[a] += p[a] / idx.len() as f64;
                }
            }
            c
        };
        let out = sub(centroid(&outside), centroid(&inside));
        match (inside.len(), outside.len()) {
            (1, 3) | (3, 1) => {
                let (lone, rest) = if inside.len() == 1 {
                    (inside[0], &outside)
                } else {
                    (outside[0], &inside)
                };
                let a = self.vertex(pts[lone], pts[rest[0]]);
                let b = self.vertex(pts[lone], pts[rest[1]]);
                let c = self.vertex(pts[lone], pts[rest[2]]);
                self.triangle(a, b, c, out);
            }
            _ => {
                let (i0, i1, o0, o1) = (inside[0], inside[1], outside[0], outside[1]);
                let a = self.vertex(pts[i0], pts[o0]);
                let b = self.vertex(pts[i0], pts[o1]);
                let c = self.vertex(pts[i1], pts[o1]);
                let d = self.vertex(pts[i1], pts[o0]);
                self.triangle(a, b, c, out);
                self.triangle(a, c, d, out);
            }
        }
    }
}

/// Triangulates `φ = 0` over one period.
pub fn extract_zero_set(field: &ScalarField) -> Result<TriangleMesh> {
    let [nx, ny, nz] = field.grid().extents();
    let mut b = Builder {
        field,
        mesh: TriangleMesh::default(),
        edges: HashMap::new(),
        side: nx.max(ny).max(nz) + 1,
    };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corners = CORNERS.map(|c| [i + c[0], j + c[1], k + c[2]]);
                let vals = corners.map(|p| b.value(p));
                if vals.iter().all(|&v| v < 0.0) || vals.iter().all(|&v| v >= 0.0) {
                    continue;
                }
                for t in TETS {
                    b.tetrahedron(t.map(|c| corners[c]));
                }
            }
        }
    }
    if b.mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(b.mesh)
}

impl TriangleMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let v = &self.vertices;
                let n = cross(sub(v[t[1]], v[t[0]]), sub(v[t[2]], v[t[0]]));
                0.5 * dot(n, n).sqrt()
            })
            .sum()
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()));
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()) + 200);
        let _ = write!(
            s,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
             element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    /// Writes PLY when the extension is `.ply`, OBJ otherwise.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
        fs::write(path, if ply { self.to_ply() } else { self.to_obj() })?;
        Ok(())
    }
}
