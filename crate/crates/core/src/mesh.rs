//! Marching cubes over a sampled scalar field, and triangle meshes.
//!
//! The 256-entry case table is built at first use by walking the cube
//! faces: every face contributes segments joining its sign-change edges,
//! oriented so that the inside region is on a consistent side, and the
//! segments chain into closed loops which are fan-triangulated. Faces with
//! two diagonal inside corners keep those corners separated.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{NfmpError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks that every index is in range and every vertex is finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(NfmpError::InvalidArgument(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(NfmpError::InvalidArgument("mesh has non-finite vertices".into()));
        }
        Ok(())
    }

    /// ASCII OBJ with `v` and 1-based `f` records.
    pub fn write_obj(&self, w: &mut impl Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NfmpError::io(path, e))?);
        self.write_obj(&mut f).and_then(|_| f.flush()).map_err(|e| NfmpError::io(path, e))
    }

    /// Unnormalised normal of triangle `t` (right-hand rule).
    pub fn triangle_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    }
}

/// Cube corner `c` has offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Edge `a * 4 + r` runs along axis `a` from corner `base(a, r)`.
fn edge_corners(e: usize) -> (usize, usize) {
    let a = e / 4;
    let r = e % 4;
    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
    let base = ((r & 1) << u) | (((r >> 1) & 1) << v);
    (base, base | (1 << a))
}

fn edge_between(c0: usize, c1: usize) -> usize {
    let diff = c0 ^ c1;
    let a = diff.trailing_zeros() as usize;
    let base = c0 & c1;
    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
    a * 4 + ((base >> u) & 1) + 2 * ((base >> v) & 1)
}

/// Corners of each face, counter-clockwise about its outward normal.
fn faces() -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for a in 0..3 {
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        for side in 0..2 {
            let uv: [(usize, usize); 4] =
                if side == 1 { [(0, 0), (1, 0), (1, 1), (0, 1)] } else { [(0, 0), (0, 1), (1, 1), (1, 0)] };
            for (i, &(pu, pv)) in uv.iter().enumerate() {
                out[a * 2 + side][i] = (side << a) | (pu << u) | (pv << v);
            }
        }
    }
    out
}

/// Triangles (as edge triples) for each inside-corner mask.
fn case_table() -> &'static Vec<Vec<[usize; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[usize; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build_case).collect())
}

fn build_case(mask: usize) -> Vec<[usize; 3]> {
    let inside = |c: usize| mask >> c & 1 == 1;
    // next[e] = edge following e along the surface loop
    let mut next: [Option<usize>; 12] = [None; 12];
    for face in faces() {
        let crossings: Vec<(usize, bool)> = (0..4)
            .filter_map(|i| {
                let (c0, c1) = (face[i], face[(i + 1) % 4]);
                (inside(c0) != inside(c1)).then(|| (edge_between(c0, c1), inside(c1)))
            })
            .collect();
        // pair each entering crossing with the next leaving one
        for (i, &(e, entering)) in crossings.iter().enumerate() {
            if entering {
                let (leave, _) = crossings[(i + 1) % crossings.len()];
                next[e] = Some(leave);
            }
        }
    }
    let mut seen = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if seen[start] || next[start].is_none() {
            continue;
        }
        let mut lp = vec![start];
        seen[start] = true;
        let mut e = next[start].expect("checked");
        while e != start {
            seen[e] = true;
            lp.push(e);
            e = next[e].expect("closed loop");
        }
        for i in 1..lp.len() - 1 {
            tris.push([lp[0], lp[i], lp[i + 1]]);
        }
    }
    tris
}

/// Extracts the zero level set of `values`, sampled on a `res^3` grid over
/// `bounds` (`values[i + res * (j + res * k)]` is the sample at
/// `lo + (i, j, k) * h`). Negative values are inside; triangle normals
/// point toward increasing values.
pub fn marching_cubes(values: &[f64], res: usize, bounds: ([f64; 3], [f64; 3])) -> Result<Mesh> {
    if res < 2 {
        return Err(NfmpError::InvalidArgument(format!("marching cubes needs res >= 2, got {res}")));
    }
    if values.len() != res * res * res {
        return Err(NfmpError::Dimension(format!("{} samples for a {res}^3 grid", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(NfmpError::InvalidArgument(format!("non-finite field sample {v}")));
    }
    let (lo, hi) = bounds;
    let h: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / (res - 1) as f64).collect();
    let idx = |p: [usize; 3]| p[0] + res * (p[1] + res * p[2]);
    let pos = |p: [usize; 3]| [lo[0] + p[0] as f64 * h[0], lo[1] + p[1] as f64 * h[1], lo[2] + p[2] as f64 * h[2]];

    let table = case_table();
    let mut mesh = Mesh::default();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    for k in 0..res - 1 {
        for j in 0..res - 1 {
            for i in 0..res - 1 {
                let corner = |c: usize| {
                    let o = corner_offset(c);
                    [i + o[0], j + o[1], k + o[2]]
                };
                let mut mask = 0;
                for c in 0..8 {
                    if values[idx(corner(c))] < 0.0 {
                        mask |= 1 << c;
                    }
                }
                for tri in &table[mask] {
                    let mut out = [0u32; 3];
                    for (slot, &e) in out.iter_mut().zip(tri) {
                        let (c0, c1) = edge_corners(e);
                        let (p0, p1) = (corner(c0), corner(c1));
                        let key = (idx(p0), e / 4);
                        *slot = *edge_vertex.entry(key).or_insert_with(|| {
                            let (v0, v1) = (values[idx(p0)], values[idx(p1)]);
                            let t = v0 / (v0 - v1);
                            let (a, b) = (pos(p0), pos(p1));
                            mesh.vertices.push([
                                a[0] + t * (b[0] - a[0]),
                                a[1] + t * (b[1] - a[1]),
                                a[2] + t * (b[2] - a[2]),
                            ]);
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    mesh.triangles.push(out);
                }
            }
        }
    }
    Ok(mesh)
}

/// Samples `f` on the grid and extracts its zero level set.
pub fn marching_cubes_fn(f: impl Fn([f64; 3]) -> f64, res: usize, bounds: ([f64; 3], [f64; 3])) -> Result<Mesh> {
    let values = grid_points(res, bounds).into_iter().map(f).collect::<Vec<_>>();
    marching_cubes(&values, res, bounds)
}

/// Grid sample positions in the order [`marching_cubes`] expects.
pub fn grid_points(res: usize, bounds: ([f64; 3], [f64; 3])) -> Vec<[f64; 3]> {
    let (lo, hi) = bounds;
    let step = |a: usize, i: usize| if res > 1 { lo[a] + (hi[a] - lo[a]) * i as f64 / (res - 1) as f64 } else { lo[a] };
    let mut out = Vec::with_capacity(res * res * res);
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                out.push([step(0, i), step(1, j), step(2, k)]);
            }
        }
    }
    out
}
