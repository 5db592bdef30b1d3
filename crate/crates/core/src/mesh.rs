//! Marching-cubes isosurfaces and OBJ export.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc_tables::TRIANGLE_TABLE;
use crate::volume::{linear_index, Domain, Provenance, Volume3D};

pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Vertices stay this far (in edge fractions) from grid corners. Without it a
/// corner sampled exactly at `iso` collapses vertices of different edges and
/// the zero-area triangles that get dropped leave holes.
const CORNER_GAP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    /// Vertex positions in micrometres.
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub domain: Domain,
    pub provenance: Provenance,
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

/// Cube edge -> (base corner offset, axis).
const EDGES: [([usize; 3], usize); 12] = [
    ([0, 0, 0], 0),
    ([1, 0, 0], 1),
    ([0, 1, 0], 0),
    ([0, 0, 0], 1),
    ([0, 0, 1], 0),
    ([1, 0, 1], 1),
    ([0, 1, 1], 0),
    ([0, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([1, 1, 0], 2),
    ([0, 1, 0], 2),
];

fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

/// Marching cubes at `iso` with linear edge interpolation. Triangles are
/// ordered by cell index; vertices are shared between cells through their
/// grid edge.
pub fn extract_isosurface(field: &Volume3D, iso: f64, domain: Domain) -> Result<TriMesh> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::InvalidParameter(format!("iso {iso} outside (0, 1)")));
    }
    let dims = field.dims();
    let spacing = field.spacing();
    let data = field.data();
    let value = |x: usize, y: usize, z: usize| data[linear_index(dims, x, y, z)] as f64;

    // Each slab emits triangles as triples of global edge keys
    // (3 * base voxel index + axis).
    let slabs: Vec<Vec<[usize; 3]>> = (0..dims[2].saturating_sub(1))
        .into_par_iter()
        .map(|z| {
            let mut tris = Vec::new();
            for y in 0..dims[1].saturating_sub(1) {
                for x in 0..dims[0].saturating_sub(1) {
                    let mut case = 0usize;
                    for (bit, c) in CORNERS.iter().enumerate() {
                        if value(x + c[0], y + c[1], z + c[2]) < iso {
                            case |= 1 << bit;
                        }
                    }
                    let row = &TRIANGLE_TABLE[case];
                    for t in row.chunks_exact(3) {
                        if t[0] < 0 {
                            break;
                        }
                        let key = |e: i8| {
                            let (o, axis) = EDGES[e as usize];
                            3 * linear_index(dims, x + o[0], y + o[1], z + o[2]) + axis
                        };
                        tris.push([key(t[0]), key(t[1]), key(t[2])]);
                    }
                }
            }
            tris
        })
        .collect();

    let position = |key: usize| -> [f64; 3] {
        let (base, axis) = (key / 3, key % 3);
        let c = crate::volume::coords(dims, base);
        let mut d = c;
        d[axis] += 1;
        let (v0, v1) = (value(c[0], c[1], c[2]), value(d[0], d[1], d[2]));
        let t = if v1 != v0 { (iso - v0) / (v1 - v0) } else { 0.5 };
        let t = t.clamp(CORNER_GAP, 1.0 - CORNER_GAP);
        let mut p = [c[0] as f64, c[1] as f64, c[2] as f64];
        p[axis] += t;
        [p[0] * spacing[0], p[1] * spacing[1], p[2] * spacing[2]]
    };

    let mut ids: HashMap<usize, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for tri in slabs.into_iter().flatten() {
        let pts = tri.map(position);
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] || tri_area(pts[0], pts[1], pts[2]) < MIN_TRIANGLE_AREA {
            continue;
        }
        let mut idx = [0u32; 3];
        for k in 0..3 {
            idx[k] = *ids.entry(tri[k]).or_insert_with(|| {
                vertices.push(pts[k]);
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(idx);
    }
    Ok(TriMesh {
        vertices,
        triangles,
        domain,
        provenance: field.provenance(),
    })
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| tri_area(self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]))
            .sum()
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// `V - E + F` over the vertices referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn indices_in_range(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# domain: {}", self.domain.as_str())?;
        writeln!(w, "# provenance: {}", self.provenance.as_str())?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn to_obj_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_obj(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("OBJ output is ASCII")
    }
}
