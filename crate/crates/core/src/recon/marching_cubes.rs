//! Marching cubes over a regular scalar grid.
//!
//! The 256-case triangle table is generated once from face-level rules:
//! on every cube face, each maximal run of inside corners is cut off by one
//! segment, so ambiguous faces always separate their inside corners. Two
//! cubes sharing a face therefore agree on its segments, and the extracted
//! surface has no cracks.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::TriMesh;
use crate::camera::Vec3;

/// Corner offsets `(x, y, z)` of the unit cube.
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

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Triangles per case, as cube-edge indices.
pub type CaseTable = [Vec<[u8; 3]>; 256];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("corners share an edge")
}

/// Faces as corner cycles, counter-clockwise seen from outside the cube.
fn face_cycles() -> Vec<[usize; 4]> {
    let mut faces = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut ring: Vec<usize> = (0..8).filter(|&c| CORNERS[c][axis] == side).collect();
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            // Angle order around the face centre in the (a1, a2) plane.
            ring.sort_by(|&p, &q| {
                let ang = |c: usize| {
                    (CORNERS[c][a2] as f64 - 0.5).atan2(CORNERS[c][a1] as f64 - 0.5)
                };
                ang(p).total_cmp(&ang(q))
            });
            // (a1, a2, axis) is right-handed, so this ring is CCW about +axis.
            if side == 0 {
                ring.reverse();
            }
            faces.push([ring[0], ring[1], ring[2], ring[3]]);
        }
    }
    faces
}

fn coplanar_on_face(face_edges: &[[usize; 4]], a: usize, b: usize) -> bool {
    face_edges.iter().any(|f| f.contains(&a) && f.contains(&b))
}

fn build_table() -> CaseTable {
    let faces = face_cycles();
    let face_edges: Vec<[usize; 4]> = faces
        .iter()
        .map(|f| std::array::from_fn(|k| edge_between(f[k], f[(k + 1) % 4])))
        .collect();
    std::array::from_fn(|case| {
        let inside = |c: usize| case & (1 << c) != 0;
        // next[e] = edge reached from crossing e along the surface loop.
        let mut next: [Option<usize>; 12] = [None; 12];
        for face in &faces {
            let crossings: Vec<(usize, bool)> = (0..4)
                .filter_map(|k| {
                    let (a, b) = (face[k], face[(k + 1) % 4]);
                    (inside(a) != inside(b)).then(|| (edge_between(a, b), inside(a)))
                })
                .collect();
            // Pair every entering crossing with the next leaving one.
            for (k, &(edge, leaving)) in crossings.iter().enumerate() {
                if leaving {
                    continue;
                }
                let (end, _) = crossings[(k + 1) % crossings.len()];
                next[edge] = Some(end);
            }
        }
        let mut visited = [false; 12];
        let mut tris = Vec::new();
        for start in 0..12 {
            if visited[start] || next[start].is_none() {
                continue;
            }
            let mut cycle = vec![start];
            visited[start] = true;
            let mut e = next[start].expect("closed loop");
            while e != start {
                visited[e] = true;
                cycle.push(e);
                e = next[e].expect("closed loop");
            }
            // Fan from a vertex whose diagonals never run inside a cube face;
            // such a diagonal would be duplicated by the neighbouring cube.
            let len = cycle.len();
            let start = (0..len)
                .find(|&s| (2..len - 1).all(|k| !coplanar_on_face(&face_edges, cycle[s], cycle[(s + k) % len])))
                .unwrap_or(0);
            for k in 1..len - 1 {
                tris.push([cycle[start], cycle[(start + k) % len], cycle[(start + k + 1) % len]].map(|e| e as u8));
            }
        }
        tris
    })
}

pub fn case_table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

/// Scalar samples on a regular grid, x fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn from_fn(dims: [usize; 3], origin: Vec3, spacing: f64, f: impl Fn(Vec3) -> f64 + Sync) -> Self {
        let plane = dims[0] * dims[1];
        let mut values = vec![0.0; plane * dims[2]];
        values.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    slab[i + dims[0] * j] = f(origin + Vec3::new(i as f64, j as f64, k as f64) * spacing);
                }
            }
        });
        Self {
            dims,
            origin,
            spacing,
            values,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }
}

/// Extracts the `iso` level set; samples below `iso` are inside. Triangles
/// are wound counter-clockwise seen from outside (toward larger values).
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriMesh {
    let table = case_table();
    let [nx, ny, nz] = grid.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return TriMesh::default();
    }
    // Global edge key: 3 * node index + axis.
    let edge_key = |i: usize, j: usize, k: usize, e: usize| -> u64 {
        let [a, b] = EDGES[e];
        let ca = CORNERS[a];
        let cb = CORNERS[b];
        let axis = (0..3).find(|&d| ca[d] != cb[d]).expect("edge has an axis");
        let node = grid.index(i + ca[0].min(cb[0]), j + ca[1].min(cb[1]), k + ca[2].min(cb[2]));
        3 * node as u64 + axis as u64
    };
    let slabs: Vec<Vec<[u64; 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let mut case = 0usize;
                    for (c, off) in CORNERS.iter().enumerate() {
                        if grid.values[grid.index(i + off[0], j + off[1], k + off[2])] < iso {
                            case |= 1 << c;
                        }
                    }
                    for tri in &table[case] {
                        out.push(tri.map(|e| edge_key(i, j, k, e as usize)));
                    }
                }
            }
            out
        })
        .collect();

    let mut index_of: HashMap<u64, u32> = HashMap::new();
    let mut mesh = TriMesh::default();
    for slab in slabs {
        for tri in slab {
            let face = tri.map(|key| {
                *index_of.entry(key).or_insert_with(|| {
                    mesh.vertices.push(edge_vertex(grid, key, iso));
                    (mesh.vertices.len() - 1) as u32
                })
            });
            mesh.faces.push(face);
        }
    }
    mesh.vertex_colors = vec![Vec3::zeros(); mesh.vertices.len()];
    mesh
}

fn edge_vertex(grid: &ScalarGrid, key: u64, iso: f64) -> Vec3 {
    let axis = (key % 3) as usize;
    let node = (key / 3) as usize;
    let i = node % grid.dims[0];
    let j = (node / grid.dims[0]) % grid.dims[1];
    let k = node / (grid.dims[0] * grid.dims[1]);
    let mut o = [i, j, k];
    let a = grid.values[node];
    o[axis] += 1;
    let b = grid.values[grid.index(o[0], o[1], o[2])];
    let t = if b != a { ((iso - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
    let pa = grid.position(i, j, k);
    let pb = grid.position(o[0], o[1], o[2]);
    pa + (pb - pa) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn table_covers_all_cases() {
        let t = case_table();
        assert!(t[0].is_empty() && t[255].is_empty());
        assert_eq!(t[1].len(), 1);
        // Complementary cases use the same number of crossing edges.
        for c in 0..256 {
            let edges = |case: usize| {
                let mut v: Vec<u8> = t[case].iter().flatten().copied().collect();
                v.sort();
                v.dedup();
                v
            };
            assert_eq!(edges(c), edges(255 - c));
            assert!(t[c].len() <= 10, "case {c}: {}", t[c].len());
        }
    }

    #[test]
    fn single_corner_faces_away_from_inside() {
        let grid = ScalarGrid {
            dims: [2, 2, 2],
            origin: Vec3::zeros(),
            spacing: 1.0,
            values: vec![-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        };
        let mesh = marching_cubes(&grid, 0.0);
        assert_eq!(mesh.faces.len(), 1);
        let n = mesh.face_normal(0);
        assert!(n.dot(&Vec3::new(1.0, 1.0, 1.0)) > 0.0);
    }

    fn sphere_grid(n: usize, r: f64) -> ScalarGrid {
        let h = 2.4 / (n - 1) as f64;
        ScalarGrid::from_fn([n, n, n], Vec3::repeat(-1.2), h, |p| p.norm() - r)
    }

    #[test]
    fn sphere_is_watertight_and_outward() {
        let mesh = marching_cubes(&sphere_grid(40, 0.9), 0.0);
        assert!(mesh.is_watertight());
        let mut signed = 0.0;
        for f in 0..mesh.faces.len() {
            let c = mesh.face_centroid(f);
            signed += mesh.face_normal(f).dot(&c);
            assert!((c.norm() - 0.9).abs() < 0.01);
        }
        assert!(signed > 0.0);
        assert!((mesh.volume() - 4.0 / 3.0 * std::f64::consts::PI * 0.729).abs() < 0.02);
    }

    #[test]
    fn random_fields_are_watertight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = 8;
            let mut grid = sphere_grid(n, 0.0);
            for (idx, v) in grid.values.iter_mut().enumerate() {
                let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
                let border = [i, j, k].iter().any(|&x| x == 0 || x == n - 1);
                *v = if border { 1.0 } else { rng.gen_range(-1.0..1.0) };
            }
            let mesh = marching_cubes(&grid, 0.0);
            let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
            for f in &mesh.faces {
                for k in 0..3 {
                    *edges.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
                }
            }
            // Oriented manifold: every directed edge matched by its reverse.
            for (&(a, b), &count) in &edges {
                assert_eq!(count, 1);
                assert_eq!(edges.get(&(b, a)), Some(&1));
            }
        }
    }
}
