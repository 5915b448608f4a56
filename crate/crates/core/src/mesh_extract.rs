//! Marching Cubes over the allocated blocks of a [`VoxelBlockGrid`].
//!
//! Cells join eight neighbouring voxel centers and belong to the block that
//! holds their minimum corner, so cells on a block face read voxels from the
//! adjacent blocks. Vertices are keyed by the grid edge they lie on, which
//! makes deduplication across blocks exact: two cells that share an edge
//! always produce the same key and the merge keeps one vertex per key.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::mc_tables::{CORNERS, EDGES, EDGE_TABLE, TRI_TABLE};
use crate::sdf_volume::{BlockKey, Voxel, VoxelBlockGrid, BLOCK_EDGE};
use crate::transform::Point3;

pub const DEFAULT_MIN_WEIGHT: f32 = 1.0;

const DEGENERATE_AREA: f64 = 1e-12;
const INTERPOLATION_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks index bounds and normal count.
    pub fn validate(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
            && self
                .normals
                .as_ref()
                .is_none_or(|ns| ns.len() == self.vertices.len())
    }

    /// Undirected edges with the number of triangles using each.
    pub fn edge_valence(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// `V − E + F` over the referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_valence().len() as i64 + self.triangles.len() as i64
    }

    pub fn face_normal(&self, t: usize) -> Point3 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        (b - a).cross(&(c - a))
    }
}

/// Grid edge starting at voxel `origin` and pointing along `axis`.
type EdgeKey = ([i64; 3], u8);

struct BlockMesh {
    vertices: Vec<(EdgeKey, Point3, Point3)>,
    triangles: Vec<[u32; 3]>,
}

/// Voxels of one block plus a one-voxel apron on every side.
struct Neighbourhood {
    origin: [i64; 3],
    voxels: Vec<Option<Voxel>>,
}

const APRON_EDGE: usize = BLOCK_EDGE + 3;

impl Neighbourhood {
    fn gather(grid: &VoxelBlockGrid, key: &BlockKey) -> Self {
        let mut blocks = [None; 27];
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let k = BlockKey::new(key.x + dx, key.y + dy, key.z + dz);
                    blocks[((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize] = grid.block(&k);
                }
            }
        }
        let e = BLOCK_EDGE as i64;
        let mut voxels = Vec::with_capacity(APRON_EDGE.pow(3));
        for z in -1..=(e + 1) {
            for y in -1..=(e + 1) {
                for x in -1..=(e + 1) {
                    let (bx, by, bz) = (x.div_euclid(e), y.div_euclid(e), z.div_euclid(e));
                    let slot = ((bz + 1) * 9 + (by + 1) * 3 + (bx + 1)) as usize;
                    voxels.push(blocks[slot].map(|b| {
                        b.get(
                            x.rem_euclid(e) as usize,
                            y.rem_euclid(e) as usize,
                            z.rem_euclid(e) as usize,
                        )
                    }));
                }
            }
        }
        Self {
            origin: key.origin_voxel(),
            voxels,
        }
    }

    /// Voxel at block-local coordinates in `-1..=17`.
    #[inline]
    fn get(&self, l: [i64; 3]) -> Option<Voxel> {
        let idx = (l[0] + 1) as usize
            + APRON_EDGE * ((l[1] + 1) as usize + APRON_EDGE * (l[2] + 1) as usize);
        self.voxels[idx].filter(|v| v.weight > 0.0)
    }

    /// Central-difference gradient, one-sided where a neighbour is missing.
    fn gradient(&self, l: [i64; 3], voxel_size: f64) -> Point3 {
        let here = self.get(l).map(|v| v.tsdf as f64);
        let mut g = Point3::zeros();
        for axis in 0..3 {
            let mut lo = l;
            let mut hi = l;
            lo[axis] -= 1;
            hi[axis] += 1;
            let at = |p: [i64; 3]| {
                if p[axis] < -1 || p[axis] > BLOCK_EDGE as i64 + 1 {
                    None
                } else {
                    self.get(p).map(|v| v.tsdf as f64)
                }
            };
            g[axis] = match (at(lo), here, at(hi)) {
                (Some(a), _, Some(b)) => (b - a) / (2.0 * voxel_size),
                (None, Some(c), Some(b)) => (b - c) / voxel_size,
                (Some(a), Some(c), None) => (c - a) / voxel_size,
                _ => 0.0,
            };
        }
        g
    }
}

fn extract_block(grid: &VoxelBlockGrid, key: &BlockKey, min_weight: f32) -> BlockMesh {
    let hood = Neighbourhood::gather(grid, key);
    let vs = grid.voxel_size();
    let mut out = BlockMesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
    };
    let mut local_ids: HashMap<EdgeKey, u32> = HashMap::new();
    let e = BLOCK_EDGE as i64;
    for z in 0..e {
        for y in 0..e {
            for x in 0..e {
                let mut d = [0.0f64; 8];
                let mut case = 0usize;
                let mut complete = true;
                for (i, c) in CORNERS.iter().enumerate() {
                    match hood.get([x + c[0], y + c[1], z + c[2]]) {
                        Some(v) if v.weight >= min_weight => {
                            d[i] = v.tsdf as f64;
                            if d[i] < 0.0 {
                                case |= 1 << i;
                            }
                        }
                        _ => {
                            complete = false;
                            break;
                        }
                    }
                }
                if !complete || EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (edge, &(a, b)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << edge) == 0 {
                        continue;
                    }
                    let la = [x + CORNERS[a][0], y + CORNERS[a][1], z + CORNERS[a][2]];
                    let lb = [x + CORNERS[b][0], y + CORNERS[b][1], z + CORNERS[b][2]];
                    let (lo, axis) = edge_origin(la, lb);
                    let global = [
                        hood.origin[0] + lo[0],
                        hood.origin[1] + lo[1],
                        hood.origin[2] + lo[2],
                    ];
                    let ekey = (global, axis);
                    let id = *local_ids.entry(ekey).or_insert_with(|| {
                        let (da, db) = (d[a], d[b]);
                        let t = if (da - db).abs() < INTERPOLATION_GUARD {
                            0.5
                        } else {
                            da / (da - db)
                        };
                        let pa = grid.voxel_center([
                            hood.origin[0] + la[0],
                            hood.origin[1] + la[1],
                            hood.origin[2] + la[2],
                        ]);
                        let pb = grid.voxel_center([
                            hood.origin[0] + lb[0],
                            hood.origin[1] + lb[1],
                            hood.origin[2] + lb[2],
                        ]);
                        let pos = pa + (pb - pa) * t;
                        let g = hood.gradient(la, vs) * (1.0 - t) + hood.gradient(lb, vs) * t;
                        let normal = if g.norm() > 1e-12 {
                            g.normalize()
                        } else {
                            (pb - pa).normalize() * (db - da).signum()
                        };
                        out.vertices.push((ekey, pos, normal));
                        (out.vertices.len() - 1) as u32
                    });
                    edge_vertex[edge] = id;
                }
                let tris = &TRI_TABLE[case];
                for t in tris.chunks_exact(3) {
                    if t[0] < 0 {
                        break;
                    }
                    // The tables wind counter-clockwise seen from inside;
                    // reverse so faces point along the outward gradient.
                    let tri = [
                        edge_vertex[t[0] as usize],
                        edge_vertex[t[2] as usize],
                        edge_vertex[t[1] as usize],
                    ];
                    let [p0, p1, p2] = tri.map(|i| out.vertices[i as usize].1);
                    if 0.5 * (p1 - p0).cross(&(p2 - p0)).norm() <= DEGENERATE_AREA {
                        continue;
                    }
                    out.triangles.push(tri);
                }
            }
        }
    }
    out
}

fn edge_origin(a: [i64; 3], b: [i64; 3]) -> ([i64; 3], u8) {
    let axis = (0..3).find(|&k| a[k] != b[k]).unwrap_or(0);
    if a[axis] < b[axis] {
        (a, axis as u8)
    } else {
        (b, axis as u8)
    }
}

/// Triangulates the zero level set over cells whose eight corners all carry
/// weight at least `min_weight`.
pub fn extract_mesh(grid: &VoxelBlockGrid, min_weight: f32) -> TriangleMesh {
    let keys = grid.sorted_keys();
    let parts: Vec<BlockMesh> = keys
        .par_iter()
        .map(|k| extract_block(grid, k, min_weight))
        .collect();

    let mut mesh = TriangleMesh {
        normals: Some(Vec::new()),
        ..Default::default()
    };
    let normals = mesh.normals.as_mut().expect("normals allocated above");
    let mut global: HashMap<EdgeKey, u32> = HashMap::new();
    for part in parts {
        let remap: Vec<u32> = part
            .vertices
            .into_iter()
            .map(|(key, pos, normal)| {
                *global.entry(key).or_insert_with(|| {
                    mesh.vertices.push(pos);
                    normals.push(normal);
                    (mesh.vertices.len() - 1) as u32
                })
            })
            .collect();
        mesh.triangles
            .extend(part.triangles.iter().map(|t| t.map(|i| remap[i as usize])));
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf_volume::VoxelBlockGrid;

    fn sphere_grid(radius: f64, center: Point3, voxel: f64) -> VoxelBlockGrid {
        let mut grid = VoxelBlockGrid::with_voxel_size(voxel).unwrap();
        let tau = grid.truncation();
        let reach = ((radius + tau) / voxel).ceil() as i64 + 2;
        let c = grid.voxel_index(&center);
        for z in -reach..=reach {
            for y in -reach..=reach {
                for x in -reach..=reach {
                    let idx = [c[0] + x, c[1] + y, c[2] + z];
                    let d = (grid.voxel_center(idx) - center).norm() - radius;
                    if d.abs() <= tau {
                        grid.set_voxel(
                            idx,
                            Voxel {
                                tsdf: d as f32,
                                weight: 1.0,
                            },
                        );
                    }
                }
            }
        }
        grid
    }

    #[test]
    fn uniform_grid_has_no_surface() {
        let mut grid = VoxelBlockGrid::with_voxel_size(0.1).unwrap();
        let tau = grid.truncation() as f32;
        for z in 0..20 {
            for y in 0..20 {
                for x in 0..20 {
                    grid.set_voxel(
                        [x, y, z],
                        Voxel {
                            tsdf: tau,
                            weight: 3.0,
                        },
                    );
                }
            }
        }
        assert!(extract_mesh(&grid, 1.0).is_empty());
    }

    #[test]
    fn small_sphere_is_closed_and_outward() {
        let center = Point3::new(0.03, -0.02, 0.01);
        let grid = sphere_grid(0.5, center, 0.05);
        let mesh = extract_mesh(&grid, 1.0);
        assert!(mesh.validate());
        assert!(!mesh.is_empty());
        assert!(mesh.edge_valence().values().all(|&c| c == 2));
        assert_eq!(mesh.euler_characteristic(), 2);
        let normals = mesh.normals.as_ref().unwrap();
        for (i, v) in mesh.vertices.iter().enumerate() {
            assert!(((v - center).norm() - 0.5).abs() < 0.025);
            assert!((normals[i].norm() - 1.0).abs() < 1e-12);
            assert!(normals[i].dot(&(v - center).normalize()) > 0.9);
        }
        for t in 0..mesh.triangles.len() {
            let centroid = mesh.triangles[t]
                .iter()
                .map(|&i| mesh.vertices[i as usize])
                .sum::<Point3>()
                / 3.0;
            assert!(mesh.face_normal(t).dot(&(centroid - center)) > 0.0);
        }
    }

    #[test]
    fn raising_min_weight_never_adds_triangles() {
        let mut grid = sphere_grid(0.4, Point3::zeros(), 0.05);
        let keys = grid.sorted_keys();
        for (n, key) in keys.iter().enumerate() {
            let mut block = grid.block(key).unwrap().clone();
            for v in block.voxels_mut() {
                if v.weight > 0.0 {
                    v.weight = 1.0 + (n % 3) as f32;
                }
            }
            grid.insert_block(*key, block);
        }
        let counts: Vec<usize> = (1..=4)
            .map(|w| extract_mesh(&grid, w as f32).triangles.len())
            .collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        assert_eq!(counts[3], 0);
    }

    #[test]
    fn flat_crossing_uses_midpoint() {
        let mut grid = VoxelBlockGrid::with_voxel_size(1.0).unwrap();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let d = if z == 0 { -1e-12 } else { 0.0 };
                    grid.set_voxel(
                        [x, y, z],
                        Voxel {
                            tsdf: d,
                            weight: 1.0,
                        },
                    );
                }
            }
        }
        let mesh = extract_mesh(&grid, 1.0);
        assert_eq!(mesh.triangles.len(), 2);
        assert!(mesh.vertices.iter().all(|v| (v.z - 1.0).abs() < 1e-12));
    }
}
