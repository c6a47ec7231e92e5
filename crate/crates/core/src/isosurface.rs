//! Density lattices and marching-cubes surface extraction.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldWorkspace, RadianceField};
use crate::geometry::{Vec3, CUBE_HALF};
use crate::mc_tables::TRI_TABLE;
use crate::mesh::TriMesh;
use crate::real::Real;

/// Iso-level on density, in 1 / world unit.
pub const DEFAULT_ISO: f64 = 10.0;
pub const DEFAULT_GRID: usize = 256;
pub const MIN_GRID: usize = 8;

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
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Scalar samples on an `n^3` lattice spanning the cube, corners included.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    n: usize,
    /// Indexed `(k * n + j) * n + i` for lattice point `(i, j, k)` along x, y, z.
    values: Vec<f32>,
}

impl DensityGrid {
    pub fn from_fn<F: Fn(Vec3) -> f64 + Sync>(n: usize, f: F) -> Result<Self> {
        check_grid(n)?;
        let values = (0..n)
            .into_par_iter()
            .flat_map_iter(|k| {
                let f = &f;
                (0..n * n).map(move |ij| f(lattice_point(n, ij % n, ij / n, k)) as f32)
            })
            .collect();
        Ok(Self { n, values })
    }

    pub fn from_field<T: Real>(field: &RadianceField<T>, n: usize) -> Result<Self> {
        check_grid(n)?;
        let slices: Vec<Vec<f32>> = (0..n)
            .into_par_iter()
            .map_init(FieldWorkspace::default, |ws, k| {
                let pts: Vec<Vec3> = (0..n * n).map(|ij| lattice_point(n, ij % n, ij / n, k)).collect();
                field.densities(&pts, ws).into_iter().map(|s| s as f32).collect()
            })
            .collect();
        Ok(Self {
            n,
            values: slices.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.n + j) * self.n + i] as f64
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        lattice_point(self.n, i, j, k)
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID {
        return Err(Error::InvalidArgument(format!("grid size {n} is below the minimum of {MIN_GRID}")));
    }
    Ok(())
}

fn lattice_point(n: usize, i: usize, j: usize, k: usize) -> Vec3 {
    let s = 2.0 * CUBE_HALF / (n - 1) as f64;
    [-CUBE_HALF + i as f64 * s, -CUBE_HALF + j as f64 * s, -CUBE_HALF + k as f64 * s]
}

/// Triangulates the surface `value = iso`, with the inside (`value > iso`)
/// enclosed by outward-facing triangles. Vertices on shared cell edges are
/// welded, so closed surfaces come out watertight.
pub fn marching_cubes(grid: &DensityGrid, iso: f64) -> TriMesh {
    let n = grid.n;
    let mut mesh = TriMesh::default();
    let mut welded: HashMap<u64, u32> = HashMap::new();
    let mut edge_vertex = |mesh: &mut TriMesh, a: [usize; 3], b: [usize; 3]| -> u32 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let axis = (0..3).find(|&d| lo[d] != hi[d]).expect("distinct edge endpoints");
        let key = (((lo[2] * n + lo[1]) * n + lo[0]) * 3 + axis) as u64;
        *welded.entry(key).or_insert_with(|| {
            let v0 = grid.get(lo[0], lo[1], lo[2]);
            let v1 = grid.get(hi[0], hi[1], hi[2]);
            let t = if v1 != v0 { ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 0.5 };
            let p0 = grid.point(lo[0], lo[1], lo[2]);
            let p1 = grid.point(hi[0], hi[1], hi[2]);
            mesh.vertices.push([
                p0[0] + t * (p1[0] - p0[0]),
                p0[1] + t * (p1[1] - p0[1]),
                p0[2] + t * (p1[2] - p0[2]),
            ]);
            (mesh.vertices.len() - 1) as u32
        })
    };
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let corner = |c: usize| [i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]];
                let mut case = 0usize;
                for c in 0..8 {
                    let [x, y, z] = corner(c);
                    if grid.get(x, y, z) <= iso {
                        case |= 1 << c;
                    }
                }
                let row = &TRI_TABLE[case];
                for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                    let mut face = [0u32; 3];
                    for (slot, &e) in face.iter_mut().zip(tri) {
                        let [a, b] = EDGES[e as usize];
                        *slot = edge_vertex(&mut mesh, corner(a), corner(b));
                    }
                    mesh.faces.push(face);
                }
            }
        }
    }
    mesh
}

/// Samples the field's density on an `n^3` lattice and extracts its iso-surface.
pub fn extract_mesh<T: Real>(field: &RadianceField<T>, n: usize, iso: f64) -> Result<TriMesh> {
    let grid = DensityGrid::from_field(field, n)?;
    Ok(marching_cubes(&grid, iso))
}
