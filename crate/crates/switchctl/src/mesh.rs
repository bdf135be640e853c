//! Structured P1 triangulation of Ω = (−1,1)² with assembled mass and
//! stiffness matrices (pure Neumann, so K·1 = 0).

use crate::sparse::{CooBuilder, CsrMatrix};
use thiserror::Error;

/// Default cap on the vertex count for `build_mesh`.
pub const DEFAULT_VERTEX_CAP: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("resolution {0} outside (0, 2]")]
    InvalidResolution(f64),
    #[error("resolution {resolution} needs {vertices} vertices, above the cap {cap}")]
    TooFine { resolution: f64, vertices: usize, cap: usize },
}

#[derive(Debug, Clone)]
pub struct SpatialMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    cells_per_side: usize,
}

impl SpatialMesh {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }
}

pub fn triangle_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Builds the structured triangulation of (−1,1)²: a uniform grid of square
/// cells of side ≤ `resolution`, each split into two triangles along the
/// same diagonal. The uniform diagonal direction keeps observed functionals
/// converging at a clean second order; alternating the diagonals makes them
/// superconverge, which breaks rate checks against O(h²).
pub fn build_mesh(resolution: f64) -> Result<SpatialMesh, MeshError> {
    build_mesh_capped(resolution, DEFAULT_VERTEX_CAP)
}

pub fn build_mesh_capped(resolution: f64, vertex_cap: usize) -> Result<SpatialMesh, MeshError> {
    if !(resolution > 0.0 && resolution <= 2.0) {
        return Err(MeshError::InvalidResolution(resolution));
    }
    let nx = (2.0 / resolution).ceil() as usize;
    let n_vertices = (nx + 1) * (nx + 1);
    if n_vertices > vertex_cap {
        return Err(MeshError::TooFine { resolution, vertices: n_vertices, cap: vertex_cap });
    }
    let h = 2.0 / nx as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity(n_vertices);
    for j in 0..=nx {
        for i in 0..=nx {
            vertices.push([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * nx);
    for j in 0..nx {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut mass = CooBuilder::new(n_vertices);
    let mut stiffness = CooBuilder::new(n_vertices);
    for tri in &triangles {
        let p: [[f64; 2]; 3] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let area = triangle_area(&p);
        debug_assert!(area > 0.0);
        // gradients of the barycentric basis: ∇λ_i = (b_i, c_i)/(2A)
        let mut grad_b = [0.0; 3];
        let mut grad_c = [0.0; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grad_b[i] = p[j][1] - p[k][1];
            grad_c[i] = p[k][0] - p[j][0];
        }
        for i in 0..3 {
            for j in 0..3 {
                let m_ij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                mass.push(tri[i], tri[j], m_ij);
                let k_ij = (grad_b[i] * grad_b[j] + grad_c[i] * grad_c[j]) / (4.0 * area);
                stiffness.push(tri[i], tri[j], k_ij);
            }
        }
    }

    Ok(SpatialMesh {
        vertices,
        triangles,
        mass: mass.build(),
        stiffness: stiffness.build(),
        cells_per_side: nx,
    })
}
