//! Control and observation geometry: circular control domains ω_i = B_r(x_i)
//! with centers on a circle of radius 1/√2, the observation disk ω_obs =
//! B_{1/2}(0), and the assembled load vectors b_i = ∫ χ_{ω_i} φ_k dx and
//! observation mass matrix ∫ χ_{ω_obs} φ_k φ_l dx.
//!
//! Characteristic functions are integrated per triangle: triangles entirely
//! inside the disk use exact P1 formulas, triangles away from it contribute
//! nothing, and boundary triangles are split four ways, recursively, with a
//! centroid rule on the leaves.

use crate::mesh::{triangle_area, SpatialMesh};
use crate::sparse::{CooBuilder, CsrMatrix};

pub const CONTROL_RADIUS: f64 = 0.1;
pub const OBSERVATION_RADIUS: f64 = 0.5;
/// Recursion depth of the subdivision quadrature on boundary triangles.
pub const DEFAULT_QUADRATURE_DEPTH: u32 = 3;

/// Control centers x_i = (cos φ_i, sin φ_i)/√2 with φ_i = π/4 + 2π(i−1)/N.
pub fn control_centers(n: usize) -> Vec<[f64; 2]> {
    let r = 1.0 / 2.0f64.sqrt();
    (0..n)
        .map(|k| {
            let phi = std::f64::consts::FRAC_PI_4
                + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ControlGeometry {
    n_controls: usize,
    centers: Vec<[f64; 2]>,
    radius: f64,
    obs_center: [f64; 2],
    obs_radius: f64,
    /// b_i[k] = ∫ χ_{ω_i} φ_k dx, one load vector per control component.
    b_columns: Vec<Vec<f64>>,
    /// Column sums Σ_k b_i[k], the discrete measures of the control domains.
    domain_measures: Vec<f64>,
    obs_mass: CsrMatrix,
}

impl ControlGeometry {
    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn obs_center(&self) -> [f64; 2] {
        self.obs_center
    }

    pub fn obs_radius(&self) -> f64 {
        self.obs_radius
    }

    pub fn b_column(&self, i: usize) -> &[f64] {
        &self.b_columns[i]
    }

    pub fn domain_measure(&self, i: usize) -> f64 {
        self.domain_measures[i]
    }

    pub fn obs_mass(&self) -> &CsrMatrix {
        &self.obs_mass
    }

    /// out += Σ_i coeff_i b_i.
    pub fn accumulate_load(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n_controls);
        for (c, b) in coeffs.iter().zip(&self.b_columns) {
            if *c != 0.0 {
                for (o, v) in out.iter_mut().zip(b) {
                    *o += c * v;
                }
            }
        }
    }

    /// out_i = ⟨b_i, v⟩.
    pub fn project_loads(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_controls);
        for (o, b) in out.iter_mut().zip(&self.b_columns) {
            *o = b.iter().zip(v).map(|(a, c)| a * c).sum();
        }
    }
}

pub fn assemble_control_geometry(mesh: &SpatialMesh, n: usize) -> ControlGeometry {
    assemble_control_geometry_with_depth(mesh, n, DEFAULT_QUADRATURE_DEPTH)
}

pub fn assemble_control_geometry_with_depth(
    mesh: &SpatialMesh,
    n: usize,
    depth: u32,
) -> ControlGeometry {
    assert!(n >= 1, "need at least one control component");
    let centers = control_centers(n);
    let b_columns: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| chi_load(mesh, *c, CONTROL_RADIUS, depth))
        .collect();
    let domain_measures = b_columns.iter().map(|b| b.iter().sum()).collect();
    let obs_center = [0.0, 0.0];
    let obs_mass = chi_mass(mesh, obs_center, OBSERVATION_RADIUS, depth);
    ControlGeometry {
        n_controls: n,
        centers,
        radius: CONTROL_RADIUS,
        obs_center,
        obs_radius: OBSERVATION_RADIUS,
        b_columns,
        domain_measures,
        obs_mass,
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn point_segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Squared distance from a point to a (counter-clockwise) triangle; zero when
/// the point lies inside.
fn point_triangle_dist2(p: [f64; 2], tri: &[[f64; 2]; 3]) -> f64 {
    let mut inside = true;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross < 0.0 {
            inside = false;
            break;
        }
    }
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|i| point_segment_dist2(p, tri[i], tri[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min)
}

/// One sub-triangle in the recursion: coordinates plus the values of the three
/// parent P1 basis functions at each corner (linear, so midpoints average).
struct SubTri {
    pts: [[f64; 2]; 3],
    shp: [[f64; 3]; 3],
}

enum Accumulator<'a> {
    Load(&'a mut [f64; 3]),
    Mass(&'a mut [[f64; 3]; 3]),
}

impl Accumulator<'_> {
    /// Exact integral over a sub-triangle fully inside the disk.
    fn add_exact(&mut self, area: f64, shp: &[[f64; 3]; 3]) {
        match self {
            Accumulator::Load(acc) => {
                for k in 0..3 {
                    acc[k] += area * (shp[0][k] + shp[1][k] + shp[2][k]) / 3.0;
                }
            }
            Accumulator::Mass(acc) => {
                // ∫ u v over a triangle for linear u, v:
                // (A/12) [Σ u_i v_i + (Σ u_i)(Σ v_i)]
                for k in 0..3 {
                    for l in 0..3 {
                        let dot: f64 = (0..3).map(|v| shp[v][k] * shp[v][l]).sum();
                        let sk: f64 = (0..3).map(|v| shp[v][k]).sum();
                        let sl: f64 = (0..3).map(|v| shp[v][l]).sum();
                        acc[k][l] += area / 12.0 * (dot + sk * sl);
                    }
                }
            }
        }
    }

    /// Centroid rule on a leaf.
    fn add_midpoint(&mut self, area: f64, shp_c: [f64; 3]) {
        match self {
            Accumulator::Load(acc) => {
                for k in 0..3 {
                    acc[k] += area * shp_c[k];
                }
            }
            Accumulator::Mass(acc) => {
                for k in 0..3 {
                    for l in 0..3 {
                        acc[k][l] += area * shp_c[k] * shp_c[l];
                    }
                }
            }
        }
    }
}

fn integrate_sub(
    sub: &SubTri,
    center: [f64; 2],
    radius: f64,
    depth: u32,
    acc: &mut Accumulator<'_>,
) {
    let r2 = radius * radius;
    let all_inside = sub.pts.iter().all(|p| dist2(*p, center) <= r2);
    let area = triangle_area(&sub.pts);
    if all_inside {
        acc.add_exact(area, &sub.shp);
        return;
    }
    if point_triangle_dist2(center, &sub.pts) >= r2 {
        return;
    }
    if depth == 0 {
        let centroid = [
            (sub.pts[0][0] + sub.pts[1][0] + sub.pts[2][0]) / 3.0,
            (sub.pts[0][1] + sub.pts[1][1] + sub.pts[2][1]) / 3.0,
        ];
        if dist2(centroid, center) <= r2 {
            let shp_c = [
                (sub.shp[0][0] + sub.shp[1][0] + sub.shp[2][0]) / 3.0,
                (sub.shp[0][1] + sub.shp[1][1] + sub.shp[2][1]) / 3.0,
                (sub.shp[0][2] + sub.shp[1][2] + sub.shp[2][2]) / 3.0,
            ];
            acc.add_midpoint(area, shp_c);
        }
        return;
    }
    // split four ways at the edge midpoints
    let mid_pt = |a: usize, b: usize| {
        [
            (sub.pts[a][0] + sub.pts[b][0]) / 2.0,
            (sub.pts[a][1] + sub.pts[b][1]) / 2.0,
        ]
    };
    let mid_sh = |a: usize, b: usize| {
        [
            (sub.shp[a][0] + sub.shp[b][0]) / 2.0,
            (sub.shp[a][1] + sub.shp[b][1]) / 2.0,
            (sub.shp[a][2] + sub.shp[b][2]) / 2.0,
        ]
    };
    let (m01, m12, m20) = (mid_pt(0, 1), mid_pt(1, 2), mid_pt(2, 0));
    let (s01, s12, s20) = (mid_sh(0, 1), mid_sh(1, 2), mid_sh(2, 0));
    let children = [
        SubTri { pts: [sub.pts[0], m01, m20], shp: [sub.shp[0], s01, s20] },
        SubTri { pts: [m01, sub.pts[1], m12], shp: [s01, sub.shp[1], s12] },
        SubTri { pts: [m20, m12, sub.pts[2]], shp: [s20, s12, sub.shp[2]] },
        SubTri { pts: [m01, m12, m20], shp: [s01, s12, s20] },
    ];
    for child in &children {
        integrate_sub(child, center, radius, depth - 1, acc);
    }
}

const SHAPE_IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Load vector ∫ χ_{B_r(center)} φ_k dx over all basis functions.
pub fn chi_load(mesh: &SpatialMesh, center: [f64; 2], radius: f64, depth: u32) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let sub = SubTri { pts: mesh.triangle_vertices(t), shp: SHAPE_IDENTITY };
        let mut local = [0.0; 3];
        integrate_sub(&sub, center, radius, depth, &mut Accumulator::Load(&mut local));
        for k in 0..3 {
            out[tri[k]] += local[k];
        }
    }
    out
}

/// Restricted mass matrix ∫ χ_{B_r(center)} φ_k φ_l dx.
pub fn chi_mass(mesh: &SpatialMesh, center: [f64; 2], radius: f64, depth: u32) -> CsrMatrix {
    let mut builder = CooBuilder::new(mesh.n_vertices());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let sub = SubTri { pts: mesh.triangle_vertices(t), shp: SHAPE_IDENTITY };
        let mut local = [[0.0; 3]; 3];
        integrate_sub(&sub, center, radius, depth, &mut Accumulator::Mass(&mut local));
        for k in 0..3 {
            for l in 0..3 {
                builder.push(tri[k], tri[l], local[k][l]);
            }
        }
    }
    builder.build()
}
