use nalgebra::Vector3;
use rayon::prelude::*;

use super::mask::ObservationMask;
use crate::camera::{CameraParams, EPS_NEAR};
use crate::model::TriMesh;

/// Tolerance of the ray–triangle test.
pub const RAY_EPS: f64 = 1e-9;

/// Möller–Trumbore: parameter `t` of the hit of `origin + t·dir` with the triangle, if any.
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < RAY_EPS * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(-RAY_EPS..=1.0 + RAY_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -RAY_EPS || u + v > 1.0 + RAY_EPS {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// A vertex is observed when the segment from the camera centre to it crosses
/// no triangle other than those incident to the vertex. Vertices at or behind
/// the near plane are unobserved.
pub fn occlusion_mask_raycast(mesh: &TriMesh, c: &CameraParams) -> ObservationMask {
    let r = c.rotation();
    let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| r * x + c.t).collect();
    let grid = TriangleGrid::build(&cam, mesh.trilist());
    let tris = mesh.trilist();

    let flags = (0..cam.len())
        .into_par_iter()
        .map(|v| {
            let target = cam[v];
            if target.z <= EPS_NEAR {
                return false;
            }
            let origin = Vector3::zeros();
            let key = (target.x / target.z, target.y / target.z);
            let blocked = grid.candidates(key).any(|t| {
                let tri = tris[t];
                if tri.contains(&v) {
                    return false;
                }
                matches!(
                    ray_triangle(&origin, &target, &cam[tri[0]], &cam[tri[1]], &cam[tri[2]]),
                    Some(hit) if hit > RAY_EPS && hit < 1.0 - RAY_EPS
                )
            });
            !blocked
        })
        .collect();
    ObservationMask::new(flags)
}

/// Uniform grid over normalised image coordinates `(x/z, y/z)`. Triangles
/// entirely in front of the camera go into the cells their projection
/// touches; the others are tested against every ray.
struct TriangleGrid {
    cells: Vec<Vec<usize>>,
    always: Vec<usize>,
    size: usize,
    min: (f64, f64),
    cell: (f64, f64),
}

impl TriangleGrid {
    fn build(cam: &[Vector3<f64>], tris: &[[usize; 3]]) -> Self {
        let mut always = Vec::new();
        let mut boxes = Vec::with_capacity(tris.len());
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for (t, tri) in tris.iter().enumerate() {
            if tri.iter().any(|&i| cam[i].z <= EPS_NEAR) {
                always.push(t);
                continue;
            }
            let pts = tri.map(|i| (cam[i].x / cam[i].z, cam[i].y / cam[i].z));
            let bmin = (
                pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
                pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            );
            let bmax = (
                pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
                pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
            );
            lo = (lo.0.min(bmin.0), lo.1.min(bmin.1));
            hi = (hi.0.max(bmax.0), hi.1.max(bmax.1));
            boxes.push((t, bmin, bmax));
        }
        let size = ((boxes.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let span = ((hi.0 - lo.0).max(1e-12), (hi.1 - lo.1).max(1e-12));
        let cell = (span.0 / size as f64, span.1 / size as f64);
        let mut grid = Self {
            cells: vec![Vec::new(); size * size],
            always,
            size,
            min: lo,
            cell,
        };
        for (t, bmin, bmax) in boxes {
            let (x0, y0) = grid.cell_of(bmin);
            let (x1, y1) = grid.cell_of(bmax);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    grid.cells[y * size + x].push(t);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let fx = ((p.0 - self.min.0) / self.cell.0).floor();
        let fy = ((p.1 - self.min.1) / self.cell.1).floor();
        let clamp = |f: f64| (f.max(0.0) as usize).min(self.size - 1);
        (clamp(fx), clamp(fy))
    }

    fn candidates(&self, p: (f64, f64)) -> impl Iterator<Item = usize> + '_ {
        let inside = self.cells.len() > 0
            && p.0 >= self.min.0 - self.cell.0
            && p.1 >= self.min.1 - self.cell.1
            && p.0 <= self.min.0 + self.cell.0 * (self.size as f64 + 1.0)
            && p.1 <= self.min.1 + self.cell.1 * (self.size as f64 + 1.0);
        let cell: &[usize] = if inside {
            let (x, y) = self.cell_of(p);
            &self.cells[y * self.size + x]
        } else {
            &[]
        };
        cell.iter().copied().chain(self.always.iter().copied())
    }
}
