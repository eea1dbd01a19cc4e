use nalgebra::Vector2;
use rayon::prelude::*;

use super::mask::ObservationMask;
use crate::camera::{camera_apply, CameraParams, EPS_NEAR};
use crate::model::TriMesh;

/// Relative depth tolerance of the z-buffer visibility test.
pub const ZBUFFER_REL_TOL: f64 = 1e-3;

const NO_TRIANGLE: u32 = u32::MAX;

/// Per-pixel nearest depth and winning triangle.
#[derive(Debug, Clone)]
pub struct DepthBuffer {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    triangle: Vec<u32>,
}

impl DepthBuffer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    /// Winning triangle index at pixel `(x, y)`, if the pixel is covered.
    pub fn triangle(&self, x: usize, y: usize) -> Option<usize> {
        let t = self.triangle[y * self.width + x];
        (t != NO_TRIANGLE).then_some(t as usize)
    }
}

/// Screen-space triangle prepared for scan conversion.
struct ScreenTriangle {
    p: [Vector2<f64>; 3],
    inv_z: [f64; 3],
    inv_area: f64,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl ScreenTriangle {
    fn new(p: [Vector2<f64>; 3], z: [f64; 3], width: usize, height: usize) -> Option<Self> {
        if z.iter().any(|&d| d <= EPS_NEAR) || p.iter().any(|q| !(q.x.is_finite() && q.y.is_finite())) {
            return None;
        }
        let area = edge(&p[0], &p[1], &p[2]);
        if area.abs() < 1e-12 {
            return None;
        }
        let min_x = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let min_y = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max).floor();
        let max_y = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max).floor();
        if max_x < 0.0 || max_y < 0.0 || min_x > (width - 1) as f64 || min_y > (height - 1) as f64 {
            return None;
        }
        Some(Self {
            p,
            inv_z: z.map(|d| 1.0 / d),
            inv_area: 1.0 / area,
            x0: min_x as usize,
            x1: (max_x as usize).min(width - 1),
            y0: min_y as usize,
            y1: (max_y as usize).min(height - 1),
        })
    }

    /// Screen-space barycentrics of a point, `None` if outside.
    fn barycentric(&self, q: &Vector2<f64>) -> Option<[f64; 3]> {
        let w0 = edge(&self.p[1], &self.p[2], q) * self.inv_area;
        let w1 = edge(&self.p[2], &self.p[0], q) * self.inv_area;
        let w2 = 1.0 - w0 - w1;
        (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0).then_some([w0, w1, w2])
    }

    fn depth_at(&self, w: &[f64; 3]) -> f64 {
        1.0 / (w[0] * self.inv_z[0] + w[1] * self.inv_z[1] + w[2] * self.inv_z[2])
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, q: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x)
}

/// Rasterises triangles given screen positions (pixel centres at integers)
/// and camera depths. Depth is interpolated perspective-correctly; on equal
/// depth the lower triangle index wins. Triangles touching the near plane or
/// with zero screen area are skipped.
pub fn rasterize(
    points: &[Vector2<f64>],
    depths: &[f64],
    trilist: &[[usize; 3]],
    width: usize,
    height: usize,
) -> DepthBuffer {
    let tris: Vec<Option<ScreenTriangle>> = trilist
        .par_iter()
        .map(|t| ScreenTriangle::new(t.map(|i| points[i]), t.map(|i| depths[i]), width, height))
        .collect();

    // Rows are independent, so bin triangles by row span and fill rows in parallel.
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); height];
    for (i, tri) in tris.iter().enumerate() {
        if let Some(tri) = tri {
            for row in &mut rows[tri.y0..=tri.y1] {
                row.push(i as u32);
            }
        }
    }
    let mut depth = vec![f64::INFINITY; width * height];
    let mut triangle = vec![NO_TRIANGLE; width * height];
    depth
        .par_chunks_mut(width)
        .zip(triangle.par_chunks_mut(width))
        .zip(rows.par_iter())
        .enumerate()
        .for_each(|(y, ((depth_row, tri_row), candidates))| {
            for &i in candidates {
                let tri = tris[i as usize].as_ref().expect("binned triangle exists");
                for x in tri.x0..=tri.x1 {
                    let q = Vector2::new(x as f64, y as f64);
                    if let Some(w) = tri.barycentric(&q) {
                        let z = tri.depth_at(&w);
                        if z < depth_row[x] {
                            depth_row[x] = z;
                            tri_row[x] = i;
                        }
                    }
                }
            }
        });
    DepthBuffer {
        width,
        height,
        depth,
        triangle,
    }
}

/// Perspective-correct barycentric weights of pixel `(x, y)` inside triangle `tri`.
pub fn perspective_barycentric(
    points: &[Vector2<f64>; 3],
    depths: &[f64; 3],
    q: &Vector2<f64>,
) -> [f64; 3] {
    let area = edge(&points[0], &points[1], &points[2]);
    let w0 = edge(&points[1], &points[2], q) / area;
    let w1 = edge(&points[2], &points[0], q) / area;
    let w = [w0, w1, 1.0 - w0 - w1];
    let p = [w[0] / depths[0], w[1] / depths[1], w[2] / depths[2]];
    let s = p[0] + p[1] + p[2];
    [p[0] / s, p[1] / s, p[2] / s]
}

/// Vertex visibility from a z-buffer of size `(height, width)`.
///
/// A vertex in front of the camera and inside the raster is visible unless
/// the triangle winning its pixel is not incident to it and lies nearer than
/// the vertex by more than `δ_z = 1e-3 × depth range`. The winner's depth is
/// taken from its plane at the vertex's exact projection rather than at the
/// pixel centre, so neighbours on a slanted surface do not count as occluders.
pub fn visible_vertices_zbuffer(
    mesh: &TriMesh,
    c: &CameraParams,
    raster_size: (usize, usize),
) -> ObservationMask {
    let (height, width) = raster_size;
    let proj = camera_apply(mesh.to_flat().as_slice(), c).expect("mesh vector has 3N entries");
    let buffer = rasterize(&proj.points, &proj.depths, mesh.trilist(), width, height);
    visibility_from_buffer(&buffer, &proj.points, &proj.depths, mesh.trilist())
}

pub(crate) fn visibility_from_buffer(
    buffer: &DepthBuffer,
    points: &[Vector2<f64>],
    depths: &[f64],
    trilist: &[[usize; 3]],
) -> ObservationMask {
    let front = depths.iter().filter(|&&d| d > EPS_NEAR);
    let (lo, hi) = front.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
        (lo.min(d), hi.max(d))
    });
    let delta = if hi > lo { ZBUFFER_REL_TOL * (hi - lo) } else { 0.0 };
    let flags = (0..points.len())
        .into_par_iter()
        .map(|v| {
            if depths[v] <= EPS_NEAR {
                return false;
            }
            let (x, y) = (points[v].x.round(), points[v].y.round());
            if x < 0.0 || y < 0.0 || x >= buffer.width as f64 || y >= buffer.height as f64 {
                return false;
            }
            let (x, y) = (x as usize, y as usize);
            match buffer.triangle(x, y) {
                Some(t) if !trilist[t].contains(&v) => {
                    let occluder = plane_depth_at(points, depths, &trilist[t], &points[v])
                        .unwrap_or_else(|| buffer.depth(x, y));
                    occluder >= depths[v] - delta
                }
                _ => true,
            }
        })
        .collect();
    ObservationMask::new(flags)
}

/// Depth of the triangle's plane at screen point `q`, extrapolating outside
/// the triangle; `None` when the plane does not reach `q` in front of the camera.
fn plane_depth_at(
    points: &[Vector2<f64>],
    depths: &[f64],
    tri: &[usize; 3],
    q: &Vector2<f64>,
) -> Option<f64> {
    let [a, b, c] = tri.map(|i| points[i]);
    let area = edge(&a, &b, &c);
    if area.abs() < 1e-12 {
        return None;
    }
    let w0 = edge(&b, &c, q) / area;
    let w1 = edge(&c, &a, q) / area;
    let w2 = 1.0 - w0 - w1;
    let inv = w0 / depths[tri[0]] + w1 / depths[tri[1]] + w2 / depths[tri[2]];
    (inv > 0.0).then(|| 1.0 / inv)
}
