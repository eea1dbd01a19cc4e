//! Procedural shape/texture models and rendered scenes with known ground truth.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::camera::{
    camera_apply, quaternion_from_axis_angle, quaternion_mul, warp_vertices, CameraParams,
    IDENTITY_QUATERNION,
};
use crate::error::{Error, Result};
use crate::fitter::{image_centre, sampleable_vertices, FitConfig, Models, Topology};
use crate::imaging::Image;
use crate::model::{PcaModel, ShapeModel, TextureModel, TriMesh};
use crate::raster::{perspective_barycentric, rasterize, sample_features, ObservationMask};
use crate::features::FeatureImage;

/// Smallest accepted vertex target.
pub const MIN_VERTICES: usize = 100;
/// Standard deviation of the first shape component, per coordinate, in object units.
pub const SHAPE_SCALE: f64 = 0.05;
/// Standard deviation of the first texture component, per entry.
pub const TEXTURE_SCALE: f64 = 0.1;
/// Ratio between successive component standard deviations.
pub const COMPONENT_DECAY: f64 = 0.85;
/// Distance from the camera centre to the sphere centre of the synthetic mesh.
pub const CAMERA_DISTANCE: f64 = 3.0;

/// Landmark directions as `(x, y)` offsets from the cap apex, looking along +z.
/// The first two are the eye centres.
const LANDMARK_OFFSETS: [(f64, f64); 15] = [
    (-0.35, -0.2),
    (0.35, -0.2),
    (-0.55, -0.2),
    (0.55, -0.2),
    (-0.4, -0.45),
    (0.4, -0.45),
    (0.0, 0.0),
    (-0.15, 0.15),
    (0.15, 0.15),
    (-0.3, 0.45),
    (0.3, 0.45),
    (0.0, 0.4),
    (0.0, 0.55),
    (0.0, 0.8),
    (0.0, -0.7),
];

/// Unit icosphere with outward-facing (counter-clockwise seen from outside) triangles.
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh::new(verts, faces).expect("icosphere topology is valid")
}

/// The `n_target` vertices of a fine icosphere nearest the camera side (−z),
/// re-indexed, with the triangles they fully contain.
pub fn sphere_cap(n_target: usize) -> TriMesh {
    let mut level = 0;
    while 10 * 4usize.pow(level) + 2 < 4 * n_target {
        level += 1;
    }
    let sphere = icosphere(level as usize);
    let mut order: Vec<usize> = (0..sphere.n_vertices()).collect();
    order.sort_by(|&a, &b| {
        sphere.vertices()[a].z.total_cmp(&sphere.vertices()[b].z).then(a.cmp(&b))
    });
    let mut keep = vec![false; sphere.n_vertices()];
    for &v in &order[..n_target] {
        keep[v] = true;
    }
    let tris: Vec<[usize; 3]> = sphere
        .trilist()
        .iter()
        .filter(|t| t.iter().all(|&v| keep[v]))
        .copied()
        .collect();
    let mut used = vec![false; sphere.n_vertices()];
    for t in &tris {
        for &v in t {
            used[v] = true;
        }
    }
    let mut index = vec![usize::MAX; sphere.n_vertices()];
    let mut verts = Vec::new();
    for v in 0..sphere.n_vertices() {
        if used[v] {
            index[v] = verts.len();
            verts.push(sphere.vertices()[v]);
        }
    }
    let tris = tris.iter().map(|t| t.map(|v| index[v])).collect();
    TriMesh::new(verts, tris).expect("cap topology is valid")
}

/// Random smooth scalar field `Σ a·sin(ω·x + φ)` with `|ω|` in `freq`.
fn smooth_field(rng: &mut ChaCha8Rng, terms: usize, freq: (f64, f64)) -> impl Fn(&Vector3<f64>) -> f64 {
    let waves: Vec<(Vector3<f64>, f64, f64)> = (0..terms)
        .map(|_| {
            let dir = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
            .normalize();
            let w = rng.random_range(freq.0..freq.1);
            (dir * w, rng.random_range(0.0..std::f64::consts::TAU), rng.sample(StandardNormal))
        })
        .collect();
    move |x: &Vector3<f64>| waves.iter().map(|(w, phi, a)| a * (w.dot(x) + phi).sin()).sum()
}

/// Orthonormal columns spanning `fields` after removing `exclude` (assumed orthonormal).
fn orthonormalise(mut fields: DMatrix<f64>, exclude: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    if let Some(q) = exclude {
        let proj = q * (q.transpose() * &fields);
        fields -= proj;
    }
    let n = fields.ncols();
    let q = fields.qr().q();
    let mut q = q.columns(0, n).into_owned();
    for mut col in q.column_iter_mut() {
        if col[col.iamax()] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Infinitesimal similarity motions of a point set (3 translations, 3 rotations, scale), orthonormalised.
fn similarity_fields(points: &[Vector3<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let centroid = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut m = DMatrix::zeros(3 * n, 7);
    for (v, x) in points.iter().enumerate() {
        let d = x - centroid;
        for a in 0..3 {
            m[(3 * v + a, a)] = 1.0;
            let axis = Vector3::ith(a, 1.0);
            let r = axis.cross(&d);
            for k in 0..3 {
                m[(3 * v + k, 3 + a)] = r[k];
            }
        }
        for k in 0..3 {
            m[(3 * v + k, 6)] = d[k];
        }
    }
    orthonormalise(m, None)
}

/// Deterministic synthetic shape and texture models on a sphere cap of about
/// `n_target` vertices. Shape components are smooth displacement fields with
/// rigid and scale motions removed; texture components are smooth per-vertex
/// functions; both are orthonormal with geometrically decaying variances.
pub fn make_synthetic_model(
    seed: u64,
    n_target: usize,
    n_s: usize,
    n_t: usize,
    channels: usize,
) -> Result<(ShapeModel, TextureModel)> {
    if n_target < MIN_VERTICES {
        return Err(Error::invalid(format!(
            "synthetic model needs at least {MIN_VERTICES} vertices, got {n_target}"
        )));
    }
    if channels == 0 || n_s == 0 || n_t == 0 {
        return Err(Error::invalid("component and channel counts must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = sphere_cap(n_target);
    let n = cap.n_vertices();
    if n_s + 7 > 3 * n || n_t > channels * n {
        return Err(Error::invalid("too many components for the mesh size"));
    }

    // mean: sphere with a smooth bump at the apex
    let apex = Vector3::new(0.0, 0.0, -1.0);
    let mean: Vec<Vector3<f64>> = cap
        .vertices()
        .iter()
        .map(|x| x * (1.0 + 0.15 * (-(x - apex).norm_squared() / 0.08).exp()))
        .collect();

    let mut fields = DMatrix::zeros(3 * n, n_s);
    for k in 0..n_s {
        let f: Vec<_> = (0..3).map(|_| smooth_field(&mut rng, 3, (1.5, 4.0))).collect();
        for (v, x) in mean.iter().enumerate() {
            for a in 0..3 {
                fields[(3 * v + a, k)] = f[a](x);
            }
        }
    }
    let basis = orthonormalise(fields, Some(&similarity_fields(&mean)));
    let scale = SHAPE_SCALE * ((3 * n) as f64).sqrt();
    let eig = DVector::from_fn(n_s, |k, _| (scale * COMPONENT_DECAY.powi(k as i32)).powi(2));
    let flat = DVector::from_iterator(3 * n, mean.iter().flat_map(|x| [x.x, x.y, x.z]));
    let landmark_ids = landmark_vertices(&mean);
    let shape = ShapeModel::new(PcaModel::new(flat, basis, eig)?, cap.trilist().to_vec(), landmark_ids)?;

    let d = channels * n;
    let mut tex_mean = DVector::zeros(d);
    for ch in 0..channels {
        let f = smooth_field(&mut rng, 4, (5.0, 9.0));
        for (v, x) in mean.iter().enumerate() {
            tex_mean[v * channels + ch] = 0.5 + 0.08 * f(x);
        }
    }
    let mut tex_fields = DMatrix::zeros(d, n_t);
    for k in 0..n_t {
        for ch in 0..channels {
            let f = smooth_field(&mut rng, 3, (3.0, 8.0));
            for (v, x) in mean.iter().enumerate() {
                tex_fields[(v * channels + ch, k)] = f(x);
            }
        }
    }
    let tex_basis = orthonormalise(tex_fields, None);
    let tscale = TEXTURE_SCALE * (d as f64).sqrt();
    let tex_eig = DVector::from_fn(n_t, |k, _| (tscale * COMPONENT_DECAY.powi(k as i32)).powi(2));
    let texture = TextureModel::new(PcaModel::new(tex_mean, tex_basis, tex_eig)?, channels)?;
    Ok((shape, texture))
}

fn landmark_vertices(points: &[Vector3<f64>]) -> Vec<usize> {
    let mut ids: Vec<usize> = Vec::with_capacity(LANDMARK_OFFSETS.len());
    for &(x, y) in &LANDMARK_OFFSETS {
        let dir = Vector3::new(x, y, -1.0).normalize();
        let best = (0..points.len())
            .filter(|v| !ids.contains(v))
            .max_by(|&a, &b| {
                let da = points[a].normalize().dot(&dir);
                let db = points[b].normalize().dot(&dir);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("mesh has more vertices than landmarks");
        ids.push(best);
    }
    ids
}

/// Frontal camera looking at the cap from distance [`CAMERA_DISTANCE`].
pub fn default_camera(width: usize, height: usize) -> CameraParams {
    CameraParams::new(
        width.max(height) as f64,
        IDENTITY_QUATERNION,
        Vector3::new(0.0, 0.0, CAMERA_DISTANCE),
        image_centre(width, height),
    )
    .expect("valid default camera")
}

/// A rendered scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: Image,
    /// Fraction of each pixel covered by the mesh.
    pub coverage: Image,
    pub p: DVector<f64>,
    pub c: CameraParams,
    pub lambda: DVector<f64>,
    pub landmarks: Vec<Vector2<f64>>,
    pub interocular: f64,
    pub mesh: TriMesh,
}

/// Flat rendering of `T(λ)` on `S(p)` seen through `c`: rasterised at twice the
/// resolution with perspective-correct barycentric interpolation of the
/// per-vertex texture, then box-downsampled. Background is 0.
pub fn render_scene(
    shape: &ShapeModel,
    texture: &TextureModel,
    p: &DVector<f64>,
    c: &CameraParams,
    lambda: &DVector<f64>,
    height: usize,
    width: usize,
) -> Result<SyntheticScene> {
    crate::model::ensure_compatible(shape, texture)?;
    let mesh = shape.shape_instance(p)?;
    let tex = texture.texture_instance(lambda)?;
    let ch = texture.channels();
    let proj = camera_apply(mesh.to_flat().as_slice(), c)?;
    let (w2, h2) = (2 * width, 2 * height);
    let fine: Vec<Vector2<f64>> = proj
        .points
        .iter()
        .map(|q| q * 2.0 + Vector2::new(0.5, 0.5))
        .collect();
    let buffer = rasterize(&fine, &proj.depths, mesh.trilist(), w2, h2);

    let mut image = Image::zeros(width, height, ch);
    let mut coverage = Image::zeros(width, height, 1);
    let trilist = mesh.trilist();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0.0; width * ch];
            let mut cov = vec![0.0; width];
            for x in 0..width {
                for (sx, sy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (fx, fy) = (2 * x + sx, 2 * y + sy);
                    let Some(t) = buffer.triangle(fx, fy) else { continue };
                    let tri = trilist[t];
                    let w = perspective_barycentric(
                        &tri.map(|i| fine[i]),
                        &tri.map(|i| proj.depths[i]),
                        &Vector2::new(fx as f64, fy as f64),
                    );
                    for c_i in 0..ch {
                        row[x * ch + c_i] += 0.25
                            * (w[0] * tex[tri[0] * ch + c_i]
                                + w[1] * tex[tri[1] * ch + c_i]
                                + w[2] * tex[tri[2] * ch + c_i]);
                    }
                    cov[x] += 0.25;
                }
            }
            (row, cov)
        })
        .collect();
    for (y, (row, cov)) in rows.into_iter().enumerate() {
        for x in 0..width {
            for c_i in 0..ch {
                image.set(x, y, c_i, row[x * ch + c_i]);
            }
            coverage.set(x, y, 0, cov[x]);
        }
    }
    if coverage.data().iter().all(|&v| v == 0.0) {
        return Err(Error::OutOfFrame("rendered instance covers no pixel".into()));
    }
    let ids = shape.landmark_ids();
    let (landmarks, depths) = warp_vertices(mesh.to_flat().as_slice(), ids, c);
    if depths.iter().any(|&d| d <= crate::camera::EPS_NEAR) {
        return Err(Error::OutOfFrame("a landmark is behind the camera".into()));
    }
    let interocular = (mesh.vertices()[ids[0]] - mesh.vertices()[ids[1]]).norm();
    Ok(SyntheticScene {
        image,
        coverage,
        p: p.clone(),
        c: *c,
        lambda: lambda.clone(),
        landmarks,
        interocular,
        mesh,
    })
}

/// Vertices whose bilinear footprint in the rendered image is fully covered.
pub fn fully_covered_vertices(scene: &SyntheticScene, mask: &ObservationMask) -> ObservationMask {
    let proj = camera_apply(scene.mesh.to_flat().as_slice(), &scene.c).expect("3N vector");
    let cov = &scene.coverage;
    let flags = (0..mask.len())
        .map(|v| {
            if !mask.get(v) || !proj.in_front(v) {
                return false;
            }
            let q = proj.points[v];
            if !cov.contains(q.x, q.y) {
                return false;
            }
            let (x0, y0) = (q.x.floor() as usize, q.y.floor() as usize);
            let x1 = (x0 + 1).min(cov.width() - 1);
            let y1 = (y0 + 1).min(cov.height() - 1);
            [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
                .iter()
                .all(|&(x, y)| cov.get(x, y, 0) >= 1.0)
        })
        .collect();
    ObservationMask::new(flags)
}

/// Random ground truth: `p ~ N(0, (a_s·σ)²)`, `λ ~ N(0, (a_t·σ)²)`, and a
/// default camera turned by up to `max_angle` radians about x and y.
pub fn random_truth(
    shape: &ShapeModel,
    texture: &TextureModel,
    width: usize,
    height: usize,
    shape_amplitude: f64,
    texture_amplitude: f64,
    max_angle: f64,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, CameraParams, DVector<f64>) {
    let p = DVector::from_iterator(
        shape.n_components(),
        shape
            .pca()
            .eigenvalues()
            .iter()
            .map(|e| shape_amplitude * e.sqrt() * rng.sample::<f64, _>(StandardNormal)),
    );
    let lambda = DVector::from_iterator(
        texture.n_components(),
        texture
            .pca()
            .eigenvalues()
            .iter()
            .map(|e| texture_amplitude * e.sqrt() * rng.sample::<f64, _>(StandardNormal)),
    );
    let mut c = default_camera(width, height);
    let yaw = quaternion_from_axis_angle(&Vector3::y(), rng.random_range(-max_angle..=max_angle));
    let pitch = quaternion_from_axis_angle(&Vector3::x(), rng.random_range(-max_angle..=max_angle));
    c.q = quaternion_mul(&yaw, &pitch);
    (p, c, lambda)
}

/// Initialisation perturbed from the truth: extra yaw (radians), a translation
/// of `translation` object units in a random image-plane direction, and shape
/// noise `N(0, (shape_noise·σ)²)`.
pub fn perturb_init(
    shape: &ShapeModel,
    p: &DVector<f64>,
    c: &CameraParams,
    yaw: f64,
    translation: f64,
    shape_noise: f64,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, CameraParams) {
    let noise = DVector::from_iterator(
        p.len(),
        shape
            .pca()
            .eigenvalues()
            .iter()
            .map(|e| shape_noise * e.sqrt() * rng.sample::<f64, _>(StandardNormal)),
    );
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let mut c0 = *c;
    c0.q = quaternion_mul(&quaternion_from_axis_angle(&Vector3::y(), yaw), &c.q);
    c0.t += Vector3::new(angle.cos(), angle.sin(), 0.0) * translation;
    (p + noise, c0)
}

/// Texture model whose mean is shifted so that, at the scene's ground truth,
/// `F(W(p*, c*)) − T(λ*)` vanishes exactly on every vertex a fit could sample.
pub fn zero_residual_texture(
    scene: &SyntheticScene,
    features: &FeatureImage,
    shape: &ShapeModel,
    texture: &TextureModel,
) -> Result<TextureModel> {
    let models = Models::new(shape, texture)?;
    let topology = Topology::new(&scene.mesh);
    let mask = sampleable_vertices(
        &scene.mesh,
        &scene.c,
        features.width(),
        features.height(),
        &topology,
    );
    let proj = camera_apply(scene.mesh.to_flat().as_slice(), &scene.c)?;
    let sampled = sample_features(features, &proj, &mask);
    let t = models.texture.texture_instance(&scene.lambda)?;
    let ch = texture.channels();
    let mut mean = texture.pca().mean().clone();
    for v in sampled.mask.indices() {
        for c in 0..ch {
            let k = v * ch + c;
            mean[k] += sampled.values[k] - t[k];
        }
    }
    TextureModel::new(texture.pca().with_mean(mean)?, ch)
}

/// Fit configuration used throughout the synthetic test-suite.
pub fn synthetic_fit_config() -> FitConfig {
    FitConfig::default()
}
