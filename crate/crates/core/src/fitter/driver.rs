use std::time::Instant;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, FitConfig, Weights};
use super::landmarks::{fit_landmarks_weighted, image_centre};
use super::linearize::{
    active_vertices, linearize, sampleable_vertices, ActiveRows, Linearization, Models, Topology,
};
use super::solve::{
    cost_on_active, least_squares_texture, project_out_delta, simultaneous_delta, CostTerms,
    DataTerm, ProjectorCache, Step,
};
use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureImage};
use crate::imaging::Image;
use crate::model::{ShapeModel, TextureModel, TriMesh};
use crate::raster::{random_priority, ObservationMask};

/// Diagnostics of one accepted (or rejected) iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_active: usize,
    pub cost_before: CostTerms,
    pub cost_after: CostTerms,
    /// Fraction of the Gauss-Newton step taken; 0 when every halving failed.
    pub step_scale: f64,
    pub delta_p_norm: f64,
    pub delta_c_norm: f64,
    pub delta_lambda_norm: f64,
    /// Time spent linearising and solving for the step.
    pub step_seconds: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitState {
    pub p: DVector<f64>,
    pub c: CameraParams,
    pub lambda: DVector<f64>,
    pub active: ObservationMask,
    pub log: Vec<IterationRecord>,
}

impl FitState {
    /// State at `(p, c, λ)` with the active set chosen as in a fit iteration.
    pub fn at(
        p: DVector<f64>,
        c: CameraParams,
        lambda: DVector<f64>,
        features: &FeatureImage,
        models: &Models<'_>,
        cfg: &FitConfig,
    ) -> Result<Self> {
        let mesh = models.shape.shape_instance(&p)?;
        let topology = Topology::new(&mesh);
        let sampleable =
            sampleable_vertices(&mesh, &c, features.width(), features.height(), &topology);
        let priority = random_priority(mesh.n_vertices(), cfg.seed);
        let vertices = active_vertices(&sampleable, cfg.residual_size, &priority);
        let mut active = ObservationMask::none(mesh.n_vertices());
        for v in vertices {
            active.set(v, true);
        }
        Ok(Self {
            p,
            c,
            lambda,
            active,
            log: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    StepTolerance,
    /// No step length decreased the cost.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: FitState,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub mesh: TriMesh,
}

fn active_list(state: &FitState) -> Result<Vec<usize>> {
    let v = state.active.indices();
    if v.is_empty() {
        return Err(Error::invalid("active residual mask is empty"));
    }
    Ok(v)
}

fn weights_for(models: &Models<'_>, landmarks: &[Vector2<f64>], cfg: &FitConfig) -> Weights {
    Weights::resolve(cfg, models.texture.pca().dim(), landmarks.len())
}

/// Terms of the overall cost at the state's parameters over its active set.
pub fn cost_eval(
    state: &FitState,
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    cfg: &FitConfig,
) -> Result<CostTerms> {
    let vertices = active_list(state)?;
    let inst = models.shape.instance_flat(&state.p)?;
    let (_, depths) = crate::camera::warp_vertices(inst.as_slice(), models.shape.landmark_ids(), &state.c);
    if !depths.is_empty() && depths.iter().all(|&d| d <= crate::camera::EPS_NEAR) {
        return Err(Error::BehindCamera {
            vertex: models.shape.landmark_ids()[0],
            depth: depths[0],
        });
    }
    cost_on_active(
        &state.p,
        &state.c,
        DataTerm::Texture(&state.lambda),
        &vertices,
        &models.texture.mean_rows(&vertices),
        &models.texture.basis_rows(&vertices),
        features,
        landmarks,
        models,
        &weights_for(models, landmarks, cfg),
    )
}

fn with_linearization<T>(
    state: &FitState,
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    cfg: &FitConfig,
    step: impl FnOnce(&Linearization<'_>) -> Result<T>,
) -> Result<T> {
    let rows = ActiveRows::new(models.texture, active_list(state)?);
    let lin = linearize(&state.p, &state.c, &rows, features, landmarks, models, cfg.optimize_focal)?;
    step(&lin)
}

/// One simultaneous Gauss-Newton step at the state, over its active set.
pub fn gn_simultaneous_step(
    state: &FitState,
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    cfg: &FitConfig,
) -> Result<Step> {
    let weights = weights_for(models, landmarks, cfg);
    with_linearization(state, features, landmarks, models, cfg, |lin| {
        simultaneous_delta(lin, &state.p, &state.lambda, models, &weights)
    })
}

/// One project-out Gauss-Newton step at the state, over its active set.
pub fn gn_project_out_step(
    state: &FitState,
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    cfg: &FitConfig,
) -> Result<Step> {
    let weights = weights_for(models, landmarks, cfg);
    with_linearization(state, features, landmarks, models, cfg, |lin| {
        let gram = ProjectorCache::new(models.shape.n_vertices()).factor(lin, models.texture)?;
        project_out_delta(lin, &gram, &state.p, models, &weights, cfg.project_out_solve)
    })
}

/// `λ` by least squares of `F(W(p, c)) − t̄` on the active entries.
pub fn recover_texture_params(
    state: &FitState,
    features: &FeatureImage,
    models: &Models<'_>,
) -> Result<DVector<f64>> {
    let vertices = active_list(state)?;
    let inst = models.shape.instance_flat(&state.p)?;
    let sampled = super::linearize::sample_active(inst.as_slice(), &state.c, &vertices, features);
    least_squares_texture(
        &sampled,
        &models.texture.mean_rows(&vertices),
        &models.texture.basis_rows(&vertices),
    )
}

/// Full pipeline: feature extraction, landmark initialisation, Gauss-Newton.
pub fn fit(
    image: &Image,
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    texture: &TextureModel,
    extractor: &dyn FeatureExtractor,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let models = Models::new(shape, texture)?;
    let features = extractor.extract(image)?;
    if features.channels() != texture.channels() {
        return Err(Error::invalid(format!(
            "extractor '{}' yields {} channels but the texture model has {}",
            extractor.name(),
            features.channels(),
            texture.channels()
        )));
    }
    let c_l = cfg.landmark_weight_for(texture.pca().dim(), landmarks.len());
    let (p0, c0) = fit_landmarks_weighted(landmarks, shape, (image.width(), image.height()), cfg, c_l)?;
    fit_from(&features, landmarks, &models, p0, c0, cfg)
}

/// Gauss-Newton from a given initialisation.
pub fn fit_from(
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    p0: DVector<f64>,
    c0: CameraParams,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let shape = models.shape;
    let n = shape.n_vertices();
    let weights = weights_for(models, landmarks, cfg);
    let (width, height) = (features.width(), features.height());
    let topology = Topology::new(&shape.mean_mesh());
    let mut priority = random_priority(n, cfg.seed);
    let mut cache = ProjectorCache::new(n);

    let mut p = p0;
    let mut c = c0;
    let mut lambda = DVector::zeros(models.texture.n_components());
    let mut log = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut vertices = Vec::new();
    let mut rows: Option<ActiveRows> = None;

    for it in 0..cfg.max_iters {
        let started = Instant::now();
        let mesh = shape.shape_instance(&p)?;
        let sampleable = sampleable_vertices(&mesh, &c, width, height, &topology);
        if it == 0 || cfg.resample_mask {
            if it > 0 {
                priority = random_priority(n, cfg.seed.wrapping_add(it as u64));
            }
            vertices = active_vertices(&sampleable, cfg.residual_size, &priority);
        } else {
            // The subset drawn at the start is kept; vertices only leave it when
            // they stop being sampleable, so logged costs form a descending chain.
            vertices.retain(|&v| sampleable.get(v));
        }
        if vertices.is_empty() {
            return Err(Error::OutOfFrame(format!(
                "iteration {it}: no vertex of the current fit is visible in the image"
            )));
        }

        let step_started = Instant::now();
        let rows = match &mut rows {
            Some(r) => {
                r.update(models.texture, &vertices);
                r
            }
            None => rows.insert(ActiveRows::new(models.texture, vertices.clone())),
        };
        let lin = linearize(&p, &c, rows, features, landmarks, models, cfg.optimize_focal)?;
        let (step, gram) = match cfg.algorithm {
            Algorithm::Simultaneous => (simultaneous_delta(&lin, &p, &lambda, models, &weights)?, None),
            Algorithm::ProjectOut => {
                let gram = cache.factor(&lin, models.texture)?;
                let step = project_out_delta(&lin, &gram, &p, models, &weights, cfg.project_out_solve)?;
                (step, Some(gram))
            }
        };
        let step_seconds = step_started.elapsed().as_secs_f64();

        let evaluate = |p: &DVector<f64>, c: &CameraParams, lam: &DVector<f64>| {
            let data = match &gram {
                Some(g) => DataTerm::ProjectedOut(g),
                None => DataTerm::Texture(lam),
            };
            cost_on_active(p, c, data, &vertices, lin.mean, lin.basis, features, landmarks, models, &weights)
        };
        let before = evaluate(&p, &c, &lambda)?;
        if !before.total.is_finite() {
            return Err(Error::NonFinite(format!("cost at iteration {it}: {before:?}")));
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let s = step.scaled(alpha);
            let p_new = &p + &s.dp;
            let c_new = c.updated(&s.dc, cfg.optimize_focal);
            let lambda_new = if s.dlambda.is_empty() { lambda.clone() } else { &lambda + &s.dlambda };
            let after = evaluate(&p_new, &c_new, &lambda_new)?;
            if after.total <= before.total {
                accepted = Some((s, p_new, c_new, lambda_new, after));
                break;
            }
            alpha *= 0.5;
        }

        let Some((s, p_new, c_new, lambda_new, after)) = accepted else {
            log.push(IterationRecord {
                iteration: it,
                n_active: vertices.len(),
                cost_before: before,
                cost_after: before,
                step_scale: 0.0,
                delta_p_norm: 0.0,
                delta_c_norm: 0.0,
                delta_lambda_norm: 0.0,
                step_seconds,
                seconds: started.elapsed().as_secs_f64(),
            });
            stop = StopReason::Stalled;
            break;
        };
        p = p_new;
        c = c_new;
        lambda = lambda_new;
        let moved = s.dp_norm() + s.dc_norm();
        log.push(IterationRecord {
            iteration: it,
            n_active: vertices.len(),
            cost_before: before,
            cost_after: after,
            step_scale: alpha,
            delta_p_norm: s.dp_norm(),
            delta_c_norm: s.dc_norm(),
            delta_lambda_norm: s.dlambda.norm(),
            step_seconds,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {it}: cost {:.6e} -> {:.6e}, step {alpha}", before.total, after.total);
        if moved < cfg.step_tolerance {
            stop = StopReason::StepTolerance;
            break;
        }
    }

    let mut active = ObservationMask::none(n);
    for &v in &vertices {
        active.set(v, true);
    }
    let mut state = FitState {
        p,
        c,
        lambda,
        active,
        log,
    };
    if cfg.algorithm == Algorithm::ProjectOut && !vertices.is_empty() {
        state.lambda = recover_texture_params(&state, features, models)?;
    }
    let mesh = shape.shape_instance(&state.p)?;
    Ok(FitResult {
        converged: stop != StopReason::MaxIterations,
        stop_reason: stop,
        state,
        mesh,
    })
}

/// Default principal point of an image.
pub fn default_principal_point(image: &Image) -> Vector2<f64> {
    image_centre(image.width(), image.height())
}
