use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Simultaneous,
    ProjectOut,
}

impl Algorithm {
    pub const NAMES: [&'static str; 2] = ["project-out", "simultaneous"];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Simultaneous => "simultaneous",
            Algorithm::ProjectOut => "project-out",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simultaneous" => Ok(Algorithm::Simultaneous),
            "project-out" => Ok(Algorithm::ProjectOut),
            _ => Err(Error::invalid(format!(
                "unknown algorithm '{s}', expected one of {{{}}}",
                Algorithm::NAMES.join(", ")
            ))),
        }
    }
}

/// How the project-out normal equations are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectOutSolve {
    /// Separate shape and camera systems, cross terms dropped.
    Decoupled,
    /// One system over shape and camera together.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Landmark weight `c_l`; `None` means `1e-2·CN/L`.
    pub landmark_weight: Option<f64>,
    pub shape_prior_weight: f64,
    pub texture_prior_weight: f64,
    /// Residual mask size `K`.
    pub residual_size: usize,
    pub max_iters: usize,
    /// Stop once `‖Δp‖ + ‖Δc‖` falls below this.
    pub step_tolerance: f64,
    pub algorithm: Algorithm,
    pub project_out_solve: ProjectOutSolve,
    pub optimize_focal: bool,
    /// Focal length used when none is given with the image; `None` means `max(W, H)`.
    pub focal: Option<f64>,
    pub seed: u64,
    /// Draw a new residual subset every iteration instead of once per fit.
    pub resample_mask: bool,
    pub max_halvings: usize,
    /// Iterations of the landmark-only initialisation.
    pub landmark_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            landmark_weight: None,
            shape_prior_weight: 1e-2,
            texture_prior_weight: 1e-2,
            residual_size: 5000,
            max_iters: 50,
            step_tolerance: 1e-6,
            algorithm: Algorithm::ProjectOut,
            project_out_solve: ProjectOutSolve::Joint,
            optimize_focal: false,
            focal: None,
            seed: 0,
            resample_mask: false,
            max_halvings: 8,
            landmark_iters: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.landmark_weight.unwrap_or(0.0),
            self.shape_prior_weight,
            self.texture_prior_weight,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("cost weights must be finite and non-negative"));
        }
        if self.residual_size == 0 {
            return Err(Error::invalid("residual mask size K must be at least 1"));
        }
        if !(self.step_tolerance >= 0.0) {
            return Err(Error::invalid("step tolerance must be non-negative"));
        }
        if let Some(f) = self.focal {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::invalid(format!("focal length must be positive, got {f}")));
            }
        }
        Ok(())
    }

    /// `c_l`, defaulting to `1e-2·CN/L`.
    pub fn landmark_weight_for(&self, texture_dim: usize, n_landmarks: usize) -> f64 {
        self.landmark_weight
            .unwrap_or_else(|| 1e-2 * texture_dim as f64 / n_landmarks.max(1) as f64)
    }

    pub fn focal_for(&self, width: usize, height: usize) -> f64 {
        self.focal.unwrap_or(width.max(height) as f64)
    }
}

/// Cost weights resolved for a particular model and landmark count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub landmark: f64,
    pub shape_prior: f64,
    pub texture_prior: f64,
}

impl Weights {
    pub fn resolve(cfg: &FitConfig, texture_dim: usize, n_landmarks: usize) -> Self {
        Self {
            landmark: cfg.landmark_weight_for(texture_dim, n_landmarks),
            shape_prior: cfg.shape_prior_weight,
            texture_prior: cfg.texture_prior_weight,
        }
    }
}
