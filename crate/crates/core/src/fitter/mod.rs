//! Gauss-Newton fitting of a 3DMM to a feature image: the overall cost,
//! simultaneous and project-out solvers, landmark initialisation and metrics.

mod config;
mod driver;
mod landmarks;
mod linearize;
mod metrics;
mod solve;

pub use config::{Algorithm, FitConfig, ProjectOutSolve, Weights};
pub use driver::{
    cost_eval, default_principal_point, fit, fit_from, gn_project_out_step, gn_simultaneous_step,
    recover_texture_params, FitResult, FitState, IterationRecord, StopReason,
};
pub use landmarks::{fit_landmarks_only, image_centre, similarity_camera};
pub use linearize::{
    active_vertices, camera_columns, linearize, sampleable_vertices, ActiveRows, Linearization, Models,
    Topology, GRAZING_COS,
};
pub use metrics::{ced_auc, normalized_dense_error, CedSummary, CED_SAMPLES};
pub use solve::{
    least_squares_texture, project_out_delta, simultaneous_delta, CostTerms, ProjectorCache, Step,
};
