//! Robust "in-the-wild" texture model: masked sample assembly, principal
//! component pursuit with missing values, PCA, and iterative refinement.

mod matrix;
mod pcp;
mod refine;

pub use matrix::{
    assemble_texture_matrix, build_texture_model, sample_texture, MaskedTextureMatrix,
};
pub use pcp::{
    pcp_missing_values, pcp_objective, soft_threshold, svt, PcpConfig, PcpResult, PcpStatus,
};
pub use refine::{iterative_refinement, reconstruction_residual, RefinementConfig, RefinementResult};
