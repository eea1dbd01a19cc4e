//! Vertex visibility and sampling of feature images at projected vertices.

mod mask;
mod raycast;
mod sampling;
mod zbuffer;

pub use mask::{random_priority, residual_mask_select, select_by_priority, ObservationMask};
pub use raycast::{occlusion_mask_raycast, ray_triangle, RAY_EPS};
pub use sampling::{sample_feature_gradients, sample_features, SampledTexture};
pub use zbuffer::{
    perspective_barycentric, rasterize, visible_vertices_zbuffer, DepthBuffer, ZBUFFER_REL_TOL,
};
pub(crate) use zbuffer::visibility_from_buffer;
