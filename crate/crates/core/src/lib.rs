//! Statistical 3D morphable models with feature-based texture, fitted to
//! images by Gauss-Newton optimisation.

pub mod camera;
pub mod error;
pub mod fitter;
pub mod features;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod model;
pub mod raster;
pub mod synth;
pub mod texture;

pub use camera::CameraParams;
pub use error::{Error, Result};
pub use features::{FeatureExtractor, FeatureImage};
pub use imaging::Image;
pub use model::{PcaModel, ShapeModel, TextureModel, TriMesh};
