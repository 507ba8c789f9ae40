//! Software rendering of the parameterized 3D scene.

pub mod assets;
pub mod mesh;
pub mod raster;
pub mod state;
pub mod texture;

pub use assets::{AssetLibrary, AssetManifest, MeshInfo, MeshUpload};
pub use mesh::{morph_vertices, parse_obj, Mesh};
pub use raster::{
    composite_background, process_background, render_frame, shade_fragment, texture_blur_sample, CameraFrame,
    RenderConfig,
};
pub use state::{
    AttackOverlayParams, Background, CameraParams, ColorParams, FrequencyParams, SceneParams, SceneState,
    ShapeParams, SpatialParams,
};
pub use texture::MipPyramid;
