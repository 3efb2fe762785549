//! Cameras and the differentiable splat renderer. Only opacity and color
//! receive gradients; centers, scale and rotation are constants.

mod camera;
mod io;
mod splat;

pub use camera::{sample_camera, CameraPose, OrbitConfig, ViewPoint};
pub use io::{read_raw_planes, read_raw_planes_file, write_png, write_raw_planes, write_raw_planes_file};
pub use splat::{
    composite, composite_backward, depth_order, project_splats, render_backward, splat_render, RenderTape, RenderedImage, Splat,
    ALPHA_CLAMP, CUTOFF_SIGMAS, NEAR_PLANE,
};
