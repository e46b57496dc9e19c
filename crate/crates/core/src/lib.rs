//! Crack measurement from fused LiDAR and camera data.

pub mod calib;
pub mod camera;
pub mod cloud;
pub mod denoise;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod metrology;
pub mod raster;
pub mod spatial;
pub mod synth;

pub use camera::CameraModel;
pub use cloud::PointCloud;
pub use geometry::{Point3, RigidPose, Trajectory};
pub use raster::{BinaryMask, PixelRect, RasterImage};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
