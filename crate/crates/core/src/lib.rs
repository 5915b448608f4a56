//! Range-image LiDAR processing: cylindrical sensor model, projective
//! point-to-plane registration, sparse TSDF fusion and mesh extraction.
//!
//! ```
//! use rangefuse::{LidarIntrinsics, Point3};
//!
//! let intr = LidarIntrinsics::synthetic(64, 1024, -0.43, 0.05).unwrap();
//! let ray = intr.project(&Point3::new(10.0, 0.0, -1.0)).unwrap();
//! let back = intr.unproject(ray.u, ray.v, ray.r);
//! assert!((back.norm() - ray.r).abs() < 1e-9);
//! ```
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval_metrics;
pub mod io;
pub mod lidar_model;
mod mc_tables;
pub mod mesh_extract;
pub mod range_image;
pub mod registration;
pub mod sdf_volume;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use eval_metrics::{fscore, rotation_error, sample_pairs, translation_error, FScore};
pub use lidar_model::{IntrinsicsMode, LidarIntrinsics, PixelRay};
pub use mesh_extract::{extract_mesh, TriangleMesh};
pub use range_image::{
    compute_normal_map, from_point_cloud, to_point_cloud, NormalConfig, NormalImage, NormalMethod,
    PointSet, RangeImage,
};
pub use registration::{register, RegistrationConfig, RegistrationResult, ScheduleLevel};
pub use sdf_volume::{BlockKey, IntegrationConfig, SdfSample, Voxel, VoxelBlockGrid};
pub use synth::{render_scene, Primitive, Scene};
pub use transform::{Point3, RigidTransform, Twist};
