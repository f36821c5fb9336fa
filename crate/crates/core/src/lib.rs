//! CPU direct volume rendering of unstructured tetrahedral meshes with
//! transfer-function-aware empty space skipping and adaptive sampling.
//!
//! The pipeline:
//!
//! 1. [`mesh`]: load or generate a [`TetMesh`] and build a [`MeshSampler`]
//!    for point queries.
//! 2. [`partition`]: split the mesh into convex, disjoint, shrunk-to-fit
//!    partitions with scalar ranges.
//! 3. [`transfer`]: per transfer function, derive each partition's maximum
//!    opacity and normalized color variance.
//! 4. [`traversal`]: walk rays through active partitions front to back.
//! 5. [`render`]: march each partition at a step chosen from its variance.
//! 6. [`metrics`]: compare against the reference marcher (SSIM, samples).

pub mod config;
pub mod error;
pub mod geom;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod partition;
pub mod render;
pub mod scene;
pub mod transfer;
pub mod traversal;

pub use config::SceneConfig;
pub use error::{Error, Result};
pub use geom::{Aabb, Ray, Vec3};
pub use image::RgbImage;
pub use mesh::{Centering, MeshSampler, TetMesh};
pub use par::Parallelism;
pub use partition::{KdBuildConfig, Partition, ValueRange};
pub use render::{AdaptiveParams, Camera, Framebuffer, RenderMode, RenderOptions, RenderStats};
pub use scene::Scene;
pub use transfer::{PartitionMeta, TransferFunction};
pub use traversal::{PartitionBvh, PartitionInterval, TraversalConfig};
