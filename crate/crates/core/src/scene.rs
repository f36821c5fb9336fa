//! A renderable scene: mesh, point-location structure, partitions, the
//! partition BVH and the transfer-function-dependent metadata.
//!
//! Geometry (everything but `tf` and `metas`) is fixed once built. Changing
//! the transfer function only recomputes metadata from the stored value
//! ranges; the BVH build counter lets tests check that nothing else ran.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mesh::{MeshSampler, TetMesh};
use crate::par::Parallelism;
use crate::partition::{build_partitions, KdBuildConfig, Partition, ValueRange};
use crate::transfer::{compute_metas, PartitionMeta, TransferFunction};
use crate::traversal::{PartitionBvh, TraversalConfig};

#[derive(Debug, Default)]
pub struct SceneCounters {
    bvh_builds: AtomicU64,
    meta_recomputes: AtomicU64,
}

impl SceneCounters {
    pub fn bvh_builds(&self) -> u64 {
        self.bvh_builds.load(Ordering::Relaxed)
    }

    pub fn meta_recomputes(&self) -> u64 {
        self.meta_recomputes.load(Ordering::Relaxed)
    }
}

#[derive(Debug)]
pub struct Scene {
    mesh: TetMesh,
    sampler: MeshSampler,
    partitions: Vec<Partition>,
    value_ranges: Vec<ValueRange>,
    bvh: PartitionBvh,
    tf: TransferFunction,
    metas: Vec<PartitionMeta>,
    active_nodes: Vec<bool>,
    traversal: TraversalConfig,
    counters: SceneCounters,
}

impl Scene {
    /// Builds partitions with `kd` (or the size-scaled default), the BVH, and
    /// metadata for `tf`. `epsilon` defaults to a fraction of the bounds
    /// diagonal.
    pub fn build(
        mesh: TetMesh,
        kd: Option<KdBuildConfig>,
        tf: TransferFunction,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let kd = kd.unwrap_or_else(|| KdBuildConfig::for_tet_count(mesh.tet_count()));
        kd.validate()?;
        let partitions = build_partitions(&mesh, &kd);
        Scene::with_partitions(mesh, partitions, tf, epsilon)
    }

    /// Uses caller-supplied partitions. They must be disjoint and cover the
    /// mesh; only their bounds and value ranges are read here.
    pub fn with_partitions(
        mesh: TetMesh,
        partitions: Vec<Partition>,
        tf: TransferFunction,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidParams(
                "scene needs at least one partition".into(),
            ));
        }
        let traversal = match epsilon {
            Some(e) if e > 0.0 => TraversalConfig { epsilon: e },
            Some(e) => {
                return Err(Error::InvalidParams(format!(
                    "epsilon must be positive, got {e}"
                )))
            }
            None => TraversalConfig::for_bounds(&mesh.bounds()),
        };
        let sampler = MeshSampler::new(&mesh);
        let value_ranges = partitions.iter().map(|p| p.value_range).collect();
        let counters = SceneCounters::default();
        let bvh = PartitionBvh::build(&partitions);
        counters.bvh_builds.fetch_add(1, Ordering::Relaxed);
        let mut scene = Scene {
            mesh,
            sampler,
            partitions,
            value_ranges,
            bvh,
            tf: tf.clone(),
            metas: Vec::new(),
            active_nodes: Vec::new(),
            traversal,
            counters,
        };
        scene.update_transfer_function(tf, Parallelism::Parallel);
        Ok(scene)
    }

    /// Swaps in a new transfer function and recomputes all partition
    /// metadata. Returns the new metas.
    pub fn update_transfer_function(
        &mut self,
        tf: TransferFunction,
        mode: Parallelism,
    ) -> &[PartitionMeta] {
        self.metas = compute_metas(&tf, &self.value_ranges, mode);
        self.active_nodes = self.bvh.active_nodes(&self.metas);
        self.tf = tf;
        self.counters
            .meta_recomputes
            .fetch_add(1, Ordering::Relaxed);
        &self.metas
    }

    /// Rebuilds the partition BVH. Only needed when partition geometry
    /// changes, which never happens through the public API after build.
    pub fn rebuild_bvh(&mut self) {
        self.bvh = PartitionBvh::build(&self.partitions);
        self.active_nodes = self.bvh.active_nodes(&self.metas);
        self.counters.bvh_builds.fetch_add(1, Ordering::Relaxed);
    }

    pub fn mesh(&self) -> &TetMesh {
        &self.mesh
    }

    pub fn sampler(&self) -> &MeshSampler {
        &self.sampler
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn bvh(&self) -> &PartitionBvh {
        &self.bvh
    }

    pub fn transfer_function(&self) -> &TransferFunction {
        &self.tf
    }

    pub fn metas(&self) -> &[PartitionMeta] {
        &self.metas
    }

    /// Per BVH node, whether any partition below it is active.
    pub fn active_nodes(&self) -> &[bool] {
        &self.active_nodes
    }

    pub fn traversal_config(&self) -> TraversalConfig {
        self.traversal
    }

    pub fn counters(&self) -> &SceneCounters {
        &self.counters
    }

    /// Sum of per-element list accesses over all partitions.
    pub fn element_reads(&self) -> u64 {
        self.partitions.iter().map(|p| p.element_reads()).sum()
    }

    /// Plain-text partition listing for diagnostics, one line per partition.
    pub fn dump_partitions(&self) -> String {
        let mut out = String::from("# id elements min_x min_y min_z max_x max_y max_z range_min range_max max_opacity sigma active\n");
        for (p, m) in self.partitions.iter().zip(&self.metas) {
            let b = p.bounds;
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {} {} {} {} {}\n",
                p.id,
                p.element_count(),
                b.min.x,
                b.min.y,
                b.min.z,
                b.max.x,
                b.max.y,
                b.max.z,
                p.value_range.min,
                p.value_range.max,
                m.max_opacity,
                m.normalized_variance,
                m.active
            ));
        }
        out
    }
}
