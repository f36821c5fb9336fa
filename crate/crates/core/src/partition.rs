//! Convex, disjoint partitions of the mesh built from the leaves of a
//! median-split KD-tree, each shrunk to fit the elements it holds.
//!
//! An element whose bounding box straddles a splitting plane is listed in
//! both children, so one tet can belong to several partitions. Each
//! partition's value range still covers the whole of every listed element.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec3};
use crate::mesh::TetMesh;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Longest axis of the node, at the median of element centroids.
    #[default]
    MedianOfCentroids,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdBuildConfig {
    pub max_leaf_elements: usize,
    pub max_depth: usize,
    #[serde(default)]
    pub split_rule: SplitRule,
}

impl KdBuildConfig {
    /// Coarse partitioning that scales with mesh size: at least 64 elements
    /// per leaf, or `tet_count / 4096` for large meshes.
    pub fn for_tet_count(tet_count: usize) -> Self {
        KdBuildConfig {
            max_leaf_elements: (tet_count / 4096).max(64),
            max_depth: 24,
            split_rule: SplitRule::MedianOfCentroids,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.max_leaf_elements == 0 || self.max_depth == 0 {
            return Err(crate::Error::InvalidParams(
                "KD max_leaf_elements and max_depth must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why the KD recursion stopped at a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafReason {
    /// At or below `max_leaf_elements`.
    Size,
    /// Hit `max_depth`.
    Depth,
    /// No median plane separates the elements.
    Unsplittable,
}

/// Closed scalar interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn new(min: f64, max: f64) -> Self {
        ValueRange { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug)]
pub struct Partition {
    pub id: usize,
    /// Refined bounds, always inside `leaf_bounds`.
    pub bounds: Aabb,
    /// The KD leaf cell this partition came from.
    pub leaf_bounds: Aabb,
    pub value_range: ValueRange,
    pub leaf_reason: LeafReason,
    element_ids: Vec<u32>,
    element_reads: AtomicU64,
}

impl Clone for Partition {
    fn clone(&self) -> Self {
        Partition {
            id: self.id,
            bounds: self.bounds,
            leaf_bounds: self.leaf_bounds,
            value_range: self.value_range,
            leaf_reason: self.leaf_reason,
            element_ids: self.element_ids.clone(),
            element_reads: AtomicU64::new(self.element_reads.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.bounds == other.bounds
            && self.leaf_bounds == other.leaf_bounds
            && self.value_range == other.value_range
            && self.element_ids == other.element_ids
    }
}

impl Partition {
    /// A partition with explicit geometry and range; used for scenes that are
    /// not derived from a mesh (tests, benchmarks of traversal alone).
    pub fn from_parts(
        id: usize,
        bounds: Aabb,
        value_range: ValueRange,
        element_ids: Vec<u32>,
    ) -> Self {
        Partition {
            id,
            bounds,
            leaf_bounds: bounds,
            value_range,
            leaf_reason: LeafReason::Size,
            element_ids,
            element_reads: AtomicU64::new(0),
        }
    }

    /// Tet indices listed in this partition. Every call is counted.
    pub fn elements(&self) -> &[u32] {
        self.element_reads.fetch_add(1, Ordering::Relaxed);
        &self.element_ids
    }

    pub fn element_count(&self) -> usize {
        self.element_ids.len()
    }

    /// How many times [`elements`](Self::elements) has been called.
    pub fn element_reads(&self) -> u64 {
        self.element_reads.load(Ordering::Relaxed)
    }
}

/// Builds the KD-tree over `mesh` and returns its leaves as refined
/// partitions, numbered in depth-first (left before right) order.
pub fn build_partitions(mesh: &TetMesh, config: &KdBuildConfig) -> Vec<Partition> {
    let boxes: Vec<Aabb> = (0..mesh.tet_count()).map(|t| mesh.tet_bounds(t)).collect();
    let centroids: Vec<Vec3> = (0..mesh.tet_count())
        .map(|t| mesh.tet_centroid(t))
        .collect();
    let mut leaves = Vec::new();
    split(
        &boxes,
        &centroids,
        (0..mesh.tet_count() as u32).collect(),
        mesh.bounds(),
        0,
        config,
        &mut leaves,
    );

    leaves
        .into_iter()
        .enumerate()
        .map(|(id, (cell, elements, leaf_reason))| {
            let bounds = refine_bounds(elements.iter().map(|&t| boxes[t as usize]), &cell);
            let value_range = element_value_range(mesh, &elements);
            Partition {
                id,
                bounds,
                leaf_bounds: cell,
                value_range,
                leaf_reason,
                element_ids: elements,
                element_reads: AtomicU64::new(0),
            }
        })
        .collect()
}

fn split(
    boxes: &[Aabb],
    centroids: &[Vec3],
    elements: Vec<u32>,
    cell: Aabb,
    depth: usize,
    config: &KdBuildConfig,
    leaves: &mut Vec<(Aabb, Vec<u32>, LeafReason)>,
) {
    let n = elements.len();
    if n <= config.max_leaf_elements {
        leaves.push((cell, elements, LeafReason::Size));
        return;
    }
    if depth >= config.max_depth {
        leaves.push((cell, elements, LeafReason::Depth));
        return;
    }

    let axis = cell.longest_axis();
    let lo = cell.min[axis];
    let hi = cell.max[axis];
    // Duplicated elements may have centroids outside this cell.
    let key = |t: u32| centroids[t as usize][axis].clamp(lo, hi);
    let mut by_key = elements.clone();
    by_key.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let plane = key(by_key[n / 2]);
    if plane <= lo || plane >= hi {
        leaves.push((cell, elements, LeafReason::Unsplittable));
        return;
    }

    let left: Vec<u32> = elements
        .iter()
        .copied()
        .filter(|&t| boxes[t as usize].min[axis] < plane)
        .collect();
    let right: Vec<u32> = elements
        .iter()
        .copied()
        .filter(|&t| boxes[t as usize].max[axis] > plane)
        .collect();
    if left.len() == n && right.len() == n {
        leaves.push((cell, elements, LeafReason::Unsplittable));
        return;
    }

    let mut left_cell = cell;
    left_cell.max[axis] = plane;
    let mut right_cell = cell;
    right_cell.min[axis] = plane;
    split(boxes, centroids, left, left_cell, depth + 1, config, leaves);
    split(
        boxes,
        centroids,
        right,
        right_cell,
        depth + 1,
        config,
        leaves,
    );
}

/// Intersection of the union of `element_boxes` with the leaf cell.
pub fn refine_bounds(element_boxes: impl IntoIterator<Item = Aabb>, leaf_bounds: &Aabb) -> Aabb {
    element_boxes
        .into_iter()
        .fold(Aabb::empty(), |acc, b| acc.join(&b))
        .intersection(leaf_bounds)
}

/// Recomputes `partition.bounds` from its elements and the given leaf cell.
pub fn refine_partition_bounds(
    mut partition: Partition,
    mesh: &TetMesh,
    leaf_bounds: &Aabb,
) -> Partition {
    let bounds = refine_bounds(
        partition
            .elements()
            .iter()
            .map(|&t| mesh.tet_bounds(t as usize)),
        leaf_bounds,
    );
    partition.bounds = bounds;
    partition.leaf_bounds = *leaf_bounds;
    partition
}

/// Min/max over the full value range of every listed element.
pub fn element_value_range(mesh: &TetMesh, elements: &[u32]) -> ValueRange {
    let (min, max) = elements
        .iter()
        .map(|&t| mesh.tet_value_range(t as usize))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        });
    ValueRange { min, max }
}
