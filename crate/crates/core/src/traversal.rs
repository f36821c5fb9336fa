//! Front-to-back iteration of a ray through the partitions.
//!
//! Each query returns the nearest active partition the ray still has to
//! visit, with its `[t_enter, t_exit]` interval. Inactive (fully transparent)
//! partitions and the unoccupied space between partitions are never returned,
//! so the renderer takes no samples there.
//!
//! After visiting a partition the ray's `t_min` is moved to `t_exit - ε`.
//! Backing off by ε keeps a neighbor whose face is coplanar with the exit face
//! reachable; the just-visited id is excluded explicitly so the backstep
//! cannot return the same partition again.

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Ray};
use crate::partition::Partition;
use crate::transfer::PartitionMeta;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalConfig {
    /// Backstep applied to `t_min` after each partition, in world units.
    pub epsilon: f64,
}

impl TraversalConfig {
    /// ε proportional to the scene size.
    pub fn for_bounds(bounds: &Aabb) -> Self {
        let d = bounds.diagonal();
        TraversalConfig {
            epsilon: if d > 0.0 { 1e-4 * d } else { 1e-4 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionInterval {
    pub partition_id: usize,
    pub t_enter: f64,
    pub t_exit: f64,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    // Leaf: first index into `order`; interior: right child index.
    offset: u32,
    count: u32,
}

/// BVH over partition boxes. Depends only on partition geometry, never on
/// the transfer function.
#[derive(Clone, Debug)]
pub struct PartitionBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl PartitionBvh {
    pub fn build(partitions: &[Partition]) -> Self {
        let boxes: Vec<Aabb> = partitions.iter().map(|p| p.bounds).collect();
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let mut nodes = Vec::new();
        if !boxes.is_empty() {
            build(&boxes, &mut order, 0, &mut nodes);
        }
        PartitionBvh { nodes, order }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// All partition ids referenced by leaves, in leaf order.
    pub fn leaf_partitions(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.count > 0)
            .flat_map(|n| self.order[n.offset as usize..(n.offset + n.count) as usize].iter())
            .map(|&i| i as usize)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    /// Per node, whether its subtree holds any active partition. Cheap to
    /// recompute after a transfer function change; the tree is untouched.
    pub fn active_nodes(&self, metas: &[PartitionMeta]) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        // Children always come after their parent.
        for (i, node) in self.nodes.iter().enumerate().rev() {
            mask[i] = if node.count > 0 {
                let start = node.offset as usize;
                self.order[start..start + node.count as usize]
                    .iter()
                    .any(|&p| metas[p as usize].active)
            } else {
                mask[i + 1] || mask[node.offset as usize]
            };
        }
        mask
    }
}

fn build(boxes: &[Aabb], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |b, &i| b.join(&boxes[i as usize]));
    let index = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            offset: offset as u32,
            count: order.len() as u32,
        });
        return index;
    }
    nodes.push(Node {
        bounds,
        offset: 0,
        count: 0,
    });
    let centroids = order.iter().fold(Aabb::empty(), |mut b, &i| {
        b.grow(&boxes[i as usize].center());
        b
    });
    let axis = centroids.longest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        boxes[a as usize].center()[axis]
            .total_cmp(&boxes[b as usize].center()[axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(boxes, left, offset, nodes);
    let right_index = build(boxes, right, offset + mid, nodes);
    nodes[index].offset = right_index as u32;
    index
}

/// Clipped interval of `bounds` for `ray` if it passes every visitation rule
/// except activity and the last-visited exclusion.
#[inline]
pub(crate) fn candidate_interval(ray: &Ray, bounds: &Aabb, epsilon: f64) -> Option<(f64, f64)> {
    let (a, b) = ray.box_interval(bounds)?;
    clip_interval(ray, a, b, epsilon)
}

/// The visitation rules applied to a raw slab interval `[a, b]`.
#[inline]
fn clip_interval(ray: &Ray, a: f64, b: f64, epsilon: f64) -> Option<(f64, f64)> {
    if b <= ray.t_min + epsilon {
        return None;
    }
    let t_enter = a.max(ray.t_min);
    let t_exit = b.min(ray.t_max);
    if t_enter >= ray.t_max || t_exit - t_enter < epsilon {
        return None;
    }
    Some((t_enter, t_exit))
}

/// The nearest active partition along `ray` beyond `ray.t_min`, skipping
/// `exclude` (the partition just visited). Ties on `t_enter` go to the lower id.
/// `active_nodes`, from [`PartitionBvh::active_nodes`], prunes subtrees with
/// nothing active; the result is the same with or without it.
pub fn next_active_interval(
    bvh: &PartitionBvh,
    partitions: &[Partition],
    metas: &[PartitionMeta],
    active_nodes: Option<&[bool]>,
    ray: &Ray,
    exclude: Option<usize>,
    config: &TraversalConfig,
) -> Option<PartitionInterval> {
    if bvh.nodes.is_empty() {
        return None;
    }
    let eps = config.epsilon;
    let mut best: Option<PartitionInterval> = None;
    let mut stack = [0u32; 64];
    let mut sp = 1;

    while sp > 0 {
        sp -= 1;
        let index = stack[sp];
        if active_nodes.is_some_and(|m| !m[index as usize]) {
            continue;
        }
        let node = &bvh.nodes[index as usize];
        let Some((a, b)) = ray.box_interval(&node.bounds) else {
            continue;
        };
        let near = a.max(ray.t_min);
        if b <= ray.t_min + eps || near >= ray.t_max {
            continue;
        }
        if let Some(best) = &best {
            if near > best.t_enter {
                continue;
            }
        }

        if node.count > 0 {
            let start = node.offset as usize;
            for &pid in &bvh.order[start..start + node.count as usize] {
                let pid = pid as usize;
                if exclude == Some(pid) || !metas[pid].active {
                    continue;
                }
                let Some((t_enter, t_exit)) = candidate_interval(ray, &partitions[pid].bounds, eps)
                else {
                    continue;
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        t_enter < b.t_enter || (t_enter == b.t_enter && pid < b.partition_id)
                    }
                };
                if better {
                    best = Some(PartitionInterval {
                        partition_id: pid,
                        t_enter,
                        t_exit,
                    });
                }
            }
        } else {
            // Visit the nearer child first so pruning kicks in sooner.
            let left = index + 1;
            let right = node.offset;
            let near_of = |i: u32| {
                ray.box_interval(&bvh.nodes[i as usize].bounds)
                    .map_or(f64::INFINITY, |(a, _)| a)
            };
            let (first, second) = if near_of(left) <= near_of(right) {
                (left, right)
            } else {
                (right, left)
            };
            stack[sp] = second;
            stack[sp + 1] = first;
            sp += 2;
        }
    }
    best
}

/// Moves `t_min` to just before the exit of the visited interval.
pub fn advance_ray(ray: &Ray, interval: &PartitionInterval, config: &TraversalConfig) -> Ray {
    let mut next = *ray;
    next.t_min = interval.t_exit - config.epsilon;
    next
}

/// Iterator over every active partition interval of a ray, in order.
///
/// Yields exactly what repeated [`next_active_interval`] calls with
/// [`advance_ray`] would. The BVH is walked once per ray to collect every
/// candidate; the rules only ever drop candidates as `t_min` grows, so later
/// steps just rescan that short list.
pub struct Traversal<'a> {
    bvh: &'a PartitionBvh,
    partitions: &'a [Partition],
    metas: &'a [PartitionMeta],
    active_nodes: Option<&'a [bool]>,
    config: TraversalConfig,
    ray: Ray,
    last: Option<usize>,
    // (partition id, slab entry, slab exit), gathered on the first step.
    candidates: Option<Vec<(usize, f64, f64)>>,
}

impl<'a> Traversal<'a> {
    pub fn new(
        bvh: &'a PartitionBvh,
        partitions: &'a [Partition],
        metas: &'a [PartitionMeta],
        ray: Ray,
        config: TraversalConfig,
    ) -> Self {
        Traversal {
            bvh,
            partitions,
            metas,
            active_nodes: None,
            config,
            ray,
            last: None,
            candidates: None,
        }
    }

    /// Prune with a mask from [`PartitionBvh::active_nodes`] for the same metas.
    pub fn with_active_nodes(mut self, mask: &'a [bool]) -> Self {
        self.active_nodes = Some(mask);
        self
    }

    fn gather(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        if self.bvh.nodes.is_empty() {
            return out;
        }
        let ray = &self.ray;
        let eps = self.config.epsilon;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let index = stack[sp];
            if self.active_nodes.is_some_and(|m| !m[index as usize]) {
                continue;
            }
            let node = &self.bvh.nodes[index as usize];
            let Some((a, b)) = ray.box_interval(&node.bounds) else {
                continue;
            };
            if clip_interval(ray, a, b, eps).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &pid in &self.bvh.order[start..start + node.count as usize] {
                    let pid = pid as usize;
                    if !self.metas[pid].active {
                        continue;
                    }
                    let Some((a, b)) = ray.box_interval(&self.partitions[pid].bounds) else {
                        continue;
                    };
                    if clip_interval(ray, a, b, eps).is_some() {
                        out.push((pid, a, b));
                    }
                }
            } else {
                stack[sp] = node.offset;
                stack[sp + 1] = index + 1;
                sp += 2;
            }
        }
        out
    }
}

impl Iterator for Traversal<'_> {
    type Item = PartitionInterval;

    fn next(&mut self) -> Option<PartitionInterval> {
        if self.candidates.is_none() {
            self.candidates = Some(self.gather());
        }
        let eps = self.config.epsilon;
        let ray = self.ray;
        let last = self.last;
        let candidates = self.candidates.as_mut()?;
        let mut best: Option<PartitionInterval> = None;
        candidates.retain(|&(pid, a, b)| {
            let Some((t_enter, t_exit)) = clip_interval(&ray, a, b, eps) else {
                return false;
            };
            let better = last != Some(pid)
                && match &best {
                    None => true,
                    Some(b) => {
                        t_enter < b.t_enter || (t_enter == b.t_enter && pid < b.partition_id)
                    }
                };
            if better {
                best = Some(PartitionInterval {
                    partition_id: pid,
                    t_enter,
                    t_exit,
                });
            }
            true
        });
        match best {
            Some(iv) => {
                self.ray = advance_ray(&self.ray, &iv, &self.config);
                self.last = Some(iv.partition_id);
            }
            None => candidates.clear(),
        }
        best
    }
}
