//! Scalar-field point queries over a tetrahedral mesh.
//!
//! A BVH over tet bounding boxes narrows each query to a handful of
//! candidates, which are then tested with precomputed barycentric inverses.

use std::collections::HashMap;

use nalgebra::Matrix3;

use super::{Centering, TetMesh};
use crate::geom::{Aabb, Vec3};

/// Barycentric coordinates down to `-POINT_IN_TET_TOLERANCE` count as inside.
pub const POINT_IN_TET_TOLERANCE: f64 = 1e-9;

// A cached tet is trusted without a BVH query only when the point is at
// least this far inside it in barycentric terms, so shared-face ties still go
// through the lowest-index rule.
const HINT_MARGIN: f64 = 1e-6;

const LEAF_SIZE: usize = 8;

// Face hops tried from the hinted tet before falling back to the BVH.
const MAX_WALK: usize = 6;

const NO_NEIGHBOR: u32 = u32::MAX;

/// Per-ray cache of the last tet that answered a query.
pub type SampleHint = Option<u32>;

#[derive(Clone, Copy, Debug)]
struct TetRecord {
    origin: Vec3,
    inverse: Matrix3<f64>,
    values: [f64; 4],
    // Tet across the face opposite each corner.
    neighbors: [u32; 4],
}

impl TetRecord {
    /// `(b0, b1, b2, b3)` for `p`; they sum to one by construction.
    #[inline]
    fn barycentric(&self, p: &Vec3) -> [f64; 4] {
        let l = self.inverse * (p - self.origin);
        [1.0 - l.x - l.y - l.z, l.x, l.y, l.z]
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    // Leaf: first index into `order`; interior: index of the right child
    // (the left child is always `self + 1`).
    offset: u32,
    // Zero for interior nodes.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct MeshSampler {
    centering: Centering,
    tets: Vec<TetRecord>,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl MeshSampler {
    pub fn new(mesh: &TetMesh) -> Self {
        let neighbors = face_neighbors(mesh.tets());
        let tets = (0..mesh.tet_count())
            .map(|t| {
                let [a, b, c, d] = mesh.tet_corners(t);
                let m = Matrix3::from_columns(&[b - a, c - a, d - a]);
                let inverse = m
                    .try_inverse()
                    .expect("non-degenerate tets are guaranteed by TetMesh");
                let values = match mesh.centering() {
                    Centering::Vertex => mesh.tets()[t].map(|i| mesh.field()[i as usize] as f64),
                    Centering::Cell => [mesh.field()[t] as f64; 4],
                };
                TetRecord {
                    origin: a,
                    inverse,
                    values,
                    neighbors: neighbors[t],
                }
            })
            .collect();

        let boxes: Vec<Aabb> = (0..mesh.tet_count()).map(|t| mesh.tet_bounds(t)).collect();
        let mut order: Vec<u32> = (0..mesh.tet_count() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.tet_count() / LEAF_SIZE + 1);
        build(&boxes, &mut order, 0, &mut nodes);

        MeshSampler {
            centering: mesh.centering(),
            tets,
            nodes,
            order,
        }
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Lowest-index tet containing `p`, if any.
    pub fn locate(&self, p: &Vec3) -> Option<u32> {
        let mut best: Option<u32> = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let index = stack[sp];
            let node = &self.nodes[index as usize];
            if !node.bounds.contains(p) {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &t in &self.order[start..start + node.count as usize] {
                    if best.is_some_and(|b| b <= t) {
                        continue;
                    }
                    if self.contains(t, p) {
                        best = Some(t);
                    }
                }
            } else {
                stack[sp] = node.offset;
                stack[sp + 1] = index + 1;
                sp += 2;
            }
        }
        best
    }

    /// Barycentric coordinates of `p` with respect to tet `t`.
    pub fn barycentric(&self, t: u32, p: &Vec3) -> [f64; 4] {
        self.tets[t as usize].barycentric(p)
    }

    fn contains(&self, t: u32, p: &Vec3) -> bool {
        self.barycentric(t, p)
            .iter()
            .all(|&b| b >= -POINT_IN_TET_TOLERANCE)
    }

    fn value_in(&self, t: u32, p: &Vec3) -> f64 {
        let rec = &self.tets[t as usize];
        match self.centering {
            Centering::Cell => rec.values[0],
            Centering::Vertex => {
                let b = rec.barycentric(p);
                b[0] * rec.values[0]
                    + b[1] * rec.values[1]
                    + b[2] * rec.values[2]
                    + b[3] * rec.values[3]
            }
        }
    }

    /// Field value at `p`, or `None` in unoccupied space.
    pub fn sample_field(&self, p: &Vec3) -> Option<f64> {
        self.locate(p).map(|t| self.value_in(t, p))
    }

    /// Same result as [`sample_field`](Self::sample_field), but first tries the
    /// tet remembered in `hint` and updates it. Consecutive samples along a
    /// ray mostly stay in the same tet.
    #[inline]
    pub fn sample_field_hinted(&self, p: &Vec3, hint: &mut SampleHint) -> Option<f64> {
        if let Some(mut t) = *hint {
            // Walk toward `p` across the most violated face. Only a point
            // clearly inside a tet is trusted, as `locate` would agree.
            for _ in 0..=MAX_WALK {
                let rec = &self.tets[t as usize];
                let b = rec.barycentric(p);
                let (worst, &low) = b
                    .iter()
                    .enumerate()
                    .min_by(|x, y| x.1.total_cmp(y.1))
                    .expect("four coordinates");
                if low > HINT_MARGIN {
                    *hint = Some(t);
                    return Some(match self.centering {
                        Centering::Cell => rec.values[0],
                        Centering::Vertex => {
                            b[0] * rec.values[0]
                                + b[1] * rec.values[1]
                                + b[2] * rec.values[2]
                                + b[3] * rec.values[3]
                        }
                    });
                }
                let next = rec.neighbors[worst];
                if next == NO_NEIGHBOR || low > -POINT_IN_TET_TOLERANCE {
                    break;
                }
                t = next;
            }
        }
        let t = self.locate(p);
        if t.is_some() {
            *hint = t;
        }
        t.map(|t| self.value_in(t, p))
    }

    /// Number of BVH nodes; exposed for diagnostics.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// For each tet, the tet sharing the face opposite each corner, if any.
fn face_neighbors(tets: &[[u32; 4]]) -> Vec<[u32; 4]> {
    let mut out = vec![[NO_NEIGHBOR; 4]; tets.len()];
    let mut open: HashMap<[u32; 3], (u32, u8)> = HashMap::with_capacity(tets.len() * 2);
    for (t, corners) in tets.iter().enumerate() {
        for i in 0..4 {
            let mut face = [0u32; 3];
            let mut k = 0;
            for (j, &v) in corners.iter().enumerate() {
                if j != i {
                    face[k] = v;
                    k += 1;
                }
            }
            face.sort_unstable();
            match open.remove(&face) {
                Some((other, j)) => {
                    out[t][i] = other;
                    out[other as usize][j as usize] = t as u32;
                }
                None => {
                    open.insert(face, (t as u32, i as u8));
                }
            }
        }
    }
    out
}

fn build(boxes: &[Aabb], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |b, &t| b.join(&boxes[t as usize]));
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

    let centroids = order.iter().fold(Aabb::empty(), |mut b, &t| {
        b.grow(&boxes[t as usize].center());
        b
    });
    let axis = centroids.longest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let ca = boxes[a as usize].center()[axis];
        let cb = boxes[b as usize].center()[axis];
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(boxes, left, offset, nodes);
    let right_index = build(boxes, right, offset + mid, nodes);
    nodes[index].offset = right_index as u32;
    index
}
