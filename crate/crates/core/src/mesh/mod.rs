//! Tetrahedral mesh data model.
//!
//! Positions and field values are stored in single precision, the same
//! representation the `TET1` file format uses, so a save/load cycle is exact.
//! All geometry derived from them (bounds, volumes, barycentrics) is computed
//! in double precision.

mod generate;
mod io;
mod sampler;

pub use generate::{generate_synthetic, AnalyticField};
pub use io::{load_mesh, read_mesh, save_mesh, write_mesh};
pub use sampler::{MeshSampler, SampleHint, POINT_IN_TET_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

/// Relative degeneracy threshold: a tet is rejected when its absolute volume
/// is below this times the cube of the bounds diagonal.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    #[serde(alias = "vertex-centered")]
    Vertex,
    #[serde(alias = "cell-centered")]
    Cell,
}

impl Centering {
    pub fn name(self) -> &'static str {
        match self {
            Centering::Vertex => "vertex",
            Centering::Cell => "cell",
        }
    }
}

impl std::str::FromStr for Centering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vertex" => Ok(Centering::Vertex),
            "cell" => Ok(Centering::Cell),
            other => Err(format!(
                "unknown centering {other:?} (expected vertex or cell)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TetMesh {
    vertices: Vec<[f32; 3]>,
    tets: Vec<[u32; 4]>,
    field: Vec<f32>,
    centering: Centering,
    bounds: Aabb,
}

impl TetMesh {
    /// Validates every mesh invariant and computes the bounds.
    pub fn new(
        vertices: Vec<[f32; 3]>,
        tets: Vec<[u32; 4]>,
        field: Vec<f32>,
        centering: Centering,
    ) -> Result<Self> {
        if tets.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let expected = match centering {
            Centering::Vertex => vertices.len(),
            Centering::Cell => tets.len(),
        };
        if field.len() != expected {
            return Err(Error::FieldLength {
                centering: centering.name(),
                expected,
                actual: field.len(),
            });
        }
        for (t, tet) in tets.iter().enumerate() {
            if let Some(&index) = tet.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(Error::IndexOutOfRange {
                    tet: t,
                    index,
                    vertex_count: vertices.len(),
                });
            }
        }

        let bounds = Aabb::from_points(vertices.iter().map(to_vec3).collect::<Vec<_>>().iter());
        let mesh = TetMesh {
            vertices,
            tets,
            field,
            centering,
            bounds,
        };
        let min_volume = DEGENERACY_TOLERANCE * mesh.bounds.diagonal().powi(3);
        for t in 0..mesh.tets.len() {
            let volume = mesh.tet_signed_volume(t);
            if volume.abs() < min_volume || !volume.is_finite() {
                return Err(Error::DegenerateTet { tet: t, volume });
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f32; 3]] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[u32; 4]] {
        &self.tets
    }

    pub fn field(&self) -> &[f32] {
        &self.field
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, i: u32) -> Vec3 {
        to_vec3(&self.vertices[i as usize])
    }

    pub fn tet_corners(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|i| self.vertex(i))
    }

    pub fn tet_signed_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tet_corners(t);
        (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
    }

    pub fn tet_bounds(&self, t: usize) -> Aabb {
        Aabb::from_points(self.tet_corners(t).iter())
    }

    pub fn tet_centroid(&self, t: usize) -> Vec3 {
        let c = self.tet_corners(t);
        (c[0] + c[1] + c[2] + c[3]) * 0.25
    }

    /// Min/max of the field values that define tet `t`: its four vertex
    /// values, or its single cell value.
    pub fn tet_value_range(&self, t: usize) -> (f64, f64) {
        match self.centering {
            Centering::Cell => {
                let v = self.field[t] as f64;
                (v, v)
            }
            Centering::Vertex => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &i in &self.tets[t] {
                    let v = self.field[i as usize] as f64;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    pub fn field_range(&self) -> (f64, f64) {
        self.field
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v as f64), hi.max(v as f64))
            })
    }

    /// New mesh made of the tets for which `keep` is true. Vertices are
    /// compacted; cell values follow their tets.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<TetMesh> {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut tets = Vec::new();
        let mut field = Vec::new();
        for (t, tet) in self.tets.iter().enumerate() {
            if !keep(t) {
                continue;
            }
            let mapped = tet.map(|i| {
                let slot = &mut remap[i as usize];
                if *slot == u32::MAX {
                    *slot = vertices.len() as u32;
                    vertices.push(self.vertices[i as usize]);
                    if self.centering == Centering::Vertex {
                        field.push(self.field[i as usize]);
                    }
                }
                *slot
            });
            tets.push(mapped);
            if self.centering == Centering::Cell {
                field.push(self.field[t]);
            }
        }
        TetMesh::new(vertices, tets, field, self.centering)
    }
}

#[inline]
pub(crate) fn to_vec3(p: &[f32; 3]) -> Vec3 {
    Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> TetMesh {
        TetMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
            vec![0.0, 1.0, 2.0, 3.0],
            Centering::Vertex,
        )
        .unwrap()
    }

    #[test]
    fn unit_tet_bounds() {
        let m = unit_tet();
        assert_eq!(m.bounds(), Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)));
        assert!((m.tet_signed_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_field_length_mismatch() {
        let err = TetMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
            vec![0.0, 1.0],
            Centering::Cell,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::FieldLength {
                expected: 1,
                actual: 2,
                ..
            }
        ));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TetMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 4]],
            vec![0.0; 4],
            Centering::Vertex,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::IndexOutOfRange {
                tet: 0,
                index: 4,
                ..
            }
        ));
    }

    #[test]
    fn rejects_degenerate_tet_with_index() {
        let err = TetMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2, 3], [0, 1, 2, 4]],
            vec![0.0; 5],
            Centering::Vertex,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateTet { tet: 1, .. }));
    }

    #[test]
    fn subset_keeps_cell_values_aligned() {
        let m = generate_synthetic(2, AnalyticField::Ramp, Centering::Cell).unwrap();
        let s = m.subset(|t| t % 2 == 1).unwrap();
        assert_eq!(s.tet_count(), m.tet_count() / 2);
        for (k, t) in (1..m.tet_count()).step_by(2).enumerate() {
            assert_eq!(s.field()[k], m.field()[t]);
            assert_eq!(s.tet_corners(k), m.tet_corners(t));
        }
    }
}
