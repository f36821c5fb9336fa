//! Synthetic meshes: an N x N x N grid of unit cubes, each split into five
//! tetrahedra. Neighboring cubes use mirrored splits so every shared face is
//! cut along the same diagonal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Centering, TetMesh};
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticField {
    /// `f = x`
    Ramp,
    /// Distance from the grid center.
    Radial,
    /// `sin(2πx/N) sin(2πy/N) sin(2πz/N)`
    Sinusoidal,
    /// Zero over the half `x < N/2` (the void), 1 or 2 in a checkerboard of
    /// y/z quadrants over the other half.
    Void,
}

impl AnalyticField {
    pub const ALL: [AnalyticField; 4] = [
        AnalyticField::Ramp,
        AnalyticField::Radial,
        AnalyticField::Sinusoidal,
        AnalyticField::Void,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnalyticField::Ramp => "ramp",
            AnalyticField::Radial => "radial",
            AnalyticField::Sinusoidal => "sinusoidal",
            AnalyticField::Void => "void",
        }
    }

    /// Value at world position `p` on a grid of `n` cubes per axis.
    pub fn eval(self, p: &Vec3, n: usize) -> f64 {
        let n = n as f64;
        match self {
            AnalyticField::Ramp => p.x,
            AnalyticField::Radial => (p - Vec3::repeat(n * 0.5)).norm(),
            AnalyticField::Sinusoidal => {
                let k = 2.0 * PI / n;
                (k * p.x).sin() * (k * p.y).sin() * (k * p.z).sin()
            }
            AnalyticField::Void => {
                if p.x < n * 0.5 {
                    0.0
                } else {
                    let qy = (2.0 * p.y / n).floor() as i64;
                    let qz = (2.0 * p.z / n).floor() as i64;
                    1.0 + (qy + qz).rem_euclid(2) as f64
                }
            }
        }
    }
}

impl std::str::FromStr for AnalyticField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AnalyticField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                format!("unknown field {s:?} (expected ramp, radial, sinusoidal or void)")
            })
    }
}

// Cube corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
const EVEN_SPLIT: [[usize; 4]; 5] = [
    [0, 1, 2, 4],
    [3, 2, 1, 7],
    [5, 4, 7, 1],
    [6, 7, 4, 2],
    [1, 2, 4, 7],
];
const ODD_SPLIT: [[usize; 4]; 5] = [
    [1, 0, 5, 3],
    [2, 3, 6, 0],
    [4, 5, 0, 6],
    [7, 6, 3, 5],
    [0, 3, 6, 5],
];

pub fn generate_synthetic(n: usize, field: AnalyticField, centering: Centering) -> Result<TetMesh> {
    if n == 0 {
        return Err(Error::InvalidParams("resolution must be at least 1".into()));
    }
    let side = n + 1;
    let vid = |i: usize, j: usize, k: usize| (i + side * (j + side * k)) as u32;

    let mut vertices = Vec::with_capacity(side * side * side);
    for k in 0..side {
        for j in 0..side {
            for i in 0..side {
                vertices.push([i as f32, j as f32, k as f32]);
            }
        }
    }

    let mut tets = Vec::with_capacity(5 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let corner = |c: usize| vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let split = if (i + j + k) % 2 == 0 {
                    &EVEN_SPLIT
                } else {
                    &ODD_SPLIT
                };
                for t in split {
                    tets.push(t.map(corner));
                }
            }
        }
    }

    let values: Vec<f32> = match centering {
        Centering::Vertex => vertices
            .iter()
            .map(|v| field.eval(&super::to_vec3(v), n) as f32)
            .collect(),
        Centering::Cell => tets
            .iter()
            .map(|t| {
                let c = t
                    .iter()
                    .map(|&i| super::to_vec3(&vertices[i as usize]))
                    .fold(Vec3::zeros(), |a, b| a + b)
                    * 0.25;
                field.eval(&c, n) as f32
            })
            .collect(),
    };

    TetMesh::new(vertices, tets, values, centering)
}
