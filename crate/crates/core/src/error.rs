use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad mesh magic {0:?}, expected \"TET1\"")]
    BadMagic([u8; 4]),

    #[error("unknown centering tag {0}")]
    BadCentering(u8),

    #[error("tet {tet} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        tet: usize,
        index: u32,
        vertex_count: usize,
    },

    #[error("field has {actual} values, {centering} centering requires {expected}")]
    FieldLength {
        centering: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("tet {tet} is degenerate (volume {volume:e})")]
    DegenerateTet { tet: usize, volume: f64 },

    #[error("mesh has no tetrahedra")]
    EmptyMesh,

    #[error("invalid transfer function: {0}")]
    TransferFunction(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
