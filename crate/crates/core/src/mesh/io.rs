//! `TET1` binary mesh format (little-endian):
//!
//! ```text
//! "TET1"            4 bytes
//! centering         u8   (0 = vertex, 1 = cell)
//! vertex count V    u64
//! tet count T       u64
//! positions         V x 3 f32
//! indices           T x 4 u32
//! field             (V or T) x f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Centering, TetMesh};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"TET1";

// Guards allocation on corrupt headers; far above any mesh this renderer can hold.
const MAX_COUNT: u64 = 1 << 34;

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    read_mesh(BufReader::new(File::open(path)?))
}

pub fn save_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mesh(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_mesh<R: Read>(mut r: R) -> Result<TetMesh> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let centering = match read_u8(&mut r)? {
        0 => Centering::Vertex,
        1 => Centering::Cell,
        other => return Err(Error::BadCentering(other)),
    };
    let vertex_count = read_count(&mut r)?;
    let tet_count = read_count(&mut r)?;

    let vertices = (0..vertex_count)
        .map(|_| Ok([read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?]))
        .collect::<Result<Vec<_>>>()?;
    let tets = (0..tet_count)
        .map(|_| {
            Ok([
                read_u32(&mut r)?,
                read_u32(&mut r)?,
                read_u32(&mut r)?,
                read_u32(&mut r)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let field_len = match centering {
        Centering::Vertex => vertex_count,
        Centering::Cell => tet_count,
    };
    let field = (0..field_len)
        .map(|_| read_f32(&mut r))
        .collect::<Result<Vec<_>>>()?;

    // Trailing bytes mean the declared centering disagrees with the payload.
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        let extra = rest.len() / 4;
        return Err(Error::FieldLength {
            centering: centering.name(),
            expected: field_len,
            actual: field_len + extra,
        });
    }

    TetMesh::new(vertices, tets, field, centering)
}

pub fn write_mesh<W: Write>(mesh: &TetMesh, w: &mut W) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[match mesh.centering() {
        Centering::Vertex => 0,
        Centering::Cell => 1,
    }])?;
    w.write_all(&(mesh.vertex_count() as u64).to_le_bytes())?;
    w.write_all(&(mesh.tet_count() as u64).to_le_bytes())?;
    for v in mesh.vertices() {
        for c in v {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for t in mesh.tets() {
        for i in t {
            w.write_all(&i.to_le_bytes())?;
        }
    }
    for f in mesh.field() {
        w.write_all(&f.to_le_bytes())?;
    }
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_count<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b);
    if n > MAX_COUNT {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("implausible element count {n} in header"),
        )));
    }
    Ok(n as usize)
}
