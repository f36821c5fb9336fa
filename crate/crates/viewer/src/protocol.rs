//! Wire protocol between the viewer service and its clients.
//!
//! Every WebSocket binary message carries exactly one envelope:
//!
//! ```text
//! tag      u8
//! length   u32, little-endian, byte length of body
//! body     length bytes
//! ```
//!
//! | tag    | direction       | body                                   |
//! |--------|-----------------|----------------------------------------|
//! | `0x01` | client → server | JSON [`ViewerMessage`]                 |
//! | `0x02` | server → client | JSON [`Reply`]                         |
//! | `0x03` | server → client | frame, see [`FrameMessage::encode`]    |

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use tetskip::render::RenderMode;
use tetskip::transfer::Rgba;

pub const TAG_CONTROL: u8 = 0x01;
pub const TAG_REPLY: u8 = 0x02;
pub const TAG_FRAME: u8 = 0x03;

const ENVELOPE_HEADER: usize = 5;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("envelope shorter than its 5-byte header")]
    Truncated,
    #[error("envelope declares {declared} body bytes but carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unexpected envelope tag {0:#04x}")]
    UnexpectedTag(u8),
    #[error("bad message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad frame: {0}")]
    Frame(String),
    #[error("compression: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode_envelope(tag: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ENVELOPE_HEADER + body.len());
    out.push(tag);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    out
}

pub fn decode_envelope(bytes: &[u8]) -> Result<(u8, &[u8]), ProtocolError> {
    if bytes.len() < ENVELOPE_HEADER {
        return Err(ProtocolError::Truncated);
    }
    let declared = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize;
    let body = &bytes[ENVELOPE_HEADER..];
    if body.len() != declared {
        return Err(ProtocolError::LengthMismatch {
            declared,
            actual: body.len(),
        });
    }
    Ok((bytes[0], body))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    #[default]
    None,
    Deflate,
}

/// Client → server control messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ViewerMessage {
    /// Per-connection options. Optional; defaults are raw payloads, no
    /// heatmap, no SSIM.
    Hello {
        #[serde(default)]
        compression: Compression,
        #[serde(default)]
        heatmap: bool,
        #[serde(default)]
        ssim: bool,
    },
    SetCamera {
        position: [f64; 3],
        look_at: [f64; 3],
        up: [f64; 3],
        fov: f64,
    },
    SetTransferFunction {
        domain: [f64; 2],
        rgba: Vec<Rgba>,
    },
    SetParams {
        s1: f64,
        s2: f64,
        p: f64,
        mode: RenderMode,
        termination_opacity: f64,
    },
    RequestFrame {
        width: usize,
        height: usize,
    },
}

impl ViewerMessage {
    pub fn encode(&self) -> Vec<u8> {
        encode_envelope(
            TAG_CONTROL,
            &serde_json::to_vec(self).expect("messages always serialize"),
        )
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        match decode_envelope(bytes)? {
            (TAG_CONTROL, body) => Ok(serde_json::from_slice(body)?),
            (tag, _) => Err(ProtocolError::UnexpectedTag(tag)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Reply {
    Ok { message: String },
    Error { message: String },
}

impl Reply {
    pub fn encode(&self) -> Vec<u8> {
        encode_envelope(
            TAG_REPLY,
            &serde_json::to_vec(self).expect("replies always serialize"),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub ms: f64,
    pub total_samples: u64,
    pub ssim_vs_reference: Option<f64>,
}

/// JSON header that precedes the pixel payloads inside a frame body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub frame_id: u64,
    /// Number of state-changing messages applied before this frame.
    pub state_version: u64,
    pub width: usize,
    pub height: usize,
    pub stats: FrameStats,
    pub compression: Compression,
    pub payload_len: usize,
    pub heatmap_len: usize,
    /// Set when the frame could not be rendered; payloads are then empty.
    #[serde(default)]
    pub error: Option<String>,
}

/// A decoded frame: 8-bit RGBA, row-major, `4 * width * height` bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMessage {
    pub frame_id: u64,
    pub state_version: u64,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub stats: FrameStats,
    pub heatmap: Option<Vec<u8>>,
    pub error: Option<String>,
}

impl FrameMessage {
    /// Frame body: `u32` LE header length, JSON [`FrameHeader`], pixel
    /// payload, then the optional heatmap payload. Payloads are zlib
    /// streams when `compression` is deflate.
    pub fn encode(&self, compression: Compression) -> Result<Vec<u8>, ProtocolError> {
        let pixels = compress(&self.pixels, compression)?;
        let heatmap = match &self.heatmap {
            Some(h) => compress(h, compression)?,
            None => Vec::new(),
        };
        let header = FrameHeader {
            frame_id: self.frame_id,
            state_version: self.state_version,
            width: self.width,
            height: self.height,
            stats: self.stats.clone(),
            compression,
            payload_len: pixels.len(),
            heatmap_len: heatmap.len(),
            error: self.error.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut body = Vec::with_capacity(4 + header.len() + pixels.len() + heatmap.len());
        body.extend_from_slice(&(header.len() as u32).to_le_bytes());
        body.extend_from_slice(&header);
        body.extend_from_slice(&pixels);
        body.extend_from_slice(&heatmap);
        Ok(encode_envelope(TAG_FRAME, &body))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let body = match decode_envelope(bytes)? {
            (TAG_FRAME, body) => body,
            (tag, _) => return Err(ProtocolError::UnexpectedTag(tag)),
        };
        if body.len() < 4 {
            return Err(ProtocolError::Frame("missing header length".into()));
        }
        let hlen = u32::from_le_bytes([body[0], body[1], body[2], body[3]]) as usize;
        let header: FrameHeader = serde_json::from_slice(
            body.get(4..4 + hlen)
                .ok_or_else(|| ProtocolError::Frame("header overruns body".into()))?,
        )?;
        let rest = &body[4 + hlen..];
        if rest.len() != header.payload_len + header.heatmap_len {
            return Err(ProtocolError::Frame(format!(
                "payloads are {} bytes, header declares {}",
                rest.len(),
                header.payload_len + header.heatmap_len
            )));
        }
        let pixels = decompress(&rest[..header.payload_len], header.compression)?;
        let heatmap = if header.heatmap_len > 0 {
            Some(decompress(&rest[header.payload_len..], header.compression)?)
        } else {
            None
        };
        if header.error.is_none() && pixels.len() != 4 * header.width * header.height {
            return Err(ProtocolError::Frame(format!(
                "pixel payload is {} bytes, expected {}",
                pixels.len(),
                4 * header.width * header.height
            )));
        }
        Ok(FrameMessage {
            frame_id: header.frame_id,
            state_version: header.state_version,
            width: header.width,
            height: header.height,
            pixels,
            stats: header.stats,
            heatmap,
            error: header.error,
        })
    }
}

/// What a server envelope turned out to be.
#[derive(Clone, Debug, PartialEq)]
pub enum ServerMessage {
    Reply(Reply),
    Frame(FrameMessage),
}

impl ServerMessage {
    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        match decode_envelope(bytes)?.0 {
            TAG_REPLY => Ok(ServerMessage::Reply(serde_json::from_slice(
                &bytes[ENVELOPE_HEADER..],
            )?)),
            TAG_FRAME => Ok(ServerMessage::Frame(FrameMessage::decode(bytes)?)),
            tag => Err(ProtocolError::UnexpectedTag(tag)),
        }
    }
}

fn compress(data: &[u8], c: Compression) -> Result<Vec<u8>, ProtocolError> {
    match c {
        Compression::None => Ok(data.to_vec()),
        Compression::Deflate => {
            let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::fast());
            enc.write_all(data)?;
            Ok(enc.finish()?)
        }
    }
}

fn decompress(data: &[u8], c: Compression) -> Result<Vec<u8>, ProtocolError> {
    match c {
        Compression::None => Ok(data.to_vec()),
        Compression::Deflate => {
            let mut out = Vec::new();
            ZlibDecoder::new(data).read_to_end(&mut out)?;
            Ok(out)
        }
    }
}
