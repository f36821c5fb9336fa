//! Frame-streaming service for interactive exploration of a scene.
//!
//! Clients send camera, transfer function and sampling edits; the service
//! applies them in arrival order, renders once per burst, and streams
//! lossless RGBA frames with per-frame statistics back to every client.

pub mod client;
pub mod protocol;
pub mod server;
pub mod state;

pub use client::{ClientError, ViewerClient};
pub use protocol::{Compression, FrameMessage, FrameStats, Reply, ServerMessage, ViewerMessage};
pub use server::{Server, ServerHandle};
pub use state::{FrameExtras, ViewerState};
