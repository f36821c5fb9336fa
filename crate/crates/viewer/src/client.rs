//! Minimal blocking client, for scripts and tests.

use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::protocol::{FrameMessage, ProtocolError, Reply, ServerMessage, ViewerMessage};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    Socket(#[from] tungstenite::Error),
    #[error("connect: {0}")]
    Io(#[from] std::io::Error),
    #[error("handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("timed out waiting for the server")]
    Timeout,
    #[error("server replied with an error: {0}")]
    Rejected(String),
}

pub struct ViewerClient {
    ws: WebSocket<TcpStream>,
}

impl ViewerClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        let (ws, _) = tungstenite::client(format!("ws://{addr}/"), stream)
            .map_err(|e| ClientError::Handshake(e.to_string()))?;
        Ok(ViewerClient { ws })
    }

    pub fn send(&mut self, msg: &ViewerMessage) -> Result<(), ClientError> {
        self.send_raw(msg.encode())
    }

    /// Sends arbitrary bytes as one binary message.
    pub fn send_raw(&mut self, bytes: Vec<u8>) -> Result<(), ClientError> {
        self.ws.send(Message::binary(bytes))?;
        Ok(())
    }

    /// Next reply or frame, waiting at most `timeout`.
    pub fn recv(&mut self, timeout: Duration) -> Result<ServerMessage, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClientError::Timeout);
            }
            self.ws.get_ref().set_read_timeout(Some(left))?;
            match self.ws.read() {
                Ok(Message::Binary(bytes)) => return Ok(ServerMessage::decode(&bytes)?),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(
                        e.kind(),
                        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                    ) =>
                {
                    return Err(ClientError::Timeout)
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn recv_reply(&mut self, timeout: Duration) -> Result<Reply, ClientError> {
        match self.recv(timeout)? {
            ServerMessage::Reply(r) => Ok(r),
            ServerMessage::Frame(f) => Err(ClientError::Rejected(format!(
                "expected a reply, got frame {}",
                f.frame_id
            ))),
        }
    }

    /// Skips frames until one reflects at least `version` edits. Error
    /// replies received meanwhile are returned as [`ClientError::Rejected`].
    pub fn frame_at_version(
        &mut self,
        version: u64,
        timeout: Duration,
    ) -> Result<FrameMessage, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.recv(left)? {
                ServerMessage::Frame(f) if f.state_version >= version => return Ok(f),
                ServerMessage::Frame(_) => {}
                ServerMessage::Reply(Reply::Error { message }) => {
                    return Err(ClientError::Rejected(message))
                }
                ServerMessage::Reply(Reply::Ok { .. }) => {}
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
