//! WebSocket service: one render loop owns the [`ViewerState`]; one thread
//! per connection moves envelopes between its socket and the loop.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use crate::protocol::{Compression, FrameMessage, Reply, ViewerMessage};
use crate::state::{FrameExtras, ViewerState};

const POLL: Duration = Duration::from_millis(10);

enum Event {
    Open { id: u64, outbox: Sender<Vec<u8>> },
    Message { id: u64, bytes: Vec<u8> },
    Closed { id: u64 },
}

#[derive(Clone, Copy, Debug, Default)]
struct ConnOptions {
    compression: Compression,
    heatmap: bool,
    ssim: bool,
}

struct Conn {
    outbox: Sender<Vec<u8>>,
    options: ConnOptions,
}

/// A bound, not yet running service.
pub struct Server {
    listener: TcpListener,
    state: ViewerState,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, state: ViewerState) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until the process ends.
    pub fn run(self) -> io::Result<()> {
        let handle = self.spawn()?;
        handle.join();
        Ok(())
    }

    /// Serves on background threads until [`ServerHandle::shutdown`].
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.listener.local_addr()?;
        self.listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let (events, inbox) = mpsc::channel();

        let loop_stop = stop.clone();
        let state = self.state;
        let render_loop = thread::Builder::new()
            .name("tetskip-render".into())
            .spawn(move || render_loop(state, inbox, &loop_stop))?;

        let accept_stop = stop.clone();
        let listener = self.listener;
        let acceptor = thread::Builder::new()
            .name("tetskip-accept".into())
            .spawn(move || accept_loop(listener, events, &accept_stop))?;

        info!("viewer service listening on ws://{addr}");
        Ok(ServerHandle {
            addr,
            stop,
            threads: vec![render_loop, acceptor],
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join();
    }

    fn join(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, stop: &Arc<AtomicBool>) {
    let mut next_id = 0u64;
    let mut conns = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                let events = events.clone();
                let stop = stop.clone();
                debug!("connection {id} from {peer}");
                let spawned = thread::Builder::new()
                    .name(format!("tetskip-conn-{id}"))
                    .spawn(move || {
                        if let Err(e) = connection(id, stream, &events, &stop) {
                            debug!("connection {id} ended: {e}");
                        }
                        let _ = events.send(Event::Closed { id });
                    });
                match spawned {
                    Ok(t) => conns.push(t),
                    Err(e) => warn!("could not spawn connection thread: {e}"),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => warn!("accept failed: {e}"),
        }
        conns.retain(|t| !t.is_finished());
    }
    for t in conns {
        let _ = t.join();
    }
}

fn connection(
    id: u64,
    stream: TcpStream,
    events: &Sender<Event>,
    stop: &AtomicBool,
) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let mut ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref()
        .set_read_timeout(Some(POLL))
        .map_err(|e| e.to_string())?;
    let (outbox, outgoing) = mpsc::channel();
    events
        .send(Event::Open { id, outbox })
        .map_err(|_| "render loop is gone".to_string())?;
    while !stop.load(Ordering::SeqCst) {
        flush_outgoing(&mut ws, &outgoing)?;
        match ws.read() {
            Ok(Message::Binary(bytes)) => {
                if events
                    .send(Event::Message {
                        id,
                        bytes: bytes.to_vec(),
                    })
                    .is_err()
                {
                    return Ok(());
                }
            }
            Ok(Message::Text(_)) => {
                let reply = Reply::Error {
                    message: "expected a binary envelope".into(),
                };
                ws.send(Message::binary(reply.encode()))
                    .map_err(|e| e.to_string())?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

fn flush_outgoing(
    ws: &mut WebSocket<TcpStream>,
    outgoing: &Receiver<Vec<u8>>,
) -> Result<(), String> {
    loop {
        match outgoing.try_recv() {
            Ok(bytes) => ws.send(Message::binary(bytes)).map_err(|e| e.to_string())?,
            Err(TryRecvError::Empty) => return Ok(()),
            Err(TryRecvError::Disconnected) => return Err("render loop is gone".into()),
        }
    }
}

fn render_loop(mut state: ViewerState, inbox: Receiver<Event>, stop: &AtomicBool) {
    let mut conns: HashMap<u64, Conn> = HashMap::new();
    while !stop.load(Ordering::SeqCst) {
        let first = match inbox.recv_timeout(POLL) {
            Ok(ev) => ev,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return,
        };
        // Everything already queued is applied before a single render.
        let mut batch = vec![first];
        batch.extend(inbox.try_iter());
        let mut dirty = false;
        for ev in batch {
            dirty |= handle_event(&mut state, &mut conns, ev);
        }
        if dirty && !conns.is_empty() {
            let frame = state.render_frame(wanted_extras(&conns));
            broadcast(&conns, &frame);
        }
    }
}

/// Returns whether the event changed the render state.
fn handle_event(state: &mut ViewerState, conns: &mut HashMap<u64, Conn>, ev: Event) -> bool {
    match ev {
        Event::Open { id, outbox } => {
            conns.insert(
                id,
                Conn {
                    outbox,
                    options: ConnOptions::default(),
                },
            );
            false
        }
        Event::Closed { id } => {
            conns.remove(&id);
            false
        }
        Event::Message { id, bytes } => {
            let Some(conn) = conns.get_mut(&id) else {
                return false;
            };
            let reply = |conn: &Conn, r: Reply| {
                let _ = conn.outbox.send(r.encode());
            };
            match ViewerMessage::decode(&bytes) {
                Err(e) => {
                    reply(
                        conn,
                        Reply::Error {
                            message: e.to_string(),
                        },
                    );
                    false
                }
                Ok(ViewerMessage::Hello {
                    compression,
                    heatmap,
                    ssim,
                }) => {
                    conn.options = ConnOptions {
                        compression,
                        heatmap,
                        ssim,
                    };
                    reply(
                        conn,
                        Reply::Ok {
                            message: "hello".into(),
                        },
                    );
                    false
                }
                Ok(msg) => match state.apply(&msg) {
                    Ok(()) => true,
                    Err(e) => {
                        reply(
                            conn,
                            Reply::Error {
                                message: e.to_string(),
                            },
                        );
                        false
                    }
                },
            }
        }
    }
}

fn wanted_extras(conns: &HashMap<u64, Conn>) -> FrameExtras {
    FrameExtras {
        heatmap: conns.values().any(|c| c.options.heatmap),
        ssim: conns.values().any(|c| c.options.ssim),
    }
}

fn broadcast(conns: &HashMap<u64, Conn>, frame: &FrameMessage) {
    for conn in conns.values() {
        let mut f = frame.clone();
        if !conn.options.heatmap {
            f.heatmap = None;
        }
        if !conn.options.ssim {
            f.stats.ssim_vs_reference = None;
        }
        match f.encode(conn.options.compression) {
            Ok(bytes) => {
                let _ = conn.outbox.send(bytes);
            }
            Err(e) => warn!("frame {} could not be encoded: {e}", frame.frame_id),
        }
    }
}
