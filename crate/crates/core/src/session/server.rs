//! TCP endpoint for the dashboard protocol.
//!
//! Each client gets a reader thread that decodes command frames into the
//! session's inbound queue and a writer thread that drains outgoing frames.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;

use super::protocol::{decode_command, encode_frame, Ack, Frame, FrameDecoder, ProtocolError};
use super::{Inbound, Reply};

pub type ClientId = u64;

struct Client {
    id: ClientId,
    out: Sender<Vec<u8>>,
}

pub struct Server {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<Client>>>,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for Server {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Server")
            .field("addr", &self.addr)
            .finish_non_exhaustive()
    }
}

impl Server {
    /// Listens on localhost. Port 0 picks a free port.
    pub fn start(port: u16, inbound: Sender<Inbound>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<Client>>> = Arc::default();
        let shutdown = Arc::new(AtomicBool::new(false));
        let (c, s) = (clients.clone(), shutdown.clone());
        let accept = std::thread::Builder::new()
            .name("lrp-accept".into())
            .spawn(move || accept_loop(listener, c, s, inbound))?;
        log::info!("serving on {addr}");
        Ok(Self {
            addr,
            clients,
            shutdown,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().len()
    }

    pub fn broadcast(&self, frame: &Frame) {
        let bytes = encode_frame(frame);
        self.clients
            .lock()
            .retain(|c| c.out.send(bytes.clone()).is_ok());
    }

    pub fn send_to(&self, id: ClientId, frame: &Frame) {
        let bytes = encode_frame(frame);
        self.clients
            .lock()
            .retain(|c| c.id != id || c.out.send(bytes.clone()).is_ok());
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        self.clients.lock().clear();
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    clients: Arc<Mutex<Vec<Client>>>,
    shutdown: Arc<AtomicBool>,
    inbound: Sender<Inbound>,
) {
    let next_id = AtomicU64::new(1);
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                log::info!("client {id} connected from {peer}");
                if let Err(e) = serve_client(id, stream, &clients, &shutdown, inbound.clone()) {
                    log::warn!("client {id}: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

fn serve_client(
    id: ClientId,
    stream: TcpStream,
    clients: &Arc<Mutex<Vec<Client>>>,
    shutdown: &Arc<AtomicBool>,
    inbound: Sender<Inbound>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_millis(50)))?;
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let writer = stream.try_clone()?;
    std::thread::Builder::new()
        .name(format!("lrp-client-{id}-w"))
        .spawn(move || write_loop(writer, rx))?;
    clients.lock().push(Client {
        id,
        out: tx.clone(),
    });
    let _ = inbound.send(Inbound::ClientConnected(id));
    let (clients, shutdown) = (clients.clone(), shutdown.clone());
    std::thread::Builder::new()
        .name(format!("lrp-client-{id}-r"))
        .spawn(move || {
            read_loop(id, stream, &shutdown, &inbound, &tx);
            clients.lock().retain(|c| c.id != id);
            log::info!("client {id} disconnected");
        })?;
    Ok(())
}

fn write_loop(mut stream: TcpStream, rx: Receiver<Vec<u8>>) {
    for bytes in rx {
        if stream.write_all(&bytes).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(std::net::Shutdown::Write);
}

fn read_loop(
    id: ClientId,
    mut stream: TcpStream,
    shutdown: &AtomicBool,
    inbound: &Sender<Inbound>,
    out: &Sender<Vec<u8>>,
) {
    let mut decoder = FrameDecoder::default();
    let mut buf = [0u8; 8192];
    while !shutdown.load(Ordering::Relaxed) {
        match stream.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => decoder.push(&buf[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(_) => return,
        }
        loop {
            match decoder.next_frame() {
                Ok(None) => break,
                Ok(Some(frame)) => match decode_command(&frame) {
                    Ok(command) => {
                        let msg = Inbound::Command {
                            command,
                            reply: Reply::Client(id),
                        };
                        if inbound.send(msg).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        let _ =
                            out.send(encode_frame(&Frame::new("ack", Ack::error(&frame.kind, e))));
                    }
                },
                Err(e @ ProtocolError::FrameTooLarge { .. }) => {
                    let _ = out.send(encode_frame(&Frame::new("ack", Ack::error("frame", e))));
                    return;
                }
                Err(e) => {
                    let _ = out.send(encode_frame(&Frame::new("ack", Ack::error("frame", e))));
                }
            }
        }
    }
}
