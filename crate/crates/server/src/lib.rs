//! A message-driven replica of the priority queue and list types, driven in
//! lockstep by a test manager over a framed connection.
//!
//! This crate shares no code with the reference model: positions, clocks and
//! payload indexes are its own, so divergences between the two are real
//! findings. Optional flags reproduce known implementation mistakes.

pub mod place;
pub mod replica;
pub mod stamp;
pub mod store;
pub mod wire;

use std::io;
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};

use thiserror::Error;
use tracing::{debug, warn};

pub use replica::{Flag, Kind, Replica, Settings};
pub use wire::{mem_pair, Frame, Link, MemLink, StreamLink};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("bad settings: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Why [`serve`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ended {
    Shutdown,
    Disconnected,
}

/// Runs one replica until Shutdown (acknowledged) or until the manager goes
/// away. Every ClientOp, Sync and Shutdown gets exactly one Ack and every
/// Inspect one InspectReply; nothing is sent unprompted.
pub fn serve(settings: &Settings, link: &mut dyn Link) -> Result<Ended, ServerError> {
    let mut replica = Replica::new(settings.clone());
    loop {
        let Some(frame) = link.recv_frame()? else {
            return Ok(Ended::Disconnected);
        };
        let reply = match frame {
            Frame::ClientOp { op } => match replica.client_op(&op) {
                Ok(syncs) => Frame::Ack { syncs, error: None },
                Err(e) => {
                    debug!(replica = settings.replica, %e, "request refused");
                    Frame::Ack {
                        syncs: Vec::new(),
                        error: Some(e),
                    }
                }
            },
            Frame::Sync { dest, msg } => {
                if dest != settings.replica {
                    return Err(ServerError::Protocol(format!(
                        "replica {} got a Sync for {dest}",
                        settings.replica
                    )));
                }
                Frame::Ack {
                    syncs: Vec::new(),
                    error: replica.sync(&msg).err(),
                }
            }
            Frame::Inspect => Frame::InspectReply {
                state: replica.canonical(),
                visible: replica.visible(),
            },
            Frame::Shutdown => {
                link.send_frame(&Frame::ack())?;
                return Ok(Ended::Shutdown);
            }
            other => {
                return Err(ServerError::Protocol(format!("unexpected {} frame", other.kind())));
            }
        };
        link.send_frame(&reply)?;
    }
}

/// Serves fresh replicas on the same link, one per Shutdown, until the
/// manager disconnects.
pub fn serve_forever(settings: &Settings, link: &mut dyn Link) -> Result<(), ServerError> {
    while serve(settings, link)? == Ended::Shutdown {}
    Ok(())
}

/// Starts a replica on its own thread behind an in-process link and returns
/// the manager's end.
pub fn spawn_in_process(settings: Settings) -> (MemLink, JoinHandle<Result<(), ServerError>>) {
    let (manager, mut server) = mem_pair();
    let handle = thread::Builder::new()
        .name(format!("replica-{}", settings.replica))
        .spawn(move || {
            let r = serve_forever(&settings, &mut server);
            if let Err(e) = &r {
                warn!(replica = settings.replica, %e, "replica stopped");
            }
            r
        })
        .expect("spawn replica thread");
    (manager, handle)
}

/// Starts a replica listening on a local TCP port, connects to it, and
/// returns the manager's end of the connection.
pub fn spawn_tcp(settings: Settings) -> Result<(StreamLink<TcpStream>, JoinHandle<Result<(), ServerError>>), ServerError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let handle = thread::Builder::new()
        .name(format!("replica-{}-tcp", settings.replica))
        .spawn(move || serve_tcp(&listener, &settings))
        .expect("spawn replica thread");
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    Ok((StreamLink::new(stream), handle))
}

/// Accepts one manager connection and serves it until it closes.
pub fn serve_tcp(listener: &TcpListener, settings: &Settings) -> Result<(), ServerError> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    serve_forever(settings, &mut StreamLink::new(stream))
}
