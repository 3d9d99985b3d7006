//! Framing between the test manager and a replica.
//!
//! A frame is a 4-byte big-endian payload length followed by the payload, a
//! compact JSON object with sorted keys and a `type` field.

use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ServerError;

pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Frame {
    /// A client request, in the request JSON form.
    ClientOp { op: Value },
    /// A replica-to-replica message addressed to `dest`.
    Sync { dest: u32, msg: Value },
    Inspect,
    InspectReply { state: String, visible: Value },
    /// Answers a ClientOp, Sync or Shutdown. `syncs` holds the Sync frames
    /// the request produced; `error` is set when a request was refused.
    Ack {
        syncs: Vec<Frame>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Shutdown,
}

impl Frame {
    pub fn ack() -> Self {
        Frame::Ack {
            syncs: Vec::new(),
            error: None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Frame::ClientOp { .. } => "ClientOp",
            Frame::Sync { .. } => "Sync",
            Frame::Inspect => "Inspect",
            Frame::InspectReply { .. } => "InspectReply",
            Frame::Ack { .. } => "Ack",
            Frame::Shutdown => "Shutdown",
        }
    }

    /// Sorted-key compact JSON.
    pub fn to_payload(&self) -> Vec<u8> {
        let v = serde_json::to_value(self).expect("frames serialize");
        v.to_string().into_bytes()
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ServerError> {
        serde_json::from_slice(bytes).map_err(|e| ServerError::Protocol(format!("undecodable frame: {e}")))
    }
}

/// Prefixes `payload` with its length.
pub fn encode(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Strips and checks the length prefix of one complete frame.
pub fn decode(frame: &[u8]) -> Result<&[u8], ServerError> {
    if frame.len() < 4 {
        return Err(ServerError::Protocol("frame shorter than its header".into()));
    }
    let (head, body) = frame.split_at(4);
    let len = u32::from_be_bytes(head.try_into().expect("4 bytes")) as usize;
    if len != body.len() {
        return Err(ServerError::Protocol(format!("length prefix {len}, payload {}", body.len())));
    }
    Ok(body)
}

/// One end of a frame connection.
pub trait Link: Send {
    /// Next frame payload; `None` once the peer has gone away.
    fn recv(&mut self) -> Result<Option<Vec<u8>>, ServerError>;
    fn send(&mut self, payload: &[u8]) -> Result<(), ServerError>;

    fn recv_frame(&mut self) -> Result<Option<Frame>, ServerError> {
        match self.recv()? {
            None => Ok(None),
            Some(p) => Frame::from_payload(&p).map(Some),
        }
    }

    fn send_frame(&mut self, frame: &Frame) -> Result<(), ServerError> {
        self.send(&frame.to_payload())
    }
}

/// In-process link: whole encoded frames over a channel pair.
pub struct MemLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process ends.
pub fn mem_pair() -> (MemLink, MemLink) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (MemLink { tx: a_tx, rx: a_rx }, MemLink { tx: b_tx, rx: b_rx })
}

impl Link for MemLink {
    fn recv(&mut self) -> Result<Option<Vec<u8>>, ServerError> {
        match self.rx.recv() {
            Ok(frame) => Ok(Some(decode(&frame)?.to_vec())),
            Err(_) => Ok(None),
        }
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), ServerError> {
        self.tx
            .send(encode(payload))
            .map_err(|_| ServerError::Io(io::Error::new(io::ErrorKind::BrokenPipe, "peer gone")))
    }
}

/// Link over any byte stream, e.g. a TCP connection.
pub struct StreamLink<S> {
    stream: S,
}

impl<S: Read + Write + Send> StreamLink<S> {
    pub fn new(stream: S) -> Self {
        StreamLink { stream }
    }
}

impl<S: Read + Write + Send> Link for StreamLink<S> {
    fn recv(&mut self) -> Result<Option<Vec<u8>>, ServerError> {
        let mut head = [0u8; 4];
        match self.stream.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_be_bytes(head) as usize;
        if len > MAX_FRAME {
            return Err(ServerError::Protocol(format!("frame of {len} bytes exceeds limit")));
        }
        let mut body = vec![0u8; len];
        self.stream.read_exact(&mut body)?;
        Ok(Some(body))
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), ServerError> {
        self.stream.write_all(&encode(payload))?;
        self.stream.flush()?;
        Ok(())
    }
}
