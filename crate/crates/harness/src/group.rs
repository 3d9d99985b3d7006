//! A set of replica instances the manager talks to in lockstep.

use std::net::TcpStream;
use std::thread::JoinHandle;

use replicheck_server::{spawn_in_process, spawn_tcp, Frame, Link, MemLink, ServerError, Settings, StreamLink};
use serde_json::Value;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    #[default]
    InProcess,
    Tcp,
}

impl std::str::FromStr for Transport {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-process" | "mem" => Ok(Transport::InProcess),
            "tcp" => Ok(Transport::Tcp),
            _ => Err(format!("unknown transport `{s}` (expected in-process or tcp)")),
        }
    }
}

enum AnyLink {
    Mem(MemLink),
    Tcp(StreamLink<TcpStream>),
}

impl AnyLink {
    fn as_link(&mut self) -> &mut dyn Link {
        match self {
            AnyLink::Mem(l) => l,
            AnyLink::Tcp(l) => l,
        }
    }
}

/// What a replica answered to one request.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Ack { syncs: Vec<(u32, Value)>, error: Option<String> },
    Inspect { state: String, visible: Value },
}

/// One entry of a group's protocol trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Exchange {
    Sent { replica: u32, frame: Frame },
    Received { replica: u32, frame: Frame },
}

pub struct Group {
    links: Vec<AnyLink>,
    handles: Vec<JoinHandle<Result<(), ServerError>>>,
    settings: Vec<Settings>,
    transport: Transport,
    log: Option<Vec<Exchange>>,
}

impl Group {
    pub fn start(settings: Vec<Settings>, transport: Transport) -> Result<Self, HarnessError> {
        let mut links = Vec::new();
        let mut handles = Vec::new();
        for s in &settings {
            let (link, handle) = match transport {
                Transport::InProcess => {
                    let (l, h) = spawn_in_process(s.clone());
                    (AnyLink::Mem(l), h)
                }
                Transport::Tcp => {
                    let (l, h) = spawn_tcp(s.clone())?;
                    (AnyLink::Tcp(l), h)
                }
            };
            links.push(link);
            handles.push(handle);
        }
        Ok(Group {
            links,
            handles,
            settings,
            transport,
            log: None,
        })
    }

    /// Starts recording every frame sent and received.
    pub fn record(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    /// The frames recorded so far; recording continues.
    pub fn take_log(&mut self) -> Vec<Exchange> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Sends one frame and waits for its answer.
    pub fn request(&mut self, replica: u32, frame: &Frame) -> Result<Reply, HarnessError> {
        let link = self
            .links
            .get_mut(replica as usize)
            .ok_or_else(|| HarnessError::Replica(format!("no replica {replica}")))?
            .as_link();
        if let Some(log) = &mut self.log {
            log.push(Exchange::Sent {
                replica,
                frame: frame.clone(),
            });
        }
        link.send_frame(frame)?;
        let reply = link
            .recv_frame()?
            .ok_or_else(|| HarnessError::Replica(format!("replica {replica} hung up")))?;
        if let Some(log) = &mut self.log {
            log.push(Exchange::Received {
                replica,
                frame: reply.clone(),
            });
        }
        match (frame, reply) {
            (Frame::Inspect, Frame::InspectReply { state, visible }) => Ok(Reply::Inspect { state, visible }),
            (Frame::ClientOp { .. } | Frame::Sync { .. } | Frame::Shutdown, Frame::Ack { syncs, error }) => {
                let syncs = syncs
                    .into_iter()
                    .map(|f| match f {
                        Frame::Sync { dest, msg } => Ok((dest, msg)),
                        other => Err(HarnessError::Replica(format!("Ack carried a {} frame", other.kind()))),
                    })
                    .collect::<Result<_, _>>()?;
                Ok(Reply::Ack { syncs, error })
            }
            (sent, got) => Err(HarnessError::Replica(format!(
                "replica {replica} answered {} with {}",
                sent.kind(),
                got.kind()
            ))),
        }
    }

    pub fn inspect(&mut self, replica: u32) -> Result<(String, Value), HarnessError> {
        match self.request(replica, &Frame::Inspect)? {
            Reply::Inspect { state, visible } => Ok((state, visible)),
            Reply::Ack { .. } => unreachable!("request pairs Inspect with InspectReply"),
        }
    }

    /// Canonical states of all replicas, in replica order.
    pub fn inspect_all(&mut self) -> Result<Vec<String>, HarnessError> {
        (0..self.len() as u32).map(|r| self.inspect(r).map(|(s, _)| s)).collect()
    }

    /// Puts every replica back into its initial state, keeping the workers.
    pub fn reset(&mut self) -> Result<(), HarnessError> {
        for r in 0..self.len() as u32 {
            self.request(r, &Frame::Shutdown)?;
        }
        Ok(())
    }

    /// Replaces the workers with new ones.
    pub fn restart(&mut self) -> Result<(), HarnessError> {
        let fresh = Group::start(self.settings.clone(), self.transport)?;
        let old = std::mem::replace(self, fresh);
        drop(old);
        Ok(())
    }
}

impl Drop for Group {
    fn drop(&mut self) {
        self.links.clear();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
