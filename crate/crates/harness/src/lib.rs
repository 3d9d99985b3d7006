//! Test manager: replays explorer-generated cases against replica-server
//! groups in lockstep and compares final states byte for byte, plus a
//! seeded random stress baseline.

pub mod corpus;
pub mod group;
pub mod replay;
pub mod stress;

use std::collections::BTreeSet;
use std::io;

use replicheck_core::explorer::{BugFlag, ExplorationConfig};
use replicheck_core::testgen::TestgenError;
use replicheck_core::{DataType, Strategy};
use replicheck_server::{Flag, Kind, ServerError, Settings};
use thiserror::Error;

pub use corpus::{replay_corpus, CorpusSummary};
pub use group::{Exchange, Group, Transport};
pub use replay::{replay, replay_on, run_case, ConformanceResult, PendingPool, Verdict};
pub use stress::{stress, DelayModel, StressConfig, StressReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("replica: {0}")]
    Replica(String),
    #[error("server: {0}")]
    Server(#[from] ServerError),
    #[error(transparent)]
    Testgen(#[from] TestgenError),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Maps a catalog flag to the server's own flag type.
pub fn server_flag(b: BugFlag) -> Flag {
    match b {
        BugFlag::ReaddAccept => Flag::ReaddAccept,
        BugFlag::AssumeCausal => Flag::AssumeCausal,
        BugFlag::DummyPosition => Flag::DummyPosition,
        BugFlag::IdgenOrder => Flag::IdgenOrder,
    }
}

pub fn server_kind(t: DataType) -> Kind {
    match t {
        DataType::Rpq => Kind::Rpq,
        DataType::List => Kind::List,
    }
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    /// The configuration the cases must come from; its fingerprint guards
    /// every replay.
    pub model: ExplorationConfig,
    /// Flags injected into the servers on top of the model's own.
    pub server_bugs: BTreeSet<BugFlag>,
    pub transport: Transport,
    /// Start a new group for every case instead of resetting one.
    pub fresh_group: bool,
    /// Compare every replica after every event with the model's states.
    pub checkpoint_every_event: bool,
}

impl HarnessConfig {
    pub fn new(model: ExplorationConfig) -> Self {
        HarnessConfig {
            model,
            server_bugs: BTreeSet::new(),
            transport: Transport::InProcess,
            fresh_group: false,
            checkpoint_every_event: false,
        }
    }

    pub fn with_server_bug(mut self, b: BugFlag) -> Self {
        self.server_bugs.insert(b);
        self
    }

    /// Server settings for each replica.
    pub fn settings(&self) -> Vec<Settings> {
        let n = self.model.replicas;
        (0..n as u32)
            .map(|r| {
                let mut s = Settings::new(r, n, server_kind(self.model.data_type));
                s.causal_assuming = self.model.strategy == Strategy::CausalAssuming;
                s.flags = self.model.bugs.iter().chain(&self.server_bugs).map(|b| server_flag(*b)).collect();
                s
            })
            .collect()
    }

    pub fn start_group(&self) -> Result<Group, HarnessError> {
        Group::start(self.settings(), self.transport)
    }
}
