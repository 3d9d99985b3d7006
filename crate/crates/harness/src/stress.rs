//! Random stress testing: rounds of random client requests with randomly
//! delayed deliveries, checking convergence at the end of each round.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replicheck_core::explorer::BugFlag;
use replicheck_core::{DataType, Strategy};
use replicheck_server::{Frame, Settings};
use serde_json::{json, Value};
use tracing::debug;

use crate::group::{Group, Reply, Transport};
use crate::{server_flag, server_kind, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayModel {
    /// Each message is held for a uniform number of ticks in `0..=max`.
    Uniform { max: u64 },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Uniform { max: 8 }
    }
}

impl FromStr for DelayModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let max = s
            .strip_prefix("uniform:")
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| format!("bad delay model `{s}` (expected uniform:<max ticks>)"))?;
        Ok(DelayModel::Uniform { max })
    }
}

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub data_type: DataType,
    pub replicas: usize,
    pub rounds: u64,
    pub ops_per_round: u64,
    pub seed: u64,
    pub delay: DelayModel,
    pub strategy: Strategy,
    pub bugs: BTreeSet<BugFlag>,
    pub transport: Transport,
}

impl StressConfig {
    pub fn new(data_type: DataType, replicas: usize) -> Self {
        StressConfig {
            data_type,
            replicas,
            rounds: 100,
            ops_per_round: 100,
            seed: 0,
            delay: DelayModel::default(),
            strategy: Strategy::Standard,
            bugs: BTreeSet::new(),
            transport: Transport::InProcess,
        }
    }

    fn settings(&self) -> Vec<Settings> {
        (0..self.replicas as u32)
            .map(|r| {
                let mut s = Settings::new(r, self.replicas, server_kind(self.data_type));
                s.causal_assuming = self.strategy == Strategy::CausalAssuming;
                s.flags = self.bugs.iter().map(|b| server_flag(*b)).collect();
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StressReport {
    pub rounds: u64,
    pub ops_issued: u64,
    /// Requests a replica refused.
    pub rejected: u64,
    pub deliveries: u64,
    /// Rounds whose replicas ended in different states, 0-based.
    pub divergent_rounds: Vec<u64>,
}

impl StressReport {
    pub fn to_json(&self, cfg: &StressConfig) -> Value {
        let DelayModel::Uniform { max } = cfg.delay;
        json!({
            "config": {
                "bugs": cfg.bugs.iter().map(|b| b.as_str()).collect::<Vec<_>>(),
                "delay": format!("uniform:{max}"),
                "n": cfg.replicas,
                "ops_per_round": cfg.ops_per_round,
                "rounds": cfg.rounds,
                "seed": cfg.seed,
                "strategy": cfg.strategy.as_str(),
                "type": cfg.data_type.as_str(),
            },
            "deliveries": self.deliveries,
            "divergences": self.divergent_rounds.len(),
            "divergent_rounds": self.divergent_rounds,
            "ops_issued": self.ops_issued,
            "rejected": self.rejected,
            "rounds": self.rounds,
        })
    }
}

struct InFlight {
    due: u64,
    dest: u32,
    msg: Value,
}

const RPQ_IDS: [&str; 3] = ["e0", "e1", "e2"];

fn random_request(rng: &mut ChaCha8Rng, t: DataType, state: &str, fresh: String) -> Value {
    match t {
        DataType::Rpq => {
            let id = *RPQ_IDS.choose(rng).expect("non-empty");
            match rng.gen_range(0..3) {
                0 => json!({"op": "rpq_add", "id": id, "value": rng.gen_range(1..=50)}),
                1 => json!({"op": "rpq_increase", "id": id, "delta": rng.gen_range(-5..=5)}),
                _ => json!({"op": "rpq_remove", "id": id}),
            }
        }
        DataType::List => {
            let parsed: Value = serde_json::from_str(state).unwrap_or(Value::Null);
            let known: Vec<String> = parsed["elements"]
                .as_object()
                .map(|m| {
                    m.iter()
                        .filter(|(_, e)| !e["pos"].is_null())
                        .map(|(id, _)| id.clone())
                        .collect()
                })
                .unwrap_or_default();
            let choice = if known.is_empty() { 0 } else { rng.gen_range(0..5) };
            let pick = |rng: &mut ChaCha8Rng| known.choose(rng).cloned();
            let attr = rng.gen_range(1..=9);
            match choice {
                0 | 1 => {
                    let anchor = if rng.gen_bool(0.25) { None } else { pick(rng) };
                    json!({"op": "list_insert", "id": fresh, "anchor": anchor, "attr": attr})
                }
                2 => json!({"op": "list_update", "id": pick(rng), "attr": attr}),
                3 => json!({"op": "list_remove", "id": pick(rng)}),
                _ => json!({"op": "list_readd", "id": pick(rng)}),
            }
        }
    }
}

fn deliver_due(
    group: &mut Group,
    flight: &mut Vec<InFlight>,
    now: u64,
    rng: &mut ChaCha8Rng,
    report: &mut StressReport,
) -> Result<(), HarnessError> {
    let (mut due, rest): (Vec<InFlight>, Vec<InFlight>) = std::mem::take(flight).into_iter().partition(|m| m.due <= now);
    *flight = rest;
    due.shuffle(rng);
    for m in due {
        group.request(m.dest, &Frame::Sync { dest: m.dest, msg: m.msg })?;
        report.deliveries += 1;
    }
    Ok(())
}

/// Runs `cfg.rounds` rounds from one seeded generator. Each round starts
/// from fresh replicas, issues `ops_per_round` random requests to random
/// replicas, delivers every message after a random delay, and finally
/// compares all replicas.
pub fn stress(cfg: &StressConfig) -> Result<StressReport, HarnessError> {
    if cfg.replicas == 0 {
        return Err(HarnessError::Config("stress needs at least one replica".into()));
    }
    let DelayModel::Uniform { max } = cfg.delay;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut group = Group::start(cfg.settings(), cfg.transport)?;
    let mut report = StressReport::default();
    for round in 0..cfg.rounds {
        if round > 0 {
            group.reset()?;
        }
        let mut flight: Vec<InFlight> = Vec::new();
        let mut now = 0u64;
        for op in 0..cfg.ops_per_round {
            let target = rng.gen_range(0..cfg.replicas) as u32;
            let state = if cfg.data_type == DataType::List {
                group.inspect(target)?.0
            } else {
                String::new()
            };
            let req = random_request(&mut rng, cfg.data_type, &state, format!("x{op}"));
            report.ops_issued += 1;
            match group.request(target, &Frame::ClientOp { op: req })? {
                Reply::Ack { error: Some(_), .. } => report.rejected += 1,
                Reply::Ack { syncs, .. } => {
                    for (dest, msg) in syncs {
                        let due = now + rng.gen_range(0..=max);
                        flight.push(InFlight { due, dest, msg });
                    }
                }
                Reply::Inspect { .. } => unreachable!("ClientOp answered by Ack"),
            }
            deliver_due(&mut group, &mut flight, now, &mut rng, &mut report)?;
            now += 1;
        }
        while !flight.is_empty() {
            deliver_due(&mut group, &mut flight, now, &mut rng, &mut report)?;
            now += 1;
        }
        let states = group.inspect_all()?;
        if states.windows(2).any(|w| w[0] != w[1]) {
            debug!(round, "replicas diverged");
            report.divergent_rounds.push(round);
        }
        report.rounds += 1;
    }
    Ok(report)
}
