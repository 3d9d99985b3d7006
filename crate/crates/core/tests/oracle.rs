mod common;

use common::{enumerate, random_op_set, Outcome, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replicheck_core::explorer::{
    explore_with, BugFlag, ChannelMode, ExplorationConfig, ExploreOptions, RPQ_ELEMENT, RPQ_INCREMENTS,
    RPQ_INITIAL_VALUES,
};
use replicheck_core::{Behavior, DataType, ReplicaId, Request, Strategy};

struct Variant {
    bug1: bool,
    causal_assuming: bool,
    causal_channel: bool,
}

const VARIANTS: [Variant; 4] = [
    Variant { bug1: false, causal_assuming: false, causal_channel: false },
    Variant { bug1: true, causal_assuming: false, causal_channel: false },
    Variant { bug1: false, causal_assuming: true, causal_channel: false },
    Variant { bug1: false, causal_assuming: true, causal_channel: true },
];

fn brute(t: DataType, n: usize, ops: &[(Request, ReplicaId)], v: &Variant) -> Outcome {
    enumerate(&Scenario {
        data_type: t,
        replicas: n,
        ops,
        behavior: Behavior {
            strategy: if v.causal_assuming { Strategy::CausalAssuming } else { Strategy::Standard },
            readd_accept: v.bug1,
        },
        causal: v.causal_channel,
    })
}

fn explorer(t: DataType, n: usize, ops: &[(Request, ReplicaId)], v: &Variant, dedup: bool) -> Outcome {
    let mut c = ExplorationConfig::new(t, n, ops.len())
        .with_fixed_ops(ops.iter().map(|(r, _)| r.clone()).collect())
        .with_targets(ops.iter().map(|(_, t)| *t).collect());
    if v.bug1 {
        c = c.with_bug(BugFlag::ReaddAccept);
    }
    if v.causal_assuming {
        c = c.with_strategy(Strategy::CausalAssuming);
    }
    if v.causal_channel {
        c = c.with_channel(ChannelMode::Causal);
    }
    let opts = ExploreOptions {
        dedup,
        collect_oracles: true,
        ..Default::default()
    };
    let r = explore_with(&c, &opts).unwrap();
    assert!(r.exhaustive);
    Outcome {
        traces: r.terminal_traces,
        violations: r.violation_counts.keys().map(|k| leak(k)).collect(),
        oracles: r
            .terminal_oracles
            .unwrap()
            .into_iter()
            .map(|(k, v)| (k.into_iter().map(|s| s.into_string()).collect(), v))
            .collect(),
    }
}

fn leak(s: &str) -> &'static str {
    match s {
        "convergence" => "convergence",
        "buffer-liveness" => "buffer-liveness",
        "position-defined" => "position-defined",
        "position-wellformed" => "position-wellformed",
        "position-unique" => "position-unique",
        other => panic!("unexpected invariant {other}"),
    }
}

/// The enumeration is an oracle only for terminal executions; when a
/// per-state violation prunes a branch, executions through it are missing
/// from both sides alike.
#[test]
fn explorer_matches_brute_force_on_random_request_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in [DataType::Rpq, DataType::List] {
        for n in [2, 3] {
            for _ in 0..8 {
                let ops = random_op_set(&mut rng, t, n, 3);
                for v in &VARIANTS {
                    let want = brute(t, n, &ops, v);
                    let got = explorer(t, n, &ops, v, true);
                    assert_eq!(got, want, "{t} n={n} {ops:?}");
                }
            }
        }
    }
}

#[test]
fn dedup_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in [DataType::Rpq, DataType::List] {
        for _ in 0..6 {
            let ops = random_op_set(&mut rng, t, 3, 3);
            for v in &VARIANTS {
                assert_eq!(explorer(t, 3, &ops, v, false), explorer(t, 3, &ops, v, true), "{t} {ops:?}");
            }
        }
    }
}

/// Single replica RPQ: every slot offers the same five requests, so the
/// executions are exactly the request sequences.
#[test]
fn single_replica_trace_count_is_a_path_count() {
    let mut menu = Vec::new();
    for value in RPQ_INITIAL_VALUES {
        menu.push(Request::RpqAdd { id: RPQ_ELEMENT.into(), value });
    }
    for delta in RPQ_INCREMENTS {
        menu.push(Request::RpqIncrease { id: RPQ_ELEMENT.into(), delta });
    }
    menu.push(Request::RpqRemove { id: RPQ_ELEMENT.into() });
    let mut paths = 0;
    for i in 0..625usize {
        let ops: Vec<(Request, ReplicaId)> = (0..4).map(|k| (menu[i / 5usize.pow(k) % 5].clone(), 0)).collect();
        paths += brute(DataType::Rpq, 1, &ops, &VARIANTS[0]).traces;
    }
    let r = explore_with(&ExplorationConfig::new(DataType::Rpq, 1, 4), &ExploreOptions::default()).unwrap();
    assert_eq!(paths, 625);
    assert_eq!(r.terminal_traces, paths);
}

#[test]
fn concurrent_add_and_remove_end_removed_everywhere() {
    let ops = [
        (Request::RpqAdd { id: "e".into(), value: 10 }, 0),
        (Request::RpqRemove { id: "e".into() }, 1),
    ];
    let out = brute(DataType::Rpq, 2, &ops, &VARIANTS[0]);
    assert!(out.converges());
    for states in out.oracles.keys() {
        for s in states {
            assert!(!s.contains("\"existence\":\"existent\""), "{s}");
        }
    }
}

