use replicheck_core::explorer::{EventLabel, ExplorationConfig};
use replicheck_core::testgen::generate;
use replicheck_core::DataType;
use replicheck_harness::{run_case, Exchange, HarnessConfig, Verdict};
use replicheck_server::Frame;

/// Frames sent to each replica during replay are exactly the schedule's
/// events at that replica, in schedule order, each answered before the
/// next is sent.
#[test]
fn replicas_see_their_projection_of_the_schedule_in_lockstep() {
    for (t, n) in [(DataType::Rpq, 2), (DataType::List, 2), (DataType::List, 3)] {
        let c = ExplorationConfig::new(t, n, 3);
        let cfg = HarnessConfig::new(c.clone());
        for case in generate(&c).unwrap().iter().step_by(if n == 2 { 37 } else { 4001 }) {
            let mut group = cfg.start_group().unwrap();
            group.record();
            assert_eq!(run_case(case, &cfg, &mut group).unwrap(), Verdict::Pass);
            let log = group.take_log();

            for pair in log.chunks(2) {
                match pair {
                    [Exchange::Sent { replica: a, frame }, Exchange::Received { replica: b, frame: reply }] => {
                        assert_eq!(a, b);
                        let expected = if *frame == Frame::Inspect { "InspectReply" } else { "Ack" };
                        assert_eq!(reply.kind(), expected);
                    }
                    other => panic!("not a request/reply pair: {other:?}"),
                }
            }

            for r in 0..n as u32 {
                let seen: Vec<String> = log
                    .iter()
                    .filter_map(|e| match e {
                        Exchange::Sent { replica, frame } if *replica == r => Some(frame),
                        _ => None,
                    })
                    .filter_map(|f| match f {
                        Frame::ClientOp { op } => Some(format!("C {op}")),
                        Frame::Sync { dest, msg } => {
                            Some(format!("D {dest} {}:{}", msg["op"]["dot"][0], msg["op"]["dot"][1]))
                        }
                        _ => None,
                    })
                    .collect();
                let projected: Vec<String> = case
                    .schedule
                    .iter()
                    .filter_map(|e| match e {
                        EventLabel::Client { request, target, .. } if *target == r => {
                            Some(format!("C {}", request.to_json()))
                        }
                        EventLabel::Deliver { dest, origin, counter } if *dest == r => {
                            Some(format!("D {dest} {origin}:{counter}"))
                        }
                        _ => None,
                    })
                    .collect();
                assert_eq!(seen, projected, "replica {r}");
            }
        }
    }
}
