use replicheck_core::explorer::BugFlag;
use replicheck_core::DataType;
use replicheck_harness::{stress, DelayModel, StressConfig};

fn config(t: DataType, n: usize) -> StressConfig {
    let mut c = StressConfig::new(t, n);
    c.rounds = 100;
    c.ops_per_round = 100;
    c.seed = 42;
    c
}

#[test]
fn flagless_servers_never_diverge() {
    for t in [DataType::Rpq, DataType::List] {
        let r = stress(&config(t, 3)).unwrap();
        assert_eq!(r.rounds, 100);
        assert_eq!(r.ops_issued, 10_000);
        assert!(r.divergent_rounds.is_empty(), "{t}: {:?}", r.divergent_rounds);
    }
}

#[test]
fn reports_are_reproducible_from_the_seed() {
    let mut c = config(DataType::List, 2);
    c.rounds = 10;
    c.bugs.insert(BugFlag::IdgenOrder);
    c.delay = DelayModel::Uniform { max: 3 };
    let a = stress(&c).unwrap();
    assert_eq!(a.to_json(&c), stress(&c).unwrap().to_json(&c));
}

/// Stress runs either hit a seeded bug or not; the report says which
/// rounds did.
#[test]
fn buggy_servers_report_honestly() {
    let mut c = config(DataType::List, 3);
    c.rounds = 20;
    c.bugs.insert(BugFlag::ReaddAccept);
    let r = stress(&c).unwrap();
    assert_eq!(r.rounds, 20);
    assert!(r.divergent_rounds.iter().all(|&x| x < 20));
}
