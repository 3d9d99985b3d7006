use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::Path;

use anyhow::{Context, Result};
use replicheck_core::explorer::{explore_with, BugFlag, ChannelMode, EventLabel, ExplorationConfig, BUG_CATALOG};
use replicheck_core::testgen::{emit, TestCase, TestgenError};
use replicheck_core::{DataType, Strategy};
use replicheck_harness::corpus::CorpusOptions;
use replicheck_harness::{replay_corpus, server_flag, server_kind, HarnessConfig, StressConfig};
use replicheck_server::Settings;
use serde_json::{json, Value};
use tracing::{info, warn};

use crate::config::{overlay, parse, parse_bugs, RunConfig};
use crate::{ExploreArgs, GenArgs, ReplayArgs, ServeArgs, Status, StressArgs};

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => {
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, v: &Value) -> Result<()> {
    let mut out = output(path)?;
    writeln!(out, "{v}")?;
    out.flush()?;
    Ok(())
}

fn model_config(model: &crate::config::ModelArgs, bugs: &[String]) -> Result<(RunConfig, ExplorationConfig)> {
    let mut rc = model.merged()?;
    rc.bugs.extend(bugs.iter().cloned());
    let c = rc.exploration()?;
    Ok((rc, c))
}

pub fn explore(a: ExploreArgs) -> Result<Status> {
    let (mut rc, c) = model_config(&a.model, &a.bugs)?;
    overlay(&mut rc.state_cap, &a.state_cap);
    overlay(&mut rc.time_cap, &a.time_cap);
    overlay(&mut rc.violation_cap, &a.violation_cap);
    if let Some(path) = &a.emit {
        let mut out = output(Some(path))?;
        let stats = emit(&c, &mut out, None)?;
        out.flush()?;
        info!(cases = stats.emitted, pruned = stats.pruned, "test cases written");
    }
    let report = explore_with(&c, &rc.explore_options())?;
    let mut j = report.to_json();
    j["fingerprint"] = json!(c.fingerprint());
    let to_stderr = a.out.is_none() && a.emit.as_deref() == Some(Path::new("-"));
    if to_stderr {
        eprintln!("{j}");
    } else {
        write_json(a.out.as_deref(), &j)?;
    }
    Ok(if report.has_violations() {
        Status::Found
    } else if !report.exhaustive {
        Status::BudgetExceeded
    } else {
        Status::Clean
    })
}

pub fn gen(a: GenArgs) -> Result<Status> {
    let (_, c) = model_config(&a.model, &a.bugs)?;
    let mut out = output(a.out.as_deref())?;
    let stats = emit(&c, &mut out, a.limit)?;
    out.flush()?;
    info!(cases = stats.emitted, pruned = stats.pruned, "test cases written");
    Ok(Status::Clean)
}

/// Streams cases from a file or stdin, numbering lines from 1.
fn case_stream(path: &Path) -> Result<impl Iterator<Item = Result<TestCase, TestgenError>>> {
    let reader: Box<dyn BufRead> = if path == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
    };
    Ok(reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(TestCase::parse(&l, i + 1)),
        Err(e) => Some(Err(e.into())),
    }))
}

/// Shape of the configuration a case was generated from.
fn case_shape(case: &TestCase) -> (Option<DataType>, usize, usize, Vec<u32>) {
    let mut t = None;
    let mut targets = Vec::new();
    for e in &case.schedule {
        if let EventLabel::Client { request, target, .. } = e {
            t = Some(request.data_type());
            targets.push(*target);
        }
    }
    (t, case.oracle.len(), targets.len(), targets)
}

/// Completes the model configuration from the first case when flags leave
/// parts of it open, preferring a candidate whose fingerprint matches.
fn infer_model(rc: &RunConfig, first: Option<&TestCase>) -> Result<ExplorationConfig> {
    let Some(case) = first else {
        return rc.exploration();
    };
    let (t, n, q, targets) = case_shape(case);
    let types: Vec<DataType> = match (rc.data_type()?, t) {
        (Some(t), _) | (None, Some(t)) => vec![t],
        (None, None) => vec![DataType::Rpq, DataType::List],
    };
    let n = rc.n.unwrap_or(n);
    let q = rc.q.unwrap_or(q);
    let mut base = rc.clone();
    if base.targets.is_none() && targets.iter().enumerate().any(|(s, r)| *r as usize != s % n.max(1)) {
        base.targets = Some(targets);
    }
    let channels: Vec<Option<String>> = match &rc.channel {
        Some(c) => vec![Some(c.clone())],
        None => [ChannelMode::Arbitrary, ChannelMode::Causal].iter().map(|c| Some(c.as_str().to_string())).collect(),
    };
    let strategies: Vec<Option<String>> = match &rc.strategy {
        Some(s) => vec![Some(s.clone())],
        None => [Strategy::Standard, Strategy::CausalAssuming].iter().map(|s| Some(s.as_str().to_string())).collect(),
    };
    let bug_sets: Vec<Vec<String>> = if rc.bugs.is_empty() {
        vec![vec![], vec![BugFlag::ReaddAccept.as_str().to_string()]]
    } else {
        vec![rc.bugs.clone()]
    };
    let mut first_valid = None;
    for t in &types {
        for ch in &channels {
            for st in &strategies {
                for bugs in &bug_sets {
                    let mut cand = base.clone();
                    cand.channel.clone_from(ch);
                    cand.strategy.clone_from(st);
                    cand.bugs.clone_from(bugs);
                    let Ok(c) = cand.exploration_with(*t, n, q) else { continue };
                    if c.fingerprint() == case.cfg {
                        info!(config = %c.to_json(), "model configuration inferred from the cases");
                        return Ok(c);
                    }
                    first_valid.get_or_insert(c);
                }
            }
        }
    }
    let c = first_valid.ok_or_else(|| anyhow::anyhow!("cannot derive a valid configuration for n={n} q={q}"))?;
    warn!("no configuration matching the cases' fingerprint; they will be rejected");
    Ok(c)
}

pub fn replay(a: ReplayArgs) -> Result<Status> {
    let mut rc = a.model.merged()?;
    rc.bugs.extend(a.model_bugs.iter().cloned());
    rc.server_bugs.extend(a.bugs.iter().cloned());
    overlay(&mut rc.transport, &a.transport);
    overlay(&mut rc.parallelism, &a.parallelism);
    overlay(&mut rc.keep_failures, &a.keep_failures);
    overlay(&mut rc.failures_dir, &a.failures_dir);

    let mut cases = case_stream(&a.cases)?.peekable();
    let first = match cases.peek() {
        Some(Ok(c)) => Some(c.clone()),
        _ => None,
    };
    let model = infer_model(&rc, first.as_ref())?;
    let mut cfg = HarnessConfig::new(model);
    cfg.server_bugs = parse_bugs(&rc.server_bugs)?.into_iter().collect();
    if let Some(t) = &rc.transport {
        cfg.transport = parse("transport", t)?;
    }
    cfg.fresh_group = a.fresh_group;
    cfg.checkpoint_every_event = a.checkpoint_every_event;
    let mut opts = CorpusOptions {
        failure_dir: rc.failures_dir.clone(),
        ..Default::default()
    };
    if let Some(p) = rc.parallelism {
        opts.parallelism = p;
    }
    if let Some(k) = rc.keep_failures {
        opts.keep_failures = k;
    }
    let summary = replay_corpus(cases, &cfg, &opts)?;
    let mut j = summary.to_json();
    j["config"] = cfg.model.to_json();
    j["fingerprint"] = json!(cfg.model.fingerprint());
    j["server_bugs"] = json!(cfg.server_bugs.iter().map(|b| b.as_str()).collect::<Vec<_>>());
    write_json(a.out.as_deref(), &j)?;
    Ok(if summary.failed() > 0 { Status::Found } else { Status::Clean })
}

pub fn stress(a: StressArgs) -> Result<Status> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    overlay(&mut rc.data_type, &a.data_type);
    overlay(&mut rc.n, &a.n);
    overlay(&mut rc.rounds, &a.rounds);
    overlay(&mut rc.ops, &a.ops);
    overlay(&mut rc.seed, &a.seed);
    overlay(&mut rc.delay, &a.delay);
    overlay(&mut rc.strategy, &a.strategy);
    overlay(&mut rc.transport, &a.transport);
    rc.server_bugs.extend(a.bugs.iter().cloned());

    let t = rc.data_type()?.ok_or_else(|| anyhow::anyhow!("--type is required"))?;
    let mut cfg = StressConfig::new(t, rc.n.unwrap_or(3));
    if let Some(r) = rc.rounds {
        cfg.rounds = r;
    }
    if let Some(o) = rc.ops {
        cfg.ops_per_round = o;
    }
    cfg.seed = rc.seed.unwrap_or(0);
    if let Some(d) = &rc.delay {
        cfg.delay = parse("delay", d)?;
    }
    if let Some(s) = &rc.strategy {
        cfg.strategy = parse("strategy", s)?;
    }
    if let Some(tr) = &rc.transport {
        cfg.transport = parse("transport", tr)?;
    }
    cfg.bugs = parse_bugs(&rc.bugs)?.into_iter().chain(parse_bugs(&rc.server_bugs)?).collect();
    let report = replicheck_harness::stress(&cfg)?;
    write_json(a.out.as_deref(), &report.to_json(&cfg))?;
    Ok(if report.divergent_rounds.is_empty() { Status::Clean } else { Status::Found })
}

pub fn bugs() -> Result<Status> {
    let rows: Vec<Value> = BUG_CATALOG
        .iter()
        .map(|b| {
            json!({
                "class": b.class,
                "flag": b.flag.as_str(),
                "issue": b.issue,
                "layer": if b.model_level { "model+server" } else { "server" },
                "summary": b.summary,
            })
        })
        .collect();
    let mut out = io::stdout().lock();
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(Status::Clean)
}

pub fn serve(a: ServeArgs) -> Result<Status> {
    let t: DataType = parse("type", &a.data_type)?;
    let mut s = Settings::new(a.replica, a.n, server_kind(t));
    s.causal_assuming = parse::<Strategy>("strategy", &a.strategy)? == Strategy::CausalAssuming;
    s.flags = parse_bugs(&a.bugs)?.into_iter().map(server_flag).collect();
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!("listening on {}", listener.local_addr()?);
    replicheck_server::serve_tcp(&listener, &s)?;
    Ok(Status::Clean)
}
