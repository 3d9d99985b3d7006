//! `replicheck`: explore replicated data type designs exhaustively, turn the
//! explored executions into test cases, and replay them against replica
//! servers.

mod commands;
mod config;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing::Level;

use config::ModelArgs;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean = 0,
    Usage = 1,
    /// Violations or divergences were found.
    Found = 2,
    BudgetExceeded = 3,
}

#[derive(Debug, Parser)]
#[command(name = "replicheck", version, about)]
struct Cli {
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate every execution of a configuration and check invariants.
    Explore(ExploreArgs),
    /// Write one test case per complete execution as JSONL.
    Gen(GenArgs),
    /// Replay test cases against replica servers.
    Replay(ReplayArgs),
    /// Random requests with random delays, checking convergence per round.
    Stress(StressArgs),
    /// List the injectable bugs.
    Bugs,
    /// Run one replica server on a TCP port.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ExploreArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Model-level bug to enable (repeatable).
    #[arg(long = "bug")]
    bugs: Vec<String>,
    /// Stop after this many transitions.
    #[arg(long)]
    state_cap: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    time_cap: Option<u64>,
    /// Counterexamples kept in the report.
    #[arg(long)]
    violation_cap: Option<usize>,
    /// Also write every execution as a test case to this file, or `-` for
    /// stdout (the report then goes to stderr unless --out is given).
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for uniformity; exploration is exhaustive.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Model-level bug to enable (repeatable).
    #[arg(long = "bug")]
    bugs: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many cases.
    #[arg(long)]
    limit: Option<u64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// JSONL corpus, or `-` for stdin.
    cases: PathBuf,
    /// Model configuration the cases came from; inferred from the cases
    /// when absent.
    #[command(flatten)]
    model: ModelArgs,
    /// Bug injected into the servers (repeatable).
    #[arg(long = "bug")]
    bugs: Vec<String>,
    /// Model-level bug the cases were generated with (repeatable).
    #[arg(long = "model-bug")]
    model_bugs: Vec<String>,
    /// Replica groups running cases side by side.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Start new replica servers for every case.
    #[arg(long)]
    fresh_group: bool,
    /// Compare states after every event rather than only at the end.
    #[arg(long)]
    checkpoint_every_event: bool,
    /// in-process or tcp.
    #[arg(long)]
    transport: Option<String>,
    /// Write failing cases here, one file each.
    #[arg(long)]
    failures_dir: Option<PathBuf>,
    /// Failing cases kept in the summary.
    #[arg(long)]
    keep_failures: Option<usize>,
    /// Write the summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StressArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "type", value_name = "TYPE")]
    data_type: Option<String>,
    #[arg(short = 'n', long = "replicas")]
    n: Option<usize>,
    #[arg(long)]
    rounds: Option<u64>,
    /// Requests per round.
    #[arg(long)]
    ops: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Delay model, e.g. uniform:8 (ticks).
    #[arg(long)]
    delay: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    /// Bug injected into the servers (repeatable).
    #[arg(long = "bug")]
    bugs: Vec<String>,
    #[arg(long)]
    transport: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// This replica's index.
    #[arg(long)]
    replica: u32,
    #[arg(long = "type", value_name = "TYPE")]
    data_type: String,
    #[arg(short = 'n', long = "replicas")]
    n: usize,
    #[arg(long, default_value = "standard")]
    strategy: String,
    #[arg(long = "bug")]
    bugs: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::Usage as u8 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        _ => Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let result = match cli.command {
        Command::Explore(a) => commands::explore(a),
        Command::Gen(a) => commands::gen(a),
        Command::Replay(a) => commands::replay(a),
        Command::Stress(a) => commands::stress(a),
        Command::Bugs => commands::bugs(),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::Usage as u8)
        }
    }
}
