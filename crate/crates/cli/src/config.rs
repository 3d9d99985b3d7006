//! Run configuration: an optional TOML file overlaid by command line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use replicheck_core::explorer::{BugFlag, ChannelMode, ExplorationConfig, ExploreOptions};
use replicheck_core::{DataType, ReplicaId, Strategy};
use serde::Deserialize;

/// Everything a run can be configured with. Paths and budgets never reach
/// the configuration fingerprint.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    #[serde(rename = "type")]
    pub data_type: Option<String>,
    pub n: Option<usize>,
    pub q: Option<usize>,
    pub channel: Option<String>,
    pub strategy: Option<String>,
    /// Model-level bugs.
    #[serde(default)]
    pub bugs: Vec<String>,
    /// Bugs injected only into replica servers.
    #[serde(default)]
    pub server_bugs: Vec<String>,
    pub targets: Option<Vec<ReplicaId>>,
    pub state_cap: Option<u64>,
    /// Seconds.
    pub time_cap: Option<u64>,
    pub violation_cap: Option<usize>,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub ops: Option<u64>,
    pub delay: Option<String>,
    pub transport: Option<String>,
    pub parallelism: Option<usize>,
    pub keep_failures: Option<usize>,
    pub failures_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags describing the model configuration.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data type: rpq or list.
    #[arg(long = "type", value_name = "TYPE")]
    pub data_type: Option<String>,
    /// Replica count (1 to 3).
    #[arg(short = 'n', long = "replicas")]
    pub n: Option<usize>,
    /// Client request slots.
    #[arg(short = 'q', long = "requests")]
    pub q: Option<usize>,
    /// arbitrary or causal.
    #[arg(long)]
    pub channel: Option<String>,
    /// standard or causal-assuming.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Target replica of each slot, comma separated; round-robin otherwise.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<ReplicaId>>,
}

impl ModelArgs {
    /// Reads the file and lays the flags over it.
    pub fn merged(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::load(self.config.as_deref())?;
        overlay(&mut rc.data_type, &self.data_type);
        overlay(&mut rc.n, &self.n);
        overlay(&mut rc.q, &self.q);
        overlay(&mut rc.channel, &self.channel);
        overlay(&mut rc.strategy, &self.strategy);
        overlay(&mut rc.targets, &self.targets);
        Ok(rc)
    }
}

pub fn overlay<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

pub fn parse_bugs(names: &[String]) -> Result<Vec<BugFlag>> {
    names.iter().map(|s| s.parse().map_err(anyhow::Error::msg)).collect()
}

pub fn parse<T: std::str::FromStr<Err = String>>(what: &str, s: &str) -> Result<T> {
    s.parse().map_err(|e: String| anyhow::anyhow!("--{what}: {e}"))
}

impl RunConfig {
    pub fn data_type(&self) -> Result<Option<DataType>> {
        self.data_type.as_deref().map(|s| parse("type", s)).transpose()
    }

    /// The model configuration; type, n and q must all be known.
    pub fn exploration(&self) -> Result<ExplorationConfig> {
        let (Some(t), Some(n), Some(q)) = (self.data_type()?, self.n, self.q) else {
            bail!("--type, -n and -q are required (on the command line or in --config)");
        };
        self.exploration_with(t, n, q)
    }

    pub fn exploration_with(&self, t: DataType, n: usize, q: usize) -> Result<ExplorationConfig> {
        let mut c = ExplorationConfig::new(t, n, q);
        if let Some(ch) = &self.channel {
            c = c.with_channel(parse::<ChannelMode>("channel", ch)?);
        }
        if let Some(s) = &self.strategy {
            c = c.with_strategy(parse::<Strategy>("strategy", s)?);
        }
        for b in parse_bugs(&self.bugs)? {
            c = c.with_bug(b);
        }
        if let Some(t) = &self.targets {
            c = c.with_targets(t.clone());
        }
        c.validate()?;
        Ok(c)
    }

    pub fn explore_options(&self) -> ExploreOptions {
        let mut o = ExploreOptions {
            state_cap: self.state_cap,
            time_cap: self.time_cap.map(Duration::from_secs),
            ..Default::default()
        };
        if let Some(v) = self.violation_cap {
            o.violation_cap = v;
        }
        o
    }
}
