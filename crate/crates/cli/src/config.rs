use std::io::Read;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ridehail::instance::{gap_instance, read_instance};
use ridehail::oracle::{OracleCaps, DEFAULT_MAX_BINS, DEFAULT_MAX_PROFILES};
use ridehail::GeneralInstance;

#[derive(Debug, Parser)]
#[command(name = "ridehail", version, about = "Online stochastic bipartite matching toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance document.
    Gen(GenArgs),
    /// Solve the LP relaxation.
    Lp(LpArgs),
    /// LP bound, exact benchmarks and the rounding policy side by side.
    Compare(CompareArgs),
    /// Monte-Carlo estimates for the rounding policy.
    Simulate(SimulateArgs),
    /// One episode of the rounding policy as JSON lines.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Random,
    Gap,
    SsatReduce,
    SsatReduceUnweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub kind: GenKind,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub balls: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_scale: f64,
    /// Up to this many weight vectors per ball; above 1 produces a general
    /// instance.
    #[arg(long, default_value_t = 1)]
    pub realizations: usize,
    /// Formula in DIMACS CNF, for the reductions.
    #[arg(long)]
    pub cnf: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Instance document; `-` reads stdin.
    #[arg(group = "source")]
    pub instance: Option<PathBuf>,
    /// Use the built-in two-bin gap instance.
    #[arg(long, group = "source")]
    pub gap: bool,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, default_value_t = 0.01)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LpArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Also write the LP in CPLEX LP format.
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 100_000)]
    pub episodes: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_BINS)]
    pub max_bins: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_PROFILES)]
    pub max_profiles: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 100_000)]
    pub episodes: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Episode index; selects the random stream.
    #[arg(long, default_value_t = 0)]
    pub episode: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Gap,
}

/// Settings shared by every command, after validation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: Option<InstanceSource>,
    pub c: f64,
    pub seed: u64,
    pub episodes: u64,
    pub caps: OracleCaps,
    pub format: OutputFormat,
    pub threads: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            source: None,
            c: 0.01,
            seed: 0,
            episodes: 100_000,
            caps: OracleCaps::default(),
            format: OutputFormat::Json,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: None,
        }
    }
}

fn source(args: &SourceArgs) -> Option<InstanceSource> {
    match (&args.instance, args.gap) {
        (Some(p), false) => Some(InstanceSource::File(p.clone())),
        (None, true) => Some(InstanceSource::Gap),
        _ => None,
    }
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let policy = |cfg: &mut RunConfig, p: &PolicyArgs| {
            cfg.c = p.c;
            cfg.seed = p.seed;
        };
        match &cli.command {
            Command::Gen(a) => {
                cfg.seed = a.seed;
                cfg.out = a.out.clone();
            }
            Command::Lp(a) => {
                cfg.source = source(&a.source);
                cfg.out = a.out.clone();
            }
            Command::Compare(a) => {
                cfg.source = source(&a.source);
                policy(&mut cfg, &a.policy);
                cfg.episodes = a.episodes;
                cfg.caps = OracleCaps {
                    max_bins: a.max_bins,
                    max_profiles: a.max_profiles,
                };
                cfg.threads = a.threads.unwrap_or(cfg.threads);
                cfg.out = a.out.clone();
            }
            Command::Simulate(a) => {
                cfg.source = source(&a.source);
                policy(&mut cfg, &a.policy);
                cfg.episodes = a.episodes;
                cfg.format = a.format;
                cfg.threads = a.threads.unwrap_or(cfg.threads);
                cfg.out = a.out.clone();
            }
            Command::Trace(a) => {
                cfg.source = source(&a.source);
                policy(&mut cfg, &a.policy);
                cfg.out = a.out.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.c) {
            bail!("--c must lie in [0, 0.5), got {}", self.c);
        }
        if self.episodes == 0 {
            bail!("--episodes must be at least 1");
        }
        if self.threads == 0 {
            bail!("--threads must be at least 1");
        }
        Ok(())
    }

    pub fn load(&self) -> Result<GeneralInstance> {
        match &self.source {
            Some(InstanceSource::Gap) => Ok(gap_instance()),
            Some(InstanceSource::File(path)) => {
                let bytes = if path.as_os_str() == "-" {
                    let mut buf = Vec::new();
                    std::io::stdin().read_to_end(&mut buf)?;
                    buf
                } else {
                    std::fs::read(path).with_context(|| format!("reading {}", path.display()))?
                };
                let instance = read_instance(&bytes).with_context(|| format!("loading {}", path.display()))?;
                Ok(instance.to_general()?)
            }
            None => bail!("no instance given"),
        }
    }
}
