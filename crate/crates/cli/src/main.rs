//! `ridehail`: generate instances, solve the LP, compare the rounding policy
//! against exact benchmarks and run Monte-Carlo simulations.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 the rounding
//! policy fell short of its guarantee, 4 an oracle size cap was exceeded.

mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use config::{Cli, Command, GenKind, GenArgs, OutputFormat, RunConfig};
use output::{emit, fmt_num, to_json};
use ridehail::instance::{random_general_instance, random_instance, write_instance, AnyInstance};
use ridehail::lp::{build_lp_match_gen, solve, write_lp_format};
use ridehail::montecarlo::simulate;
use ridehail::oracle::{exact_policy_marginals, opt_offline_or_estimate, opt_online};
use ridehail::par::with_threads;
use ridehail::policy::{episode_rng, prepare, run_general_once};
use ridehail::ssat::{parse_dimacs, reduce_to_ridehail, reduce_to_ridehail_unweighted};
use ridehail::{Error, Execution, GeneralInstance, PolicyConfig};

/// Slack on the guarantee check in `compare`.
const GUARANTEE_TOLERANCE: f64 = 1e-6;

enum Failure {
    Usage(anyhow::Error),
    Input(anyhow::Error),
    Guarantee(String),
    Cap(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Guarantee(_) => 3,
            Failure::Cap(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let cap = e
            .chain()
            .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::CapExceeded { .. })));
        if cap {
            Failure::Cap(e)
        } else {
            Failure::Input(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Input(e) | Failure::Cap(e) => eprintln!("error: {e:#}"),
                Failure::Guarantee(msg) => eprintln!("guarantee violated: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = RunConfig::from_cli(&cli).map_err(Failure::Usage)?;
    match &cli.command {
        Command::Gen(args) => cmd_gen(args, &config).map_err(Failure::from),
        Command::Lp(args) => cmd_lp(&config, args.dump_lp.as_deref()).map_err(Failure::from),
        Command::Compare(_) => cmd_compare(&config),
        Command::Simulate(_) => cmd_simulate(&config).map_err(Failure::from),
        Command::Trace(args) => cmd_trace(&config, args.episode).map_err(Failure::from),
    }
}

fn summary(instance: &AnyInstance) -> String {
    format!(
        "bins: {}, balls: {}, max weight: {}",
        instance.num_bins(),
        instance.num_balls(),
        fmt_num(instance.max_weight())
    )
}

fn cmd_gen(args: &GenArgs, config: &RunConfig) -> Result<()> {
    let instance: AnyInstance = match args.kind {
        GenKind::Gap => ridehail::instance::gap_instance().into(),
        GenKind::Random => {
            let (Some(bins), Some(balls)) = (args.bins, args.balls) else {
                bail!("`gen random` needs --bins and --balls");
            };
            if args.realizations > 1 {
                random_general_instance(bins, balls, args.realizations, config.seed, args.weight_scale).into()
            } else {
                random_instance(bins, balls, config.seed, args.weight_scale).into()
            }
        }
        GenKind::SsatReduce | GenKind::SsatReduceUnweighted => {
            let path = args.cnf.as_ref().ok_or_else(|| anyhow!("--cnf is required"))?;
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let phi = parse_dimacs(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            if args.kind == GenKind::SsatReduce {
                reduce_to_ridehail(&phi)?.into()
            } else {
                reduce_to_ridehail_unweighted(&phi)?.into()
            }
        }
    };
    instance.validate().into_result()?;
    let text = String::from_utf8(write_instance(&instance)).expect("instance JSON is UTF-8");
    emit(config.out.as_deref(), &text)?;
    eprintln!("{}", summary(&instance));
    Ok(())
}

#[derive(Serialize)]
struct EdgeValueOut {
    ball: usize,
    bin: usize,
    realization: usize,
    value: f64,
}

#[derive(Serialize)]
struct LpOut {
    objective: f64,
    /// Nonzero entries only, 1-based.
    values: Vec<EdgeValueOut>,
}

fn cmd_lp(config: &RunConfig, dump: Option<&Path>) -> Result<()> {
    let instance = config.load()?;
    let lp = build_lp_match_gen(&instance)?;
    if let Some(path) = dump {
        emit(Some(path), &write_lp_format(&lp))?;
    }
    let sol = solve(&lp)?;
    let out = LpOut {
        objective: sol.objective,
        values: sol
            .values
            .iter()
            .filter(|&(_, _, _, v)| v != 0.0)
            .map(|(i, t, j, v)| EdgeValueOut {
                ball: t + 1,
                bin: i + 1,
                realization: j + 1,
                value: v,
            })
            .collect(),
    };
    emit(config.out.as_deref(), &to_json(&out)?)?;
    eprintln!("objective: {}", fmt_num(sol.objective));
    Ok(())
}

#[derive(Serialize)]
struct Ratios {
    alg_over_opt_on: Option<f64>,
    alg_over_lp: Option<f64>,
    opt_on_over_opt_off: Option<f64>,
    opt_on_over_lp: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport {
    lp: f64,
    opt_on: f64,
    opt_off: f64,
    opt_off_exact: bool,
    opt_off_ci_halfwidth: f64,
    alg_exact: f64,
    alg_mc: f64,
    alg_mc_std_error: f64,
    c: f64,
    episodes: u64,
    seed: u64,
    guarantee: f64,
    ratios: Ratios,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

fn cmd_compare(config: &RunConfig) -> Result<(), Failure> {
    let instance = config.load()?;
    let (report, violated) = with_threads(config.threads, || compare(config, &instance))?;
    emit(config.out.as_deref(), &to_json(&report).map_err(Failure::from)?)?;
    if violated {
        return Err(Failure::Guarantee(format!(
            "exact policy value {} < {} x LP {}",
            fmt_num(report.alg_exact),
            fmt_num(report.guarantee),
            fmt_num(report.lp)
        )));
    }
    Ok(())
}

fn compare(config: &RunConfig, instance: &GeneralInstance) -> Result<(CompareReport, bool)> {
    let policy_config = PolicyConfig {
        c: config.c,
        seed: config.seed,
    };
    let sol = solve(&build_lp_match_gen(instance)?)?;
    let prepared = prepare(&sol, instance, policy_config)?;
    let exact = exact_policy_marginals(&prepared, instance, config.caps)?;
    let on = opt_online(instance, config.caps)?.value;
    let off = opt_offline_or_estimate(instance, config.caps, config.episodes, config.seed, Execution::default())?;
    let mc = simulate(&prepared, instance, config.episodes, config.seed)?;
    let guarantee = 0.5 + config.c;
    let violated = exact.value < guarantee * sol.objective - GUARANTEE_TOLERANCE;
    let report = CompareReport {
        lp: sol.objective,
        opt_on: on,
        opt_off: off.value,
        opt_off_exact: off.exact,
        opt_off_ci_halfwidth: off.ci_halfwidth,
        alg_exact: exact.value,
        alg_mc: mc.mean,
        alg_mc_std_error: mc.std_error,
        c: config.c,
        episodes: config.episodes,
        seed: config.seed,
        guarantee,
        ratios: Ratios {
            alg_over_opt_on: ratio(exact.value, on),
            alg_over_lp: ratio(exact.value, sol.objective),
            opt_on_over_opt_off: ratio(on, off.value),
            opt_on_over_lp: ratio(on, sol.objective),
        },
    };
    Ok((report, violated))
}

fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let instance = config.load()?;
    let sol = solve(&build_lp_match_gen(&instance)?)?;
    let prepared = prepare(
        &sol,
        &instance,
        PolicyConfig {
            c: config.c,
            seed: config.seed,
        },
    )?;
    let report = with_threads(config.threads, || simulate(&prepared, &instance, config.episodes, config.seed))?;
    let text = match config.format {
        OutputFormat::Json => to_json(&report)?,
        OutputFormat::Csv => report.edges_csv(),
    };
    emit(config.out.as_deref(), &text)?;
    eprintln!(
        "mean: {} (std error {})",
        fmt_num(report.mean),
        fmt_num(report.std_error)
    );
    Ok(())
}

fn cmd_trace(config: &RunConfig, episode: u64) -> Result<()> {
    let instance = config.load()?;
    let sol = solve(&build_lp_match_gen(&instance)?)?;
    let prepared = prepare(
        &sol,
        &instance,
        PolicyConfig {
            c: config.c,
            seed: config.seed,
        },
    )?;
    let trace = run_general_once(&prepared, &instance, &mut episode_rng(config.seed, episode));
    emit(config.out.as_deref(), &trace.to_json_lines())?;
    eprintln!("total weight: {}", fmt_num(trace.total_weight));
    Ok(())
}
