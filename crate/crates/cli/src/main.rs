//! `bltail`: boundary layer tails of oscillating Dirichlet problems from
//! the command line. Every subcommand reads a TOML (or JSON) config,
//! applies flag overrides, runs the experiment and writes a CSV/JSON
//! report with a replayable manifest.
//!
//! Exit codes: 0 success, 2 inconclusive verdict, 1 error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use bltail_core::experiments::{emit_report, run, ExperimentKind, Report, RunConfig, Verdict};

#[derive(Parser)]
#[command(name = "bltail", version, about = "boundary layer tail laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON experiment config (a previous manifest.json also works)
    #[arg(long)]
    config: PathBuf,
    /// output directory for results.csv / results.json / manifest.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// overwrite existing report files
    #[arg(long)]
    force: bool,
    /// solver worker threads (0 = rayon default)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// override a config field, e.g. --set numerics.h=0.05 or --set 'xi=[0,1]'
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// print the report table to stdout as well
    #[arg(long)]
    print: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary layer tail μ at one or more directions
    Tail(Common),
    /// Sample the 1/|ξ|-periodic offset profile m_ξ
    Mxi(Common),
    /// Directional limits L_ξ(η) over tangent directions
    Ltail(Common),
    /// Effective operator / linear correctors / interior rate sweep
    Homogenize(Common),
    /// Continuity sweep of μ along geodesics approaching ξ̂
    Sweep(Common),
    /// Discontinuity lab: perturbation ladder splitting L_ξ(η₁) from L_ξ(η₂)
    Discont(Common),
    /// Exponential decay-rate fits over lateral periods
    Ratefit(Common),
    /// Simultaneous Dirichlet approximation tables
    Dirichlet(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Tail(c)
            | Command::Mxi(c)
            | Command::Ltail(c)
            | Command::Homogenize(c)
            | Command::Sweep(c)
            | Command::Discont(c)
            | Command::Ratefit(c)
            | Command::Dirichlet(c) => c,
        }
    }

    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Tail(_) => ExperimentKind::Tail,
            Command::Mxi(_) => ExperimentKind::Mxi,
            Command::Ltail(_) => ExperimentKind::Ltail,
            Command::Homogenize(_) => ExperimentKind::Homogenize,
            Command::Sweep(_) => ExperimentKind::ContinuitySweep,
            Command::Discont(_) => ExperimentKind::DiscontinuityLab,
            Command::Ratefit(_) => ExperimentKind::RateFit,
            Command::Dirichlet(_) => ExperimentKind::Dirichlet,
        }
    }
}

fn apply_overrides(cfg: &RunConfig, sets: &[String]) -> anyhow::Result<RunConfig> {
    if sets.is_empty() {
        return Ok(cfg.clone());
    }
    let mut value = serde_json::to_value(cfg)?;
    for s in sets {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
        let new: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut cursor = &mut value;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if i + 1 == parts.len() {
                cursor
                    .as_object_mut()
                    .ok_or_else(|| anyhow!("cannot set {path}: not an object"))?
                    .insert(part.to_string(), new.clone());
            } else {
                let obj = cursor
                    .as_object_mut()
                    .ok_or_else(|| anyhow!("cannot descend into {part} of {path}"))?;
                cursor = obj
                    .entry(part.to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()));
            }
        }
    }
    Ok(serde_json::from_value(value).context("config after --set overrides")?)
}

fn print_table(report: &Report) {
    println!("# {}", report.kind);
    println!("{}", report.columns.join(","));
    for row in &report.rows {
        println!("{}", row.join(","));
    }
    println!("summary: {}", serde_json::to_string(&report.summary).unwrap());
}

fn execute(cmd: &Command) -> anyhow::Result<Verdict> {
    let common = cmd.common();
    let mut cfg = RunConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if cfg.experiment != cmd.kind() {
        // the subcommand is authoritative; keep the config honest
        cfg.experiment = cmd.kind();
    }
    let mut cfg = apply_overrides(&cfg, &common.sets)?;
    if common.threads > 0 {
        cfg.threads = common.threads;
    }
    let report = run(&cfg)?;
    let outdir = common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", report.kind)));
    let files = emit_report(&report, &outdir, common.force)?;
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    if common.print {
        print_table(&report);
    }
    if report.verdict == Verdict::Inconclusive {
        eprintln!("verdict: inconclusive (inside uncertainty bands)");
    }
    Ok(report.verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(Verdict::Ok) => ExitCode::from(0),
        Ok(Verdict::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
