//! `vscstab` — phase portraits, equal-area margins and fault scenarios for a
//! grid-synchronized converter.
//!
//! Exit status: 0 on success, 1 on usage/configuration/validation errors or
//! failed `verify` criteria, 2 on numerical failures.

mod repro;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use vsc_stability::basin::BasinClass;
use vsc_stability::config::{load_config_with, ConfigFile, PortraitModel, RunConfig};
use vsc_stability::eap::{cct_sweep, margin_report, SweepTable};
use vsc_stability::io::{write_portrait_csv, write_sweep_csv, write_traces_csv, write_trajectory_csv, OutDir, RunManifest};
use vsc_stability::portrait::run_portrait;
use vsc_stability::scenario::{run_scenario, Verdict};
use vsc_stability::verify;
use vsc_stability::Error;

#[derive(Debug, Parser)]
#[command(name = "vscstab", version, about = "Transient frequency stability of a grid-synchronized VSC")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file or bundled preset name.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for CSV/JSON files and the run manifest.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Scenario integration step (s).
    #[arg(long, global = true, value_name = "S")]
    dt: Option<f64>,

    /// Seed for random portrait sampling; switches the sampling to random.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Bisect the CCT on the swing ODE as well.
    #[arg(long, global = true)]
    oracle: bool,

    /// Write per-initial-point traces for portraits.
    #[arg(long, global = true)]
    trajectories: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PCL portrait in the current plane.
    Portrait,
    /// PLL portrait in the (Δω, δ) plane.
    PllPortrait,
    /// Equal-area margins for the configured fault.
    Cca,
    /// CCT table over PLL bandwidths and dip depths.
    CctSweep,
    /// Time-domain fault scenario.
    Scenario,
    /// Run the acceptance checks.
    Verify,
    /// Reproduce a figure study from its bundled preset.
    Repro {
        #[arg(value_parser = repro::FIGURES)]
        figure: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Portrait => "portrait",
            Command::PllPortrait => "pll-portrait",
            Command::Cca => "cca",
            Command::CctSweep => "cct-sweep",
            Command::Scenario => "scenario",
            Command::Verify => "verify",
            Command::Repro { .. } => "repro",
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Some(dt) = cli.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Failure::Usage(format!("--dt must be positive, got {dt}")));
        }
    }
    match &cli.command {
        Command::Portrait => portrait(cli, PortraitModel::Pcl),
        Command::PllPortrait => portrait(cli, PortraitModel::Pll),
        Command::Cca => cca(cli),
        Command::CctSweep => sweep(cli),
        Command::Scenario => scenario(cli),
        Command::Verify => verify_all(),
        Command::Repro { figure } => repro::run(cli, figure),
    }
}

/// Loads `--config` (default `default_preset`) with command-line overrides.
fn load(cli: &Cli, default_preset: &str, edit: impl FnOnce(&mut ConfigFile)) -> Result<RunConfig, Failure> {
    let path = cli.config.clone().unwrap_or_else(|| PathBuf::from(default_preset));
    let seed = cli.seed;
    let dt = cli.dt;
    let cfg = load_config_with(&path, |f| {
        edit(f);
        if let Some(s) = seed {
            f.portrait.seed = Some(s);
            f.portrait.sampling = Some(vsc_stability::config::Sampling::Random);
        }
        if let Some(dt) = dt {
            f.scenario.dt = Some(dt);
        }
    })?;
    Ok(cfg)
}

struct Output {
    dir: Option<OutDir>,
    manifest: Option<RunManifest>,
    start: Instant,
}

impl Output {
    fn new(cli: &Cli, cfg: Option<&RunConfig>) -> Result<Self, Failure> {
        let dir = cli.out.as_deref().map(OutDir::create).transpose()?;
        let manifest = cfg.map(|c| RunManifest::new(cli.command.name(), cli.config.as_deref(), c.snapshot()));
        Ok(Self {
            dir,
            manifest,
            start: Instant::now(),
        })
    }

    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn std::io::Write) -> vsc_stability::Result<()>) -> Result<(), Failure> {
        if let Some(d) = self.dir.as_mut() {
            d.write(name, |f| body(f))?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        if let Some(d) = self.dir.as_mut() {
            d.write_json(name, value)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<(), Failure> {
        if let (Some(d), Some(m)) = (self.dir, self.manifest) {
            let path = d.finish(m, self.start.elapsed().as_secs_f64())?;
            eprintln!("wrote {}", path.parent().unwrap_or(Path::new(".")).display());
        }
        Ok(())
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

#[derive(Serialize)]
struct PortraitSummary {
    model: PortraitModel,
    target: [f64; 2],
    points: usize,
    converged_to_target: f64,
    converged_elsewhere: f64,
    diverged: f64,
    undecided: f64,
}

fn portrait(cli: &Cli, model: PortraitModel) -> Outcome {
    let cfg = load(cli, if model == PortraitModel::Pcl { "fig2a" } else { "fig3" }, |f| {
        if f.portrait.model.unwrap_or_default() != model {
            f.portrait.model = Some(model);
            f.portrait.x_range = None;
            f.portrait.y_range = None;
            f.portrait.diverge_norm = None;
        }
    })?;
    let mut out = Output::new(cli, Some(&cfg))?;
    let port = run_portrait(&cfg, cli.trajectories)?;
    let summary = PortraitSummary {
        model,
        target: port.target,
        points: port.map.points.len(),
        converged_to_target: port.map.fraction(BasinClass::ConvergedToTarget),
        converged_elsewhere: port.map.fraction(BasinClass::ConvergedElsewhere),
        diverged: port.map.fraction(BasinClass::Diverged),
        undecided: port.map.fraction(BasinClass::Undecided),
    };
    let stem = if model == PortraitModel::Pcl { "portrait" } else { "pll_portrait" };
    out.csv(&format!("{stem}.csv"), |w| write_portrait_csv(w, &port))?;
    if cli.trajectories {
        out.csv(&format!("{stem}_traces.csv"), |w| write_traces_csv(w, &port))?;
    }
    out.json("summary.json", &summary)?;
    print_json(&summary);
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cca(cli: &Cli) -> Outcome {
    let cfg = load(cli, "paper_default", |_| {})?;
    let mut out = Output::new(cli, Some(&cfg))?;
    let oracle = cli.oracle.then_some(&cfg.oracle);
    let report = margin_report(&cfg.params, &cfg.fault, oracle, &cfg.probe_times)?;
    out.json("margin.json", &report)?;
    print_json(&report);
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    table: &'a SweepTable,
    strictly_decreasing_in_bandwidth: Vec<(f64, bool)>,
    spread_by_bandwidth: Vec<(f64, Option<f64>)>,
}

fn sweep(cli: &Cli) -> Outcome {
    let cfg = load(cli, "fig6a", |_| {})?;
    let mut out = Output::new(cli, Some(&cfg))?;
    let oracle = cli.oracle.then_some(&cfg.oracle);
    let w = &cfg.sweep;
    let table = cct_sweep(&w.bandwidths_hz, &w.dips, w.phi_f, &cfg.params, oracle)?;
    let summary = SweepSummary {
        table: &table,
        strictly_decreasing_in_bandwidth: w.dips.iter().map(|&k| (k, table.strictly_decreasing_in_bandwidth(k))).collect(),
        spread_by_bandwidth: w.bandwidths_hz.iter().map(|&b| (b, table.spread(b))).collect(),
    };
    out.csv("cct_sweep.csv", |w| write_sweep_csv(w, &table))?;
    out.json("cct_sweep.json", &summary)?;
    if out.dir.is_none() {
        write_sweep_csv(std::io::stdout().lock(), &table)?;
    } else {
        print_json(&summary.strictly_decreasing_in_bandwidth);
    }
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn scenario(cli: &Cli) -> Outcome {
    let cfg = load(cli, "paper_default", |_| {})?;
    let mut out = Output::new(cli, Some(&cfg))?;
    let traj = run_scenario(&cfg.to_scenario())?;
    let verdict = Verdict::of(&traj);
    out.csv("trajectory.csv", |w| write_trajectory_csv(w, &traj))?;
    out.json("verdict.json", &verdict)?;
    print_json(&verdict);
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn verify_all() -> Outcome {
    let mut all = true;
    for id in 1..=8 {
        let r = verify::run_criterion(id)?;
        all &= r.passed;
        println!("{}", r.line());
    }
    println!("{}", if all { "all criteria passed" } else { "some criteria failed" });
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
