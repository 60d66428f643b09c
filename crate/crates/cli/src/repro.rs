//! Figure studies on the bundled presets.

use std::process::ExitCode;

use vsc_stability::basin::BasinClass;
use vsc_stability::config::{load_preset, DampingChoice, RunConfig};
use vsc_stability::eap::{cct_sweep, margin_report};
use vsc_stability::io::{write_portrait_csv, write_sweep_csv, write_trajectory_csv};
use vsc_stability::portrait::run_portrait;
use vsc_stability::scenario::{compare_q_control, run_scenario, ScenarioMode, Verdict};

use crate::{Cli, Failure, Outcome, Output};

pub const FIGURES: [&str; 8] = ["fig2a", "fig2c", "fig3", "fig4b", "fig6a", "fig6b", "fig8a", "fig8b"];

pub fn run(cli: &Cli, figure: &str) -> Outcome {
    let mut cfg = load_preset(figure)?;
    if let Some(dt) = cli.dt {
        cfg = cfg.with_dt(dt);
    }
    let mut out = Output::new(cli, Some(&cfg))?;
    match figure {
        "fig2a" => fig2a(&cfg, &mut out)?,
        "fig2c" => fig2c(&cfg, &mut out)?,
        "fig3" => fig3(&cfg, &mut out)?,
        "fig4b" => single(&cfg, &mut out)?,
        "fig6a" => fig6a(cli, &cfg, &mut out)?,
        "fig6b" => fig6b(cli, &cfg, &mut out)?,
        "fig8a" => fig8a(&cfg, &mut out)?,
        "fig8b" => fig8b(&cfg, &mut out)?,
        _ => return Err(Failure::Usage(format!("unknown figure '{figure}'"))),
    }
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn fig2a(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    for (kp, ki) in [(0.1, 20.0), (0.2, 20.0), (0.1, 40.0)] {
        let mut c = cfg.clone();
        c.params.controller.pq_kp = kp;
        c.params.controller.pq_ki = ki;
        let port = run_portrait(&c, false)?;
        println!(
            "kp = {kp}, ki = {ki}: converged to target {:.4}",
            port.map.fraction(BasinClass::ConvergedToTarget)
        );
        out.csv(&format!("portrait_kp{kp}_ki{ki}.csv"), |w| write_portrait_csv(w, &port))?;
    }
    Ok(())
}

fn fig2c(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    for i_max in [cfg.scenario.limiter.i_max, 4.0] {
        let mut sc = cfg.to_scenario();
        sc.limiter.i_max = i_max;
        let traj = run_scenario(&sc)?;
        let last = traj.samples.last().expect("non-empty trajectory");
        println!(
            "i_max = {i_max}: final (i_d, i_q) = ({:.4}, {:.4}), P = {:.4}, Q = {:.4}, limiter {}",
            last.i_cd_ref,
            last.i_cq_ref,
            last.p,
            last.q,
            if last.limiter_active { "active" } else { "inactive" }
        );
        out.csv(&format!("trajectory_imax{i_max}.csv"), |w| write_trajectory_csv(w, &traj))?;
    }
    Ok(())
}

fn fig3(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    for damping in [DampingChoice::Constant, DampingChoice::AngleDependent] {
        let mut c = cfg.clone();
        c.portrait.damping = damping;
        let port = run_portrait(&c, false)?;
        let name = match damping {
            DampingChoice::Constant => "constant",
            DampingChoice::AngleDependent => "angle_dependent",
        };
        println!(
            "{name} damping: converged to target {:.4}, elsewhere {:.4}, diverged {:.4}",
            port.map.fraction(BasinClass::ConvergedToTarget),
            port.map.fraction(BasinClass::ConvergedElsewhere),
            port.map.fraction(BasinClass::Diverged)
        );
        out.csv(&format!("pll_portrait_{name}.csv"), |w| write_portrait_csv(w, &port))?;
    }
    single(cfg, out)
}

fn single(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let traj = run_scenario(&cfg.to_scenario())?;
    let v = Verdict::of(&traj);
    println!(
        "{:.0} ms fault: {} (peak frequency {:.4} pu)",
        1e3 * cfg.fault.duration(),
        v.classification,
        v.peak_freq_pu
    );
    out.csv("trajectory.csv", |w| write_trajectory_csv(w, &traj))?;
    out.json("verdict.json", &v)
}

fn fig6a(cli: &Cli, cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let w = &cfg.sweep;
    let table = cct_sweep(&w.bandwidths_hz, &w.dips, w.phi_f, &cfg.params, cli.oracle.then_some(&cfg.oracle))?;
    write_sweep_csv(std::io::stdout().lock(), &table)?;
    out.csv("cct_sweep.csv", |w| write_sweep_csv(w, &table))
}

fn fig6b(cli: &Cli, cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let report = margin_report(&cfg.params, &cfg.fault, cli.oracle.then_some(&cfg.oracle), &[])?;
    match report.t_cct_estimate {
        Some(t) => println!("estimated CCT: {:.0} ms", 1e3 * t),
        None => println!("estimated CCT: none ({})", report.outcome),
    }
    if let Some(t) = report.t_cct_oracle {
        println!("oracle CCT: {:.0} ms", 1e3 * t);
    }
    out.json("margin.json", &report)?;
    for &d in &cfg.scenario.fault_durations {
        let traj = run_scenario(&cfg.scenario_with_duration(d))?;
        let v = Verdict::of(&traj);
        println!("{:.0} ms fault: {}", 1e3 * d, v.classification);
        let ms = (1e3 * d).round();
        out.csv(&format!("trajectory_{ms}ms.csv"), |w| write_trajectory_csv(w, &traj))?;
        out.json(&format!("verdict_{ms}ms.json"), &v)?;
    }
    Ok(())
}

fn fig8a(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let mut sc = cfg.to_scenario();
    let report = compare_q_control(&sc)?;
    println!(
        "Q control on vs. off: max frequency difference {:.3e} pu = {:.2}% of peak deviation {:.3e} pu",
        report.max_freq_diff,
        100.0 * report.relative_freq_diff,
        report.peak_freq_dev
    );
    out.json("q_control.json", &report)?;
    for (mode, name) in [(ScenarioMode::PqOuterLoop, "q_on"), (ScenarioMode::QRefZero, "q_off")] {
        sc.mode = mode;
        let traj = run_scenario(&sc)?;
        out.csv(&format!("trajectory_{name}.csv"), |w| write_trajectory_csv(w, &traj))?;
    }
    Ok(())
}

fn fig8b(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    let slow = load_preset("fig8a")?;
    for (name, c) in [("10 Hz", &slow), ("20 Hz", cfg)] {
        let mut sc = c.to_scenario();
        sc.dt = cfg.scenario.dt;
        let traj = run_scenario(&sc)?;
        println!(
            "PQ bandwidth {name}: peak |dw| {:.5} pu, {}",
            traj.peak_abs_d_omega(),
            Verdict::of(&traj).classification
        );
        let file = format!("trajectory_pq{}.csv", name.replace(' ', "").to_lowercase());
        out.csv(&file, |w| write_trajectory_csv(w, &traj))?;
    }
    Ok(())
}
