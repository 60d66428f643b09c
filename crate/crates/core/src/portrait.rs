//! Phase portraits driven by a [`RunConfig`]: sampling, classification and
//! optional trajectory traces.
//!
//! PCL portraits live in the current plane `(i_cd, i_cq)`; PLL portraits in
//! `(Δω, δ)` on the pre-fault curve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basin::{disk, lattice, BasinClass, BasinMap, BasinPoint, BasinSettings};
use crate::config::{DampingChoice, PortraitModel, PortraitSettings, RunConfig, Sampling};
use crate::error::{Error, Result};
use crate::numerics::rk4_step;
use crate::pcl::{pcl_equilibria, PclModel, PclState};
use crate::pll::{classify_pll, pll_rhs, swing_coeffs, DampingMode, FaultCondition, PllState, SwingCoeffs};

/// Steps between recorded trajectory samples.
const TRACE_STRIDE: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct Portrait {
    pub model: PortraitModel,
    /// Target equilibrium in portrait coordinates.
    pub target: [f64; 2],
    pub map: BasinMap,
    /// Per initial point, `(t, x, y)` samples. Empty unless requested.
    pub trajectories: Vec<Vec<[f64; 3]>>,
}

/// Initial points for `settings`. `center` is used for disks without an
/// explicit center.
pub fn sample_points(settings: &PortraitSettings, center: [f64; 2]) -> Vec<[f64; 2]> {
    let x = (settings.x_range[0], settings.x_range[1]);
    let y = (settings.y_range[0], settings.y_range[1]);
    match settings.sampling {
        Sampling::Lattice => lattice(x, y, settings.n),
        Sampling::Disk => disk(settings.disk_center.unwrap_or(center), settings.disk_radius, settings.n),
        Sampling::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            (0..settings.n * settings.n)
                .map(|_| [sample(&mut rng, x), sample(&mut rng, y)])
                .collect()
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// PCL model and its target equilibrium (the one with the smallest current).
pub fn pcl_target(cfg: &RunConfig) -> Result<(PclModel, PclState, [f64; 2])> {
    let p = &cfg.params;
    let eq = pcl_equilibria(p.op.p_ref, p.op.q_ref, &p.grid)
        .into_iter()
        .min_by(|a, b| a.i_cd.hypot(a.i_cq).total_cmp(&b.i_cd.hypot(b.i_cq)))
        .ok_or_else(|| Error::NoOperatingPoint("power setpoints are not transferable over this grid".into()))?;
    let model = PclModel::new(p.grid, &p.controller, p.op.p_ref, p.op.q_ref, eq.theta_0);
    Ok((model, eq.state(), [eq.i_cd, eq.i_cq]))
}

pub fn pll_curve(cfg: &RunConfig) -> Result<(SwingCoeffs, DampingMode)> {
    let p = &cfg.params;
    let c = swing_coeffs(&p.grid, &p.controller, &p.op, p.base.omega_b, FaultCondition::PreFault)?;
    let mode = match cfg.portrait.damping {
        DampingChoice::AngleDependent => DampingMode::AngleDependent,
        DampingChoice::Constant => DampingMode::frozen_at_equilibrium(&c)
            .ok_or_else(|| Error::NoOperatingPoint("t_m exceeds the peak of the swing curve".into()))?,
    };
    Ok((c, mode))
}

pub fn run_portrait(cfg: &RunConfig, trajectories: bool) -> Result<Portrait> {
    match cfg.portrait.model {
        PortraitModel::Pcl => pcl_portrait(cfg, trajectories),
        PortraitModel::Pll => pll_portrait(cfg, trajectories),
    }
}

fn pcl_portrait(cfg: &RunConfig, trajectories: bool) -> Result<Portrait> {
    let (model, target, target_i) = pcl_target(cfg)?;
    let settings = cfg.portrait.basin;
    let initials = sample_points(&cfg.portrait, target_i);
    let runs: Vec<(BasinPoint, Vec<[f64; 3]>)> = initials
        .par_iter()
        .map(|&[i_cd, i_cq]| {
            let mut buf = Vec::new();
            let rec = trajectories.then_some((&mut buf, TRACE_STRIDE));
            let pt = model.simulate(model.state_from_currents(i_cd, i_cq), &target, &settings, rec);
            let fin = model
                .outputs(&PclState::new(pt.final_state[0], pt.final_state[1]))
                .map_or([f64::NAN; 2], |o| [o.i_cd, o.i_cq]);
            let pt = BasinPoint {
                initial: [i_cd, i_cq],
                final_state: fin,
                ..pt
            };
            (pt, buf.into_iter().map(|r| [r[0], r[3], r[4]]).collect())
        })
        .collect();
    let (points, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(Portrait {
        model: PortraitModel::Pcl,
        target: target_i,
        map: BasinMap { points },
        trajectories: if trajectories { traces } else { Vec::new() },
    })
}

fn pll_portrait(cfg: &RunConfig, trajectories: bool) -> Result<Portrait> {
    let (c, mode) = pll_curve(cfg)?;
    let (delta_a, _) = c
        .equilibria()
        .ok_or_else(|| Error::NoOperatingPoint("t_m exceeds the peak of the swing curve".into()))?;
    let settings = cfg.portrait.basin;
    let initials = sample_points(&cfg.portrait, [0.0, delta_a]);
    let runs: Vec<(BasinPoint, Vec<[f64; 3]>)> = initials
        .par_iter()
        .map(|&[w, d]| {
            let s = PllState::new(w, d);
            let pt = classify_pll(s, &c, mode, &settings)?;
            let trace = if trajectories { pll_trace(s, &c, mode, &settings) } else { Vec::new() };
            Ok((pt, trace))
        })
        .collect::<Result<_>>()?;
    let (points, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(Portrait {
        model: PortraitModel::Pll,
        target: [0.0, delta_a],
        map: BasinMap { points },
        trajectories: if trajectories { traces } else { Vec::new() },
    })
}

fn pll_trace(s: PllState, c: &SwingCoeffs, mode: DampingMode, settings: &BasinSettings) -> Vec<[f64; 3]> {
    let steps = (settings.horizon / settings.dt).round() as usize;
    let mut rhs = |_t: f64, x: &[f64; 2]| pll_rhs(&PllState::new(x[0], x[1]), c, mode);
    let mut x = s.as_array();
    let mut out = vec![[0.0, x[0], x[1]]];
    for k in 0..steps {
        x = rk4_step(&mut rhs, k as f64 * settings.dt, &x, settings.dt);
        if !x.iter().all(|v| v.is_finite()) || x[0].abs() > settings.diverge_norm {
            break;
        }
        if (k + 1) % TRACE_STRIDE == 0 {
            out.push([(k + 1) as f64 * settings.dt, x[0], x[1]]);
        }
    }
    out
}

/// Share of points converging to the target.
pub fn target_fraction(p: &Portrait) -> f64 {
    p.map.fraction(BasinClass::ConvergedToTarget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load_preset, parse_config};

    #[test]
    fn random_sampling_is_seeded() {
        let mut cfg = load_preset("fig2a").unwrap();
        cfg.portrait.sampling = Sampling::Random;
        cfg.portrait.n = 5;
        cfg.portrait.seed = 7;
        let a = sample_points(&cfg.portrait, [0.0; 2]);
        let b = sample_points(&cfg.portrait, [0.0; 2]);
        assert_eq!(a.len(), 25);
        assert_eq!(a, b);
        cfg.portrait.seed = 8;
        assert_ne!(a, sample_points(&cfg.portrait, [0.0; 2]));
        assert!(a.iter().all(|p| p.iter().all(|v| (-6.0..=6.0).contains(v))));
    }

    #[test]
    fn disk_defaults_to_target() {
        let cfg = parse_config(r#"{"op": {"p_ref": 0.5}, "portrait": {"sampling": "disk", "n": 11}}"#, "t").unwrap();
        let port = run_portrait(&cfg, false).unwrap();
        assert!((port.target[0] - 0.504).abs() < 1e-2);
        assert!(port
            .map
            .points
            .iter()
            .all(|p| (p.initial[0] - port.target[0]).hypot(p.initial[1] - port.target[1]) <= 1.1 + 1e-9));
        assert_eq!(target_fraction(&port), 1.0);
    }

    #[test]
    fn pcl_points_report_currents() {
        let mut cfg = load_preset("fig2a").unwrap();
        cfg.portrait.n = 3;
        cfg.portrait.x_range = [0.3, 0.7];
        cfg.portrait.y_range = [-0.2, 0.2];
        let port = run_portrait(&cfg, true).unwrap();
        assert_eq!(port.map.points.len(), 9);
        assert_eq!(port.trajectories.len(), 9);
        for (p, tr) in port.map.points.iter().zip(&port.trajectories) {
            assert_eq!(p.class, BasinClass::ConvergedToTarget);
            assert!((p.final_state[0] - port.target[0]).abs() < 1e-2);
            assert!((tr[0][1] - p.initial[0]).abs() < 1e-9 && (tr[0][2] - p.initial[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn pll_portrait_contrast() {
        let mut cfg = load_preset("fig3").unwrap();
        cfg.portrait.n = 1;
        cfg.portrait.x_range = [0.3, 0.3];
        cfg.portrait.y_range = [0.0, 0.0];
        let angle = run_portrait(&cfg, true).unwrap();
        cfg.portrait.damping = DampingChoice::Constant;
        let constant = run_portrait(&cfg, false).unwrap();
        assert_eq!(angle.map.points[0].class, BasinClass::Diverged);
        assert_ne!(constant.map.points[0].class, BasinClass::Diverged);
        assert!(angle.trajectories[0].len() > 1);
    }
}
