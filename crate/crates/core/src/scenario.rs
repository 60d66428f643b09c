//! Time-domain scenarios on the averaged converter model: PLL swing
//! dynamics, optional PQ outer loop, current and frequency limiters, and a
//! fault applied and cleared at fixed times.
//!
//! The network is algebraic. In the PLL frame the PCC voltage is
//! `u·e^{−j(δ−φ)}`, with `u` the pre-fault PCC magnitude scaled by `k_f`
//! during the fault, and the converter current equals its (limited)
//! reference.

use std::cell::Cell;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    bisect, damped_fixed_point, rk4_integrate_projected, snap_step, Event, IntegratorConfig, SnappedEvent,
};
use crate::params::{limit_current, validate_params, FaultSpec, LimitPriority, SystemParams, ValidationReport, Violation};
use crate::pll::{clamp_frequency, count_slips, pll_rhs, prefault_pcc_voltage, DampingMode, PllState, SwingCoeffs};

const LOOP_TOL: f64 = 1e-12;
const LOOP_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioMode {
    /// Current references fixed at the operating point.
    ConstCurrentRefs,
    /// PQ controller in the loop.
    PqOuterLoop,
    /// Active-power loop only; `i_cq_ref = 0` throughout.
    QRefZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimiterSpec {
    pub i_max: f64,
    #[serde(default)]
    pub priority: LimitPriority,
    pub freq_clamp: f64,
    /// Hold a PQ integrator while its axis is clipped and pushed outward.
    #[serde(default = "yes")]
    pub anti_windup: bool,
}

fn yes() -> bool {
    true
}

impl LimiterSpec {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            i_max: p.op.i_max,
            priority: LimitPriority::default(),
            freq_clamp: p.op.freq_limit,
            anti_windup: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: SystemParams,
    pub fault: FaultSpec,
    pub mode: ScenarioMode,
    pub t_end: f64,
    pub dt: f64,
    pub limiter: LimiterSpec,
    /// Output stride in steps.
    pub record_every: usize,
    /// Hold the PLL at its pre-fault angle and nominal frequency, leaving
    /// only the PQ loop dynamic.
    #[serde(default)]
    pub pll_locked: bool,
}

impl Scenario {
    pub fn new(params: SystemParams, fault: FaultSpec, mode: ScenarioMode, t_end: f64) -> Self {
        Self {
            params,
            fault,
            mode,
            t_end,
            dt: 1e-4,
            limiter: LimiterSpec::from_params(&params),
            record_every: 10,
            pll_locked: false,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_params(&self.params);
        let v = &mut report.violations;
        v.extend(self.fault.validate(&self.params.grid));
        let mut check = |ok: bool, field: &str, rule: &str| {
            if !ok {
                v.push(Violation {
                    field: field.into(),
                    rule: rule.into(),
                });
            }
        };
        check(self.dt > 0.0 && self.dt.is_finite(), "scenario.dt", "dt > 0");
        check(self.t_end > self.fault.t_clear, "scenario.t_end", "t_end > t_clear");
        check(self.record_every >= 1, "scenario.record_every", "record_every >= 1");
        check(self.limiter.i_max > 0.0, "limiter.i_max", "i_max > 0");
        check(self.limiter.freq_clamp > 1.0, "limiter.freq_clamp", "freq_clamp > 1");
        report
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub delta: f64,
    pub d_omega: f64,
    pub i_cd_ref: f64,
    pub i_cq_ref: f64,
    pub p: f64,
    pub q: f64,
    pub u_pcc: f64,
    pub limiter_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Fault application and clearing, requested and snapped.
    pub events: Vec<SnappedEvent>,
    /// Steady pre-fault angle.
    pub delta_ref: f64,
    /// Largest `|δ − δ_ref|` over every integration step.
    pub max_excursion: f64,
    pub t_clear: f64,
}

impl Trajectory {
    pub fn peak_freq_pu(&self) -> f64 {
        self.samples.iter().map(|s| 1.0 + s.d_omega).fold(f64::MIN, f64::max)
    }

    pub fn peak_abs_d_omega(&self) -> f64 {
        self.samples.iter().map(|s| s.d_omega.abs()).fold(0.0, f64::max)
    }

    pub fn peak_delta(&self) -> f64 {
        self.samples.iter().map(|s| s.delta).fold(f64::MIN, f64::max)
    }
}

/// Algebraic network and controller outputs at one instant.
struct Network<'a> {
    sc: &'a Scenario,
    u0: f64,
}

#[derive(Clone, Copy, Debug)]
struct Operating {
    i_d: f64,
    i_q: f64,
    p: f64,
    q: f64,
    limited: bool,
    /// Integrator derivatives after anti-windup.
    dx: [f64; 2],
    curve: SwingCoeffs,
}

impl<'a> Network<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let u0 = prefault_pcc_voltage(&sc.params.grid, &sc.params.op)?.norm();
        Ok(Self { sc, u0 })
    }

    fn voltage(&self, faulted: bool) -> (f64, f64) {
        if faulted {
            (self.sc.fault.k_f_mag * self.u0, self.sc.fault.phi_f)
        } else {
            (self.u0, 0.0)
        }
    }

    fn power(&self, delta: f64, faulted: bool, i_d: f64, i_q: f64) -> (f64, f64) {
        let (u, phi) = self.voltage(faulted);
        let i = Complex64::new(i_d, i_q);
        let u_poc = Complex64::from_polar(u, -(delta - phi)) + self.sc.params.grid.z_line() * i;
        let s = u_poc * i.conj();
        (s.re, s.im)
    }

    fn curve(&self, faulted: bool, i_d: f64, i_q: f64) -> SwingCoeffs {
        let p = &self.sc.params;
        let (u, phi) = self.voltage(faulted);
        SwingCoeffs {
            t_pll: (p.base.omega_b - p.controller.pll_kp * p.grid.l_sigma * i_d) / p.controller.pll_ki,
            t_m: p.grid.omega_s * p.grid.l_sigma_t * i_d + p.grid.r_sigma_t * i_q,
            u_eff: u,
            phi,
            kp_over_ki: p.controller.pll_kp / p.controller.pll_ki,
            omega_b: p.base.omega_b,
            l_sigma: p.grid.l_sigma,
            i_cd_ref: i_d,
        }
    }

    fn limit(&self, i_d: f64, i_q: f64) -> (f64, f64, bool) {
        limit_current(i_d, i_q, self.sc.limiter.i_max, self.sc.limiter.priority)
    }

    fn q_on(&self) -> bool {
        self.sc.mode == ScenarioMode::PqOuterLoop
    }

    /// Unlimited PI outputs for actual currents `i`.
    fn pi_outputs(&self, x: &[f64; 4], faulted: bool, i: [f64; 2]) -> [f64; 2] {
        let op = &self.sc.params.op;
        let kp = self.sc.params.controller.pq_kp;
        let (p, q) = self.power(x[1], faulted, i[0], i[1]);
        let q_out = if self.q_on() { -x[3] - kp * (op.q_ref - q) } else { 0.0 };
        [x[2] + kp * (op.p_ref - p), q_out]
    }

    /// Solves `i = limit(pi_outputs(i))`. Returns the unlimited outputs, the
    /// currents and whether the limiter is engaged.
    ///
    /// The limiter is not Lipschitz at its corners, so rather than iterating
    /// through it the unconstrained solution is tried first and then each
    /// branch of the limiter in turn, keeping the first consistent one.
    fn pq_loop(&self, x: &[f64; 4], faulted: bool) -> Result<([f64; 2], [f64; 2], bool)> {
        let i_max = self.sc.limiter.i_max;
        let f = |i: [f64; 2]| self.pi_outputs(x, faulted, i);
        let seed = [x[2], if self.q_on() { -x[3] } else { 0.0 }];
        let free = damped_fixed_point(|i| f(*i), seed, LOOP_TOL, LOOP_MAX_ITER);
        if let Ok(i) = free {
            if i[0].hypot(i[1]) <= i_max {
                return Ok((i, i, false));
            }
        }
        let consistent = |i: [f64; 2]| {
            let r = f(i);
            let (d, q, _) = self.limit(r[0], r[1]);
            ((d - i[0]).abs() + (q - i[1]).abs() < 1e-9).then_some((r, i, true))
        };
        let arc_root = |g: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> Vec<f64> {
            let n = 64;
            let at = |k: usize| lo + (hi - lo) * k as f64 / n as f64;
            let mut roots = Vec::new();
            for k in 0..n {
                let (a, b) = (at(k), at(k + 1));
                if g(a) == 0.0 {
                    roots.push(a);
                } else if g(a) * g(b) < 0.0 {
                    if let Ok(r) = bisect(g, a, b, 1e-14) {
                        roots.push(r);
                    }
                }
            }
            roots
        };
        match self.sc.limiter.priority {
            LimitPriority::DAxis => {
                for s in [1.0, -1.0] {
                    if let Some(hit) = consistent([s * i_max, 0.0]) {
                        return Ok(hit);
                    }
                }
                for s in [1.0, -1.0] {
                    let on_arc = |d: f64| [d, s * (i_max * i_max - d * d).max(0.0).sqrt()];
                    let g = |d: f64| f(on_arc(d))[0] - d;
                    for d in arc_root(&g, -i_max, i_max) {
                        if let Some(hit) = consistent(on_arc(d)) {
                            return Ok(hit);
                        }
                    }
                }
            }
            LimitPriority::Proportional => {
                use std::f64::consts::PI;
                let on_circle = |a: f64| [i_max * a.cos(), i_max * a.sin()];
                let g = |a: f64| {
                    let r = f(on_circle(a));
                    let e = r[1].atan2(r[0]) - a;
                    (e + PI).rem_euclid(2.0 * PI) - PI
                };
                for a in arc_root(&g, -PI, PI) {
                    if let Some(hit) = consistent(on_circle(a)) {
                        return Ok(hit);
                    }
                }
            }
        }
        Err(free.err().unwrap_or(Error::AlgebraicLoopDivergence {
            iterations: LOOP_MAX_ITER,
            residual: f64::NAN,
        }))
    }

    fn solve(&self, x: &[f64; 4], faulted: bool) -> Result<Operating> {
        let op = &self.sc.params.op;
        let c = &self.sc.params.controller;
        let delta = x[1];
        let q_on = self.q_on();
        let (i_d, i_q, limited, dx) = match self.sc.mode {
            ScenarioMode::ConstCurrentRefs => {
                let (d, q, lim) = self.limit(op.i_cd_ref, op.i_cq_ref);
                (d, q, lim, [0.0, 0.0])
            }
            ScenarioMode::PqOuterLoop | ScenarioMode::QRefZero => {
                let (r, i, limited) = self.pq_loop(x, faulted)?;
                let (d_raw, q_raw) = (r[0], r[1]);
                let (p, q) = self.power(delta, faulted, i[0], i[1]);
                let e_p = op.p_ref - p;
                let e_q = op.q_ref - q;
                // conditional integration: hold an axis that is clipped and
                // still being pushed further out
                let aw = self.sc.limiter.anti_windup;
                let hold_d = aw && d_raw != i[0] && e_p.signum() == (d_raw - i[0]).signum();
                let hold_q = !q_on || (aw && q_raw != i[1] && (-e_q).signum() == (q_raw - i[1]).signum());
                let dx = [
                    if hold_d { 0.0 } else { c.pq_ki * e_p },
                    if hold_q { 0.0 } else { c.pq_ki * e_q },
                ];
                (i[0], i[1], limited, dx)
            }
        };
        let (p, q) = self.power(delta, faulted, i_d, i_q);
        Ok(Operating {
            i_d,
            i_q,
            p,
            q,
            limited,
            dx,
            curve: self.curve(faulted, i_d, i_q),
        })
    }

    /// Locked steady state `[Δω, δ, x_d, x_q]` on the healthy network.
    fn initial_state(&self) -> Result<[f64; 4]> {
        let op = &self.sc.params.op;
        match self.sc.mode {
            ScenarioMode::ConstCurrentRefs => {
                let (d, q, _) = self.limit(op.i_cd_ref, op.i_cq_ref);
                let (delta_a, _) = self.curve(false, d, q).equilibria().ok_or_else(|| {
                    Error::NoOperatingPoint("t_m exceeds the pre-fault curve peak".into())
                })?;
                Ok([0.0, delta_a, 0.0, 0.0])
            }
            ScenarioMode::PqOuterLoop | ScenarioMode::QRefZero => {
                let q_ref = if self.sc.mode == ScenarioMode::QRefZero { 0.0 } else { op.q_ref };
                let z = self.sc.params.grid.z_line();
                // with the PoC voltage v on the d-axis: i = (P − jQ)/v and |v − z·i| = u0
                let current = |v: f64| Complex64::new(op.p_ref / v, -q_ref / v);
                let f = |v: f64| (v - z * current(v)).norm() - self.u0;
                let hi = 2.0 * self.u0 + z.norm() * op.p_ref.hypot(q_ref) + 1.0;
                let n = 4000;
                let lo = (1..=n)
                    .map(|k| hi * (1.0 - k as f64 / n as f64))
                    .find(|&v| v > 0.0 && f(v) < 0.0)
                    .ok_or_else(|| Error::NoOperatingPoint(format!("P = {}, Q = {q_ref} not transferable", op.p_ref)))?;
                let v = bisect(f, lo, hi, 1e-14)?;
                let i = current(v);
                if i.norm() > self.sc.limiter.i_max + 1e-12 {
                    return Err(Error::NoOperatingPoint(format!(
                        "steady current {} exceeds i_max {}",
                        i.norm(),
                        self.sc.limiter.i_max
                    )));
                }
                let delta = -(v - z * i).arg();
                Ok([0.0, delta, i.re, -i.im])
            }
        }
    }
}

/// Integrates a validated scenario.
pub fn run_scenario(sc: &Scenario) -> Result<Trajectory> {
    sc.validate().into_result()?;
    let net = Network::new(sc)?;
    let x0 = net.initial_state()?;
    let delta_ref = x0[1];

    let faulted = Cell::new(false);
    let failure: Cell<Option<Error>> = Cell::new(None);
    let rhs = |_t: f64, x: &[f64; 4]| match net.solve(x, faulted.get()) {
        Ok(o) if sc.pll_locked => [0.0, 0.0, o.dx[0], o.dx[1]],
        Ok(o) => {
            let d = pll_rhs(&PllState::new(x[0], x[1]), &o.curve, DampingMode::AngleDependent);
            [d[0], d[1], o.dx[0], o.dx[1]]
        }
        Err(e) => {
            let first = failure.take().unwrap_or(e);
            failure.set(Some(first));
            [f64::NAN; 4]
        }
    };
    let clamp = sc.limiter.freq_clamp;
    let max_excursion = Cell::new(0.0f64);
    let project = |x: &mut [f64; 4]| {
        x[0] = clamp_frequency(x[0], clamp);
        max_excursion.set(max_excursion.get().max((x[1] - delta_ref).abs()));
    };
    let mut events = [
        Event::new(sc.fault.t_apply, |_: &mut [f64; 4]| faulted.set(true)),
        Event::new(sc.fault.t_clear, |_: &mut [f64; 4]| faulted.set(false)),
    ];
    let cfg = IntegratorConfig::new(sc.dt, sc.t_end);
    let run = rk4_integrate_projected(rhs, project, x0, &cfg, &mut events)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    if let Some(b) = run.blowup {
        return Err(Error::NumericalBlowUp {
            t: b.t,
            last_good_t: b.last_good_t,
        });
    }

    let k_apply = snap_step(sc.fault.t_apply, sc.dt);
    let k_clear = snap_step(sc.fault.t_clear, sc.dt);
    let mut samples = Vec::with_capacity(run.t.len() / sc.record_every + 1);
    for (idx, (&t, x)) in run.t.iter().zip(&run.x).enumerate() {
        let k = snap_step(t, sc.dt);
        if idx + 1 != run.t.len() && k % sc.record_every != 0 {
            continue;
        }
        let f = k >= k_apply && k < k_clear;
        let o = net.solve(x, f)?;
        samples.push(Sample {
            t,
            delta: x[1],
            d_omega: x[0],
            i_cd_ref: o.i_d,
            i_cq_ref: o.i_q,
            p: o.p,
            q: o.q,
            u_pcc: net.voltage(f).0,
            limiter_active: o.limited,
        });
    }
    Ok(Trajectory {
        samples,
        events: run.events,
        delta_ref,
        max_excursion: max_excursion.get(),
        t_clear: k_clear as f64 * sc.dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "classification", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SyncClass {
    Synchronized,
    LostSync { slips: usize },
    Marginal,
}

impl SyncClass {
    pub fn label(&self) -> &'static str {
        match self {
            SyncClass::Synchronized => "SYNCHRONIZED",
            SyncClass::LostSync { .. } => "LOST_SYNC",
            SyncClass::Marginal => "MARGINAL",
        }
    }

    pub fn slips(&self) -> usize {
        match self {
            SyncClass::LostSync { slips } => *slips,
            _ => 0,
        }
    }
}

pub fn classify_sync(traj: &Trajectory) -> SyncClass {
    let excursion = traj
        .samples
        .iter()
        .map(|s| (s.delta - traj.delta_ref).abs())
        .fold(traj.max_excursion, f64::max);
    let slips = count_slips(traj.delta_ref + excursion, traj.delta_ref);
    if slips > 0 {
        return SyncClass::LostSync { slips };
    }
    match traj.samples.last() {
        Some(s) if (s.delta - traj.delta_ref).abs() < 0.05 && s.d_omega.abs() < 1e-3 => SyncClass::Synchronized,
        _ => SyncClass::Marginal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub classification: &'static str,
    pub slips: usize,
    pub peak_freq_pu: f64,
    pub peak_delta_rad: f64,
}

impl Verdict {
    pub fn of(traj: &Trajectory) -> Self {
        let c = classify_sync(traj);
        Self {
            classification: c.label(),
            slips: c.slips(),
            peak_freq_pu: traj.peak_freq_pu(),
            peak_delta_rad: traj.peak_delta(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaReport {
    /// Largest frequency-trace difference (pu).
    pub max_freq_diff: f64,
    pub max_delta_diff: f64,
    /// Peak `|Δω|` of the Q-controlled run.
    pub peak_freq_dev: f64,
    /// `max_freq_diff / peak_freq_dev`.
    pub relative_freq_diff: f64,
}

/// Runs `base` with the Q controller on and with `i_cq_ref = 0`.
pub fn compare_q_control(base: &Scenario) -> Result<DeltaReport> {
    let mut with_q = *base;
    with_q.mode = ScenarioMode::PqOuterLoop;
    let mut without_q = *base;
    without_q.mode = ScenarioMode::QRefZero;
    compare_runs(&run_scenario(&with_q)?, &run_scenario(&without_q)?)
}

/// Sample-by-sample differences of two runs on the same time grid.
pub fn compare_runs(a: &Trajectory, b: &Trajectory) -> Result<DeltaReport> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::Config("trajectories sampled on different grids".into()));
    }
    let (mut df, mut dd) = (0.0f64, 0.0f64);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        df = df.max((x.d_omega - y.d_omega).abs());
        dd = dd.max((x.delta - y.delta).abs());
    }
    let peak = a.peak_abs_d_omega();
    Ok(DeltaReport {
        max_freq_diff: df,
        max_delta_diff: dd,
        peak_freq_dev: peak,
        relative_freq_diff: if peak > 0.0 { df / peak } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rk4_step;

    fn fig6b(duration: f64) -> Scenario {
        let p = SystemParams::paper_default();
        let f = FaultSpec::retained_voltage(0.2, 0.0, 2.0, 2.0 + duration);
        Scenario::new(p, f, ScenarioMode::ConstCurrentRefs, 2.0 + duration + 3.0)
    }

    fn fig8(pq_bw: f64) -> Scenario {
        let mut p = SystemParams::paper_default();
        p.controller.pq_ki = crate::params::ControllerParams::pq_ki_from_bandwidth(pq_bw, p.controller.pq_kp, 1.0);
        p.controller.pq_bandwidth_hz = Some(pq_bw);
        p.op.p_ref = 0.5;
        p.op.i_cd_ref = 0.5;
        let f = FaultSpec::retained_voltage(0.2, 0.0, 2.0, 2.1);
        Scenario::new(p, f, ScenarioMode::PqOuterLoop, 5.0)
    }

    #[test]
    fn no_fault_holds_equilibrium() {
        let mut sc = fig6b(0.1);
        sc.fault.k_f_mag = 1.0;
        let t = run_scenario(&sc).unwrap();
        let s0 = t.samples[0];
        for s in &t.samples {
            assert!((s.delta - s0.delta).abs() < 1e-12 && s.d_omega.abs() < 1e-12);
            assert_eq!((s.p, s.q, s.i_cd_ref), (s0.p, s0.q, s0.i_cd_ref));
        }
        assert_eq!(classify_sync(&t), SyncClass::Synchronized);
    }

    #[test]
    fn pq_steady_state_holds() {
        let mut sc = fig8(10.0);
        sc.fault.k_f_mag = 1.0;
        let t = run_scenario(&sc).unwrap();
        for s in &t.samples {
            assert!((s.p - 0.5).abs() < 1e-9 && s.q.abs() < 1e-9, "{s:?}");
            assert!(s.d_omega.abs() < 1e-9);
        }
    }

    #[test]
    fn fault_events_snapped() {
        let t = run_scenario(&fig6b(0.1)).unwrap();
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].snapped, 2.0);
        assert!((t.events[1].snapped - 2.1).abs() < 1e-12);
        assert!(t.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn fig6b_verdicts() {
        assert_eq!(classify_sync(&run_scenario(&fig6b(0.1)).unwrap()), SyncClass::Synchronized);
        assert!(matches!(classify_sync(&run_scenario(&fig6b(0.3)).unwrap()), SyncClass::LostSync { .. }));
        assert!(matches!(classify_sync(&run_scenario(&fig6b(0.5)).unwrap()), SyncClass::LostSync { .. }));
    }

    #[test]
    fn clamp_and_limit_respected() {
        let t = run_scenario(&fig6b(0.5)).unwrap();
        assert!(t.peak_freq_pu() <= 1.1 + 1e-12);
        let t = run_scenario(&fig8(20.0)).unwrap();
        for s in &t.samples {
            assert!(s.i_cd_ref.hypot(s.i_cq_ref) <= 1.1 + 1e-12);
        }
    }

    #[test]
    fn const_mode_matches_swing_model() {
        let mut sc = fig6b(0.1);
        sc.limiter.freq_clamp = 100.0;
        sc.record_every = 1;
        let t = run_scenario(&sc).unwrap();
        let p = sc.params;
        let (pre, post) = crate::eap::fault_curves(&p, &sc.fault).unwrap();
        let mut x = [0.0, pre.equilibria().unwrap().0];
        for (k, s) in t.samples.iter().enumerate() {
            assert!((s.d_omega - x[0]).abs() < 1e-9 && (s.delta - x[1]).abs() < 1e-9, "step {k}");
            let c = if (20_000..21_000).contains(&k) { post } else { pre };
            let mut rhs = |_t: f64, x: &[f64; 2]| pll_rhs(&PllState::new(x[0], x[1]), &c, DampingMode::AngleDependent);
            x = rk4_step(&mut rhs, 0.0, &x, sc.dt);
        }
    }

    #[test]
    fn halving_dt_converges() {
        let a = run_scenario(&fig6b(0.1)).unwrap();
        let mut sc = fig6b(0.1);
        sc.dt = 5e-5;
        let b = run_scenario(&sc).unwrap();
        let (sa, sb) = (a.samples.last().unwrap(), b.samples.last().unwrap());
        assert!((sa.delta - sb.delta).abs() < 1e-5 && (sa.d_omega - sb.d_omega).abs() < 1e-5);
    }

    #[test]
    fn q_control_comparison() {
        let r = compare_q_control(&fig8(10.0)).unwrap();
        assert!(r.max_freq_diff.is_finite() && r.peak_freq_dev > 0.0, "{r:?}");
        // nearly identical during the dip: once the d-axis sits on the limit there is no room for i_q
        let mut a = fig8(10.0);
        a.t_end = 2.09;
        a.fault.t_clear = 2.085;
        let mut b = a;
        b.mode = ScenarioMode::QRefZero;
        let (ta, tb) = (run_scenario(&a).unwrap(), run_scenario(&b).unwrap());
        let late = |t: &Trajectory| t.samples.iter().rev().take(5).map(|s| s.d_omega).collect::<Vec<_>>();
        for (x, y) in late(&ta).iter().zip(late(&tb)) {
            assert!((x - y).abs() < 1e-2 * x.abs());
        }
        let mut same = fig8(10.0);
        same.mode = ScenarioMode::QRefZero;
        let a = run_scenario(&same).unwrap();
        assert_eq!(compare_runs(&a, &a).unwrap().max_freq_diff, 0.0);
    }

    #[test]
    fn faster_pq_loop_swings_harder() {
        let slow = run_scenario(&fig8(10.0)).unwrap();
        let fast = run_scenario(&fig8(20.0)).unwrap();
        assert!(fast.peak_abs_d_omega() >= slow.peak_abs_d_omega());
    }

    #[test]
    fn invalid_scenario_rejected() {
        let mut sc = fig6b(0.1);
        sc.t_end = 1.0;
        assert!(matches!(run_scenario(&sc), Err(Error::Validation(r)) if r.has_rule("t_end > t_clear")));
    }
}
