//! Equal-area margins of the PLL swing model: acceleration and deceleration
//! areas, the critical clearing angle, a clearing-time estimate and a
//! brute-force clearing-time oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{bisect_counted, rk4_step, snap_step};
use crate::params::{ControllerParams, FaultSpec, SystemParams};
use crate::pll::{
    clamp_frequency, count_slips, pll_rhs, swing_coeffs, DampingMode, FaultCondition, PllState, SwingCoeffs,
};

/// Weight of the mean-frequency approximation `∫ω_b·Δω dt ≈ k₀·ω_b·Δω_C·t`.
pub const K0: f64 = 2.0 / 3.0;
pub const CCA_TOL: f64 = 1e-10;

/// `∫(t_m − T_e)dδ` over `[from, to]` on `curve`, in closed form.
pub fn area(from: f64, to: f64, curve: &SwingCoeffs) -> f64 {
    curve.t_m * (to - from) + curve.u_eff * ((to - curve.phi).cos() - (from - curve.phi).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CcaOutcome {
    Critical {
        delta_a: f64,
        delta_b: f64,
        delta_cca: f64,
        s_accel: f64,
        s_decel_max: f64,
        iterations: usize,
    },
    /// No clearing angle keeps the first swing.
    NoMargin { delta_a: f64, delta_b: f64 },
    /// The faulted swing never reaches `δ_B`.
    AlwaysStable { delta_a: f64, delta_b: f64 },
}

impl CcaOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            CcaOutcome::Critical { .. } => "CRITICAL",
            CcaOutcome::NoMargin { .. } => "NO_MARGIN",
            CcaOutcome::AlwaysStable { .. } => "ALWAYS_STABLE",
        }
    }

    pub fn angles(&self) -> (f64, f64) {
        match *self {
            CcaOutcome::Critical { delta_a, delta_b, .. }
            | CcaOutcome::NoMargin { delta_a, delta_b }
            | CcaOutcome::AlwaysStable { delta_a, delta_b } => (delta_a, delta_b),
        }
    }
}

/// `S_I(δ_A → δ)` on the faulted curve minus `S_II^max(δ → δ_B)` on the
/// healthy one. Increasing in `δ` wherever the faulted curve lies below the
/// healthy one.
pub fn cca_residual(delta: f64, delta_a: f64, delta_b: f64, pre: &SwingCoeffs, post: &SwingCoeffs) -> f64 {
    area(delta_a, delta, post) + area(delta, delta_b, pre)
}

pub fn solve_cca(pre: &SwingCoeffs, post: &SwingCoeffs) -> Result<CcaOutcome> {
    let (delta_a, delta_b) = pre
        .equilibria()
        .ok_or_else(|| Error::NoOperatingPoint("t_m exceeds the pre-fault curve peak".into()))?;
    let r = |d: f64| cca_residual(d, delta_a, delta_b, pre, post);
    if r(delta_a) >= 0.0 {
        return Ok(CcaOutcome::NoMargin { delta_a, delta_b });
    }
    if r(delta_b) <= 0.0 {
        return Ok(CcaOutcome::AlwaysStable { delta_a, delta_b });
    }
    let b = bisect_counted(r, delta_a, delta_b, CCA_TOL)?;
    Ok(CcaOutcome::Critical {
        delta_a,
        delta_b,
        delta_cca: b.root,
        s_accel: area(delta_a, b.root, post),
        s_decel_max: -area(b.root, delta_b, pre),
        iterations: b.iterations,
    })
}

/// Clearing-time estimate from the critical angle.
///
/// Energy gives the critical frequency `Δω_C = sqrt(2·S_I/(T_pll·ω_b))`, and
/// the angle travelled is approximated by `k₀·ω_b·Δω_C·t`. Returns `None`
/// (always stable) when `s_accel ≤ 0`.
pub fn estimate_cct(delta_cca: f64, delta_a: f64, s_accel: f64, t_pll: f64, omega_b: f64) -> Option<f64> {
    if !(s_accel > 0.0) {
        return None;
    }
    Some((delta_cca - delta_a) / K0 * (t_pll / (2.0 * s_accel * omega_b)).sqrt())
}

/// Healthy and faulted swing curves for a system and fault.
pub fn fault_curves(params: &SystemParams, fault: &FaultSpec) -> Result<(SwingCoeffs, SwingCoeffs)> {
    let pre = swing_coeffs(
        &params.grid,
        &params.controller,
        &params.op,
        params.base.omega_b,
        FaultCondition::PreFault,
    )?;
    Ok((pre, pre.with_fault(fault.k_f_mag, fault.phi_f)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleSettings {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Bracket width on return (s).
    pub tol: f64,
    pub dt: f64,
    /// Simulated time after clearing (s).
    pub settle: f64,
    /// PLL frequency clamp; `None` integrates the bare model.
    pub freq_clamp: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            t_lo: 1e-3,
            t_hi: 3.0,
            tol: 1e-3,
            dt: 1e-4,
            settle: 5.0,
            freq_clamp: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FaultRun {
    pub t_clear: f64,
    pub slips: usize,
    /// `Δω ≤ 0` reached after clearing.
    pub returned: bool,
    pub peak_d_omega: f64,
    pub peak_delta: f64,
}

impl FaultRun {
    /// No pole slip and the frequency swung back after clearing.
    pub fn first_swing_stable(&self) -> bool {
        self.slips == 0 && self.returned
    }
}

/// Starts at `δ_A` on the healthy curve, applies the fault at `t = 0`, clears
/// it at `t_clear` (snapped to the step grid) and runs `settle` seconds more.
pub fn simulate_fault(pre: &SwingCoeffs, post: &SwingCoeffs, t_clear: f64, s: &OracleSettings) -> Result<FaultRun> {
    let (delta_a, _) = pre
        .equilibria()
        .ok_or_else(|| Error::NoOperatingPoint("t_m exceeds the pre-fault curve peak".into()))?;
    let k_clear = snap_step(t_clear, s.dt);
    let steps = k_clear + snap_step(s.settle, s.dt);
    let mut x = [0.0, delta_a];
    let mut run = FaultRun {
        t_clear: k_clear as f64 * s.dt,
        slips: 0,
        returned: false,
        peak_d_omega: 0.0,
        peak_delta: delta_a,
    };
    for k in 0..steps {
        let curve = if k < k_clear { post } else { pre };
        let mut rhs = |_t: f64, x: &[f64; 2]| pll_rhs(&PllState::new(x[0], x[1]), curve, DampingMode::AngleDependent);
        let t = k as f64 * s.dt;
        x = rk4_step(&mut rhs, t, &x, s.dt);
        if let Some(limit) = s.freq_clamp {
            x[0] = clamp_frequency(x[0], limit);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowUp {
                t: t + s.dt,
                last_good_t: t,
            });
        }
        run.peak_d_omega = run.peak_d_omega.max(x[0].abs());
        run.peak_delta = run.peak_delta.max(x[1]);
        if k + 1 >= k_clear && x[0] <= 0.0 {
            run.returned = true;
        }
        if count_slips(x[1], delta_a) > 0 {
            run.slips = 1;
            break;
        }
    }
    Ok(run)
}

pub fn first_swing_stable(pre: &SwingCoeffs, post: &SwingCoeffs, t_clear: f64, s: &OracleSettings) -> Result<bool> {
    Ok(simulate_fault(pre, post, t_clear, s)?.first_swing_stable())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OracleOutcome {
    Critical { t_cct: f64, lo: f64, hi: f64, iterations: usize },
    AlwaysStable,
}

impl OracleOutcome {
    pub fn t_cct(&self) -> Option<f64> {
        match self {
            OracleOutcome::Critical { t_cct, .. } => Some(*t_cct),
            OracleOutcome::AlwaysStable => None,
        }
    }
}

fn verdict_label(stable: bool) -> String {
    if stable { "STABLE" } else { "UNSTABLE" }.to_string()
}

/// Critical clearing time by bisection over full nonlinear simulations.
pub fn brute_force_cct(pre: &SwingCoeffs, post: &SwingCoeffs, s: &OracleSettings) -> Result<OracleOutcome> {
    if post == pre {
        return Ok(OracleOutcome::AlwaysStable);
    }
    let stable_lo = first_swing_stable(pre, post, s.t_lo, s)?;
    let stable_hi = first_swing_stable(pre, post, s.t_hi, s)?;
    if !stable_lo || stable_hi {
        return Err(Error::InvalidCctBracket {
            t_lo: s.t_lo,
            t_hi: s.t_hi,
            verdict_lo: verdict_label(stable_lo),
            verdict_hi: verdict_label(stable_hi),
        });
    }
    let (mut lo, mut hi) = (s.t_lo, s.t_hi);
    let mut iterations = 0;
    while hi - lo > s.tol {
        let mid = 0.5 * (lo + hi);
        if first_swing_stable(pre, post, mid, s)? {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(OracleOutcome::Critical {
        t_cct: 0.5 * (lo + hi),
        lo,
        hi,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    pub outcome: &'static str,
    pub delta_a: f64,
    pub delta_b: f64,
    pub delta_cca: Option<f64>,
    pub s_accel: Option<f64>,
    pub s_decel_max: Option<f64>,
    pub t_cct_estimate: Option<f64>,
    pub t_cct_oracle: Option<f64>,
    pub first_swing_stable_at: Vec<(f64, bool)>,
}

/// EAP margins of `params` under `fault`, optionally with the oracle and
/// first-swing verdicts at `probe_times`.
pub fn margin_report(
    params: &SystemParams,
    fault: &FaultSpec,
    oracle: Option<&OracleSettings>,
    probe_times: &[f64],
) -> Result<MarginReport> {
    let (pre, post) = fault_curves(params, fault)?;
    let outcome = solve_cca(&pre, &post)?;
    let (delta_a, delta_b) = outcome.angles();
    let mut report = MarginReport {
        outcome: outcome.label(),
        delta_a,
        delta_b,
        delta_cca: None,
        s_accel: None,
        s_decel_max: None,
        t_cct_estimate: None,
        t_cct_oracle: None,
        first_swing_stable_at: Vec::new(),
    };
    if let CcaOutcome::Critical { delta_cca, s_accel, s_decel_max, .. } = outcome {
        report.delta_cca = Some(delta_cca);
        report.s_accel = Some(s_accel);
        report.s_decel_max = Some(s_decel_max);
        report.t_cct_estimate = estimate_cct(delta_cca, delta_a, s_accel, pre.t_pll, pre.omega_b);
    }
    let settings = oracle.copied().unwrap_or_default();
    if oracle.is_some() && !matches!(outcome, CcaOutcome::AlwaysStable { .. }) {
        report.t_cct_oracle = brute_force_cct(&pre, &post, &settings)?.t_cct();
    }
    for &t in probe_times {
        report.first_swing_stable_at.push((t, first_swing_stable(&pre, &post, t, &settings)?));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub bandwidth_hz: f64,
    pub k_f: f64,
    pub delta_a: f64,
    pub delta_cca: Option<f64>,
    pub s_accel: Option<f64>,
    pub t_cct_est: Option<f64>,
    pub t_cct_oracle: Option<f64>,
    pub verdict: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, bandwidth_hz: f64, k_f: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.bandwidth_hz == bandwidth_hz && c.k_f == k_f)
    }

    /// Estimated CCT along increasing bandwidth at one dip depth. `None` if
    /// any cell lacks an estimate.
    pub fn estimates_by_bandwidth(&self, k_f: f64) -> Option<Vec<(f64, f64)>> {
        let mut v: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.k_f == k_f)
            .map(|c| c.t_cct_est.map(|t| (c.bandwidth_hz, t)))
            .collect::<Option<_>>()?;
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Some(v)
    }

    pub fn strictly_decreasing_in_bandwidth(&self, k_f: f64) -> bool {
        match self.estimates_by_bandwidth(k_f) {
            Some(v) if !v.is_empty() => v.windows(2).all(|w| w[1].1 < w[0].1),
            _ => false,
        }
    }

    /// Range of estimated CCT across dip depths at one bandwidth.
    pub fn spread(&self, bandwidth_hz: f64) -> Option<f64> {
        let t: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.bandwidth_hz == bandwidth_hz)
            .filter_map(|c| c.t_cct_est)
            .collect();
        if t.is_empty() {
            return None;
        }
        let max = t.iter().copied().fold(f64::MIN, f64::max);
        let min = t.iter().copied().fold(f64::MAX, f64::min);
        Some(max - min)
    }
}

/// CCT table over PLL bandwidths and retained-voltage depths.
///
/// Bandwidths map to gains through
/// [`ControllerParams::pll_gains_from_bandwidth`]. Cells are computed in
/// parallel and returned in bandwidth-major order.
pub fn cct_sweep(
    bandwidths_hz: &[f64],
    dips: &[f64],
    phi_f: f64,
    params: &SystemParams,
    oracle: Option<&OracleSettings>,
) -> Result<SweepTable> {
    let jobs: Vec<(f64, f64)> = bandwidths_hz
        .iter()
        .flat_map(|&b| dips.iter().map(move |&k| (b, k)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(bw, k_f)| {
            let mut p = *params;
            p.controller = ControllerParams::with_pll_bandwidth(p.controller, bw);
            let fault = FaultSpec::retained_voltage(k_f, phi_f, 0.0, 1.0);
            let (pre, post) = fault_curves(&p, &fault)?;
            let outcome = solve_cca(&pre, &post)?;
            let (delta_a, _) = outcome.angles();
            let mut cell = SweepCell {
                bandwidth_hz: bw,
                k_f,
                delta_a,
                delta_cca: None,
                s_accel: None,
                t_cct_est: None,
                t_cct_oracle: None,
                verdict: outcome.label(),
            };
            if let CcaOutcome::Critical { delta_cca, s_accel, .. } = outcome {
                cell.delta_cca = Some(delta_cca);
                cell.s_accel = Some(s_accel);
                cell.t_cct_est = estimate_cct(delta_cca, delta_a, s_accel, pre.t_pll, pre.omega_b);
                if let Some(s) = oracle {
                    cell.t_cct_oracle = brute_force_cct(&pre, &post, s)?.t_cct();
                }
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_quadrature;
    use crate::params::GridParams;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn base_case() -> (SwingCoeffs, SwingCoeffs) {
        let p = SystemParams::paper_default();
        fault_curves(&p, &FaultSpec::retained_voltage(0.2, 0.0, 2.0, 2.1)).unwrap()
    }

    pub(crate) fn fig6a(bandwidth: f64) -> SystemParams {
        let mut p = SystemParams::paper_default();
        p.grid = GridParams::new(4.0, 0.2, 0.0, 0.0, 1.0, 1.0);
        p.controller = p.controller.with_pll_bandwidth(bandwidth);
        p
    }

    #[test]
    fn area_basics() {
        let (pre, _) = base_case();
        assert_eq!(area(0.7, 0.7, &pre), 0.0);
        let mut c = pre;
        c.t_m = 0.0;
        assert_relative_eq!(area(0.0, PI, &c), -2.0 * c.u_eff, epsilon = 1e-15);
    }

    #[test]
    fn area_matches_quadrature() {
        let (pre, post) = base_case();
        let c = post.with_curve(0.4, -0.3);
        for c in [pre, post, c] {
            let q = adaptive_quadrature(|d| c.t_m - c.t_e(d), -1.0, 2.5, 1e-13);
            assert!((q - area(-1.0, 2.5, &c)).abs() < 1e-10);
        }
    }

    #[test]
    fn no_dip_always_stable() {
        let (pre, _) = base_case();
        assert!(matches!(solve_cca(&pre, &pre).unwrap(), CcaOutcome::AlwaysStable { .. }));
        assert_eq!(brute_force_cct(&pre, &pre, &OracleSettings::default()).unwrap(), OracleOutcome::AlwaysStable);
    }

    #[test]
    fn bolted_fault_closed_form() {
        let (pre, _) = base_case();
        let post = pre.with_fault(0.0, 0.0);
        let CcaOutcome::Critical { delta_a, delta_b, delta_cca, s_accel, .. } = solve_cca(&pre, &post).unwrap() else {
            panic!("expected a critical angle");
        };
        // t_m·(δ_c − δ_A) = u·(cos δ_c − cos δ_B) − t_m·(δ_B − δ_c)  ⇒  cos δ_c = t_m·(δ_B − δ_A)/u + cos δ_B
        let closed = (pre.t_m * (delta_b - delta_a) / pre.u_eff + delta_b.cos()).acos();
        assert!((delta_cca - closed).abs() < 1e-9);
        assert_relative_eq!(s_accel, pre.t_m * (delta_cca - delta_a), epsilon = 1e-12);
        assert!(delta_a < delta_cca && delta_cca < delta_b);
    }

    #[test]
    fn equal_areas_at_cca() {
        let (pre, post) = base_case();
        let CcaOutcome::Critical { delta_cca, delta_a, delta_b, s_accel, s_decel_max, .. } = solve_cca(&pre, &post).unwrap() else {
            panic!();
        };
        assert!((s_accel - s_decel_max).abs() < 1e-9);
        assert!(cca_residual(delta_cca, delta_a, delta_b, &pre, &post).abs() < 1e-9);
    }

    #[test]
    fn headline_cct() {
        let (pre, post) = base_case();
        let CcaOutcome::Critical { delta_cca, delta_a, s_accel, .. } = solve_cca(&pre, &post).unwrap() else {
            panic!();
        };
        let t = estimate_cct(delta_cca, delta_a, s_accel, pre.t_pll, pre.omega_b).unwrap();
        assert!((0.135..=0.225).contains(&t), "{t}");
        let s = OracleSettings::default();
        let o = brute_force_cct(&pre, &post, &s).unwrap().t_cct().unwrap();
        assert!(o > 0.1 && o < 0.3, "{o}");
        assert!(first_swing_stable(&pre, &post, 0.9 * o, &s).unwrap());
        assert!(!first_swing_stable(&pre, &post, 1.1 * o, &s).unwrap());
    }

    #[test]
    fn estimate_limits() {
        assert_eq!(estimate_cct(0.5, 0.5, 0.1, 0.4, 314.0), Some(0.0));
        assert_eq!(estimate_cct(0.9, 0.5, 0.0, 0.4, 314.0), None);
        let a = estimate_cct(0.8, 0.5, 0.1, 0.4, 314.0).unwrap();
        let b = estimate_cct(0.9, 0.5, 0.1, 0.4, 314.0).unwrap();
        assert!(b > a);
    }

    #[test]
    fn bad_bracket_reports_verdicts() {
        let (pre, post) = base_case();
        let s = OracleSettings {
            t_lo: 0.5,
            ..OracleSettings::default()
        };
        match brute_force_cct(&pre, &post, &s) {
            Err(Error::InvalidCctBracket { verdict_lo, verdict_hi, .. }) => {
                assert_eq!(verdict_lo, "UNSTABLE");
                assert_eq!(verdict_hi, "UNSTABLE");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_shape() {
        let bws = [5.0, 10.0, 15.0, 20.0, 25.0];
        let dips = [0.0, 0.1, 0.2];
        let table = cct_sweep(&bws, &dips, 0.0, &fig6a(20.0), None).unwrap();
        assert_eq!(table.cells.len(), 15);
        for k in dips {
            assert!(table.strictly_decreasing_in_bandwidth(k));
        }
        assert!(table.spread(20.0).unwrap() < table.spread(5.0).unwrap());
    }

    #[test]
    fn single_cell_sweep_matches_direct_solve() {
        let p = fig6a(15.0);
        let table = cct_sweep(&[15.0], &[0.1], 0.0, &p, None).unwrap();
        let (pre, post) = fault_curves(&p, &FaultSpec::retained_voltage(0.1, 0.0, 0.0, 1.0)).unwrap();
        let CcaOutcome::Critical { delta_cca, delta_a, s_accel, .. } = solve_cca(&pre, &post).unwrap() else {
            panic!();
        };
        let cell = &table.cells[0];
        assert_eq!(cell.delta_cca, Some(delta_cca));
        assert_eq!(cell.t_cct_est, estimate_cct(delta_cca, delta_a, s_accel, pre.t_pll, pre.omega_b));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn residual_monotone(k in 0.0f64..0.9, t_m in 0.05f64..0.9, i in 0usize..200) {
                let (pre, _) = base_case();
                let mut pre = pre;
                pre.t_m = t_m;
                let post = pre.with_fault(k, 0.0);
                let (a, b) = pre.equilibria().unwrap();
                let d0 = a + (b - a) * i as f64 / 200.0;
                let d1 = d0 + (b - a) / 200.0;
                prop_assert!(cca_residual(d1, a, b, &pre, &post) >= cca_residual(d0, a, b, &pre, &post) - 1e-14);
            }

            #[test]
            fn post_equal_pre_always_stable(t_m in 0.0f64..0.99) {
                let (pre, _) = base_case();
                let mut pre = pre;
                pre.t_m = t_m;
                let stable = matches!(solve_cca(&pre, &pre).unwrap(), CcaOutcome::AlwaysStable { .. });
                prop_assert!(stable);
            }

            #[test]
            fn cca_interior(k in 0.0f64..0.2) {
                let (pre, _) = base_case();
                let post = pre.with_fault(k, 0.0);
                if let CcaOutcome::Critical { delta_a, delta_b, delta_cca, .. } = solve_cca(&pre, &post).unwrap() {
                    prop_assert!(delta_a < delta_cca && delta_cca < delta_b);
                } else {
                    prop_assert!(false);
                }
            }
        }
    }
}
