//! PLL-dominant swing model.
//!
//! With the current loop tracking its references and the power loop frozen,
//! the PLL behaves like a synchronous machine rotor:
//!
//! ```text
//! T_pll·dΔω/dt = −D_pll(δ)·Δω + T_m − T_e(δ)
//!        dδ/dt = ω_b·Δω
//! ```
//!
//! `δ` is the PLL angle measured from the PCC voltage and is never wrapped,
//! so pole slips stay visible. A fault only changes the magnitude and phase
//! of the `T_e` sine.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basin::{BasinClass, BasinMap, BasinPoint, BasinSettings};
use crate::error::{Error, Result};
use crate::numerics::rk4_step;
use crate::params::{ControllerParams, GridParams, OperatingPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PllState {
    /// Frequency deviation (pu).
    pub d_omega: f64,
    /// Angle from the PCC voltage (rad), unwrapped.
    pub delta: f64,
}

impl PllState {
    pub fn new(d_omega: f64, delta: f64) -> Self {
        Self { d_omega, delta }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.d_omega, self.delta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCondition {
    PreFault,
    PostFault { k_f_mag: f64, phi_f: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingCoeffs {
    pub t_pll: f64,
    pub t_m: f64,
    pub u_eff: f64,
    pub phi: f64,
    pub kp_over_ki: f64,
    pub omega_b: f64,
    pub l_sigma: f64,
    pub i_cd_ref: f64,
}

impl SwingCoeffs {
    /// Electrical torque analog `u_eff·sin(δ − φ)`.
    #[inline]
    pub fn t_e(&self, delta: f64) -> f64 {
        self.u_eff * (delta - self.phi).sin()
    }

    /// Angle-dependent damping of the active curve.
    #[inline]
    pub fn damping(&self, delta: f64) -> f64 {
        self.kp_over_ki * (self.u_eff * (delta - self.phi).cos() * self.omega_b - self.l_sigma * self.i_cd_ref)
    }

    /// Stable and unstable equilibrium angles `(δ_A, δ_B)` in the principal
    /// cycle, or `None` when `t_m` exceeds the curve's peak.
    pub fn equilibria(&self) -> Option<(f64, f64)> {
        if self.u_eff <= 0.0 || self.t_m.abs() > self.u_eff {
            return None;
        }
        let a = (self.t_m / self.u_eff).asin();
        Some((self.phi + a, self.phi + PI - a))
    }

    /// Same operating point on a different voltage curve.
    pub fn with_curve(mut self, u_eff: f64, phi: f64) -> Self {
        self.u_eff = u_eff;
        self.phi = phi;
        self
    }

    /// Curve after a dip of `k_f_mag∠phi_f`.
    pub fn with_fault(self, k_f_mag: f64, phi_f: f64) -> Self {
        self.with_curve(k_f_mag * self.u_eff, phi_f)
    }

    /// `½·T_pll·ω_b·Δω² + ∫_{δ_0}^{δ}(T_e − T_m)dδ`, conserved when undamped.
    pub fn energy(&self, s: &PllState, delta_0: f64) -> f64 {
        let potential = self.u_eff * ((delta_0 - self.phi).cos() - (s.delta - self.phi).cos())
            - self.t_m * (s.delta - delta_0);
        0.5 * self.t_pll * self.omega_b * s.d_omega * s.d_omega + potential
    }
}

/// Pre-fault PCC voltage in the PLL frame.
///
/// The locked PLL aligns its d-axis with the point-of-connection voltage,
/// which fixes the source angle through `U_s·sin δ_s = Im(Z_total·I)`.
pub fn prefault_pcc_voltage(grid: &GridParams, op: &OperatingPoint) -> Result<Complex64> {
    let i = Complex64::new(op.i_cd_ref, op.i_cq_ref);
    let lift = (grid.z_total() * i).im;
    if grid.u_s <= 0.0 || lift.abs() > grid.u_s {
        return Err(Error::NoOperatingPoint(format!(
            "source voltage {} cannot carry the line drop {lift}",
            grid.u_s
        )));
    }
    let sin = lift / grid.u_s;
    let cos = (1.0 - sin * sin).sqrt();
    let u_s_pll = Complex64::new(grid.u_s * cos, -grid.u_s * sin);
    Ok(u_s_pll + i * grid.z_s)
}

pub fn swing_coeffs(
    grid: &GridParams,
    ctrl: &ControllerParams,
    op: &OperatingPoint,
    omega_b: f64,
    condition: FaultCondition,
) -> Result<SwingCoeffs> {
    let t_pll = (omega_b - ctrl.pll_kp * grid.l_sigma * op.i_cd_ref) / ctrl.pll_ki;
    if !(t_pll > 0.0) {
        return Err(Error::NonPhysicalInertia(t_pll));
    }
    let u_pcc = prefault_pcc_voltage(grid, op)?.norm();
    let pre = SwingCoeffs {
        t_pll,
        t_m: grid.omega_s * grid.l_sigma_t * op.i_cd_ref + grid.r_sigma_t * op.i_cq_ref,
        u_eff: u_pcc,
        phi: 0.0,
        kp_over_ki: ctrl.pll_kp / ctrl.pll_ki,
        omega_b,
        l_sigma: grid.l_sigma,
        i_cd_ref: op.i_cd_ref,
    };
    Ok(match condition {
        FaultCondition::PreFault => pre,
        FaultCondition::PostFault { k_f_mag, phi_f } => pre.with_fault(k_f_mag, phi_f),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    /// Fixed damping, e.g. `D_pll(δ_A)`.
    Constant(f64),
    AngleDependent,
}

impl DampingMode {
    /// Constant damping frozen at the pre-fault equilibrium.
    pub fn frozen_at_equilibrium(c: &SwingCoeffs) -> Option<Self> {
        c.equilibria().map(|(a, _)| DampingMode::Constant(c.damping(a)))
    }
}

/// `(dΔω/dt, dδ/dt)`.
#[inline]
pub fn pll_rhs(s: &PllState, c: &SwingCoeffs, mode: DampingMode) -> [f64; 2] {
    let d = match mode {
        DampingMode::Constant(d) => d,
        DampingMode::AngleDependent => c.damping(s.delta),
    };
    [
        (-d * s.d_omega + c.t_m - c.t_e(s.delta)) / c.t_pll,
        c.omega_b * s.d_omega,
    ]
}

/// Completed pole slips away from `delta_a`.
pub fn count_slips(delta: f64, delta_a: f64) -> usize {
    ((delta - delta_a).abs() / TAU).floor() as usize
}

/// Clamps the PLL frequency `1 + Δω` to `[2 − limit, limit]`.
#[inline]
pub fn clamp_frequency(d_omega: f64, freq_limit: f64) -> f64 {
    let band = freq_limit - 1.0;
    d_omega.clamp(-band, band)
}

/// Settings for PLL portraits. `diverge_norm` bounds `|Δω|` (pu).
pub fn pll_basin_settings() -> BasinSettings {
    BasinSettings {
        horizon: 5.0,
        dt: 1e-3,
        tol: 1e-3,
        diverge_norm: 1.0,
    }
}

/// Integrates the unfaulted model from `initial` and classifies the end
/// point against the equilibrium family `δ_A + 2πk`.
///
/// Converging to `k = 0` is the target; any other `k` counts `|k|` slips.
/// A run whose `|Δω|` exceeds `diverge_norm`, or which is still slipping at
/// the horizon, diverges.
pub fn classify_pll(
    initial: PllState,
    c: &SwingCoeffs,
    mode: DampingMode,
    settings: &BasinSettings,
) -> Result<BasinPoint> {
    let (delta_a, _) = c
        .equilibria()
        .ok_or_else(|| Error::NoOperatingPoint("t_m exceeds the peak of the swing curve".into()))?;
    let steps = (settings.horizon / settings.dt).round() as usize;
    let mut x = initial.as_array();
    let mut rhs = |_t: f64, x: &[f64; 2]| pll_rhs(&PllState::new(x[0], x[1]), c, mode);
    let mut max_slips = 0;
    let mut class = None;
    for k in 0..steps {
        x = rk4_step(&mut rhs, k as f64 * settings.dt, &x, settings.dt);
        if !x.iter().all(|v| v.is_finite()) || x[0].abs() > settings.diverge_norm {
            class = Some(BasinClass::Diverged);
            break;
        }
        max_slips = max_slips.max(count_slips(x[1], delta_a));
    }
    let class = class.unwrap_or_else(|| {
        let d = rhs(0.0, &x);
        let k = ((x[1] - delta_a) / TAU).round();
        let off = x[1] - delta_a - k * TAU;
        let settled = x[0].abs() < settings.tol && off.abs() < settings.tol && d[0].abs() < settings.tol;
        if settled && k == 0.0 {
            BasinClass::ConvergedToTarget
        } else if settled {
            BasinClass::ConvergedElsewhere
        } else if x[0].abs() > 10.0 * settings.tol && max_slips > 0 {
            BasinClass::Diverged
        } else {
            BasinClass::Undecided
        }
    });
    Ok(BasinPoint {
        initial: initial.as_array(),
        class,
        final_state: x,
        slips: max_slips,
    })
}

/// Classifies every initial state in parallel. Output order follows `initials`.
pub fn pll_basin(
    initials: &[PllState],
    c: &SwingCoeffs,
    mode: DampingMode,
    settings: &BasinSettings,
) -> Result<BasinMap> {
    let points = initials
        .par_iter()
        .map(|s| classify_pll(*s, c, mode, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(BasinMap { points })
}
