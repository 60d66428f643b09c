//! Per-unit parameters of the converter, its controllers and the grid, plus
//! the validation shared by every model.
//!
//! All dynamics downstream run in per-unit. The physical base only appears
//! at the I/O boundary (configuration files and reports).

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// Apparent power base (VA).
    pub s_base: f64,
    /// Line-to-line voltage base (V).
    pub u_base: f64,
    /// Frequency base (Hz).
    pub f_base: f64,
    /// Angular frequency base (rad/s), always `2π·f_base`.
    pub omega_b: f64,
}

impl PerUnitBase {
    pub fn new(s_base: f64, u_base: f64, f_base: f64) -> Self {
        Self {
            s_base,
            u_base,
            f_base,
            omega_b: 2.0 * PI * f_base,
        }
    }

    /// 2 MW, 690 V, 50 Hz.
    pub fn rated() -> Self {
        Self::new(2.0e6, 690.0, 50.0)
    }

    pub fn z_base(&self) -> f64 {
        self.u_base * self.u_base / self.s_base
    }

    pub fn l_base(&self) -> f64 {
        self.z_base() / self.omega_b
    }

    pub fn i_base(&self) -> f64 {
        self.s_base / (3f64.sqrt() * self.u_base)
    }
}

/// Thevenin grid seen from the converter terminals.
///
/// `l_sigma` is the whole lumped inductance seen from the point of
/// connection; `l_sigma_t` is the part between the point of connection and
/// the point of common coupling, so the source impedance behind the PCC is
/// `r_s + j·ω_s·(l_sigma − l_sigma_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub scr: f64,
    pub l_sigma: f64,
    pub l_sigma_t: f64,
    pub r_sigma_t: f64,
    pub z_s: Complex64,
    pub u_s: f64,
    pub omega_s: f64,
}

impl GridParams {
    pub fn new(scr: f64, l_sigma_t: f64, r_sigma_t: f64, r_s: f64, u_s: f64, omega_s: f64) -> Self {
        let l_sigma = 1.0 / scr;
        Self {
            scr,
            l_sigma,
            l_sigma_t,
            r_sigma_t,
            z_s: Complex64::new(r_s, omega_s * (l_sigma - l_sigma_t)),
            u_s,
            omega_s,
        }
    }

    /// Grid whose PCC is the Thevenin source itself (`z_s = 0`).
    pub fn stiff_pcc(scr: f64) -> Self {
        Self::new(scr, 1.0 / scr, 0.0, 0.0, 1.0, 1.0)
    }

    /// Line impedance from the point of connection to the PCC.
    pub fn z_line(&self) -> Complex64 {
        Complex64::new(self.r_sigma_t, self.omega_s * self.l_sigma_t)
    }

    /// Total impedance from the point of connection to the Thevenin source.
    pub fn z_total(&self) -> Complex64 {
        self.z_line() + self.z_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub pq_kp: f64,
    pub pq_ki: f64,
    /// Informational; gains are the source of truth.
    pub pll_bandwidth_hz: Option<f64>,
    pub pq_bandwidth_hz: Option<f64>,
}

impl ControllerParams {
    /// PLL PI gains for a bandwidth in Hz: `k_p = α`, `k_i = 2α²`.
    ///
    /// This family passes through the (20, 800) pair used for the 20 Hz
    /// figures.
    pub fn pll_gains_from_bandwidth(bandwidth_hz: f64) -> (f64, f64) {
        (bandwidth_hz, 2.0 * bandwidth_hz * bandwidth_hz)
    }

    /// PQ integral gain placing the closed-loop pole of `P ≈ u·i` under
    /// `k_p + k_i/s` at `2π·bandwidth_hz`.
    pub fn pq_ki_from_bandwidth(bandwidth_hz: f64, pq_kp: f64, u: f64) -> f64 {
        2.0 * PI * bandwidth_hz * (1.0 + pq_kp * u) / u
    }

    pub fn with_pll_bandwidth(mut self, bandwidth_hz: f64) -> Self {
        let (kp, ki) = Self::pll_gains_from_bandwidth(bandwidth_hz);
        self.pll_kp = kp;
        self.pll_ki = ki;
        self.pll_bandwidth_hz = Some(bandwidth_hz);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub p_ref: f64,
    pub q_ref: f64,
    pub i_cd_ref: f64,
    pub i_cq_ref: f64,
    pub i_max: f64,
    /// Upper clamp on the PLL frequency (pu).
    pub freq_limit: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPriority {
    /// Keep the d-axis current, trim the q-axis first.
    #[default]
    DAxis,
    /// Scale the current vector, preserving its angle.
    Proportional,
}

/// Clamp a current vector to magnitude `i_max`. Returns the limited pair and
/// whether the limit was active.
pub fn limit_current(i_d: f64, i_q: f64, i_max: f64, priority: LimitPriority) -> (f64, f64, bool) {
    let mag = i_d.hypot(i_q);
    if mag <= i_max {
        return (i_d, i_q, false);
    }
    match priority {
        LimitPriority::DAxis => {
            let d = i_d.clamp(-i_max, i_max);
            let room = (i_max * i_max - d * d).max(0.0).sqrt();
            (d, i_q.clamp(-room, room), true)
        }
        LimitPriority::Proportional => {
            let s = i_max / mag;
            (i_d * s, i_q * s, true)
        }
    }
}

impl OperatingPoint {
    pub fn limited_refs(&self, priority: LimitPriority) -> (f64, f64) {
        let (d, q, _) = limit_current(self.i_cd_ref, self.i_cq_ref, self.i_max, priority);
        (d, q)
    }
}

/// Switching-level hardware data. Stored for configuration fidelity; the
/// averaged models do not use it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    pub v_dc: f64,
    pub f_sw: f64,
    pub l_f: f64,
    pub l_t: f64,
}

impl Default for HardwareParams {
    fn default() -> Self {
        Self {
            v_dc: 1200.0,
            f_sw: 2400.0,
            l_f: 7.6e-5,
            l_t: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub base: PerUnitBase,
    pub grid: GridParams,
    pub controller: ControllerParams,
    pub op: OperatingPoint,
    pub hardware: HardwareParams,
}

impl SystemParams {
    /// Rated converter on an SCR = 4 grid with a 20 Hz PLL, rated d-axis
    /// current and a stiff PCC.
    pub fn paper_default() -> Self {
        Self {
            base: PerUnitBase::rated(),
            grid: GridParams::stiff_pcc(4.0),
            controller: ControllerParams {
                pll_kp: 20.0,
                pll_ki: 800.0,
                pq_kp: 0.1,
                pq_ki: 20.0,
                pll_bandwidth_hz: Some(20.0),
                pq_bandwidth_hz: None,
            },
            op: OperatingPoint {
                p_ref: 1.0,
                q_ref: 0.0,
                i_cd_ref: 1.0,
                i_cq_ref: 0.0,
                i_max: 1.1,
                freq_limit: 1.1,
            },
            hardware: HardwareParams::default(),
        }
    }
}

/// A symmetrical short circuit at the PCC.
///
/// With `z_f` set, `(k_f_mag, phi_f)` is the polar form of `z_f/(z_f + z_s)`.
/// Without it the retained voltage is given directly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub z_f: Option<Complex64>,
    pub t_apply: f64,
    pub t_clear: f64,
    pub k_f_mag: f64,
    pub phi_f: f64,
}

impl FaultSpec {
    pub fn from_impedance(z_f: Complex64, z_s: Complex64, t_apply: f64, t_clear: f64) -> Result<Self> {
        let (k_f_mag, phi_f) = fault_factor(z_f, z_s)?;
        Ok(Self {
            z_f: Some(z_f),
            t_apply,
            t_clear,
            k_f_mag,
            phi_f,
        })
    }

    pub fn retained_voltage(k_f_mag: f64, phi_f: f64, t_apply: f64, t_clear: f64) -> Self {
        Self {
            z_f: None,
            t_apply,
            t_clear,
            k_f_mag,
            phi_f,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_clear - self.t_apply
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.t_clear = self.t_apply + duration;
        self
    }

    /// Whether the fault changes the network at all.
    pub fn is_disturbance(&self) -> bool {
        self.k_f_mag != 1.0 || self.phi_f != 0.0
    }

    pub fn validate(&self, grid: &GridParams) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.t_apply.is_finite() && self.t_clear.is_finite() && self.t_clear > self.t_apply) {
            v.push(Violation::new("fault.t_clear", "t_clear > t_apply"));
        }
        if self.t_apply < 0.0 {
            v.push(Violation::new("fault.t_apply", "t_apply >= 0"));
        }
        if !(self.k_f_mag >= 0.0 && self.k_f_mag.is_finite()) {
            v.push(Violation::new("fault.k_f_mag", "k_f_mag >= 0"));
        }
        if !(self.phi_f.abs() <= PI) {
            v.push(Violation::new("fault.phi_f", "phi_f in [-pi, pi]"));
        }
        if let Some(z_f) = self.z_f {
            match fault_factor(z_f, grid.z_s) {
                Ok((k, phi)) => {
                    if (k - self.k_f_mag).abs() > 1e-9 || (phi - self.phi_f).abs() > 1e-9 {
                        v.push(Violation::new(
                            "fault.k_f_mag",
                            "(k_f_mag, phi_f) = polar(z_f / (z_f + z_s))",
                        ));
                    }
                }
                Err(_) => v.push(Violation::new("fault.z_f", "z_f + z_s != 0")),
            }
        }
        v
    }
}

/// Retained-voltage factor `z_f/(z_f + z_s)` in polar form `(|k_f|, φ_f)`.
pub fn fault_factor(z_f: Complex64, z_s: Complex64) -> Result<(f64, f64)> {
    let den = z_f + z_s;
    if den.norm() == 0.0 || !den.is_finite() {
        return Err(Error::IllPosedFault);
    }
    let k = z_f / den;
    let mag = k.norm();
    let phi = if mag == 0.0 { 0.0 } else { k.arg() };
    Ok((mag, phi))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: &str) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.field, v.rule)?;
        }
        Ok(())
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn non_negative(x: f64) -> bool {
    x >= 0.0 && x.is_finite()
}

pub fn validate_params(p: &SystemParams) -> ValidationReport {
    let mut v = Vec::new();
    let mut check = |ok: bool, field: &str, rule: &str| {
        if !ok {
            v.push(Violation::new(field, rule));
        }
    };

    let b = &p.base;
    check(positive(b.s_base), "base.s_base", "s_base > 0");
    check(positive(b.u_base), "base.u_base", "u_base > 0");
    check(positive(b.f_base), "base.f_base", "f_base > 0");
    check(b.omega_b == 2.0 * PI * b.f_base, "base.omega_b", "omega_b = 2*pi*f_base");

    let g = &p.grid;
    check(positive(g.scr), "grid.scr", "scr > 0");
    if positive(g.scr) {
        check((g.l_sigma * g.scr - 1.0).abs() < 1e-12, "grid.l_sigma", "l_sigma = 1/scr");
        check(
            g.l_sigma >= g.l_sigma_t && g.l_sigma_t >= 0.0,
            "grid.l_sigma_t",
            "l_sigma >= l_sigma_t >= 0",
        );
    }
    check(non_negative(g.u_s), "grid.u_s", "u_s >= 0");
    check(positive(g.omega_s), "grid.omega_s", "omega_s > 0");
    check(non_negative(g.r_sigma_t), "grid.r_sigma_t", "r_sigma_t >= 0");
    check(g.z_s.re >= 0.0 && g.z_s.is_finite(), "grid.z_s", "Re(z_s) >= 0");

    let c = &p.controller;
    check(non_negative(c.pll_kp), "controller.pll_kp", "pll_kp >= 0");
    check(positive(c.pll_ki), "controller.pll_ki", "pll_ki > 0");
    check(non_negative(c.pq_kp), "controller.pq_kp", "pq_kp >= 0");
    check(positive(c.pq_ki), "controller.pq_ki", "pq_ki > 0");
    if positive(c.pll_ki) && positive(g.scr) && positive(b.f_base) {
        let t_pll = (b.omega_b - c.pll_kp * g.l_sigma * p.op.i_cd_ref) / c.pll_ki;
        check(t_pll > 0.0, "controller.pll_kp", "t_pll > 0");
    }

    let o = &p.op;
    check(positive(o.i_max), "op.i_max", "i_max > 0");
    check(o.freq_limit > 1.0 && o.freq_limit.is_finite(), "op.freq_limit", "freq_limit > 1");
    check(
        [o.p_ref, o.q_ref, o.i_cd_ref, o.i_cq_ref].iter().all(|x| x.is_finite()),
        "op",
        "finite references",
    );

    ValidationReport { violations: v }
}
