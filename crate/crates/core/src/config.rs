//! JSON run configuration: parsing, defaults, validation and bundled presets.
//!
//! Every field is optional. Missing values take the defaults listed on each
//! section; the fully-resolved [`RunConfig`] can be written back out with
//! [`RunConfig::snapshot`] and reloads to the same values.
//!
//! Gains are the source of truth. `pll_bandwidth_hz` only fills in PLL gains
//! that are absent (`k_p = α`, `k_i = 2α²`); `pq_bandwidth_hz` likewise fills
//! in a missing `pq_ki` as `2π·f·(1 + k_p·u_s)/u_s`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basin::BasinSettings;
use crate::eap::OracleSettings;
use crate::error::{Error, Result};
use crate::params::{
    validate_params, ControllerParams, FaultSpec, GridParams, HardwareParams, LimitPriority, OperatingPoint,
    PerUnitBase, SystemParams, ValidationReport, Violation,
};
use crate::scenario::{LimiterSpec, Scenario, ScenarioMode};

pub const DEFAULT_FREQ_LIMIT: f64 = 1.1;

const PRESETS: &[(&str, &str)] = &[
    ("paper_default", include_str!("../presets/paper_default.json")),
    ("fig2a", include_str!("../presets/fig2a.json")),
    ("fig2c", include_str!("../presets/fig2c.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4b", include_str!("../presets/fig4b.json")),
    ("fig6a", include_str!("../presets/fig6a.json")),
    ("fig6b", include_str!("../presets/fig6b.json")),
    ("fig8a", include_str!("../presets/fig8a.json")),
    ("fig8b", include_str!("../presets/fig8b.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<RunConfig> {
    let src = preset_source(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    parse_config(src, name)
}

// ---------------------------------------------------------------- file schema

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    /// VA, default 2e6.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_base: Option<f64>,
    /// V line-to-line, default 690.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_base: Option<f64>,
    /// Hz, default 50.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_base: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Default 4.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scr: Option<f64>,
    /// PoC-to-PCC inductance; default `1/scr` (PCC at the source).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_sigma_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_sigma_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll_kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll_ki: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll_bandwidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq_kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq_ki: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq_bandwidth_hz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpSection {
    /// Default 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_ref: Option<f64>,
    /// Default `p_ref/u_s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_cd_ref: Option<f64>,
    /// Default `−q_ref/u_s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_cq_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_max: Option<f64>,
    /// Default 1.1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_limit: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_dc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_sw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_t: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSection {
    /// Fault impedance `[re, im]`. When set, `k_f_mag`/`phi_f` are derived
    /// from it and must agree if also given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_f: Option<[f64; 2]>,
    /// Default 0.2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_f_mag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_f: Option<f64>,
    /// Default 2.0 s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_apply: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_clear: Option<f64>,
    /// Alternative to `t_clear`; default 0.1 s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ScenarioMode>,
    /// Default `t_clear + 3`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Default 1e-4 s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<LimitPriority>,
    /// Defaults to `op.i_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_max: Option<f64>,
    /// Defaults to `op.freq_limit`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_clamp: Option<f64>,
    /// Extra fault durations run by `repro`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_durations: Option<Vec<f64>>,
    /// Conditional-integration anti-windup on the PQ integrators. Default true.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anti_windup: Option<bool>,
    /// Freeze the PLL (PQ-loop studies). Default false.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll_locked: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortraitModel {
    #[default]
    Pcl,
    Pll,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Lattice,
    /// Lattice points inside a disk.
    Disk,
    /// `n²` uniform points in the window, seeded.
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingChoice {
    #[default]
    AngleDependent,
    /// Frozen at the pre-fault stable equilibrium.
    Constant,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortraitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PortraitModel>,
    /// PCL: `i_cd` range, default [−1.5, 1.5]. PLL: `Δω` range, default [−0.5, 0.5].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_range: Option<[f64; 2]>,
    /// PCL: `i_cq` range, default [−1.5, 1.5]. PLL: `δ` range, default [−π, 2π].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
    /// Points per axis, default 41.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    /// Defaults to the target equilibrium.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disk_center: Option<[f64; 2]>,
    /// Defaults to `op.i_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disk_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// PCL: state norm, default 10. PLL: `|Δω|`, default 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverge_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<DampingChoice>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Default [5, 10, 15, 20, 25] Hz.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidths_hz: Option<Vec<f64>>,
    /// Retained-voltage magnitudes, default [0, 0.1, 0.2].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dips: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_f: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle: Option<f64>,
    /// Clearing times checked for first-swing stability by `cca`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_times: Option<Vec<f64>>,
}

/// On-disk configuration, as written.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub base: BaseSection,
    pub grid: GridSection,
    pub controller: ControllerSection,
    pub op: OpSection,
    pub hardware: HardwareSection,
    pub fault: FaultSection,
    pub scenario: ScenarioSection,
    pub portrait: PortraitSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
}

// ------------------------------------------------------------------- resolved

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSettings {
    pub mode: ScenarioMode,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub limiter: LimiterSpec,
    pub fault_durations: Vec<f64>,
    pub pll_locked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PortraitSettings {
    pub model: PortraitModel,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub n: usize,
    pub sampling: Sampling,
    pub disk_center: Option<[f64; 2]>,
    pub disk_radius: f64,
    pub seed: u64,
    pub basin: BasinSettings,
    pub damping: DampingChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSettings {
    pub bandwidths_hz: Vec<f64>,
    pub dips: Vec<f64>,
    pub phi_f: f64,
}

/// A fully defaulted configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub name: String,
    pub description: Option<String>,
    pub params: SystemParams,
    pub fault: FaultSpec,
    pub scenario: ScenarioSettings,
    pub portrait: PortraitSettings,
    pub sweep: SweepSettings,
    pub oracle: OracleSettings,
    pub probe_times: Vec<f64>,
}

/// Reads and resolves a configuration file.
///
/// A path that does not exist but names a bundled preset (`fig6b`,
/// `paper_default.json`, ...) loads the preset.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, |_| {})
}

/// As [`load_config`], with `edit` applied to the parsed file before
/// defaults are filled in.
pub fn load_config_with(path: &Path, edit: impl FnOnce(&mut ConfigFile)) -> Result<RunConfig> {
    let origin = path.display().to_string();
    match std::fs::read_to_string(path) {
        Ok(text) => parse_config_with(&text, &origin, edit),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            match preset_source(stem) {
                Some(src) if path.parent().map_or(true, |p| p.as_os_str().is_empty()) => {
                    parse_config_with(src, stem.strip_suffix(".json").unwrap_or(stem), edit)
                }
                _ => Err(Error::Config(format!("{origin}: {e}"))),
            }
        }
        Err(e) => Err(Error::Config(format!("{origin}: {e}"))),
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    parse_config_with(text, origin, |_| {})
}

pub fn parse_config_with(text: &str, origin: &str, edit: impl FnOnce(&mut ConfigFile)) -> Result<RunConfig> {
    let mut file: ConfigFile = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        Error::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })?;
    edit(&mut file);
    let cfg = resolve(&file, origin)?;
    cfg.validate().into_result()?;
    Ok(cfg)
}

fn resolve(f: &ConfigFile, origin: &str) -> Result<RunConfig> {
    let base = PerUnitBase::new(
        f.base.s_base.unwrap_or(2.0e6),
        f.base.u_base.unwrap_or(690.0),
        f.base.f_base.unwrap_or(50.0),
    );

    let g = &f.grid;
    let scr = g.scr.unwrap_or(4.0);
    let u_s = g.u_s.unwrap_or(1.0);
    let grid = GridParams::new(
        scr,
        g.l_sigma_t.unwrap_or(1.0 / scr),
        g.r_sigma_t.unwrap_or(0.0),
        g.r_s.unwrap_or(0.0),
        u_s,
        g.omega_s.unwrap_or(1.0),
    );

    let c = &f.controller;
    let (bw_kp, bw_ki) = match c.pll_bandwidth_hz {
        Some(bw) => ControllerParams::pll_gains_from_bandwidth(bw),
        None => (20.0, 800.0),
    };
    let pq_kp = c.pq_kp.unwrap_or(0.1);
    let pq_ki = match (c.pq_ki, c.pq_bandwidth_hz) {
        (Some(ki), _) => ki,
        (None, Some(bw)) => ControllerParams::pq_ki_from_bandwidth(bw, pq_kp, u_s),
        (None, None) => 20.0,
    };
    let controller = ControllerParams {
        pll_kp: c.pll_kp.unwrap_or(bw_kp),
        pll_ki: c.pll_ki.unwrap_or(bw_ki),
        pq_kp,
        pq_ki,
        pll_bandwidth_hz: c.pll_bandwidth_hz.or(if c.pll_kp.is_none() && c.pll_ki.is_none() {
            Some(20.0)
        } else {
            None
        }),
        pq_bandwidth_hz: c.pq_bandwidth_hz,
    };

    let o = &f.op;
    let p_ref = o.p_ref.unwrap_or(1.0);
    let q_ref = o.q_ref.unwrap_or(0.0);
    let op = OperatingPoint {
        p_ref,
        q_ref,
        i_cd_ref: o.i_cd_ref.unwrap_or(p_ref / u_s),
        i_cq_ref: o.i_cq_ref.unwrap_or(if q_ref == 0.0 { 0.0 } else { -q_ref / u_s }),
        i_max: o.i_max.unwrap_or(1.1),
        freq_limit: o.freq_limit.unwrap_or(DEFAULT_FREQ_LIMIT),
    };

    let h = &f.hardware;
    let hd = HardwareParams::default();
    let hardware = HardwareParams {
        v_dc: h.v_dc.unwrap_or(hd.v_dc),
        f_sw: h.f_sw.unwrap_or(hd.f_sw),
        l_f: h.l_f.unwrap_or(hd.l_f),
        l_t: h.l_t.unwrap_or(hd.l_t),
    };
    let params = SystemParams {
        base,
        grid,
        controller,
        op,
        hardware,
    };

    let fs = &f.fault;
    let t_apply = fs.t_apply.unwrap_or(2.0);
    let t_clear = match (fs.t_clear, fs.duration) {
        (Some(t), Some(d)) if (t - t_apply - d).abs() > 1e-12 => {
            return Err(Error::Config(format!(
                "{origin}: fault.t_clear ({t}) and fault.duration ({d}) disagree"
            )))
        }
        (Some(t), _) => t,
        (None, Some(d)) => t_apply + d,
        (None, None) => t_apply + 0.1,
    };
    let fault = match fs.z_f {
        Some([re, im]) => {
            let mut spec = FaultSpec::from_impedance(Complex64::new(re, im), grid.z_s, t_apply, t_clear)?;
            // stated factors are checked against the derived ones in validation
            spec.k_f_mag = fs.k_f_mag.unwrap_or(spec.k_f_mag);
            spec.phi_f = fs.phi_f.unwrap_or(spec.phi_f);
            spec
        }
        None => FaultSpec::retained_voltage(fs.k_f_mag.unwrap_or(0.2), fs.phi_f.unwrap_or(0.0), t_apply, t_clear),
    };

    let s = &f.scenario;
    let scenario = ScenarioSettings {
        mode: s.mode.unwrap_or(ScenarioMode::ConstCurrentRefs),
        t_end: s.t_end.unwrap_or(t_clear + 3.0),
        dt: s.dt.unwrap_or(1e-4),
        record_every: s.record_every.unwrap_or(10),
        limiter: LimiterSpec {
            i_max: s.i_max.unwrap_or(op.i_max),
            priority: s.priority.unwrap_or_default(),
            freq_clamp: s.freq_clamp.unwrap_or(op.freq_limit),
            anti_windup: s.anti_windup.unwrap_or(true),
        },
        fault_durations: s.fault_durations.clone().unwrap_or_default(),
        pll_locked: s.pll_locked.unwrap_or(false),
    };

    let p = &f.portrait;
    let model = p.model.unwrap_or_default();
    let (x_def, y_def, norm_def) = match model {
        PortraitModel::Pcl => ([-1.5, 1.5], [-1.5, 1.5], 10.0),
        PortraitModel::Pll => ([-0.5, 0.5], [-PI, 2.0 * PI], 1.0),
    };
    let portrait = PortraitSettings {
        model,
        x_range: p.x_range.unwrap_or(x_def),
        y_range: p.y_range.unwrap_or(y_def),
        n: p.n.unwrap_or(41),
        sampling: p.sampling.unwrap_or_default(),
        disk_center: p.disk_center,
        disk_radius: p.disk_radius.unwrap_or(op.i_max),
        seed: p.seed.unwrap_or(0),
        basin: BasinSettings {
            horizon: p.horizon.unwrap_or(5.0),
            dt: p.dt.unwrap_or(1e-3),
            tol: p.tol.unwrap_or(1e-3),
            diverge_norm: p.diverge_norm.unwrap_or(norm_def),
        },
        damping: p.damping.unwrap_or_default(),
    };

    let w = &f.sweep;
    let sweep = SweepSettings {
        bandwidths_hz: w.bandwidths_hz.clone().unwrap_or_else(|| vec![5.0, 10.0, 15.0, 20.0, 25.0]),
        dips: w.dips.clone().unwrap_or_else(|| vec![0.0, 0.1, 0.2]),
        phi_f: w.phi_f.unwrap_or(0.0),
    };

    let r = &f.oracle;
    let od = OracleSettings::default();
    let oracle = OracleSettings {
        t_lo: r.t_lo.unwrap_or(od.t_lo),
        t_hi: r.t_hi.unwrap_or(od.t_hi),
        tol: r.tol.unwrap_or(od.tol),
        dt: r.dt.unwrap_or(od.dt),
        settle: r.settle.unwrap_or(od.settle),
        freq_clamp: None,
    };

    Ok(RunConfig {
        name: f.name.clone().unwrap_or_else(|| origin.to_string()),
        description: f.description.clone(),
        params,
        fault,
        scenario,
        portrait,
        sweep,
        oracle,
        probe_times: r.probe_times.clone().unwrap_or_default(),
    })
}

impl RunConfig {
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_params(&self.params);
        let mut extra = self.to_scenario().validate().violations;
        extra.retain(|v| !report.violations.contains(v));
        report.violations.extend(extra);
        let v = &mut report.violations;
        let mut check = |ok: bool, field: &str, rule: &str| {
            if !ok {
                v.push(Violation {
                    field: field.into(),
                    rule: rule.into(),
                });
            }
        };
        for d in &self.scenario.fault_durations {
            check(*d > 0.0 && d.is_finite(), "scenario.fault_durations", "durations > 0");
        }
        let p = &self.portrait;
        check(p.n >= 1, "portrait.n", "n >= 1");
        check(
            p.x_range[0] <= p.x_range[1] && p.y_range[0] <= p.y_range[1],
            "portrait.x_range",
            "lo <= hi",
        );
        check(p.disk_radius > 0.0, "portrait.disk_radius", "disk_radius > 0");
        check(
            p.basin.horizon > 0.0 && p.basin.dt > 0.0 && p.basin.dt <= p.basin.horizon,
            "portrait.dt",
            "0 < dt <= horizon",
        );
        check(p.basin.tol > 0.0, "portrait.tol", "tol > 0");
        check(p.basin.diverge_norm > 0.0, "portrait.diverge_norm", "diverge_norm > 0");
        let w = &self.sweep;
        check(
            w.bandwidths_hz.iter().all(|b| *b > 0.0 && b.is_finite()),
            "sweep.bandwidths_hz",
            "bandwidths > 0",
        );
        check(
            w.dips.iter().all(|k| *k >= 0.0 && k.is_finite()),
            "sweep.dips",
            "dips >= 0",
        );
        let o = &self.oracle;
        check(
            0.0 < o.t_lo && o.t_lo < o.t_hi && o.tol > 0.0,
            "oracle.t_lo",
            "0 < t_lo < t_hi, tol > 0",
        );
        check(o.dt > 0.0 && o.settle > 0.0, "oracle.dt", "dt > 0, settle > 0");
        report
    }

    pub fn to_scenario(&self) -> Scenario {
        Scenario {
            params: self.params,
            fault: self.fault,
            mode: self.scenario.mode,
            t_end: self.scenario.t_end,
            dt: self.scenario.dt,
            limiter: self.scenario.limiter,
            record_every: self.scenario.record_every,
            pll_locked: self.scenario.pll_locked,
        }
    }

    /// The scenario with the fault lasting `duration`, `t_end` shifted to
    /// keep the same post-clearing window.
    pub fn scenario_with_duration(&self, duration: f64) -> Scenario {
        let mut sc = self.to_scenario();
        let tail = sc.t_end - sc.fault.t_clear;
        sc.fault = sc.fault.with_duration(duration);
        sc.t_end = sc.fault.t_clear + tail;
        sc
    }

    /// Every value written out, so the snapshot reloads without defaults.
    pub fn snapshot(&self) -> ConfigFile {
        let p = &self.params;
        let c = &p.controller;
        ConfigFile {
            name: Some(self.name.clone()),
            description: self.description.clone(),
            base: BaseSection {
                s_base: Some(p.base.s_base),
                u_base: Some(p.base.u_base),
                f_base: Some(p.base.f_base),
            },
            grid: GridSection {
                scr: Some(p.grid.scr),
                l_sigma_t: Some(p.grid.l_sigma_t),
                r_sigma_t: Some(p.grid.r_sigma_t),
                r_s: Some(p.grid.z_s.re),
                u_s: Some(p.grid.u_s),
                omega_s: Some(p.grid.omega_s),
            },
            controller: ControllerSection {
                pll_kp: Some(c.pll_kp),
                pll_ki: Some(c.pll_ki),
                pll_bandwidth_hz: c.pll_bandwidth_hz,
                pq_kp: Some(c.pq_kp),
                pq_ki: Some(c.pq_ki),
                pq_bandwidth_hz: c.pq_bandwidth_hz,
            },
            op: OpSection {
                p_ref: Some(p.op.p_ref),
                q_ref: Some(p.op.q_ref),
                i_cd_ref: Some(p.op.i_cd_ref),
                i_cq_ref: Some(p.op.i_cq_ref),
                i_max: Some(p.op.i_max),
                freq_limit: Some(p.op.freq_limit),
            },
            hardware: HardwareSection {
                v_dc: Some(p.hardware.v_dc),
                f_sw: Some(p.hardware.f_sw),
                l_f: Some(p.hardware.l_f),
                l_t: Some(p.hardware.l_t),
            },
            fault: FaultSection {
                z_f: self.fault.z_f.map(|z| [z.re, z.im]),
                k_f_mag: Some(self.fault.k_f_mag),
                phi_f: Some(self.fault.phi_f),
                t_apply: Some(self.fault.t_apply),
                t_clear: Some(self.fault.t_clear),
                duration: None,
            },
            scenario: ScenarioSection {
                mode: Some(self.scenario.mode),
                t_end: Some(self.scenario.t_end),
                dt: Some(self.scenario.dt),
                record_every: Some(self.scenario.record_every),
                priority: Some(self.scenario.limiter.priority),
                i_max: Some(self.scenario.limiter.i_max),
                freq_clamp: Some(self.scenario.limiter.freq_clamp),
                anti_windup: Some(self.scenario.limiter.anti_windup),
                fault_durations: Some(self.scenario.fault_durations.clone()),
                pll_locked: Some(self.scenario.pll_locked),
            },
            portrait: PortraitSection {
                model: Some(self.portrait.model),
                x_range: Some(self.portrait.x_range),
                y_range: Some(self.portrait.y_range),
                n: Some(self.portrait.n),
                sampling: Some(self.portrait.sampling),
                disk_center: self.portrait.disk_center,
                disk_radius: Some(self.portrait.disk_radius),
                seed: Some(self.portrait.seed),
                horizon: Some(self.portrait.basin.horizon),
                dt: Some(self.portrait.basin.dt),
                tol: Some(self.portrait.basin.tol),
                diverge_norm: Some(self.portrait.basin.diverge_norm),
                damping: Some(self.portrait.damping),
            },
            sweep: SweepSection {
                bandwidths_hz: Some(self.sweep.bandwidths_hz.clone()),
                dips: Some(self.sweep.dips.clone()),
                phi_f: Some(self.sweep.phi_f),
            },
            oracle: OracleSection {
                t_lo: Some(self.oracle.t_lo),
                t_hi: Some(self.oracle.t_hi),
                tol: Some(self.oracle.tol),
                dt: Some(self.oracle.dt),
                settle: Some(self.oracle.settle),
                probe_times: Some(self.probe_times.clone()),
            },
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("config snapshot serializes")
    }

    /// Overrides the scenario step. The oracle keeps its own step.
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.scenario.dt = dt;
        self
    }

    /// Reloads the snapshot with `edit` applied, so derived defaults follow
    /// the change.
    pub fn edited(&self, edit: impl FnOnce(&mut ConfigFile)) -> Result<RunConfig> {
        let mut file = self.snapshot();
        edit(&mut file);
        let cfg = resolve(&file, &self.name)?;
        cfg.validate().into_result()?;
        Ok(cfg)
    }
}
