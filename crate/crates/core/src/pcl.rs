//! Power-control-loop dominant dynamics with the PLL held steady.
//!
//! The converter current is assumed to track its reference instantly, so the
//! only states are the two PI integrators of the PQ controller. The angle
//! `theta_0` between the point-of-connection voltage and the Thevenin source
//! is frozen at its pre-disturbance value.

use rayon::prelude::*;
use serde::Serialize;

use crate::basin::{BasinClass, BasinMap, BasinPoint, BasinSettings};
use crate::error::Result;
use crate::numerics::{bisect, damped_fixed_point, norm, rk4_step};
use crate::params::{ControllerParams, GridParams};

const LOOP_TOL: f64 = 1e-12;
const LOOP_MAX_ITER: usize = 100;

/// PI integrator states of the PQ controller (pu current).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PclState {
    pub x_d: f64,
    pub x_q: f64,
}

impl PclState {
    pub fn new(x_d: f64, x_q: f64) -> Self {
        Self { x_d, x_q }
    }

    /// State whose integrators alone produce the currents `(i_cd, i_cq)`.
    pub fn from_currents(i_cd: f64, i_cq: f64) -> Self {
        Self { x_d: i_cd, x_q: -i_cq }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x_d, self.x_q]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PclOutputs {
    pub i_cd: f64,
    pub i_cq: f64,
    pub p: f64,
    pub q: f64,
}

/// Converter active and reactive power at the point of connection for
/// currents in the PLL frame, with the source at angle `-theta_0`.
pub fn pq_from_currents(i_cd: f64, i_cq: f64, theta_0: f64, grid: &GridParams) -> (f64, f64) {
    let (s, c) = theta_0.sin_cos();
    let us_c = grid.u_s * c;
    let us_s = grid.u_s * s;
    let p = us_c * i_cd - us_s * i_cq;
    let q = grid.omega_s * grid.l_sigma * (i_cd * i_cd + i_cq * i_cq) - (us_c * i_cq + us_s * i_cd);
    (p, q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PclModel {
    pub grid: GridParams,
    pub p_ref: f64,
    pub q_ref: f64,
    pub theta_0: f64,
    pub kp: f64,
    pub ki: f64,
}

impl PclModel {
    pub fn new(grid: GridParams, ctrl: &ControllerParams, p_ref: f64, q_ref: f64, theta_0: f64) -> Self {
        Self {
            grid,
            p_ref,
            q_ref,
            theta_0,
            kp: ctrl.pq_kp,
            ki: ctrl.pq_ki,
        }
    }

    /// Resolves the algebraic loop between the PI outputs and the powers
    /// they produce.
    pub fn outputs(&self, s: &PclState) -> Result<PclOutputs> {
        let pi = |i: &[f64; 2]| {
            let (p, q) = pq_from_currents(i[0], i[1], self.theta_0, &self.grid);
            [
                s.x_d + self.kp * (self.p_ref - p),
                -s.x_q - self.kp * (self.q_ref - q),
            ]
        };
        let i = if self.kp == 0.0 {
            [s.x_d, -s.x_q]
        } else {
            damped_fixed_point(pi, [s.x_d, -s.x_q], LOOP_TOL, LOOP_MAX_ITER)?
        };
        let (p, q) = pq_from_currents(i[0], i[1], self.theta_0, &self.grid);
        Ok(PclOutputs {
            i_cd: i[0],
            i_cq: i[1],
            p,
            q,
        })
    }

    /// Integrator state at which the controller outputs exactly the currents
    /// `(i_cd, i_cq)`. Portraits are drawn in the current plane, so their
    /// initial points go through this map.
    pub fn state_from_currents(&self, i_cd: f64, i_cq: f64) -> PclState {
        let (p, q) = pq_from_currents(i_cd, i_cq, self.theta_0, &self.grid);
        PclState::new(
            i_cd - self.kp * (self.p_ref - p),
            -i_cq - self.kp * (self.q_ref - q),
        )
    }

    pub fn rhs(&self, s: &PclState) -> Result<[f64; 2]> {
        let o = self.outputs(s)?;
        Ok([self.ki * (self.p_ref - o.p), self.ki * (self.q_ref - o.q)])
    }

    /// Integrates from `initial` and classifies the end point against `target`.
    pub fn classify(&self, initial: PclState, target: &PclState, settings: &BasinSettings) -> BasinPoint {
        self.simulate(initial, target, settings, None)
    }

    /// As [`classify`](Self::classify), optionally recording every
    /// `record_every`-th step as `(t, x_d, x_q, i_cd, i_cq)`.
    pub fn simulate(
        &self,
        initial: PclState,
        target: &PclState,
        settings: &BasinSettings,
        mut record: Option<(&mut Vec<[f64; 5]>, usize)>,
    ) -> BasinPoint {
        let mut x = initial.as_array();
        let steps = (settings.horizon / settings.dt).round() as usize;
        let target = target.as_array();
        let done = |class, x: [f64; 2]| BasinPoint {
            initial: initial.as_array(),
            class,
            final_state: x,
            slips: 0,
        };
        // an algebraic-loop failure surfaces as NaN and is caught below
        let mut rhs = |_t: f64, x: &[f64; 2]| {
            self.rhs(&PclState::new(x[0], x[1])).unwrap_or([f64::NAN; 2])
        };
        for k in 0..=steps {
            if let Some((buf, every)) = record.as_mut() {
                if k % *every == 0 {
                    if let Ok(o) = self.outputs(&PclState::new(x[0], x[1])) {
                        buf.push([k as f64 * settings.dt, x[0], x[1], o.i_cd, o.i_cq]);
                    }
                }
            }
            if k == steps {
                break;
            }
            let next = rk4_step(&mut rhs, k as f64 * settings.dt, &x, settings.dt);
            if next.iter().any(|v| !v.is_finite()) || norm(&next) > settings.diverge_norm {
                return done(BasinClass::Diverged, x);
            }
            x = next;
            // settled well inside the tolerance: no need to run the full horizon
            let dist = (x[0] - target[0]).hypot(x[1] - target[1]);
            if dist < 0.1 * settings.tol && k % 64 == 0 {
                if let Ok(d) = self.rhs(&PclState::new(x[0], x[1])) {
                    if norm(&d) < 0.1 * settings.tol {
                        return done(BasinClass::ConvergedToTarget, x);
                    }
                }
            }
        }
        let residual = match self.rhs(&PclState::new(x[0], x[1])) {
            Ok(d) => norm(&d),
            Err(_) => return done(BasinClass::Diverged, x),
        };
        let dist = (x[0] - target[0]).hypot(x[1] - target[1]);
        let class = if residual < settings.tol && dist < settings.tol {
            BasinClass::ConvergedToTarget
        } else if residual < settings.tol {
            BasinClass::ConvergedElsewhere
        } else {
            BasinClass::Undecided
        };
        done(class, x)
    }
}

/// Right-hand side of the PCL model for the given setpoints.
pub fn pcl_rhs(
    state: &PclState,
    setpoints: (f64, f64),
    theta_0: f64,
    grid: &GridParams,
    ctrl: &ControllerParams,
) -> Result<[f64; 2]> {
    PclModel::new(*grid, ctrl, setpoints.0, setpoints.1, theta_0).rhs(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PclEquilibrium {
    pub i_cd: f64,
    pub i_cq: f64,
    pub theta_0: f64,
}

impl PclEquilibrium {
    pub fn state(&self) -> PclState {
        PclState::from_currents(self.i_cd, self.i_cq)
    }
}

/// All real operating points delivering `(p_ref, q_ref)` with the PLL locked
/// to the point-of-connection voltage.
///
/// Locking gives `U_s·sin θ₀ = ω_s·L_Σ·i_cd`, which turns the reactive-power
/// equation into a quadratic in `i_cq` for each `i_cd`. The remaining
/// active-power residual is a function of `i_cd` alone on four branches
/// (two signs of `cos θ₀`, two quadratic roots) and its roots are found by a
/// sign scan plus bisection. Branches on which the residual vanishes
/// identically (a continuum of zero-power points) are skipped.
pub fn pcl_equilibria(p_ref: f64, q_ref: f64, grid: &GridParams) -> Vec<PclEquilibrium> {
    const SCAN: usize = 4001;
    let x = grid.omega_s * grid.l_sigma;
    if !(x > 0.0) || !(grid.u_s > 0.0) {
        return Vec::new();
    }
    let id_max = grid.u_s / x;

    // For a given branch: (i_cq, theta_0) at i_cd, or None where undefined.
    let branch = |cos_sign: f64, root_sign: f64, i_cd: f64| -> Option<(f64, f64, f64)> {
        let s = (x * i_cd / grid.u_s).clamp(-1.0, 1.0);
        let c = cos_sign * (1.0 - s * s).max(0.0).sqrt();
        let theta = if cos_sign > 0.0 {
            s.asin()
        } else {
            std::f64::consts::PI - s.asin()
        };
        let uc = grid.u_s * c;
        let disc = uc * uc + 4.0 * x * q_ref;
        if disc < 0.0 {
            return None;
        }
        let i_cq = (uc + root_sign * disc.sqrt()) / (2.0 * x);
        let p = i_cd * (uc - x * i_cq);
        Some((p - p_ref, i_cq, theta))
    };

    let mut found: Vec<PclEquilibrium> = Vec::new();
    let mut push = |e: PclEquilibrium| {
        let dup = found.iter().any(|f| {
            (f.i_cd - e.i_cd).abs() < 1e-9
                && (f.i_cq - e.i_cq).abs() < 1e-9
                && ((f.theta_0 - e.theta_0).sin().abs() < 1e-9 && (f.theta_0 - e.theta_0).cos() > 0.0)
        });
        if !dup {
            found.push(e);
        }
    };

    for &cos_sign in &[1.0, -1.0] {
        for &root_sign in &[-1.0, 1.0] {
            let ids: Vec<f64> = (0..SCAN)
                .map(|k| -id_max + 2.0 * id_max * k as f64 / (SCAN - 1) as f64)
                .collect();
            let vals: Vec<Option<(f64, f64, f64)>> =
                ids.iter().map(|&i| branch(cos_sign, root_sign, i)).collect();
            let scale = 1.0 + p_ref.abs();
            if vals.iter().flatten().all(|v| v.0.abs() < 1e-12 * scale) {
                continue;
            }
            let mut accept = |i_cd: f64| {
                if let Some((r, i_cq, theta)) = branch(cos_sign, root_sign, i_cd) {
                    if r.abs() < 1e-9 * scale {
                        push(PclEquilibrium { i_cd, i_cq, theta_0: theta });
                    }
                }
            };
            for k in 0..SCAN {
                let Some((r, ..)) = vals[k] else { continue };
                if r == 0.0 {
                    accept(ids[k]);
                }
                if k + 1 < SCAN {
                    if let Some((r_next, ..)) = vals[k + 1] {
                        if r * r_next < 0.0 {
                            let f = |i: f64| branch(cos_sign, root_sign, i).map_or(f64::NAN, |v| v.0);
                            if let Ok(root) = bisect(f, ids[k], ids[k + 1], 1e-15) {
                                accept(root);
                            }
                        }
                    }
                }
            }
        }
    }
    found
}

/// Classifies every initial state in parallel. Output order follows `initials`.
pub fn classify_basin(
    initials: &[PclState],
    model: &PclModel,
    target: &PclState,
    settings: &BasinSettings,
) -> BasinMap {
    BasinMap {
        points: initials
            .par_iter()
            .map(|s| model.classify(*s, target, settings))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;
    use num_complex::Complex64;

    fn fig2_model(kp: f64, ki: f64) -> (PclModel, PclEquilibrium) {
        let grid = GridParams::stiff_pcc(4.0);
        let eq = pcl_equilibria(0.5, 0.0, &grid)
            .into_iter()
            .find(|e| (e.i_cd - 0.5).abs() < 0.01 && e.i_cq.abs() < 1e-9)
            .unwrap();
        let mut ctrl = SystemParams::paper_default().controller;
        ctrl.pq_kp = kp;
        ctrl.pq_ki = ki;
        (PclModel::new(grid, &ctrl, 0.5, 0.0, eq.theta_0), eq)
    }

    #[test]
    fn zero_current_gives_zero_power() {
        let g = GridParams::stiff_pcc(4.0);
        for th in [-1.0, 0.0, 0.3, 2.0] {
            assert_eq!(pq_from_currents(0.0, 0.0, th, &g), (0.0, 0.0));
        }
    }

    #[test]
    fn direct_substitution() {
        let g = GridParams::stiff_pcc(4.0);
        let (p, q) = pq_from_currents(0.5, 0.0, 0.0, &g);
        assert!((p - 0.5).abs() < 1e-15);
        assert!((q - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn matches_complex_power() {
        let g = GridParams::stiff_pcc(4.0);
        let (i_d, i_q, th): (f64, f64, f64) = (0.7, -0.2, 0.3);
        let i = Complex64::new(i_d, i_q);
        let u_s = Complex64::new(g.u_s * th.cos(), -g.u_s * th.sin());
        let u = Complex64::new(0.0, g.omega_s * g.l_sigma) * i + u_s;
        let s = u * i.conj();
        let (p, q) = pq_from_currents(i_d, i_q, th, &g);
        assert!((s.re - p).abs() < 1e-14 && (s.im - q).abs() < 1e-14);
    }

    #[test]
    fn figure_equilibrium_is_near_half_pu() {
        let grid = GridParams::stiff_pcc(4.0);
        let eqs = pcl_equilibria(0.5, 0.0, &grid);
        let e = eqs
            .iter()
            .find(|e| (e.i_cd - 0.5).abs() < 0.01 && e.i_cq.abs() < 1e-9)
            .expect("(0.5, 0) equilibrium");
        let (p, q) = pq_from_currents(e.i_cd, e.i_cq, e.theta_0, &grid);
        assert!((p - 0.5).abs() < 1e-9 && q.abs() < 1e-9);
        assert!((grid.u_s * e.theta_0.sin() - grid.l_sigma * e.i_cd).abs() < 1e-12);
    }

    #[test]
    fn no_load_equilibrium() {
        let grid = GridParams::stiff_pcc(4.0);
        let eqs = pcl_equilibria(0.0, 0.0, &grid);
        assert!(eqs
            .iter()
            .any(|e| e.i_cd.abs() < 1e-12 && e.i_cq.abs() < 1e-12 && e.theta_0.abs() < 1e-12));
    }

    #[test]
    fn weak_grid_infeasible() {
        let grid = GridParams::stiff_pcc(1.0);
        assert!(pcl_equilibria(0.6, 0.0, &grid).is_empty());
        // brute-force: no (i_cd, i_cq) on a dense lattice gets close
        let mut best = f64::INFINITY;
        let n = 801;
        for a in 0..n {
            let i_cd = -1.0 + 2.0 * a as f64 / (n - 1) as f64;
            let th = (grid.l_sigma * i_cd / grid.u_s).asin();
            for th in [th, std::f64::consts::PI - th] {
                for b in 0..n {
                    let i_cq = -4.0 + 8.0 * b as f64 / (n - 1) as f64;
                    let (p, q) = pq_from_currents(i_cd, i_cq, th, &grid);
                    best = best.min((p - 0.6).abs().max(q.abs()));
                }
            }
        }
        assert!(best > 0.05, "closest residual {best}");
    }

    #[test]
    fn rhs_vanishes_at_equilibria() {
        let grid = GridParams::stiff_pcc(4.0);
        let ctrl = SystemParams::paper_default().controller;
        for (p, q) in [(0.5, 0.0), (0.3, 0.1), (-0.4, -0.2)] {
            let eqs = pcl_equilibria(p, q, &grid);
            assert!(!eqs.is_empty());
            for e in eqs {
                let d = pcl_rhs(&e.state(), (p, q), e.theta_0, &grid, &ctrl).unwrap();
                assert!(norm(&d) < 1e-9, "{e:?} -> {d:?}");
                let (pp, qq) = pq_from_currents(e.i_cd, e.i_cq, e.theta_0, &grid);
                assert!((pp - p).abs() < 1e-9 && (qq - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_kp_closed_form() {
        let (mut m, eq) = fig2_model(0.0, 20.0);
        m.kp = 0.0;
        let s = PclState::new(0.3, 0.2);
        let o = m.outputs(&s).unwrap();
        assert_eq!((o.i_cd, o.i_cq), (0.3, -0.2));
        let (p, q) = pq_from_currents(0.3, -0.2, eq.theta_0, &m.grid);
        let d = m.rhs(&s).unwrap();
        assert_eq!(d, [20.0 * (0.5 - p), 20.0 * (0.0 - q)]);
    }

    #[test]
    fn outputs_satisfy_loop() {
        let (m, _) = fig2_model(0.1, 20.0);
        let s = PclState::new(1.2, -0.4);
        let o = m.outputs(&s).unwrap();
        assert!((o.i_cd - (s.x_d + m.kp * (m.p_ref - o.p))).abs() < 1e-11);
        assert!((o.i_cq - (-s.x_q - m.kp * (m.q_ref - o.q))).abs() < 1e-11);
    }

    #[test]
    fn vector_field_points_toward_equilibrium_nearby() {
        // Below the equilibrium active current the d integrator must rise.
        let (m, eq) = fig2_model(0.1, 20.0);
        let d = m.rhs(&PclState::new(eq.i_cd - 0.2, 0.0)).unwrap();
        assert!(d[0] > 0.0);
        let d = m.rhs(&PclState::new(eq.i_cd + 0.2, 0.0)).unwrap();
        assert!(d[0] < 0.0);
    }

    #[test]
    fn equilibrium_classified_as_target() {
        let (m, eq) = fig2_model(0.1, 20.0);
        let p = m.classify(eq.state(), &eq.state(), &BasinSettings::default());
        assert_eq!(p.class, BasinClass::ConvergedToTarget);
    }

    #[test]
    fn far_initial_state_diverges() {
        let (m, eq) = fig2_model(0.1, 20.0);
        let p = m.classify(m.state_from_currents(0.5, 5.0), &eq.state(), &BasinSettings::default());
        assert_eq!(p.class, BasinClass::Diverged);
    }

    #[test]
    fn current_map_round_trips_through_outputs() {
        let (m, _) = fig2_model(0.2, 20.0);
        let s = m.state_from_currents(0.9, -0.3);
        let o = m.outputs(&s).unwrap();
        assert!((o.i_cd - 0.9).abs() < 1e-10 && (o.i_cq + 0.3).abs() < 1e-10);
    }
}
