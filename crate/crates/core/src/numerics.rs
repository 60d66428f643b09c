//! Shared numerical kernels: fixed-step RK4 with snapped events, bisection
//! and adaptive Gauss-Kronrod quadrature.
//!
//! Integration is deliberately fixed-step so that fault events land exactly
//! on grid points and repeated runs are bit-identical. The quadrature routine
//! is only used to cross-check closed-form areas.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record one sample every `record_every` steps.
    pub record_every: usize,
    /// Integration stops once the state's Euclidean norm exceeds this.
    pub blowup_norm: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_every: 1,
            blowup_norm: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt > 0 (got {})", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            bad.push(format!("t_end >= 0 (got {})", self.t_end));
        }
        if self.record_every == 0 {
            bad.push("record_every >= 1".to_string());
        }
        if !(self.blowup_norm > 0.0) {
            bad.push(format!("blowup_norm > 0 (got {})", self.blowup_norm));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Number of steps covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Index of the grid step nearest to `t`.
pub fn snap_step(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// A state map applied once, at the grid time nearest to `time`.
pub struct Event<'a, const N: usize> {
    pub time: f64,
    pub map: Box<dyn FnMut(&mut [f64; N]) + 'a>,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(time: f64, map: impl FnMut(&mut [f64; N]) + 'a) -> Self {
        Self {
            time,
            map: Box::new(map),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct SnappedEvent {
    pub requested: f64,
    pub snapped: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowUp {
    pub t: f64,
    pub last_good_t: f64,
}

#[derive(Clone, Debug)]
pub struct Integration<const N: usize> {
    pub t: Vec<f64>,
    pub x: Vec<[f64; N]>,
    pub events: Vec<SnappedEvent>,
    pub blowup: Option<BlowUp>,
}

impl<const N: usize> Integration<N> {
    pub fn last(&self) -> Option<(f64, [f64; N])> {
        Some((*self.t.last()?, *self.x.last()?))
    }
}

pub fn norm<const N: usize>(x: &[f64; N]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

/// One classical fourth-order Runge-Kutta step.
#[inline]
pub fn rk4_step<const N: usize, F>(rhs: &mut F, t: f64, x: &[f64; N], dt: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let half = 0.5 * dt;
    let k1 = rhs(t, x);
    let k2 = rhs(t + half, &axpy(x, half, &k1));
    let k3 = rhs(t + half, &axpy(x, half, &k2));
    let k4 = rhs(t + dt, &axpy(x, dt, &k3));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-step RK4 over `[0, cfg.t_end]`.
///
/// Events must be sorted by time. Each event map is applied to the state at
/// the grid time nearest its requested time, before integration continues
/// from that point. On blow-up the partial trajectory is returned with
/// `blowup` set.
pub fn rk4_integrate<const N: usize, F>(
    rhs: F,
    x0: [f64; N],
    cfg: &IntegratorConfig,
    events: &mut [Event<'_, N>],
) -> Result<Integration<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    rk4_integrate_projected(rhs, |_| {}, x0, cfg, events)
}

/// As [`rk4_integrate`], with `project` applied to the state after every
/// step (before events), e.g. to enforce a clamp.
pub fn rk4_integrate_projected<const N: usize, F, P>(
    mut rhs: F,
    mut project: P,
    x0: [f64; N],
    cfg: &IntegratorConfig,
    events: &mut [Event<'_, N>],
) -> Result<Integration<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    P: FnMut(&mut [f64; N]),
{
    cfg.validate()?;
    if events.windows(2).any(|w| w[0].time > w[1].time) {
        return Err(Error::Config("events must be sorted by time".into()));
    }
    let n = cfg.steps();
    let mut out = Integration {
        t: Vec::with_capacity(n / cfg.record_every + 2),
        x: Vec::with_capacity(n / cfg.record_every + 2),
        events: Vec::with_capacity(events.len()),
        blowup: None,
    };

    let event_steps: Vec<usize> = events.iter().map(|e| snap_step(e.time, cfg.dt)).collect();
    let mut next_event = 0;
    let mut x = x0;

    let mut apply_events = |k: usize, x: &mut [f64; N], out: &mut Integration<N>| {
        while next_event < events.len() && event_steps[next_event] == k {
            let ev = &mut events[next_event];
            (ev.map)(x);
            out.events.push(SnappedEvent {
                requested: ev.time,
                snapped: k as f64 * cfg.dt,
            });
            next_event += 1;
        }
    };

    apply_events(0, &mut x, &mut out);
    out.t.push(0.0);
    out.x.push(x);

    for k in 0..n {
        let t = k as f64 * cfg.dt;
        let mut next = rk4_step(&mut rhs, t, &x, cfg.dt);
        project(&mut next);
        let t_next = (k + 1) as f64 * cfg.dt;
        if next.iter().any(|v| !v.is_finite()) || norm(&next) > cfg.blowup_norm {
            out.blowup = Some(BlowUp {
                t: t_next,
                last_good_t: t,
            });
            if out.t.last() != Some(&t) {
                out.t.push(t);
                out.x.push(x);
            }
            return Ok(out);
        }
        x = next;
        apply_events(k + 1, &mut x, &mut out);
        if (k + 1) % cfg.record_every == 0 || k + 1 == n {
            out.t.push(t_next);
            out.x.push(x);
        }
    }
    Ok(out)
}

/// Damped fixed-point iteration `x ← x + λ·(g(x) − x)` seeded at `seed`.
///
/// Starts with `λ = 1` and halves it whenever the residual grows. Converges
/// once `|g(x) − x| ≤ tol·max(1, |x|)`; fails with
/// [`Error::AlgebraicLoopDivergence`] after `max_iter` iterations.
pub fn damped_fixed_point<const N: usize, G>(mut g: G, seed: [f64; N], tol: f64, max_iter: usize) -> Result<[f64; N]>
where
    G: FnMut(&[f64; N]) -> [f64; N],
{
    let diff = |a: &[f64; N], b: &[f64; N]| {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = a[i] - b[i];
        }
        d
    };
    let mut x = seed;
    let mut step = diff(&g(&x), &x);
    let mut res = norm(&step);
    let mut lambda = 1.0;
    for _ in 0..max_iter {
        if !res.is_finite() {
            break;
        }
        if res <= tol * norm(&x).max(1.0) {
            return Ok(x);
        }
        let trial = axpy(&x, lambda, &step);
        let trial_step = diff(&g(&trial), &trial);
        let trial_res = norm(&trial_step);
        if trial_res.is_finite() && (trial_res < res || lambda < 1.0 / 64.0) {
            x = trial;
            step = trial_step;
            res = trial_res;
            if lambda < 1.0 {
                lambda = (2.0 * lambda).min(1.0);
            }
        } else {
            lambda *= 0.5;
        }
    }
    Err(Error::AlgebraicLoopDivergence {
        iterations: max_iter,
        residual: res,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
}

/// Bisection on a sign change; returns the midpoint of a bracket no wider
/// than `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect_counted(f, lo, hi, tol).map(|b| b.root)
}

pub fn bisect_counted<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<Bisection> {
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(Bisection { root: lo, iterations: 0, width: 0.0 });
    }
    if f_hi == 0.0 {
        return Ok(Bisection { root: hi, iterations: 0, width: 0.0 });
    }
    if !(f_lo * f_hi < 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidBracket { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket has hit floating-point resolution
            break;
        }
        let fm = f(mid);
        iterations += 1;
        if fm == 0.0 {
            return Ok(Bisection { root: mid, iterations, width: 0.0 });
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bisection {
        root: 0.5 * (lo + hi),
        iterations,
        width: hi - lo,
    })
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature with recursive bisection of
/// subintervals until the per-interval error estimate drops below its
/// share of `tol`.
pub fn adaptive_quadrature<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&mut f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(dt: f64) -> f64 {
        let cfg = IntegratorConfig::new(dt, 1.0);
        let run = rk4_integrate(|_, x: &[f64; 1]| [-x[0]], [1.0], &cfg, &mut []).unwrap();
        run.last().unwrap().1[0]
    }

    #[test]
    fn zero_field_is_constant() {
        let cfg = IntegratorConfig::new(0.01, 1.0);
        let run = rk4_integrate(|_, _: &[f64; 2]| [0.0, 0.0], [0.3, -2.0], &cfg, &mut []).unwrap();
        assert!(run.x.iter().all(|x| *x == [0.3, -2.0]));
        assert_eq!(run.t.len(), 101);
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        assert!((decay(1e-3) - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn events_snap_to_grid() {
        let cfg = IntegratorConfig::new(0.1, 1.0);
        let mut events = [Event::new(0.33, |x: &mut [f64; 1]| x[0] += 1.0)];
        let run = rk4_integrate(|_, _: &[f64; 1]| [0.0], [0.0], &cfg, &mut events).unwrap();
        assert_eq!(run.events.len(), 1);
        assert!((run.events[0].snapped - 0.3).abs() < 1e-15);
        assert_eq!(run.x[3][0], 1.0);
        assert_eq!(run.x[2][0], 0.0);
    }

    #[test]
    fn unsorted_events_rejected() {
        let cfg = IntegratorConfig::new(0.1, 1.0);
        let mut events = [
            Event::new(0.5, |_: &mut [f64; 1]| {}),
            Event::new(0.2, |_: &mut [f64; 1]| {}),
        ];
        assert!(rk4_integrate(|_, _: &[f64; 1]| [0.0], [0.0], &cfg, &mut events).is_err());
    }

    #[test]
    fn blowup_stops_with_partial_trajectory() {
        let mut cfg = IntegratorConfig::new(0.01, 10.0);
        cfg.blowup_norm = 100.0;
        let run = rk4_integrate(|_, x: &[f64; 1]| [x[0] * 5.0], [1.0], &cfg, &mut []).unwrap();
        let b = run.blowup.expect("should blow up");
        assert!(b.t < 1.0 && b.t > 0.8);
        assert!(run.x.last().unwrap()[0] <= 100.0);
    }

    #[test]
    fn record_stride() {
        let mut cfg = IntegratorConfig::new(0.01, 1.0);
        cfg.record_every = 10;
        let run = rk4_integrate(|_, _: &[f64; 1]| [1.0], [0.0], &cfg, &mut []).unwrap();
        assert_eq!(run.t.len(), 11);
        assert!((run.x[10][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_linear() {
        let r = bisect(|x| x - 0.5, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bisect_equilibrium_angle() {
        let r = bisect(|d| d.sin() - 0.25, 0.0, std::f64::consts::FRAC_PI_2, 1e-12).unwrap();
        assert!((r - 0.2527).abs() < 1e-4);
        assert!((r - 0.25f64.asin()).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        match bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-6) {
            Err(Error::InvalidBracket { f_lo, f_hi, .. }) => {
                assert_eq!(f_lo, 2.0);
                assert_eq!(f_hi, 2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bisect_iteration_bound() {
        for &(lo, hi, tol) in &[(0.0, 1.0, 1e-10), (-3.0, 7.0, 1e-6), (0.1, 0.2, 1e-3)] {
            let root = 0.5 * (lo + hi) + 0.123 * (hi - lo) / 3.0;
            let b = bisect_counted(|x| x - root, lo, hi, tol).unwrap();
            let bound = ((hi - lo) / tol).log2().ceil() as usize;
            assert!(b.iterations <= bound, "{} > {}", b.iterations, bound);
            assert!(b.width <= tol);
        }
    }

    #[test]
    fn fixed_point_contraction() {
        let x = damped_fixed_point(|x: &[f64; 1]| [x[0].cos()], [0.0], 1e-14, 200).unwrap();
        assert!((x[0] - x[0].cos()).abs() < 1e-13);
    }

    #[test]
    fn fixed_point_expanding_map_recovers_with_damping() {
        // g(x) = 3 - 2x has fixed point 1 but |g'| = 2; damping λ = 1/2 fixes it.
        let x = damped_fixed_point(|x: &[f64; 1]| [3.0 - 2.0 * x[0]], [0.0], 1e-12, 100).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn fixed_point_divergence_reported() {
        let r = damped_fixed_point(|x: &[f64; 1]| [x[0] + 1.0], [0.0], 1e-12, 50);
        assert!(matches!(r, Err(Error::AlgebraicLoopDivergence { .. })));
    }

    #[test]
    fn quadrature_polynomial_and_trig() {
        let v = adaptive_quadrature(|x| x * x, 0.0, 3.0, 1e-13);
        assert!((v - 9.0).abs() < 1e-12);
        let v = adaptive_quadrature(f64::sin, 0.0, std::f64::consts::PI, 1e-13);
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(adaptive_quadrature(f64::sin, 1.0, 1.0, 1e-13), 0.0);
    }
}
