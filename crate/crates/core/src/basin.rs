//! Phase-portrait sampling shared by the PCL and PLL sweeps.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BasinClass {
    ConvergedToTarget,
    ConvergedElsewhere,
    Diverged,
    Undecided,
}

impl BasinClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            BasinClass::ConvergedToTarget => "CONVERGED_TO_TARGET",
            BasinClass::ConvergedElsewhere => "CONVERGED_ELSEWHERE",
            BasinClass::Diverged => "DIVERGED",
            BasinClass::Undecided => "UNDECIDED",
        }
    }
}

impl std::fmt::Display for BasinClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinSettings {
    /// Simulated time per initial point (s).
    pub horizon: f64,
    pub dt: f64,
    /// Distance to the target and residual derivative norm accepted as converged.
    pub tol: f64,
    /// State norm beyond which a trajectory is declared divergent.
    pub diverge_norm: f64,
}

impl Default for BasinSettings {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            dt: 1e-3,
            tol: 1e-3,
            diverge_norm: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BasinPoint {
    pub initial: [f64; 2],
    pub class: BasinClass,
    pub final_state: [f64; 2],
    /// Full 2π slips (PLL portraits only).
    pub slips: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BasinMap {
    pub points: Vec<BasinPoint>,
}

impl BasinMap {
    pub fn count(&self, class: BasinClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    pub fn fraction(&self, class: BasinClass) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.count(class) as f64 / self.points.len() as f64
    }
}

/// Row-major `n × n` lattice over `[x_lo, x_hi] × [y_lo, y_hi]`, endpoints included.
pub fn lattice(x: (f64, f64), y: (f64, f64), n: usize) -> Vec<[f64; 2]> {
    let at = |(lo, hi): (f64, f64), i: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [at(x, i), at(y, j)]))
        .collect()
}

/// Points of an `n × n` lattice over the bounding square that fall inside
/// the closed disk.
pub fn disk(center: [f64; 2], radius: f64, n: usize) -> Vec<[f64; 2]> {
    lattice(
        (center[0] - radius, center[0] + radius),
        (center[1] - radius, center[1] + radius),
        n,
    )
    .into_iter()
    .filter(|p| (p[0] - center[0]).hypot(p[1] - center[1]) <= radius * (1.0 + 1e-12))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_covers_corners() {
        let pts = lattice((-1.5, 1.5), (-1.5, 1.5), 41);
        assert_eq!(pts.len(), 1681);
        assert_eq!(pts[0], [-1.5, -1.5]);
        assert_eq!(pts[1680], [1.5, 1.5]);
        assert!(pts.contains(&[0.0, 0.0]));
    }

    #[test]
    fn disk_filters() {
        let pts = disk([0.5, 0.0], 1.1, 21);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| (p[0] - 0.5).hypot(p[1]) <= 1.1 + 1e-9));
        assert!(pts.contains(&[0.5, 0.0]));
    }

    #[test]
    fn fractions() {
        let mk = |class| BasinPoint { initial: [0.0; 2], class, final_state: [0.0; 2], slips: 0 };
        let map = BasinMap {
            points: vec![mk(BasinClass::ConvergedToTarget), mk(BasinClass::Diverged)],
        };
        assert_eq!(map.fraction(BasinClass::ConvergedToTarget), 0.5);
        assert_eq!(BasinMap::default().fraction(BasinClass::Diverged), 0.0);
    }
}
