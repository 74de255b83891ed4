//! Port placement and power allocation.
//!
//! Two placement criteria are offered: the geometric one, minimizing the
//! expected path loss to the nearest port ([`lloyd_placement`]), and the
//! direct one, a projected Robbins-Monro ascent on the cell-averaged
//! capacity ([`stochastic_update_placement`]), optionally coupled with the
//! interference from replicated neighbouring cells or with per-port power
//! allocation under a total-power constraint.

mod gradient;
mod lloyd;
mod power;
mod stochastic;
mod target;

pub use gradient::{capacity_gradient, CapacityGradient};
pub use lloyd::{lloyd_multistart, lloyd_placement, nearest_power_moment, LloydConfig, LloydResult, Multistart};
pub use power::{optimize_power_allocation, project_onto_simplex, PowerOptConfig};
pub use stochastic::{interference_aware_placement, stochastic_update_placement, StochasticConfig};
pub use target::{min_power_for_target, PowerSearch};

use crate::capacity::PowerAllocation;
use crate::ergodic::McEstimate;
use crate::error::{invalid, Result};
use crate::geometry::{Point, PortLayout};

/// Step-size sequence `sigma^t = a / (t + t0)^p`.
///
/// For `p` in `(0.5, 1]` the sequence is square-summable but not summable,
/// which is what the Robbins-Monro convergence argument needs. The offset
/// `t0` tempers the first steps without changing the tail behaviour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub a: f64,
    pub p: f64,
    pub t0: f64,
}

impl StepSchedule {
    /// `a / t`.
    pub fn harmonic(a: f64) -> Result<Self> {
        StepSchedule::new(a, 1.0, 0.0)
    }

    /// `a = 8 R^2 / alpha^2`, `t0 = 100`: the curvature of the averaged
    /// capacity in the port positions scales like `alpha^2 / R^2`, so this
    /// keeps the early steps at a few percent of the cell size for any
    /// path-loss exponent.
    pub fn scaled_default(cell_radius: f64, alpha: f64) -> Result<Self> {
        StepSchedule::new(8.0 * cell_radius * cell_radius / (alpha * alpha), 1.0, 100.0)
    }

    pub fn new(a: f64, p: f64, t0: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("step scale must be non-negative, got {a}")));
        }
        if !(p > 0.5 && p <= 1.0) {
            return Err(invalid("p", format!("exponent must lie in (0.5, 1], got {p}")));
        }
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(invalid("t0", format!("offset must be non-negative, got {t0}")));
        }
        Ok(StepSchedule { a, p, t0 })
    }

    /// Step at iteration `t`, counted from 1.
    pub fn step(&self, t: usize) -> f64 {
        self.a / (t as f64 + self.t0).powf(self.p)
    }

    /// `sum (sigma^t)^2 < inf`.
    pub fn is_square_summable(&self) -> bool {
        self.p > 0.5
    }

    /// `sum sigma^t = inf` (trivially false for `a = 0`).
    pub fn is_divergent(&self) -> bool {
        self.a > 0.0 && self.p <= 1.0
    }
}

/// What a placement run optimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizeTarget {
    MaxRateGivenPower,
    /// Smallest common port power reaching the given rate.
    MinPowerGivenRate(f64),
}

impl OptimizeTarget {
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizeTarget::MinPowerGivenRate(c) if !(*c > 0.0 && c.is_finite()) => {
                Err(invalid("target_rate", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// One recorded state of an iterative optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub ports: Vec<Point>,
    /// Per-port powers when they are optimized as well.
    pub powers: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct PlacementRun {
    /// Snapshots at the configured stride; the first is the initial state
    /// and the last the final one.
    pub trajectory: Vec<Snapshot>,
    pub iterations: usize,
    /// Iteration at which the windowed mean displacement first fell below
    /// the tolerance.
    pub converged_at: Option<usize>,
    pub final_layout: PortLayout,
    /// Average of the iterates over the tail of the run.
    pub tail_average: PortLayout,
    pub final_powers: PowerAllocation,
    pub tail_average_powers: PowerAllocation,
    /// Mean per-iteration port displacement over the last window.
    pub final_mean_displacement: f64,
    pub objective: Option<McEstimate>,
}

impl PlacementRun {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }
}

/// Mean distance of the ports from the centroid of their region.
pub fn mean_radius(layout: &PortLayout) -> f64 {
    let r = layout.radii();
    r.iter().sum::<f64>() / r.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validity() {
        assert!(StepSchedule::new(1.0, 0.5, 0.0).is_err());
        assert!(StepSchedule::new(1.0, 1.1, 0.0).is_err());
        assert!(StepSchedule::new(-1.0, 1.0, 0.0).is_err());
        for p in [0.51, 0.75, 1.0] {
            let s = StepSchedule::new(2.0, p, 10.0).unwrap();
            assert!(s.is_square_summable() && s.is_divergent());
        }
        let s = StepSchedule::harmonic(3.0).unwrap();
        assert_eq!(s.step(1), 3.0);
        assert_eq!(s.step(3), 1.0);
        assert!(!StepSchedule::harmonic(0.0).unwrap().is_divergent());
    }

    #[test]
    fn schedule_partial_sums_behave() {
        // partial sums of sigma^t keep growing while those of its square settle
        let s = StepSchedule::new(1.0, 0.75, 0.0).unwrap();
        let sum = |n: usize| (1..=n).map(|t| s.step(t)).sum::<f64>();
        let sq = |n: usize| (1..=n).map(|t| s.step(t).powi(2)).sum::<f64>();
        assert!(sum(200_000) - sum(100_000) > 10.0);
        assert!(sq(200_000) - sq(100_000) < 1e-2);
    }

    #[test]
    fn target_validation() {
        assert!(OptimizeTarget::MinPowerGivenRate(0.0).validate().is_err());
        assert!(OptimizeTarget::MinPowerGivenRate(2.0).validate().is_ok());
        assert!(OptimizeTarget::MaxRateGivenPower.validate().is_ok());
    }
}
