//! Minimum common port power reaching a target cell-averaged rate.

use crate::channel::NeighborPower;
use crate::ergodic::{cell_average_rate, McConfig, Scenario};
use crate::error::{invalid, Error, Result};

/// Bisection bracket and stopping rule, on a log scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSearch {
    pub s_min: f64,
    pub s_max: f64,
    /// Stop once `hi / lo - 1` falls below this.
    pub rel_tol: f64,
    /// Interior points checked for monotonicity before bisecting.
    pub monotonicity_checks: usize,
}

impl Default for PowerSearch {
    fn default() -> Self {
        PowerSearch { s_min: 1e-30, s_max: 1e60, rel_tol: 1e-5, monotonicity_checks: 5 }
    }
}

impl PowerSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.s_max.is_finite()) {
            return Err(invalid("power_search", "need 0 < s_min < s_max < inf"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(invalid("rel_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Smallest common per-port power `S` with `cell_average_rate >= c_t`.
///
/// Every evaluation reuses the seed in `mc`, so the estimated rate is a
/// deterministic, non-decreasing function of `S` and bisection on `log S`
/// is exact up to `rel_tol`. Neighbouring cells transmit the same `S`. The
/// rate is checked to be non-decreasing on a few interior points of the
/// bracket first, since interference grows with `S` too.
pub fn min_power_for_target(sc: &Scenario, c_t: f64, mc: &McConfig, search: &PowerSearch) -> Result<f64> {
    if !(c_t > 0.0 && c_t.is_finite()) {
        return Err(invalid("target_rate", "must be positive"));
    }
    search.validate()?;
    let mut base = sc.clone();
    base.interference.neighbor_power = NeighborPower::MatchCentral;
    let rate = |s: f64| -> Result<f64> { Ok(cell_average_rate(&base.with_common_power(s)?, mc)?.mean) };

    let (mut lo, mut hi) = (search.s_min, search.s_max);
    let rate_hi = rate(hi)?;
    if rate_hi < c_t {
        return Err(Error::BracketFailure { target: c_t, lo, hi, rate_hi });
    }
    let rate_lo = rate(lo)?;
    if rate_lo >= c_t {
        return Ok(lo);
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut prev = rate_lo;
    for k in 1..=search.monotonicity_checks {
        let s = (llo + (lhi - llo) * k as f64 / (search.monotonicity_checks + 1) as f64).exp();
        let r = rate(s)?;
        if r < prev {
            return Err(Error::NonMonotone { at: s });
        }
        prev = r;
    }
    if rate_hi < prev {
        return Err(Error::NonMonotone { at: hi });
    }
    while hi / lo - 1.0 > search.rel_tol {
        let mid = (lo * hi).sqrt();
        if rate(mid)? >= c_t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
