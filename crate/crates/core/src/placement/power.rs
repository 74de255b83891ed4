//! Per-port power allocation under a total-power constraint.

use rand::Rng;

use super::stochastic::{draw_from, robbins_monro, PowerStep, StochasticConfig};
use super::{PlacementRun, StepSchedule};
use crate::capacity::PowerAllocation;
use crate::ergodic::Scenario;
use crate::error::{invalid, Result};

/// Euclidean projection of `v` onto `{s >= 0, sum s = total}`
/// (sort-and-threshold).
pub fn project_onto_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // remove the rounding residue from the largest entry
    let residue = total - out.iter().sum::<f64>();
    if let Some(i) = (0..out.len()).max_by(|a, b| out[*a].total_cmp(&out[*b])) {
        out[i] = (out[i] + residue).max(0.0);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerOptConfig {
    /// Iteration controls; `placement.schedule` drives the port positions
    /// when `joint` is set.
    pub placement: StochasticConfig,
    pub power_schedule: StepSchedule,
    /// Total power `sum_n S_n` to distribute.
    pub total: f64,
    pub joint: bool,
}

/// Projected stochastic gradient on the port powers: each step moves the
/// powers along `dC/dS_n` at a fresh user draw and projects back onto the
/// simplex of allocations summing to `total`. With `joint` set the port
/// positions take a step on the same draw.
///
/// The run starts from an equal split of `total`.
pub fn optimize_power_allocation<R: Rng + ?Sized>(
    sc: &Scenario,
    cfg: &PowerOptConfig,
    rng: &mut R,
) -> Result<PlacementRun> {
    if !(cfg.total > 0.0 && cfg.total.is_finite()) {
        return Err(invalid("total", "total power must be positive"));
    }
    let n = sc.layout.len();
    let mut start = sc.clone();
    start.powers = PowerAllocation::new(vec![cfg.total / n as f64; n], Some(cfg.total))?;
    let step = PowerStep { schedule: cfg.power_schedule, total: cfg.total };
    let include_fading = cfg.placement.include_fading;
    robbins_monro(&start, &cfg.placement, cfg.joint, Some(&step), &mut |_| {
        draw_from(&start, include_fading, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::CsiMode;
    use crate::channel::{ChannelParams, InterferenceParams, NeighborPower};
    use crate::ergodic::calibrate_edge_power;
    use crate::geometry::{PortLayout, Region};
    use crate::rng::sample_stream;
    use proptest::prelude::*;

    /// Projection by exhaustive search over active sets (small n only).
    fn brute_projection(v: &[f64], total: f64) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let shift = (active.iter().map(|i| v[*i]).sum::<f64>() - total) / active.len() as f64;
            let mut x = vec![0.0; n];
            let mut ok = true;
            for i in &active {
                x[*i] = v[*i] - shift;
                if x[*i] < -1e-12 {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn projection_matches_brute_force(v in proptest::collection::vec(-5.0f64..5.0, 1..7), total in 0.1f64..10.0) {
            let p = project_onto_simplex(&v, total);
            let b = brute_projection(&v, total);
            prop_assert!((p.iter().sum::<f64>() - total).abs() < 1e-9 * total);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            for (x, y) in p.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(0.0f64..5.0, 1..8)) {
            let total: f64 = v.iter().sum::<f64>().max(1e-3);
            let p = project_onto_simplex(&v, total);
            let q = project_onto_simplex(&p, total);
            for (x, y) in p.iter().zip(&q) {
                prop_assert!((x - y).abs() < 1e-12 * total.max(1.0));
            }
        }
    }

    fn ring_scenario(n_ring: usize, center: bool, gamma: f64) -> (Scenario, f64) {
        let region = Region::hexagon_with_apothem(1000.0).unwrap();
        let layout = PortLayout::ring(region, n_ring, 500.0, 0.0, center).unwrap();
        let params = ChannelParams { alpha: 4.0, beta: 1.0, sigma_sh_db: 8.0, r0: 1.0, sigma_n_sq: 1.0 };
        let s = calibrate_edge_power(1000.0, &params, 10.0).unwrap();
        let mut sc = Scenario::simple(layout, s, CsiMode::CsirOnly, params).unwrap();
        sc.interference = InterferenceParams::shared(gamma, NeighborPower::MatchCentral);
        let total = s * sc.layout.len() as f64;
        (sc, total)
    }

    #[test]
    fn single_port_keeps_all_power() {
        let region = Region::hexagon(100.0).unwrap();
        let layout = PortLayout::new(vec![crate::geometry::Point::new(10.0, 0.0)], region).unwrap();
        let params = ChannelParams::default();
        let sc = Scenario::simple(layout, 5.0, CsiMode::Csit, params).unwrap();
        let cfg = PowerOptConfig {
            placement: StochasticConfig::new(StepSchedule::harmonic(100.0).unwrap(), 200),
            power_schedule: StepSchedule::harmonic(100.0).unwrap(),
            total: 5.0,
            joint: false,
        };
        let run = optimize_power_allocation(&sc, &cfg, &mut sample_stream(1, 0)).unwrap();
        for snap in &run.trajectory {
            assert!((snap.powers.as_ref().unwrap()[0] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_ring_splits_power_equally() {
        let (sc, total) = ring_scenario(4, false, 0.0);
        let s = total / 4.0;
        let mut placement = StochasticConfig::new(StepSchedule::harmonic(0.0).unwrap(), 40_000);
        placement.snapshot_stride = 40_000;
        let cfg = PowerOptConfig {
            placement,
            power_schedule: StepSchedule::new(0.5 * s * s, 1.0, 100.0).unwrap(),
            total,
            joint: false,
        };
        let run = optimize_power_allocation(&sc, &cfg, &mut sample_stream(2, 0)).unwrap();
        let p = run.tail_average_powers.per_port();
        assert!((p.iter().sum::<f64>() - total).abs() < 1e-9 * total);
        for x in p {
            assert!((x / s - 1.0).abs() < 0.05, "{p:?}");
        }
    }
}
