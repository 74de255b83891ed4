//! Projected Robbins-Monro ascent on the cell-averaged capacity.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use super::gradient::capacity_gradient;
use super::power::project_onto_simplex;
use super::{PlacementRun, Snapshot, StepSchedule};
use crate::capacity::PowerAllocation;
use crate::channel::{draw_fading, draw_shadowing, InterferenceParams, NeighborPower};
use crate::ergodic::{cell_average_rate, McConfig, Scenario};
use crate::error::{invalid, Error, Result};
use crate::geometry::{project_into_region, sample_uniform, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticConfig {
    pub schedule: StepSchedule,
    pub n_iter: usize,
    /// Record a snapshot every `snapshot_stride` iterations.
    pub snapshot_stride: usize,
    /// Use Rayleigh fading draws in the gradient instead of unit fading.
    pub include_fading: bool,
    /// Fraction of the final iterations averaged into the tail layout.
    pub tail_fraction: f64,
    /// Window for the mean-displacement convergence test.
    pub window: usize,
    /// Convergence threshold on the windowed mean displacement, relative
    /// to the region extent.
    pub tolerance: f64,
    pub stop_on_convergence: bool,
    /// When set, the tail-averaged layout is scored by Monte Carlo.
    pub evaluate: Option<McConfig>,
}

impl StochasticConfig {
    pub fn new(schedule: StepSchedule, n_iter: usize) -> Self {
        StochasticConfig {
            schedule,
            n_iter,
            snapshot_stride: 1000,
            include_fading: false,
            tail_fraction: 0.5,
            window: 5000,
            tolerance: 1e-4,
            stop_on_convergence: false,
            evaluate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(invalid("n_iter", "must be at least 1"));
        }
        if self.snapshot_stride == 0 {
            return Err(invalid("snapshot_stride", "must be at least 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(invalid("tail_fraction", "must lie in (0, 1]"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Random inputs of one iteration.
pub(crate) struct Draw {
    pub u: Point,
    pub shadowing: Vec<f64>,
    pub fading: Option<DMatrix<Complex64>>,
}

pub(crate) fn draw_from<R: Rng + ?Sized>(sc: &Scenario, include_fading: bool, rng: &mut R) -> Draw {
    let n = sc.layout.len();
    let shadowing = draw_shadowing(rng, sc.channel.sigma_sh_db, n);
    let u = sample_uniform(sc.layout.region(), rng);
    let fading = include_fading.then(|| draw_fading(rng, n, sc.n_antennas));
    Draw { u, shadowing, fading }
}

/// Power half of a joint update: step schedule and the total to preserve.
pub(crate) struct PowerStep {
    pub schedule: StepSchedule,
    pub total: f64,
}

/// Shared Robbins-Monro loop. Positions move when `move_ports` is set,
/// powers when `power` is given; both use the same user draw.
pub(crate) fn robbins_monro(
    sc: &Scenario,
    cfg: &StochasticConfig,
    move_ports: bool,
    power: Option<&PowerStep>,
    draw: &mut dyn FnMut(usize) -> Draw,
) -> Result<PlacementRun> {
    sc.validate()?;
    cfg.validate()?;
    let region = sc.layout.region().clone();
    let extent = region.extent();
    let n = sc.layout.len();
    let mut layout = sc.layout.clone();
    let mut powers = sc.powers.per_port().to_vec();

    let snapshot = |t: usize, ports: &[Point], powers: &[f64]| Snapshot {
        iteration: t,
        ports: ports.to_vec(),
        powers: power.map(|_| powers.to_vec()),
    };
    let mut trajectory = vec![snapshot(0, layout.ports(), &powers)];
    let tail_start = cfg.n_iter - ((cfg.n_iter as f64 * cfg.tail_fraction).ceil() as usize).clamp(1, cfg.n_iter);
    let mut tail_sum = vec![Point::ORIGIN; n];
    let mut tail_power_sum = vec![0.0; n];
    let mut tail_count = 0usize;
    // ring buffer of per-iteration mean displacements
    let mut recent = vec![0.0; cfg.window];
    let mut recent_sum = 0.0;
    let mut converged_at = None;
    let mut iterations = 0;

    for t in 1..=cfg.n_iter {
        iterations = t;
        let d = draw(t);
        let grad = capacity_gradient(
            d.u,
            &layout,
            &d.shadowing,
            d.fading.as_ref(),
            &powers,
            sc.n_antennas,
            sc.mode,
            &sc.channel,
            &sc.interference,
        )?;
        let mut displacement = 0.0;
        if move_ports {
            let step = cfg.schedule.step(t);
            if step > 0.0 {
                let moved: Vec<Point> = layout
                    .ports()
                    .iter()
                    .zip(&grad.positions)
                    .map(|(p, g)| project_into_region(*p + *g * step, &region))
                    .collect();
                displacement = layout.ports().iter().zip(&moved).map(|(a, b)| a.distance(*b)).sum::<f64>() / n as f64;
                layout = layout.with_ports(moved)?;
            }
        }
        if let Some(ps) = power {
            let step = ps.schedule.step(t);
            if step > 0.0 {
                let raised: Vec<f64> = powers.iter().zip(&grad.powers).map(|(s, g)| s + step * g).collect();
                powers = project_onto_simplex(&raised, ps.total);
            }
        }
        if !displacement.is_finite() || powers.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: format!("iterate diverged at step {t}"),
            });
        }

        let slot = (t - 1) % cfg.window;
        recent_sum += displacement - recent[slot];
        recent[slot] = displacement;
        if t >= cfg.window && converged_at.is_none() && move_ports && recent_sum / (cfg.window as f64) < cfg.tolerance * extent {
            converged_at = Some(t);
        }
        if t > tail_start {
            for (acc, p) in tail_sum.iter_mut().zip(layout.ports()) {
                *acc = *acc + *p;
            }
            for (acc, s) in tail_power_sum.iter_mut().zip(&powers) {
                *acc += s;
            }
            tail_count += 1;
        }
        let stop = cfg.stop_on_convergence && converged_at.is_some();
        if t % cfg.snapshot_stride == 0 || t == cfg.n_iter || stop {
            trajectory.push(snapshot(t, layout.ports(), &powers));
        }
        if stop {
            break;
        }
    }

    let tail_average = if tail_count > 0 {
        let avg = tail_sum.iter().map(|p| *p * (1.0 / tail_count as f64)).collect();
        layout.with_ports(avg)?
    } else {
        layout.clone()
    };
    let tail_powers = if tail_count > 0 {
        tail_power_sum.iter().map(|s| s / tail_count as f64).collect()
    } else {
        powers.clone()
    };
    let window = cfg.window.min(iterations);
    let final_mean_displacement = if window > 0 { recent_sum.max(0.0) / window as f64 } else { 0.0 };
    let cap = power.map(|p| p.total).or(sc.powers.sum_cap());
    let final_powers = PowerAllocation::new(powers, cap)?;
    let tail_average_powers = PowerAllocation::new(tail_powers, cap)?;

    let objective = match &cfg.evaluate {
        Some(mc) => {
            let mut scored = sc.clone();
            scored.layout = tail_average.clone();
            scored.powers = tail_average_powers.clone();
            Some(cell_average_rate(&scored, mc)?)
        }
        None => None,
    };
    Ok(PlacementRun {
        trajectory,
        iterations,
        converged_at,
        final_layout: layout,
        tail_average,
        final_powers,
        tail_average_powers,
        final_mean_displacement,
        objective,
    })
}

/// Robbins-Monro placement: per iteration draw the shadowing, then a
/// uniform user, then (optionally) the fading, and move every port along
/// the capacity gradient before projecting it back into the cell.
pub fn stochastic_update_placement<R: Rng + ?Sized>(
    sc: &Scenario,
    cfg: &StochasticConfig,
    rng: &mut R,
) -> Result<PlacementRun> {
    let include_fading = cfg.include_fading;
    robbins_monro(sc, cfg, true, None, &mut |_| draw_from(sc, include_fading, rng))
}

/// Placement with every cell using the same layout: the six neighbouring
/// copies of each port interfere with weight `gamma` and move along with it.
pub fn interference_aware_placement<R: Rng + ?Sized>(
    sc: &Scenario,
    gamma: f64,
    cfg: &StochasticConfig,
    rng: &mut R,
) -> Result<PlacementRun> {
    if !sc.layout.region().is_hexagon() {
        return Err(Error::NotHexagonal);
    }
    let mut coupled = sc.clone();
    coupled.interference = InterferenceParams::shared(gamma, NeighborPower::MatchCentral);
    coupled.interference.validate()?;
    stochastic_update_placement(&coupled, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::CsiMode;
    use crate::channel::ChannelParams;
    use crate::ergodic::calibrate_edge_power;
    use crate::geometry::{PortLayout, Region};
    use crate::placement::mean_radius;
    use crate::rng::sample_stream;

    fn scenario(n: usize, alpha: f64, sigma_sh: f64, mode: CsiMode) -> Scenario {
        let region = Region::hexagon_with_apothem(1000.0).unwrap();
        let mut rng = sample_stream(77, 0);
        let layout = PortLayout::random(region, n, &mut rng).unwrap();
        let params = ChannelParams { alpha, beta: 1.0, sigma_sh_db: sigma_sh, r0: 1.0, sigma_n_sq: 1.0 };
        let s = calibrate_edge_power(1000.0, &params, 10.0).unwrap();
        Scenario::simple(layout, s, mode, params).unwrap()
    }

    #[test]
    fn zero_step_leaves_layout_unchanged() {
        let sc = scenario(3, 4.0, 8.0, CsiMode::CsirOnly);
        let cfg = StochasticConfig::new(StepSchedule::harmonic(0.0).unwrap(), 500);
        let run = stochastic_update_placement(&sc, &cfg, &mut sample_stream(1, 0)).unwrap();
        assert_eq!(run.final_layout.ports(), sc.layout.ports());
        for (a, b) in run.tail_average.ports().iter().zip(sc.layout.ports()) {
            assert!(a.distance(*b) < 1e-9);
        }
    }

    #[test]
    fn every_snapshot_is_inside_the_cell() {
        let sc = scenario(4, 3.0, 8.0, CsiMode::Csit);
        let mut cfg = StochasticConfig::new(StepSchedule::new(1e5, 0.75, 0.0).unwrap(), 3000);
        cfg.snapshot_stride = 1;
        let run = stochastic_update_placement(&sc, &cfg, &mut sample_stream(2, 0)).unwrap();
        assert_eq!(run.trajectory.len(), 3001);
        for snap in &run.trajectory {
            for p in &snap.ports {
                assert!(sc.layout.region().contains(*p));
            }
        }
    }

    #[test]
    fn same_rng_same_run() {
        let sc = scenario(3, 4.0, 8.0, CsiMode::CsirOnly);
        let cfg = StochasticConfig::new(StepSchedule::new(2000.0, 1.0, 10.0).unwrap(), 2000);
        let a = stochastic_update_placement(&sc, &cfg, &mut sample_stream(3, 0)).unwrap();
        let b = stochastic_update_placement(&sc, &cfg, &mut sample_stream(3, 0)).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn rotated_draws_give_rotated_trajectory() {
        let sc = scenario(3, 4.0, 8.0, CsiMode::CsirOnly);
        let cfg = StochasticConfig::new(StepSchedule::new(2000.0, 1.0, 10.0).unwrap(), 2000);
        let mut rng = sample_stream(4, 0);
        let draws: Vec<Draw> = (0..cfg.n_iter).map(|_| draw_from(&sc, false, &mut rng)).collect();
        let angle = std::f64::consts::FRAC_PI_3;
        let mut rotated_sc = sc.clone();
        rotated_sc.layout = sc.layout.with_ports(sc.layout.ports().iter().map(|p| p.rotated(angle)).collect()).unwrap();
        let copy = |d: &Draw, rot: f64| Draw { u: d.u.rotated(rot), shadowing: d.shadowing.clone(), fading: None };
        let a = robbins_monro(&sc, &cfg, true, None, &mut |t| copy(&draws[t - 1], 0.0)).unwrap();
        let b = robbins_monro(&rotated_sc, &cfg, true, None, &mut |t| copy(&draws[t - 1], angle)).unwrap();
        for (sa, sb) in a.trajectory.iter().zip(&b.trajectory) {
            for (pa, pb) in sa.ports.iter().zip(&sb.ports) {
                assert!(pa.rotated(angle).distance(*pb) < 1e-6, "{pa:?} vs {pb:?}");
            }
        }
    }

    #[test]
    fn gamma_zero_matches_plain_placement() {
        let sc = scenario(3, 4.0, 8.0, CsiMode::CsirOnly);
        let cfg = StochasticConfig::new(StepSchedule::new(2000.0, 1.0, 10.0).unwrap(), 1000);
        let a = stochastic_update_placement(&sc, &cfg, &mut sample_stream(5, 0)).unwrap();
        let b = interference_aware_placement(&sc, 0.0, &cfg, &mut sample_stream(5, 0)).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn three_ports_spread_out_from_a_clump() {
        let mut sc = scenario(3, 4.0, 0.0, CsiMode::CsirOnly);
        let region = sc.layout.region().clone();
        sc.layout = PortLayout::new(vec![Point::new(10.0, 0.0), Point::new(-5.0, 8.0), Point::new(-5.0, -8.0)], region).unwrap();
        let cfg = StochasticConfig::new(StepSchedule::scaled_default(1000.0, 4.0).unwrap(), 20_000);
        let run = stochastic_update_placement(&sc, &cfg, &mut sample_stream(6, 0)).unwrap();
        let r = mean_radius(&run.tail_average);
        assert!(r > 300.0 && r < 800.0, "mean radius {r}");
    }
}
