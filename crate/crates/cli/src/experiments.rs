//! Per-sweep-point experiment drivers producing result and trajectory rows.

use anyhow::{Context, Result};
use das_core::capacity::Strategy;
use das_core::ergodic::{area_spectral_efficiency, cell_average_rate, jensen_lower_bound, AreaMode, Scenario};
use das_core::geometry::PortLayout;
use das_core::placement::{
    lloyd_multistart, lloyd_placement, mean_radius, min_power_for_target, optimize_power_allocation,
    stochastic_update_placement, PlacementRun, PowerOptConfig, PowerSearch, StepSchedule,
};
use das_core::rng::{derive_seed, sample_stream};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, GainReference, LayoutInit, PointSetup, SweepPoint, MC_SALT};

const PLACEMENT_SALT: u64 = 0x504C;
const LLOYD_SALT: u64 = 0x4C4C;

/// One line of the results file. Every row repeats the full sweep
/// coordinate and the seed.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub seed: u64,
    pub point: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub radius: f64,
    pub n_ports: usize,
    pub csi: &'static str,
    pub target_rate: Option<f64>,
    pub restart: Option<usize>,
    pub port: Option<usize>,
    pub metric: &'static str,
    pub value: f64,
    pub std_error: Option<f64>,
    pub units: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRow {
    pub point: usize,
    pub restart: usize,
    pub iteration: usize,
    pub port: usize,
    pub x: f64,
    pub y: f64,
    pub power: Option<f64>,
}

#[derive(Default)]
pub struct PointOutput {
    pub rows: Vec<ResultRow>,
    pub trajectory: Vec<TrajectoryRow>,
}

fn experiment_label(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Capacity => "capacity",
        ExperimentKind::Lloyd => "lloyd",
        ExperimentKind::Placement => "placement",
        ExperimentKind::PowerAllocation => "power-allocation",
        ExperimentKind::PowerGain => "power-gain",
        ExperimentKind::MinPower => "min-power",
        ExperimentKind::Ase => "ase",
    }
}

struct Emitter<'a> {
    cfg: &'a ExperimentConfig,
    point: &'a SweepPoint,
    out: PointOutput,
}

impl<'a> Emitter<'a> {
    fn row(&mut self, restart: Option<usize>, port: Option<usize>, metric: &'static str, value: f64, se: Option<f64>, units: &'static str) {
        let p = self.point;
        self.out.rows.push(ResultRow {
            experiment: experiment_label(self.cfg.experiment),
            seed: self.cfg.seed,
            point: p.index,
            alpha: p.alpha,
            gamma: p.gamma,
            radius: p.radius,
            n_ports: p.n_ports,
            csi: p.csi.label(),
            target_rate: p.target_rate,
            restart,
            port,
            metric,
            value,
            std_error: se,
            units,
        });
    }

    fn metric(&mut self, metric: &'static str, value: f64, units: &'static str) {
        self.row(None, None, metric, value, None, units);
    }

    fn layout(&mut self, restart: Option<usize>, layout: &PortLayout, radius: f64) {
        let c = layout.region().centroid();
        for (i, p) in layout.ports().iter().enumerate() {
            self.row(restart, Some(i), "port_x", p.x - c.x, None, "m");
            self.row(restart, Some(i), "port_y", p.y - c.y, None, "m");
            self.row(restart, Some(i), "port_radius_over_R", p.distance(c) / radius, None, "ratio");
        }
        self.row(restart, None, "mean_radius", mean_radius(layout), None, "m");
        self.row(restart, None, "mean_radius_over_R", mean_radius(layout) / radius, None, "ratio");
        if self.cfg.layout.center_port && layout.len() > 1 {
            // the port closest to the centre plays the central role
            let mut r = layout.radii();
            r.sort_by(|a, b| a.total_cmp(b));
            let peripheral = r[1..].iter().sum::<f64>() / (r.len() - 1) as f64;
            self.row(restart, None, "central_port_radius", r[0], None, "m");
            self.row(restart, None, "peripheral_mean_radius", peripheral, None, "m");
        }
    }

    fn trajectory(&mut self, restart: usize, run: &PlacementRun) {
        for snap in &run.trajectory {
            for (i, p) in snap.ports.iter().enumerate() {
                self.out.trajectory.push(TrajectoryRow {
                    point: self.point.index,
                    restart,
                    iteration: snap.iteration,
                    port: i,
                    x: p.x,
                    y: p.y,
                    power: snap.powers.as_ref().map(|s| s[i]),
                });
            }
        }
    }
}

/// Runs one sweep point.
pub fn run_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<PointOutput> {
    let setup = PointSetup::new(cfg, point)?;
    let mut em = Emitter { cfg, point, out: PointOutput::default() };
    match cfg.experiment {
        ExperimentKind::Capacity => capacity(&setup, &mut em)?,
        ExperimentKind::Lloyd => lloyd(&setup, &mut em)?,
        ExperimentKind::Placement => placement(&setup, &mut em)?,
        ExperimentKind::PowerAllocation => power_allocation(&setup, &mut em)?,
        ExperimentKind::PowerGain => power_gain(&setup, &mut em)?,
        ExperimentKind::MinPower => min_power(&setup, &mut em)?,
        ExperimentKind::Ase => ase(&setup, &mut em)?,
    }
    Ok(em.out)
}

fn mc_seed(setup: &PointSetup) -> u64 {
    derive_seed(setup.cfg.seed, MC_SALT)
}

/// Initial layout for restart `k`; random inits depend only on
/// `(seed, k)`, so every sweep point starts from the same draws.
fn initial_layout(setup: &PointSetup, k: usize) -> Result<PortLayout> {
    let mut rng = sample_stream(derive_seed(setup.cfg.seed, PLACEMENT_SALT), 2 * k as u64);
    setup.initial_layout(&mut rng)
}

fn fixed_scenario(setup: &PointSetup) -> Result<Scenario> {
    setup.scenario(initial_layout(setup, 0)?)
}

fn capacity(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let sc = fixed_scenario(setup)?;
    let est = cell_average_rate(&sc, &setup.mc(mc_seed(setup)))?;
    em.metric("transmit_power", setup.power, "linear");
    em.row(None, None, "rate", est.mean, Some(est.std_error), "bit/s/Hz");
    if sc.strategy == Strategy::AllPorts && !sc.interference.is_active() {
        em.metric("jensen_bound", jensen_lower_bound(&sc.layout, setup.power, &sc.channel), "bit/s/Hz");
    }
    em.layout(None, &sc.layout, setup.point.radius);
    Ok(())
}

fn lloyd(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let lc = setup.lloyd_config();
    let r = setup.point.radius;
    if setup.cfg.layout.init == LayoutInit::Random {
        let ms = lloyd_multistart(
            &setup.region,
            setup.point.n_ports,
            setup.point.alpha,
            &lc,
            setup.cfg.optimizer.restarts,
            derive_seed(setup.cfg.seed, LLOYD_SALT),
        )?;
        for (k, run) in ms.runs.iter().enumerate() {
            em.row(Some(k), None, "objective", run.objective, None, "m^alpha");
            em.row(Some(k), None, "mean_radius_over_R", mean_radius(&run.layout) / r, None, "ratio");
        }
        em.metric("objective_spread", ms.objective_spread(), "m^alpha");
        em.metric("objective", ms.best.objective, "m^alpha");
        em.metric("iterations", ms.best.iterations as f64, "count");
        em.metric("converged", ms.best.converged as u8 as f64, "flag");
        em.layout(None, &ms.best.layout, r);
    } else {
        let res = lloyd_placement(&initial_layout(setup, 0)?, setup.point.alpha, &lc)?;
        em.metric("objective", res.objective, "m^alpha");
        em.metric("iterations", res.iterations as f64, "count");
        em.metric("converged", res.converged as u8 as f64, "flag");
        em.layout(None, &res.layout, r);
    }
    Ok(())
}

fn default_power_schedule(setup: &PointSetup) -> Result<StepSchedule> {
    let o = &setup.cfg.optimizer;
    let a = o.power_step_a.unwrap_or(0.5 * setup.power * setup.power);
    Ok(StepSchedule::new(a, 1.0, o.power_step_t0)?)
}

/// Placement from restart `k`; powers move too when `optimize_power` is set.
fn placement_run(setup: &PointSetup, k: usize) -> Result<PlacementRun> {
    let sc = setup.scenario(initial_layout(setup, k)?)?;
    let stoch = setup.stochastic_config(true);
    let mut rng = sample_stream(derive_seed(setup.cfg.seed, PLACEMENT_SALT), 2 * k as u64 + 1);
    let run = if setup.cfg.optimizer.optimize_power {
        let total = setup.power * sc.layout.len() as f64;
        let cfg = PowerOptConfig { placement: stoch, power_schedule: default_power_schedule(setup)?, total, joint: true };
        optimize_power_allocation(&sc, &cfg, &mut rng)?
    } else {
        stochastic_update_placement(&sc, &stoch, &mut rng)?
    };
    Ok(run)
}

fn placement(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let r = setup.point.radius;
    let runs: Vec<PlacementRun> = (0..setup.cfg.optimizer.restarts)
        .into_par_iter()
        .map(|k| placement_run(setup, k).with_context(|| format!("restart {k}")))
        .collect::<Result<_>>()?;
    let mut radii = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        em.layout(Some(k), &run.tail_average, r);
        if let Some(est) = &run.objective {
            em.row(Some(k), None, "rate", est.mean, Some(est.std_error), "bit/s/Hz");
        }
        em.row(Some(k), None, "converged", run.converged() as u8 as f64, None, "flag");
        em.row(Some(k), None, "final_mean_displacement", run.final_mean_displacement, None, "m");
        if setup.cfg.optimizer.optimize_power {
            for (i, s) in run.tail_average_powers.per_port().iter().enumerate() {
                em.row(Some(k), Some(i), "port_power", *s, None, "linear");
            }
        }
        em.trajectory(k, run);
        radii.push(mean_radius(&run.tail_average));
    }
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let spread = radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - radii.iter().cloned().fold(f64::INFINITY, f64::min);
    em.metric("mean_radius", mean, "m");
    em.metric("mean_radius_over_R", mean / r, "ratio");
    em.metric("restart_spread_over_mean", spread / mean, "ratio");
    Ok(())
}

fn power_allocation(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let sc = fixed_scenario(setup)?;
    let n = sc.layout.len();
    let total = setup.power * n as f64;
    let mut stoch = setup.stochastic_config(true);
    stoch.schedule = StepSchedule::new(0.0, 1.0, 0.0)?;
    let cfg = PowerOptConfig { placement: stoch, power_schedule: default_power_schedule(setup)?, total, joint: false };
    let mut rng = sample_stream(derive_seed(setup.cfg.seed, PLACEMENT_SALT), 1);
    let run = optimize_power_allocation(&sc, &cfg, &mut rng)?;
    let p = run.tail_average_powers.per_port();
    for (i, s) in p.iter().enumerate() {
        em.row(None, Some(i), "port_power", *s, None, "linear");
        em.row(None, Some(i), "power_fraction", s / total, None, "ratio");
    }
    if setup.cfg.layout.center_port && n > 1 {
        let peripheral = p[1..].iter().sum::<f64>() / (n - 1) as f64;
        em.metric("central_over_peripheral_power", p[0] / peripheral, "ratio");
        em.metric("central_over_total_power", p[0] / total, "ratio");
    }
    if let Some(est) = &run.objective {
        em.row(None, None, "rate", est.mean, Some(est.std_error), "bit/s/Hz");
    }
    em.trajectory(0, &run);
    Ok(())
}

fn target_of(setup: &PointSetup) -> f64 {
    setup.point.target_rate.expect("validated: target rate present")
}

fn power_gain(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let c_t = target_of(setup);
    let layout = if setup.cfg.power_gain.optimize_layout {
        let run = placement_run(setup, 0)?;
        em.trajectory(0, &run);
        run.tail_average
    } else {
        initial_layout(setup, 0)?
    };
    let optimized = setup.scenario(layout.clone())?;
    let mut reference = optimized.clone();
    reference.mode = das_core::capacity::CsiMode::CsirOnly;
    if setup.cfg.power_gain.reference == GainReference::ColocatedCsir {
        let c = setup.region.centroid();
        reference.layout = PortLayout::new(vec![c; layout.len()], setup.region.clone())?;
    }
    let mc = setup.mc(mc_seed(setup));
    let search = PowerSearch::default();
    let s_ref = min_power_for_target(&reference, c_t, &mc, &search).context("reference system")?;
    let s_opt = min_power_for_target(&optimized, c_t, &mc, &search).context("configured system")?;
    em.metric("reference_power", s_ref, "linear");
    em.metric("required_power", s_opt, "linear");
    em.metric("power_gain", 10.0 * (s_ref / s_opt).log10(), "dB");
    em.layout(None, &layout, setup.point.radius);
    Ok(())
}

fn min_power(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let sc = fixed_scenario(setup)?;
    let s = min_power_for_target(&sc, target_of(setup), &setup.mc(mc_seed(setup)), &PowerSearch::default())?;
    em.metric("min_power", s, "linear");
    em.metric("min_power_db", 10.0 * s.log10(), "dB");
    Ok(())
}

fn ase(setup: &PointSetup, em: &mut Emitter) -> Result<()> {
    let sc = fixed_scenario(setup)?;
    let est = cell_average_rate(&sc, &setup.mc(mc_seed(setup)))?;
    let r = setup.point.radius;
    em.metric("transmit_power", setup.power, "linear");
    em.row(None, None, "rate", est.mean, Some(est.std_error), "bit/s/Hz");
    em.row(None, None, "ase_pi_r2", area_spectral_efficiency(est.mean, r, AreaMode::PiRSq)?, Some(area_spectral_efficiency(est.std_error, r, AreaMode::PiRSq)?), "bit/s/Hz/m^2");
    em.row(None, None, "ase_cell_area", est.mean / setup.region.area(), Some(est.std_error / setup.region.area()), "bit/s/Hz/m^2");
    em.metric("region_extent", setup.region.extent(), "m");
    Ok(())
}
