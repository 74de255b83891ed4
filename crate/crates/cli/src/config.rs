//! Experiment configuration: a strict TOML schema, sweep expansion and
//! translation into core types.

use anyhow::{bail, Context, Result};
use das_core::capacity::{CsiMode, Strategy};
use das_core::channel::{ChannelParams, InterferenceParams, NeighborPower};
use das_core::ergodic::{calibrate_edge_power, McConfig, Scenario};
use das_core::geometry::{Point, PortLayout, Region};
use das_core::placement::{LloydConfig, StepSchedule, StochasticConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Monte-Carlo cell-averaged rate and Jensen bound of a fixed layout.
    Capacity,
    /// Multi-start Lloyd placement on the path-loss lower bound.
    Lloyd,
    /// Robbins-Monro placement, interference-aware when `gamma > 0`.
    Placement,
    /// Per-port power split under a total-power budget on a fixed layout.
    PowerAllocation,
    /// Power saved against a reference system at a target rate.
    PowerGain,
    /// Smallest common port power reaching a target rate.
    MinPower,
    /// Area spectral efficiency against cell size.
    Ase,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Mandatory: every output is a function of the config and this seed.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub interference: InterferenceConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub mc: MonteCarloConfig,
    #[serde(default)]
    pub power_gain: PowerGainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Hexagon,
    /// Regular polygon with `disk_sides` sides and circumradius `radius`.
    Disk,
    /// Square of half-side `radius`.
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusKind {
    /// Centre-to-edge distance of the hexagon.
    Apothem,
    /// Centre-to-vertex distance of the hexagon.
    Circumradius,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub region: RegionKind,
    pub radius: f64,
    pub radius_kind: RadiusKind,
    pub r0: f64,
    pub disk_sides: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { region: RegionKind::Hexagon, radius: 1000.0, radius_kind: RadiusKind::Apothem, r0: 1.0, disk_sides: 256 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_sh_db: f64,
    pub sigma_n_sq: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { alpha: 4.0, beta: 1.0, sigma_sh_db: 8.0, sigma_n_sq: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiKind {
    Csir,
    Csit,
}

impl CsiKind {
    pub fn mode(self) -> CsiMode {
        match self {
            CsiKind::Csir => CsiMode::CsirOnly,
            CsiKind::Csit => CsiMode::Csit,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CsiKind::Csir => "csir",
            CsiKind::Csit => "csit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    AllPorts,
    Single,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_ports: usize,
    pub n_antennas: usize,
    pub csi: CsiKind,
    pub strategy: StrategyKind,
    /// Per-port transmit power; calibrated from `edge_snr_db` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// SNR of a single port at distance `radius`, used to set the power.
    pub edge_snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_ports: 3,
            n_antennas: 1,
            csi: CsiKind::Csir,
            strategy: StrategyKind::AllPorts,
            power: None,
            edge_snr_db: 10.0,
            target_rate: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutInit {
    Random,
    Ring,
    Colocated,
    Explicit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    pub init: LayoutInit,
    /// Ring radius as a fraction of `radius`.
    pub ring_radius: f64,
    /// Angle of the first ring port, in degrees.
    pub ring_phase_deg: f64,
    /// Put the first port at the centre and the rest on the ring.
    pub center_port: bool,
    /// Absolute port coordinates for `init = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ports: Option<Vec<[f64; 2]>>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig { init: LayoutInit::Random, ring_radius: 0.5, ring_phase_deg: 0.0, center_port: false, ports: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterferenceConfig {
    pub gamma: f64,
    /// Fixed neighbour port power; neighbours mirror the central cell when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbor_power: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Step scale `a`; defaults to `8 R^2 / alpha^2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_a: Option<f64>,
    /// Multiplier applied to the step scale.
    pub step_scale: f64,
    pub step_p: f64,
    pub step_t0: f64,
    pub n_iter: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub window: usize,
    pub snapshot_stride: usize,
    pub tail_fraction: f64,
    pub include_fading: bool,
    pub lloyd_tol: f64,
    pub lloyd_max_iter: usize,
    pub cubature_level: usize,
    /// Placement: move powers jointly with the positions.
    pub optimize_power: bool,
    /// Power-step scale; defaults to `S^2 / 2` with `S` the per-port power.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_step_a: Option<f64>,
    pub power_step_t0: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_a: None,
            step_scale: 1.0,
            step_p: 1.0,
            step_t0: 100.0,
            n_iter: 200_000,
            restarts: 1,
            tolerance: 1e-4,
            window: 5000,
            snapshot_stride: 1000,
            tail_fraction: 0.5,
            include_fading: false,
            lloyd_tol: 1e-7,
            lloyd_max_iter: 500,
            cubature_level: 64,
            optimize_power: false,
            power_step_a: None,
            power_step_t0: 100.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    pub include_fading: bool,
    pub include_shadowing: bool,
    pub antithetic: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { n_samples: 100_000, include_fading: true, include_shadowing: true, antithetic: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainReference {
    /// All ports at the centre, receiver-only CSI.
    ColocatedCsir,
    /// The configured layout with receiver-only CSI.
    SameLayoutCsir,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerGainConfig {
    pub reference: GainReference,
    /// Optimize the layout by stochastic placement before measuring.
    pub optimize_layout: bool,
}

impl Default for PowerGainConfig {
    fn default() -> Self {
        PowerGainConfig { reference: GainReference::ColocatedCsir, optimize_layout: false }
    }
}

/// Parameter grid; every non-empty axis replaces the base value and the
/// points are the Cartesian product in the field order below.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub radius: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n_ports: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub csi: Vec<CsiKind>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub target_rate: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub results: String,
    pub manifest: String,
    pub trajectory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            results: "results.csv".into(),
            manifest: "manifest.json".into(),
            trajectory: "trajectory.csv".into(),
        }
    }
}

/// One coordinate of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub radius: f64,
    pub n_ports: usize,
    pub csi: CsiKind,
    pub target_rate: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let s = &self.sweep;
        let targets: Vec<Option<f64>> = if s.target_rate.is_empty() {
            vec![self.system.target_rate]
        } else {
            s.target_rate.iter().map(|t| Some(*t)).collect()
        };
        let mut points = Vec::new();
        for alpha in axis(&s.alpha, self.channel.alpha) {
            for gamma in axis(&s.gamma, self.interference.gamma) {
                for radius in axis(&s.radius, self.geometry.radius) {
                    for n_ports in axis(&s.n_ports, self.system.n_ports) {
                        for csi in axis(&s.csi, self.system.csi) {
                            for target_rate in &targets {
                                points.push(SweepPoint {
                                    index: points.len(),
                                    alpha,
                                    gamma,
                                    radius,
                                    n_ports,
                                    csi,
                                    target_rate: *target_rate,
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }

    /// Checks every sweep point against the core invariants before any
    /// computation starts.
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if o.restarts == 0 {
            bail!("invalid parameter `optimizer.restarts`: must be at least 1");
        }
        if !(o.step_scale > 0.0 && o.step_scale.is_finite()) {
            bail!("invalid parameter `optimizer.step_scale`: must be positive");
        }
        if o.lloyd_max_iter == 0 || o.cubature_level == 0 {
            bail!("invalid parameter `optimizer.lloyd_max_iter`/`optimizer.cubature_level`: must be at least 1");
        }
        if !(o.lloyd_tol > 0.0) {
            bail!("invalid parameter `optimizer.lloyd_tol`: must be positive");
        }
        if self.geometry.region == RegionKind::Disk && self.geometry.disk_sides < 3 {
            bail!("invalid parameter `geometry.disk_sides`: need at least 3");
        }
        if !(self.system.edge_snr_db.is_finite()) {
            bail!("invalid parameter `system.edge_snr_db`: must be finite");
        }
        if let Some(p) = self.system.power {
            if !(p > 0.0 && p.is_finite()) {
                bail!("invalid parameter `system.power`: must be positive, got {p}");
            }
        }
        if self.layout.init == LayoutInit::Explicit {
            if self.layout.ports.is_none() {
                bail!("invalid parameter `layout.ports`: required when `layout.init = \"explicit\"`");
            }
            if !self.sweep.n_ports.is_empty() {
                bail!("invalid parameter `sweep.n_ports`: cannot sweep the port count of an explicit layout");
            }
        }
        if !(self.layout.ring_radius >= 0.0 && self.layout.ring_radius.is_finite()) {
            bail!("invalid parameter `layout.ring_radius`: must be a non-negative fraction of the radius");
        }
        if self.mc.n_samples == 0 {
            bail!("invalid parameter `mc.n_samples`: must be at least 1");
        }
        let needs_target = matches!(self.experiment, ExperimentKind::PowerGain | ExperimentKind::MinPower);
        for point in self.sweep_points() {
            let setup = PointSetup::new(self, &point).with_context(|| point.describe())?;
            if needs_target {
                match point.target_rate {
                    Some(t) if t > 0.0 && t.is_finite() => {}
                    Some(t) => bail!("{}: invalid parameter `target_rate`: must be positive, got {t}", point.describe()),
                    None => bail!("invalid parameter `system.target_rate`: required by experiment {:?}", self.experiment),
                }
            }
            let mut rng = das_core::rng::sample_stream(0, 0);
            let sc = setup.scenario(setup.initial_layout(&mut rng)?)?;
            sc.validate().with_context(|| point.describe())?;
            if matches!(self.experiment, ExperimentKind::Placement | ExperimentKind::PowerAllocation) || self.power_gain.optimize_layout {
                setup.stochastic_config(false).validate().with_context(|| point.describe())?;
            }
            if self.experiment == ExperimentKind::Lloyd && point.alpha < 1.0 {
                bail!("{}: invalid parameter `alpha`: Lloyd placement needs alpha >= 1", point.describe());
            }
        }
        Ok(())
    }
}

impl SweepPoint {
    pub fn describe(&self) -> String {
        format!(
            "sweep point {} (alpha={}, gamma={}, radius={}, n_ports={}, csi={})",
            self.index,
            self.alpha,
            self.gamma,
            self.radius,
            self.n_ports,
            self.csi.label()
        )
    }
}

/// Core objects for one sweep point.
pub struct PointSetup<'a> {
    pub cfg: &'a ExperimentConfig,
    pub point: SweepPoint,
    pub region: Region,
    pub params: ChannelParams,
    /// Per-port power.
    pub power: f64,
    pub schedule: StepSchedule,
}

impl<'a> PointSetup<'a> {
    pub fn new(cfg: &'a ExperimentConfig, point: &SweepPoint) -> Result<Self> {
        let g = &cfg.geometry;
        let r = point.radius;
        if !(r > 0.0 && r.is_finite()) {
            bail!("invalid parameter `radius`: must be positive, got {r}");
        }
        let region = match (g.region, g.radius_kind) {
            (RegionKind::Hexagon, RadiusKind::Apothem) => Region::hexagon_with_apothem(r)?,
            (RegionKind::Hexagon, RadiusKind::Circumradius) => Region::hexagon(r)?,
            (RegionKind::Disk, _) => Region::regular_polygon(g.disk_sides, r)?,
            (RegionKind::Square, _) => Region::rectangle(Point::new(-r, -r), Point::new(r, r))?,
        };
        let c = &cfg.channel;
        let params = ChannelParams { alpha: point.alpha, beta: c.beta, sigma_sh_db: c.sigma_sh_db, r0: g.r0, sigma_n_sq: c.sigma_n_sq };
        params.validate()?;
        if point.n_ports == 0 {
            bail!("invalid parameter `n_ports`: must be at least 1");
        }
        if cfg.system.n_antennas == 0 {
            bail!("invalid parameter `n_antennas`: must be at least 1");
        }
        let power = match cfg.system.power {
            Some(p) => p,
            None => calibrate_edge_power(r, &params, cfg.system.edge_snr_db)?,
        };
        let o = &cfg.optimizer;
        let base = match o.step_a {
            Some(a) => StepSchedule::new(a, o.step_p, o.step_t0)?,
            None => {
                let d = StepSchedule::scaled_default(r, point.alpha)?;
                StepSchedule::new(d.a, o.step_p, o.step_t0)?
            }
        };
        let schedule = StepSchedule::new(base.a * o.step_scale, base.p, base.t0)?;
        Ok(PointSetup { cfg, point: point.clone(), region, params, power, schedule })
    }

    pub fn initial_layout<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PortLayout> {
        let l = &self.cfg.layout;
        let n = self.point.n_ports;
        let layout = match l.init {
            LayoutInit::Random => PortLayout::random(self.region.clone(), n, rng)?,
            LayoutInit::Colocated => PortLayout::new(vec![self.region.centroid(); n], self.region.clone())?,
            LayoutInit::Ring => {
                let ring = if l.center_port { n - 1 } else { n };
                PortLayout::ring(
                    self.region.clone(),
                    ring,
                    l.ring_radius * self.point.radius,
                    l.ring_phase_deg.to_radians(),
                    l.center_port,
                )?
            }
            LayoutInit::Explicit => {
                let ports: Vec<Point> = l.ports.as_ref().unwrap().iter().map(|p| Point::new(p[0], p[1])).collect();
                if ports.len() != n {
                    bail!("invalid parameter `layout.ports`: {} ports given, n_ports = {n}", ports.len());
                }
                PortLayout::new(ports, self.region.clone())?
            }
        };
        Ok(layout)
    }

    pub fn interference(&self) -> InterferenceParams {
        let np = match self.cfg.interference.neighbor_power {
            Some(s) => NeighborPower::Common(s),
            None => NeighborPower::MatchCentral,
        };
        InterferenceParams::shared(self.point.gamma, np)
    }

    pub fn scenario(&self, layout: PortLayout) -> Result<Scenario> {
        let mut sc = Scenario::simple(layout, self.power, self.point.csi.mode(), self.params.clone())?;
        sc.n_antennas = self.cfg.system.n_antennas;
        sc.strategy = match self.cfg.system.strategy {
            StrategyKind::AllPorts => Strategy::AllPorts,
            StrategyKind::Single => Strategy::SingleTransmission,
        };
        sc.interference = self.interference();
        sc.validate()?;
        Ok(sc)
    }

    pub fn mc(&self, seed: u64) -> McConfig {
        let m = &self.cfg.mc;
        McConfig {
            include_fading: m.include_fading,
            include_shadowing: m.include_shadowing,
            antithetic: m.antithetic,
            ..McConfig::new(m.n_samples, seed)
        }
    }

    pub fn stochastic_config(&self, evaluate: bool) -> StochasticConfig {
        let o = &self.cfg.optimizer;
        let mut sc = StochasticConfig::new(self.schedule, o.n_iter);
        sc.snapshot_stride = o.snapshot_stride;
        sc.include_fading = o.include_fading;
        sc.tail_fraction = o.tail_fraction;
        sc.window = o.window;
        sc.tolerance = o.tolerance;
        if evaluate {
            sc.evaluate = Some(self.mc(das_core::rng::derive_seed(self.cfg.seed, MC_SALT)));
        }
        sc
    }

    pub fn lloyd_config(&self) -> LloydConfig {
        let o = &self.cfg.optimizer;
        LloydConfig { tol: o.lloyd_tol, max_iter: o.lloyd_max_iter, cubature_level: o.cubature_level }
    }
}

/// Salt for the Monte-Carlo seed; shared by every sweep point so that
/// points are compared on common random numbers.
pub const MC_SALT: u64 = 0x4D43;
