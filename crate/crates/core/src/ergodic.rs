//! Cell-averaged ergodic rates, the nearest-port Jensen bound, edge-SNR
//! calibration, area spectral efficiency and cell-size scaling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::capacity::{capacity, rate_single_transmission, CsiMode, PowerAllocation, Strategy};
use crate::channel::{
    channel_vector, draw_fading, interference_noise_variance, unit_fading, ChannelParams,
    InterferenceParams, NeighborPower,
};
use crate::error::{invalid, Result};
use crate::geometry::{clamped_distance, sample_uniform, Point, PortLayout};
use crate::placement::{min_power_for_target, PowerSearch};
use crate::rng::{pairwise_sum, sample_stream};

/// Cubature level used by [`jensen_lower_bound`].
pub const DEFAULT_CUBATURE_LEVEL: usize = 64;

/// A complete single-cell system: where the ports are, what they transmit,
/// and how the link behaves.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub layout: PortLayout,
    pub n_antennas: usize,
    pub powers: PowerAllocation,
    pub mode: CsiMode,
    pub strategy: Strategy,
    pub channel: ChannelParams,
    pub interference: InterferenceParams,
}

impl Scenario {
    /// `N` single-antenna ports sharing the power `s`, no interference.
    pub fn simple(layout: PortLayout, s: f64, mode: CsiMode, channel: ChannelParams) -> Result<Self> {
        let powers = PowerAllocation::uniform(layout.len(), s)?;
        Ok(Scenario {
            layout,
            n_antennas: 1,
            powers,
            mode,
            strategy: Strategy::AllPorts,
            channel,
            interference: InterferenceParams::none(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.interference.validate()?;
        if self.n_antennas == 0 {
            return Err(invalid("n_antennas", "must be at least 1"));
        }
        if self.powers.len() != self.layout.len() {
            return Err(invalid(
                "powers",
                format!("{} budgets for {} ports", self.powers.len(), self.layout.len()),
            ));
        }
        if self.interference.is_active() && !self.layout.region().is_hexagon() {
            return Err(invalid("interference", "neighbour cells require a hexagonal region"));
        }
        Ok(())
    }

    /// Same scenario with every port transmitting `s`.
    pub fn with_common_power(&self, s: f64) -> Result<Self> {
        let mut out = self.clone();
        out.powers = PowerAllocation::uniform(self.layout.len(), s)?;
        Ok(out)
    }
}

/// Monte-Carlo controls.
#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub include_fading: bool,
    pub include_shadowing: bool,
    pub include_interference: bool,
    /// Pair every shadowing draw with its mirror image in dB.
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        McConfig {
            n_samples,
            seed,
            include_fading: true,
            include_shadowing: true,
            include_interference: true,
            antithetic: false,
        }
    }

    /// Path loss only: no fading, no shadowing.
    pub fn deterministic_channel(n_samples: usize, seed: u64) -> Self {
        McConfig {
            include_fading: false,
            include_shadowing: false,
            ..McConfig::new(n_samples, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// Mean and standard error of i.i.d. values, order-fixed.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate { mean, std_error, n }
    }
}

/// Rate seen by a user at `u` for the given large-scale gains and fading.
fn sample_rate(
    sc: &Scenario,
    u: Point,
    shadowing: &[f64],
    fading: &nalgebra::DMatrix<num_complex::Complex64>,
    interference: bool,
) -> Result<f64> {
    let h = channel_vector(&sc.layout, u, shadowing, fading, &sc.channel)?;
    let sigma_z_sq = if interference {
        interference_noise_variance(&sc.layout, u, &sc.interference, &sc.channel, sc.powers.per_port())?
    } else {
        sc.channel.sigma_n_sq
    };
    Ok(match sc.strategy {
        Strategy::AllPorts => capacity(sc.mode, &h, &sc.powers, sigma_z_sq),
        Strategy::SingleTransmission => {
            rate_single_transmission(&sc.layout, u, &h, &sc.powers, sc.mode, sigma_z_sq)
        }
    })
}

/// Monte-Carlo estimate of the rate averaged over user position, shadowing
/// and fading.
///
/// Sample `i` draws everything from its own stream, so the estimate is
/// independent of the worker count. With antithetic pairing, each unit is
/// the average of a draw and its dB-mirrored shadowing twin (same user and
/// fading); the standard error is then computed over the pair averages and
/// `n` counts pairs.
pub fn cell_average_rate(sc: &Scenario, mc: &McConfig) -> Result<McEstimate> {
    sc.validate()?;
    mc.validate()?;
    if sc.powers.total() == 0.0 {
        return Ok(McEstimate { mean: 0.0, std_error: 0.0, n: mc.n_samples });
    }
    let n_ports = sc.layout.len();
    let l = sc.n_antennas;
    let sigma = if mc.include_shadowing { sc.channel.sigma_sh_db } else { 0.0 };
    let antithetic = mc.antithetic && sigma > 0.0;
    let interference = mc.include_interference && sc.interference.is_active();
    let units = if antithetic { mc.n_samples.div_ceil(2) } else { mc.n_samples };

    let values: Vec<f64> = (0..units)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = sample_stream(mc.seed, i as u64);
            let u = sample_uniform(sc.layout.region(), &mut rng);
            let x: Vec<f64> = (0..n_ports)
                .map(|_| if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 })
                .collect();
            let fading = if mc.include_fading { draw_fading(&mut rng, n_ports, l) } else { unit_fading(n_ports, l) };
            let g: Vec<f64> = x.iter().map(|x| 10f64.powf(sigma * x / 10.0)).collect();
            let rate = sample_rate(sc, u, &g, &fading, interference)?;
            if antithetic {
                let g_mirror: Vec<f64> = x.iter().map(|x| 10f64.powf(-sigma * x / 10.0)).collect();
                let twin = sample_rate(sc, u, &g_mirror, &fading, interference)?;
                Ok(0.5 * (rate + twin))
            } else {
                Ok(rate)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_values(&values))
}

/// Cubature estimate of `E_u[L(r_min)]`, the path loss to the nearest port.
pub fn mean_nearest_path_loss(layout: &PortLayout, params: &ChannelParams, level: usize) -> f64 {
    let nodes = layout.region().cubature(level);
    let terms: Vec<f64> = nodes
        .iter()
        .map(|(u, w)| {
            let r = layout
                .ports()
                .iter()
                .map(|p| clamped_distance(*p, *u, params.r0))
                .fold(f64::INFINITY, f64::min);
            w * params.beta * r.powf(params.alpha)
        })
        .collect();
    pairwise_sum(&terms)
}

/// `log2(1 + S / (sigma_n^2 E_u[L(r_min)]))`: keep only the nearest port,
/// average the shadowing out in the log domain and move the expectation
/// over the user inside the logarithm.
pub fn jensen_lower_bound(layout: &PortLayout, s: f64, params: &ChannelParams) -> f64 {
    jensen_lower_bound_with_level(layout, s, params, DEFAULT_CUBATURE_LEVEL)
}

pub fn jensen_lower_bound_with_level(layout: &PortLayout, s: f64, params: &ChannelParams, level: usize) -> f64 {
    let mean_loss = mean_nearest_path_loss(layout, params, level);
    (s / (params.sigma_n_sq * mean_loss)).ln_1p() / std::f64::consts::LN_2
}

/// Power that puts the path-loss-only SNR at distance `r` at `target_snr_db`.
pub fn calibrate_edge_power(r: f64, params: &ChannelParams, target_snr_db: f64) -> Result<f64> {
    if !target_snr_db.is_finite() {
        return Err(invalid("target_snr_db", "must be finite"));
    }
    if !(r > 0.0) {
        return Err(invalid("r", "edge distance must be positive"));
    }
    Ok(10f64.powf(target_snr_db / 10.0) * params.sigma_n_sq * params.beta * r.powf(params.alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AreaMode {
    /// `pi R^2`.
    PiRSq,
    /// Area of the hexagon with circumradius `R`.
    HexArea,
}

pub fn area_spectral_efficiency(c_bar: f64, r: f64, mode: AreaMode) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("r", "cell radius must be positive"));
    }
    let area = match mode {
        AreaMode::PiRSq => std::f64::consts::PI * r * r,
        AreaMode::HexArea => 1.5 * 3f64.sqrt() * r * r,
    };
    Ok(c_bar / area)
}

/// Shrinks the cell by `k`: distances divided by `k`, transmit powers by
/// `k^2`. Without a near-field clamp this is equivalent to keeping the cell
/// and dividing the noise variance by `k^(alpha - 2)`.
pub fn scaled_cell_instance(sc: &Scenario, k: f64) -> Result<Scenario> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid("k", "scale factor must be positive"));
    }
    if sc.channel.r0 != 0.0 {
        return Err(invalid("r0", "cell scaling requires r0 = 0"));
    }
    let region = sc.layout.region().scaled(1.0 / k)?;
    let ports = sc.layout.ports().iter().map(|p| *p * (1.0 / k)).collect();
    let layout = PortLayout::new(ports, region)?;
    let mut out = sc.clone();
    out.layout = layout;
    out.powers = sc.powers.scaled(1.0 / (k * k))?;
    if let NeighborPower::Common(s) = sc.interference.neighbor_power {
        out.interference.neighbor_power = NeighborPower::Common(s / (k * k));
    }
    Ok(out)
}

/// `10 log10(S_ref / S_opt)` where each power is the smallest common
/// per-port power reaching `c_t`.
pub fn power_gain(
    reference: &Scenario,
    optimized: &Scenario,
    c_t: f64,
    mc: &McConfig,
    search: &PowerSearch,
) -> Result<f64> {
    let s_ref = min_power_for_target(reference, c_t, mc, search)?;
    let s_opt = min_power_for_target(optimized, c_t, mc, search)?;
    Ok(10.0 * (s_ref / s_opt).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;

    /// Adaptive average of `f` over a convex polygon: centroid fan, then
    /// recursive 4-way midpoint subdivision of each triangle, comparing the
    /// edge-midpoint rule before and after splitting.
    fn adaptive_average(region: &Region, f: &dyn Fn(Point) -> f64, tol: f64) -> f64 {
        fn mid_rule(a: Point, b: Point, c: Point, f: &dyn Fn(Point) -> f64) -> f64 {
            (f((a + b) * 0.5) + f((b + c) * 0.5) + f((c + a) * 0.5)) / 3.0
        }
        fn tri_area(a: Point, b: Point, c: Point) -> f64 {
            0.5 * (b - a).cross(c - a).abs()
        }
        fn recurse(a: Point, b: Point, c: Point, f: &dyn Fn(Point) -> f64, tol: f64, depth: usize) -> f64 {
            let area = tri_area(a, b, c);
            let coarse = mid_rule(a, b, c, f) * area;
            let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
            let subs = [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)];
            let fine: f64 = subs.iter().map(|(p, q, r)| mid_rule(*p, *q, *r, f) * tri_area(*p, *q, *r)).sum();
            if (fine - coarse).abs() < tol || depth > 14 {
                fine
            } else {
                subs.iter().map(|(p, q, r)| recurse(*p, *q, *r, f, tol / 4.0, depth + 1)).sum()
            }
        }
        let verts = region.vertices();
        let c = region.centroid();
        let area = region.area();
        let mut total = 0.0;
        for i in 0..verts.len() {
            total += recurse(c, verts[i], verts[(i + 1) % verts.len()], f, tol * area / verts.len() as f64, 0);
        }
        total / area
    }

    fn hex_setup(alpha: f64, s: f64) -> Scenario {
        let region = Region::hexagon(100.0).unwrap();
        let layout = PortLayout::new(vec![Point::ORIGIN], region).unwrap();
        let params = ChannelParams { alpha, beta: 1.0, sigma_sh_db: 0.0, r0: 1.0, sigma_n_sq: 1.0 };
        Scenario::simple(layout, s, CsiMode::CsirOnly, params).unwrap()
    }

    #[test]
    fn monte_carlo_matches_quadrature_for_deterministic_channel() {
        let s = calibrate_edge_power(100.0, &ChannelParams { alpha: 3.0, ..ChannelParams::default() }, 10.0).unwrap();
        let sc = hex_setup(3.0, s);
        let est = cell_average_rate(&sc, &McConfig::deterministic_channel(100_000, 5)).unwrap();
        let f = |u: Point| (1.0 + s / u.norm().max(1.0).powf(3.0)).log2();
        let oracle = adaptive_average(sc.layout.region(), &f, 1e-8);
        assert!((est.mean - oracle).abs() < 3.0 * est.std_error, "{} vs {oracle} (se {})", est.mean, est.std_error);
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let sc = hex_setup(4.0, 0.0);
        let est = cell_average_rate(&sc, &McConfig::new(100, 1)).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut sc = hex_setup(4.0, 1e8);
        sc.channel.sigma_sh_db = 8.0;
        let mc = McConfig::new(5_000, 99);
        let a = cell_average_rate(&sc, &mc).unwrap();
        let b = cell_average_rate(&sc, &mc).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn antithetic_pairs_do_not_bias_the_estimate() {
        let mut sc = hex_setup(4.0, 1e8);
        sc.channel.sigma_sh_db = 8.0;
        let plain = cell_average_rate(&sc, &McConfig::new(40_000, 3)).unwrap();
        let anti = cell_average_rate(&sc, &McConfig { antithetic: true, ..McConfig::new(40_000, 4) }).unwrap();
        let se = (plain.std_error.powi(2) + anti.std_error.powi(2)).sqrt();
        assert!((plain.mean - anti.mean).abs() < 4.0 * se);
        assert_eq!(anti.n, 20_000);
    }

    #[test]
    fn jensen_bound_on_a_near_disk() {
        // E[r^2] over a regular n-gon from the triangle moment formula
        let n = 720;
        let region = Region::regular_polygon(n, 1.0).unwrap();
        let verts = region.vertices();
        let mut moment = 0.0;
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            let area = 0.5 * a.cross(b).abs();
            moment += area * (a.norm_sq() + b.norm_sq() + a.dot(b)) / 6.0;
        }
        let mean_r2 = moment / region.area();
        assert!((mean_r2 - 0.5).abs() < 1e-4);
        let layout = PortLayout::new(vec![Point::ORIGIN], region).unwrap();
        let params = ChannelParams { alpha: 2.0, beta: 1.0, sigma_sh_db: 0.0, r0: 0.0, sigma_n_sq: 1.0 };
        let loss = mean_nearest_path_loss(&layout, &params, 32);
        assert!((loss - mean_r2).abs() < 1e-3 * mean_r2, "{loss} vs {mean_r2}");
        let bound = jensen_lower_bound(&layout, 3.0, &params);
        assert!((bound - (1.0 + 3.0 / mean_r2).log2()).abs() < 1e-3);
    }

    #[test]
    fn jensen_bound_below_monte_carlo() {
        let region = Region::hexagon(1000.0).unwrap();
        let layout = PortLayout::ring(region, 3, 550.0, 0.0, false).unwrap();
        for alpha in [2.0, 4.0] {
            let params = ChannelParams { alpha, beta: 1.0, sigma_sh_db: 8.0, r0: 1.0, sigma_n_sq: 1.0 };
            let s = calibrate_edge_power(1000.0, &params, 10.0).unwrap();
            let sc = Scenario::simple(layout.clone(), s, CsiMode::CsirOnly, params.clone()).unwrap();
            let est = cell_average_rate(&sc, &McConfig::new(20_000, 8)).unwrap();
            let bound = jensen_lower_bound(&layout, s, &params);
            assert!(bound <= est.mean + 3.0 * est.std_error, "alpha {alpha}: {bound} vs {}", est.mean);
        }
    }

    #[test]
    fn calibration_examples() {
        let p2 = ChannelParams { alpha: 2.0, beta: 1.0, sigma_sh_db: 0.0, r0: 0.0, sigma_n_sq: 1.0 };
        assert_eq!(calibrate_edge_power(1.0, &p2, 0.0).unwrap(), 1.0);
        let p4 = ChannelParams { alpha: 4.0, ..p2.clone() };
        let s = calibrate_edge_power(1000.0, &p4, 10.0).unwrap();
        assert!((s - 1e13).abs() < 1e-3);
        let p = ChannelParams { alpha: 3.3, beta: 2.5, sigma_sh_db: 0.0, r0: 0.0, sigma_n_sq: 0.7 };
        let s = calibrate_edge_power(420.0, &p, 7.5).unwrap();
        let snr = s / (p.sigma_n_sq * p.beta * 420f64.powf(3.3));
        assert!((10.0 * snr.log10() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn ase_examples() {
        use std::f64::consts::PI;
        assert!((area_spectral_efficiency(PI, 1.0, AreaMode::PiRSq).unwrap() - 1.0).abs() < 1e-15);
        assert!((area_spectral_efficiency(3.0, 1.0, AreaMode::PiRSq).unwrap() - 3.0 / PI).abs() < 1e-15);
        let a = area_spectral_efficiency(2.0, 5.0, AreaMode::HexArea).unwrap();
        let b = area_spectral_efficiency(2.0, 10.0, AreaMode::HexArea).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    fn link_snr(sc: &Scenario, u: Point) -> f64 {
        let p = sc.layout.ports()[0];
        sc.powers.per_port()[0] / (sc.channel.sigma_n_sq * sc.channel.beta * p.distance(u).powf(sc.channel.alpha))
    }

    #[test]
    fn scaling_changes_snr_by_k_power() {
        let region = Region::hexagon(1000.0).unwrap();
        let layout = PortLayout::new(vec![Point::new(200.0, 100.0)], region).unwrap();
        for (alpha, k) in [(2.0, 3.7), (4.0, 2.0), (3.5, 0.4)] {
            let params = ChannelParams { alpha, beta: 1.0, sigma_sh_db: 0.0, r0: 0.0, sigma_n_sq: 1.0 };
            let sc = Scenario::simple(layout.clone(), 1e9, CsiMode::CsirOnly, params).unwrap();
            let scaled = scaled_cell_instance(&sc, k).unwrap();
            let u = Point::new(-300.0, 450.0);
            let ratio = link_snr(&scaled, u * (1.0 / k)) / link_snr(&sc, u);
            assert!((ratio / k.powf(alpha - 2.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_rejects_near_field_clamp() {
        let sc = hex_setup(4.0, 1.0);
        assert!(scaled_cell_instance(&sc, 2.0).is_err());
    }
}
