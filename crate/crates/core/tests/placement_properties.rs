use das_core::capacity::CsiMode;
use das_core::channel::{ChannelParams, InterferenceParams, NeighborPower};
use das_core::ergodic::{calibrate_edge_power, Scenario};
use das_core::geometry::{PortLayout, Region};
use das_core::placement::{
    mean_radius, optimize_power_allocation, stochastic_update_placement, PowerOptConfig, StepSchedule,
    StochasticConfig,
};
use das_core::rng::sample_stream;

fn params(alpha: f64, sigma_sh_db: f64) -> ChannelParams {
    ChannelParams { alpha, beta: 1.0, sigma_sh_db, r0: 1.0, sigma_n_sq: 1.0 }
}

#[test]
fn three_port_radius_does_not_depend_on_the_start() {
    let region = Region::hexagon_with_apothem(1000.0).unwrap();
    let p = params(6.0, 8.0);
    let s = calibrate_edge_power(1000.0, &p, 10.0).unwrap();
    let radii: Vec<f64> = (0..10u64)
        .map(|k| {
            let init = PortLayout::random(region.clone(), 3, &mut sample_stream(500 + k, 0)).unwrap();
            let sc = Scenario::simple(init, s, CsiMode::CsirOnly, p.clone()).unwrap();
            let cfg = StochasticConfig::new(StepSchedule::scaled_default(1000.0, 6.0).unwrap(), 200_000);
            let run = stochastic_update_placement(&sc, &cfg, &mut sample_stream(500 + k, 1)).unwrap();
            // three ports, spread around the centre rather than bunched
            let ports = run.tail_average.ports();
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(ports[i].distance(ports[j]) > 600.0, "start {k}: {ports:?}");
                }
            }
            mean_radius(&run.tail_average)
        })
        .collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let spread = radii.iter().cloned().fold(f64::MIN, f64::max) - radii.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1 * mean, "{radii:?}");
}

/// Central power share of a fixed 6-around-1 layout after projected
/// stochastic power steps; also returns the largest relative deviation
/// of the six peripheral powers from their mean.
fn central_share(gamma: f64, seed: u64) -> (f64, f64) {
    let region = Region::hexagon_with_apothem(1000.0).unwrap();
    let layout = PortLayout::ring(region, 6, 520.0, 0.0, true).unwrap();
    let p = params(4.0, 8.0);
    let s = calibrate_edge_power(1000.0, &p, 10.0).unwrap();
    let mut sc = Scenario::simple(layout, s, CsiMode::CsirOnly, p).unwrap();
    sc.interference = InterferenceParams::shared(gamma, NeighborPower::MatchCentral);
    let total = 7.0 * s;
    let mut placement = StochasticConfig::new(StepSchedule::harmonic(0.0).unwrap(), 200_000);
    placement.snapshot_stride = 200_000;
    let cfg = PowerOptConfig {
        placement,
        power_schedule: StepSchedule::new(0.5 * s * s, 1.0, 100.0).unwrap(),
        total,
        joint: false,
    };
    let run = optimize_power_allocation(&sc, &cfg, &mut sample_stream(seed, 0)).unwrap();
    let pw = run.tail_average_powers.per_port();
    let peripheral = pw[1..].iter().sum::<f64>() / 6.0;
    let dev = pw[1..].iter().map(|x| (x / peripheral - 1.0).abs()).fold(0.0, f64::max);
    (pw[0] / peripheral, dev)
}

#[test]
fn interference_shifts_power_to_the_central_port() {
    let gammas = [0.0, 0.25, 0.5, 1.0];
    let results: Vec<(f64, f64)> = gammas.iter().map(|g| central_share(*g, 77)).collect();
    for ((ratio, dev), g) in results.iter().zip(gammas) {
        assert!(*dev < 0.05, "gamma {g}: peripheral powers differ by {dev} (ratio {ratio})");
    }
    // clear rise once interference is on; past that the split is flat up
    // to the estimator noise
    assert!(results[1].0 > results[0].0 * 1.1, "{results:?}");
    for w in results[1..].windows(2) {
        assert!(w[1].0 >= w[0].0 * 0.98, "{results:?}");
    }
    assert!(results[3].0 > results[0].0, "{results:?}");
}
