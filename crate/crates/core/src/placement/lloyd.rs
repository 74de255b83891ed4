//! Lloyd iteration for the nearest-port path-loss criterion: minimize
//! `E_u[r_min^alpha]` over port positions, with the user average taken by
//! cubature over the region.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::{project_into_region, Point, PortLayout, Region};
use crate::rng::{derive_seed, pairwise_sum};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LloydConfig {
    /// Stop once no port moves more than `tol` times the region extent.
    pub tol: f64,
    pub max_iter: usize,
    pub cubature_level: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig { tol: 1e-7, max_iter: 500, cubature_level: 64 }
    }
}

#[derive(Clone, Debug)]
pub struct LloydResult {
    pub layout: PortLayout,
    /// Final `E_u[r_min^alpha]`.
    pub objective: f64,
    /// Objective before the first and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `E_u[min_n |p_n - u|^alpha]` by cubature.
pub fn nearest_power_moment(layout: &PortLayout, alpha: f64, level: usize) -> f64 {
    let nodes = layout.region().cubature(level);
    moment(layout.ports(), &nodes, alpha)
}

fn moment(ports: &[Point], nodes: &[(Point, f64)], alpha: f64) -> f64 {
    let terms: Vec<f64> = nodes
        .iter()
        .map(|(u, w)| {
            let d = ports.iter().map(|p| p.distance(*u)).fold(f64::INFINITY, f64::min);
            w * d.powf(alpha)
        })
        .collect();
    pairwise_sum(&terms)
}

fn cell_objective(q: Point, cell: &[(Point, f64)], alpha: f64) -> f64 {
    cell.iter().map(|(x, w)| w * q.distance(*x).powf(alpha)).sum()
}

/// Point minimizing `sum w |q - x|^alpha` over the weighted nodes, by
/// damped Newton from `start` (gradient steps where the Hessian is not
/// positive definite).
fn power_centroid(cell: &[(Point, f64)], alpha: f64, start: Point, scale: f64) -> Point {
    let mut q = start;
    let mut f = cell_objective(q, cell, alpha);
    for _ in 0..200 {
        let mut g = Point::ORIGIN;
        let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
        for (x, w) in cell {
            let d = q - *x;
            let r2 = d.norm_sq();
            if r2 == 0.0 {
                continue;
            }
            let ra2 = r2.powf(alpha / 2.0 - 1.0);
            g = g + d * (w * alpha * ra2);
            // alpha r^(alpha-2) (I + (alpha - 2) d d^T / r^2)
            let c = w * alpha * ra2;
            let k = (alpha - 2.0) / r2;
            hxx += c * (1.0 + k * d.x * d.x);
            hxy += c * k * d.x * d.y;
            hyy += c * (1.0 + k * d.y * d.y);
        }
        let det = hxx * hyy - hxy * hxy;
        let mut dir = if det > 0.0 && hxx > 0.0 {
            Point::new(-(hyy * g.x - hxy * g.y) / det, -(hxx * g.y - hxy * g.x) / det)
        } else {
            g * -1.0
        };
        if dir.dot(g) >= 0.0 {
            dir = g * -1.0;
        }
        // keep the first trial step within the region's scale
        let len = dir.norm();
        if len > scale {
            dir = dir * (scale / len);
        }
        let slope = dir.dot(g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = q + dir * t;
            let ft = cell_objective(trial, cell, alpha);
            if ft <= f + 1e-4 * t * slope {
                q = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (dir * t).norm() < 1e-13 * scale {
            break;
        }
    }
    q
}

/// Alternates nearest-port assignment of the cubature nodes with moving
/// each port to the `alpha`-power centroid of its cell.
pub fn lloyd_placement(init: &PortLayout, alpha: f64, cfg: &LloydConfig) -> Result<LloydResult> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("Lloyd placement needs alpha >= 1, got {alpha}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let region = init.region();
    let scale = region.extent();
    let nodes = region.cubature(cfg.cubature_level);
    let mut ports = init.ports().to_vec();
    let mut history = vec![moment(&ports, &nodes, alpha)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut cells: Vec<Vec<(Point, f64)>> = vec![Vec::new(); ports.len()];
        for (u, w) in &nodes {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, p) in ports.iter().enumerate() {
                let d = p.distance(*u);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            cells[best].push((*u, *w));
        }
        let moved: Vec<Point> = ports
            .iter()
            .zip(&cells)
            .map(|(p, cell)| {
                if cell.is_empty() {
                    *p
                } else {
                    project_into_region(power_centroid(cell, alpha, *p, scale), region)
                }
            })
            .collect();
        let shift = ports.iter().zip(&moved).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
        ports = moved;
        history.push(moment(&ports, &nodes, alpha));
        if shift < cfg.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Lloyd placement stopped after {iterations} iterations without converging");
    }
    let objective = *history.last().expect("history starts non-empty");
    Ok(LloydResult {
        layout: init.with_ports(ports)?,
        objective,
        history,
        iterations,
        converged,
    })
}

/// Best of several Lloyd runs from random initial layouts.
#[derive(Clone, Debug)]
pub struct Multistart {
    pub best: LloydResult,
    /// Every run, in restart order.
    pub runs: Vec<LloydResult>,
}

impl Multistart {
    /// Largest minus smallest final objective across restarts.
    pub fn objective_spread(&self) -> f64 {
        let (lo, hi) = self
            .runs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.objective), hi.max(r.objective)));
        hi - lo
    }
}

/// Runs `restarts` Lloyd iterations from uniformly random layouts (restart
/// `k` seeded from `(seed, k)`) and keeps the lowest objective; ties go to
/// the earliest restart.
pub fn lloyd_multistart(
    region: &Region,
    n_ports: usize,
    alpha: f64,
    cfg: &LloydConfig,
    restarts: usize,
    seed: u64,
) -> Result<Multistart> {
    if restarts == 0 {
        return Err(invalid("restarts", "need at least one start"));
    }
    let runs = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let init = PortLayout::random(region.clone(), n_ports, &mut rng)?;
            lloyd_placement(&init, alpha, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.objective < runs[best].objective {
            best = k;
        }
    }
    Ok(Multistart { best: runs[best].clone(), runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::mean_radius;

    #[test]
    fn single_port_goes_to_centre_of_symmetric_region() {
        let region = Region::regular_polygon(64, 1.0).unwrap();
        for alpha in [1.5, 2.0, 4.0, 6.0] {
            let init = PortLayout::new(vec![Point::new(0.4, -0.3)], region.clone()).unwrap();
            let res = lloyd_placement(&init, alpha, &LloydConfig { cubature_level: 24, ..Default::default() }).unwrap();
            assert!(res.layout.ports()[0].norm() < 1e-6, "alpha {alpha}: {:?}", res.layout.ports()[0]);
        }
    }

    #[test]
    fn objective_never_increases() {
        let region = Region::hexagon(1.0).unwrap();
        let mut rng = crate::rng::sample_stream(5, 0);
        for alpha in [2.0, 3.5, 6.0] {
            let init = PortLayout::random(region.clone(), 5, &mut rng).unwrap();
            let res = lloyd_placement(&init, alpha, &LloydConfig { cubature_level: 32, ..Default::default() }).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn two_ports_split_unit_square() {
        let region = Region::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0)).unwrap();
        let cfg = LloydConfig { cubature_level: 48, ..Default::default() };
        // brute force over layouts symmetric about the square's centre
        let nodes = region.cubature(48);
        let c = Point::new(0.5, 0.5);
        let mut best = (f64::INFINITY, Point::ORIGIN);
        for i in 0..=100 {
            for j in 0..=100 {
                let p = Point::new(i as f64 / 100.0, j as f64 / 100.0);
                let q = c * 2.0 - p;
                let m = moment(&[p, q], &nodes, 2.0);
                if m < best.0 {
                    best = (m, p);
                }
            }
        }
        let ms = lloyd_multistart(&region, 2, 2.0, &cfg, 8, 17).unwrap();
        let ports = ms.best.layout.ports();
        let oracle = [best.1, c * 2.0 - best.1];
        // the optimum is degenerate up to the square's symmetries: compare
        // the sorted distances from the centre and the objective
        assert!((ms.best.objective - best.0).abs() < 1e-4 * best.0);
        for p in ports {
            assert!((p.distance(c) - 0.25).abs() < 0.01, "{p:?}");
            assert!(((p.x - 0.5).abs() < 0.01) ^ ((p.y - 0.5).abs() < 0.01));
        }
        assert!((oracle[0].distance(c) - 0.25).abs() < 0.011);
    }

    #[test]
    fn three_ports_in_hexagon_settle_symmetrically() {
        // three ports settle symmetrically around the centre
        let region = Region::hexagon_with_apothem(1.0).unwrap();
        let ms = lloyd_multistart(&region, 3, 2.0, &LloydConfig { cubature_level: 48, ..Default::default() }, 6, 3).unwrap();
        let radii = ms.best.layout.radii();
        let mean = mean_radius(&ms.best.layout);
        for r in radii {
            assert!((r - mean).abs() < 1e-3);
        }
        assert!(mean > 0.5 && mean < 0.65);
    }
}
